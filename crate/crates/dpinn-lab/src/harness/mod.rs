//! Experiment harness: JSON configuration, execution, sweeps and CSV/report
//! emission. The `dpinn-lab` binary is a thin wrapper over this module.

mod config;
mod csv;
mod run;

pub use config::{
    canonical_json, config_hash, ElmBlock, ElmSolverKind, ExperimentConfig, LossConfig,
    ModelConfig, SweepAxis, SweepConfig, TrainBlock,
};
pub use csv::{
    emit_baseline_csv, emit_solution_csv, emit_trace_csv, fmt_f64, parse_solution_csv,
    ParsedSolution, SolutionSample, TRACE_HEADER,
};
pub use run::{
    cell_seed, emit_summary_csv, exponential_form, run_baseline, run_experiment, run_expfit,
    run_piecewise, run_sweep, ExpFitReport, ExpFitRun, PiecewiseReport, PiecewiseRun,
    RunArtifacts, RunReport, SweepRow,
};
