//! Command-line front end: `solve`, `sweep`, `baseline`, `elm` and
//! `diagnose` subcommands over JSON experiment configs.
//!
//! Exit codes: 0 success, 1 configuration/validation error, 2 runtime or
//! divergence error.

use clap::{Args, Parser, Subcommand, ValueEnum};
use dpinn_lab::diagnostics::{ExpFitMethod, Governing, SolveMethod};
use dpinn_lab::harness::{
    emit_baseline_csv, emit_solution_csv, emit_summary_csv, emit_trace_csv, run_baseline,
    run_experiment, run_expfit, run_piecewise, run_sweep, ExpFitRun, ExperimentConfig,
    PiecewiseRun, RunArtifacts, SweepConfig,
};
use dpinn_lab::problems::{Problem, SteadyAdvDiff};
use dpinn_lab::{Error, Result};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "dpinn-lab",
    about = "Physics-informed collocation solvers for 1-D advection-dominated benchmarks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configured model; writes solution.csv, trace.csv and
    /// report.json into --out
    Solve(RunArgs),
    /// Run a Cartesian parameter sweep; writes summary.csv
    Sweep(SweepArgs),
    /// Classical references (exact, CDS, UDS, corrected CDS); writes
    /// baseline.csv
    Baseline(BaselineArgs),
    /// Single-shot ELM solve; writes solution.csv and report.json
    Elm(RunArgs),
    /// Piecewise-polynomial and exponential-regression probes
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the config's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the trace logging stride
    #[arg(long)]
    log_stride: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep config (JSON): a base experiment plus axes
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the base config's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweep cells (falls back to $DPINN_LAB_JOBS, then 1)
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct BaselineArgs {
    /// Experiment config (JSON); only the problem block is read
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Finite-difference cell count
    #[arg(long, default_value_t = 20)]
    cells: usize,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(subcommand)]
    probe: Probe,
}

#[derive(Clone, Copy, ValueEnum)]
enum GoverningArg {
    Residual,
    Flux,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Exact,
    Pinv,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Gna,
    Marquardt,
    Lma,
    Tikhonov,
}

#[derive(Subcommand)]
enum Probe {
    /// Piecewise linear/quadratic least-norm fit of the discrete equations
    Piecewise {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        panels: usize,
        /// 1 (linear) or 2 (quadratic)
        #[arg(long)]
        degree: usize,
        /// Collocation points per panel; omit for the square system
        #[arg(long)]
        colloc: Option<usize>,
        #[arg(long, value_enum, default_value_t = GoverningArg::Flux)]
        governing: GoverningArg,
        #[arg(long, value_enum, default_value_t = SolverArg::Pinv)]
        solver: SolverArg,
    },
    /// Nonlinear regression of the exponential closed form
    Expfit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long, default_value_t = 20)]
        points: usize,
        #[arg(long, default_value_t = 100)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Starting point "a,b,c"; defaults to a perturbation of the truth
        #[arg(long)]
        init: Option<String>,
    },
}

fn read_config_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Error::InvalidConfig(format!("cannot read config {}: {e}", path.display()))
    })
}

fn steady_problem_of(config: &ExperimentConfig) -> Result<SteadyAdvDiff> {
    match &config.problem {
        Problem::SteadyAdvectionDiffusion(p) => Ok(*p),
        _ => Err(Error::InvalidConfig(
            "this subcommand needs a steady_advection_diffusion problem".into(),
        )),
    }
}

fn write_artifacts(out: &Path, run: &RunArtifacts) -> Result<()> {
    fs::create_dir_all(out)?;
    let mut solution = Vec::new();
    emit_solution_csv(&mut solution, &run.solution)?;
    fs::write(out.join("solution.csv"), solution)?;
    if let Some(trace) = &run.trace {
        let mut buf = Vec::new();
        emit_trace_csv(&mut buf, trace)?;
        fs::write(out.join("trace.csv"), buf)?;
    }
    fs::write(
        out.join("report.json"),
        serde_json::to_string_pretty(&run.report).map_err(Error::from)?,
    )?;
    Ok(())
}

fn load_experiment(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_json(&read_config_text(&args.config)?)?;
    if let Some(seed) = args.seed {
        config.set_seed(seed);
    }
    if let Some(stride) = args.log_stride {
        config.set_log_stride(stride);
    }
    Ok(config)
}

fn cmd_solve(args: &RunArgs) -> Result<()> {
    let config = load_experiment(args)?;
    if config.train.is_none() {
        return Err(Error::InvalidConfig(
            "solve needs a `train` block; use the elm subcommand for elm configs".into(),
        ));
    }
    let run = run_experiment(&config)?;
    write_artifacts(&args.out, &run)?;
    let report = &run.report;
    println!(
        "solve: {} iterations, final loss {:.6e}{}",
        report.iterations,
        report.final_loss.as_ref().map(|b| b.values.total).unwrap_or(f64::NAN),
        report
            .max_err
            .map(|e| format!(", max error {e:.6e}"))
            .unwrap_or_default()
    );
    Ok(())
}

fn cmd_elm(args: &RunArgs) -> Result<()> {
    let config = load_experiment(args)?;
    if config.elm.is_none() {
        return Err(Error::InvalidConfig(
            "elm needs an `elm` block; use the solve subcommand for train configs".into(),
        ));
    }
    let run = run_experiment(&config)?;
    write_artifacts(&args.out, &run)?;
    println!(
        "elm: solve residual {:.6e}{}",
        run.report.solve_residual_inf.unwrap_or(f64::NAN),
        run.report
            .max_err
            .map(|e| format!(", max error {e:.6e}"))
            .unwrap_or_default()
    );
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let mut sweep = SweepConfig::from_json(&read_config_text(&args.config)?)?;
    if let Some(seed) = args.seed {
        sweep.base.set_seed(seed);
    }
    let jobs = args
        .jobs
        .or_else(|| {
            std::env::var("DPINN_LAB_JOBS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(1);
    let rows = run_sweep(&sweep, jobs)?;
    fs::create_dir_all(&args.out)?;
    let mut buf = Vec::new();
    emit_summary_csv(&mut buf, &sweep, &rows)?;
    fs::write(args.out.join("summary.csv"), buf)?;
    let ok = rows.iter().filter(|r| r.status == "ok").count();
    println!("sweep: {} cells, {} ok", rows.len(), ok);
    Ok(())
}

fn cmd_baseline(args: &BaselineArgs) -> Result<()> {
    let config = ExperimentConfig::from_json(&read_config_text(&args.config)?)?;
    let problem = steady_problem_of(&config)?;
    let (cds, uds, cds_ad) = run_baseline(&problem, args.cells)?;
    fs::create_dir_all(&args.out)?;
    let mut buf = Vec::new();
    emit_baseline_csv(&mut buf, &problem, &cds, &uds, &cds_ad)?;
    fs::write(args.out.join("baseline.csv"), buf)?;
    println!("baseline: {} cells", args.cells);
    Ok(())
}

fn parse_init(text: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidConfig(format!(
            "--init expects \"a,b,c\", got `{text}`"
        )));
    }
    let mut vals = [0.0; 3];
    for (v, p) in vals.iter_mut().zip(&parts) {
        *v = p
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("--init: bad number `{p}`")))?;
    }
    Ok((vals[0], vals[1], vals[2]))
}

fn cmd_diagnose(args: &DiagnoseArgs) -> Result<()> {
    match &args.probe {
        Probe::Piecewise {
            config,
            out,
            panels,
            degree,
            colloc,
            governing,
            solver,
        } => {
            let config = ExperimentConfig::from_json(&read_config_text(config)?)?;
            let problem = steady_problem_of(&config)?;
            let params = PiecewiseRun {
                panels: *panels,
                degree: *degree,
                collocation_per_panel: *colloc,
                governing: match governing {
                    GoverningArg::Residual => Governing::Residual,
                    GoverningArg::Flux => Governing::Flux,
                },
                solver: match solver {
                    SolverArg::Exact => SolveMethod::Exact,
                    SolverArg::Pinv => SolveMethod::Pinv,
                },
            };
            let (_, report, solution) = run_piecewise(&problem, &params)?;
            fs::create_dir_all(out)?;
            let mut buf = Vec::new();
            emit_solution_csv(&mut buf, &solution)?;
            fs::write(out.join("solution.csv"), buf)?;
            fs::write(
                out.join("report.json"),
                serde_json::to_string_pretty(&report).map_err(Error::from)?,
            )?;
            println!(
                "piecewise: {}x{} system, max error {:.6e}, boundary mismatch {:.6e}",
                report.rows, report.cols, report.max_err, report.boundary_mismatch
            );
        }
        Probe::Expfit {
            config,
            out,
            method,
            lambda,
            points,
            max_iters,
            tol,
            init,
        } => {
            let config = ExperimentConfig::from_json(&read_config_text(config)?)?;
            let problem = steady_problem_of(&config)?;
            let params = ExpFitRun {
                method: match method {
                    MethodArg::Gna => ExpFitMethod::Gna,
                    MethodArg::Marquardt => ExpFitMethod::Marquardt,
                    MethodArg::Lma => ExpFitMethod::Lma,
                    MethodArg::Tikhonov => ExpFitMethod::Tikhonov,
                },
                lambda: *lambda,
                points: *points,
                max_iters: *max_iters,
                tol: *tol,
                init: init.as_deref().map(parse_init).transpose()?,
            };
            let report = run_expfit(&problem, &params)?;
            fs::create_dir_all(out)?;
            fs::write(
                out.join("report.json"),
                serde_json::to_string_pretty(&report).map_err(Error::from)?,
            )?;
            println!(
                "expfit: status {:?} after {} iterations, parameter error {:.6e}",
                report.result.status, report.result.iterations, report.param_err_inf
            );
        }
    }
    Ok(())
}

/// Parse and run one CLI invocation; returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version via "error" kinds that exit 0
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Baseline(args) => cmd_baseline(args),
        Command::Elm(args) => cmd_elm(args),
        Command::Diagnose(args) => cmd_diagnose(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
