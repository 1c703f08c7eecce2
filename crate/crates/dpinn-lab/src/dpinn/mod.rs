//! Domain-decomposed physics-informed models: block grids, trial-function
//! transforms, the composite interface-matching loss, and training.

mod grid;
mod loss;
mod model;
mod train;

pub use grid::BlockGrid;
pub(crate) use model::mix_seed;
pub use loss::{
    sample_collocation, Collocation, LossBreakdown, LossValues, SamplingMode,
};
pub use model::{
    build_model, normalize_coefficient, BlockModel, CollocationTarget, LossWeights, TrialMode,
};
pub use train::{
    continuation_epsilon, lagrange_weights, recurrent_split_init, solve_normal_equations, train,
    Trace, TraceEntry, TrainConfig,
};
