use crate::dpinn::Trace;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Layer widths empty, zero-sized, or outside the supported 1/2-input,
    /// 1-output family.
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    /// Evaluation input does not match the network's input dimension.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Operation requires a single-hidden-layer network.
    #[error("unsupported architecture: {0}")]
    UnsupportedArchitecture(String),

    /// Trial mode not defined for the requested grid/problem combination.
    #[error("unsupported trial function: {0}")]
    UnsupportedTrial(String),

    /// Problem coefficients make the equation meaningless (e.g. zero
    /// diffusivity in the steady exact solution).
    #[error("degenerate problem: {0}")]
    DegenerateProblem(String),

    /// Configuration rejected before any computation started.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Combination of otherwise-valid options is mathematically invalid.
    #[error("invalid combination: {0}")]
    InvalidCombination(String),

    /// A loss term or network output evaluated to a non-finite value.
    #[error("diverged evaluation: non-finite value in {term}")]
    DivergedEvaluation { term: String },

    /// Training hit a non-finite loss or gradient; carries the trace
    /// recorded up to the failing iteration.
    #[error("diverged training at iteration {iter}: non-finite {term}")]
    DivergedTraining {
        iter: usize,
        term: String,
        trace: Box<Trace>,
    },

    /// Dense linear solve failed or the matrix is numerically singular.
    #[error("singular system: {0}")]
    SingularSystem(String),

    /// Query point outside the problem domain.
    #[error("outside domain: {0}")]
    OutsideDomain(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 for configuration/validation
    /// problems, 2 for runtime and divergence failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArchitecture(_)
            | Error::InvalidInput(_)
            | Error::UnsupportedArchitecture(_)
            | Error::UnsupportedTrial(_)
            | Error::DegenerateProblem(_)
            | Error::InvalidConfig(_)
            | Error::InvalidCombination(_)
            | Error::Json(_) => 1,
            Error::DivergedEvaluation { .. }
            | Error::DivergedTraining { .. }
            | Error::SingularSystem(_)
            | Error::OutsideDomain(_)
            | Error::Io(_) => 2,
        }
    }
}
