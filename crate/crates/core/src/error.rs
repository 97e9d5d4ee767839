use thiserror::Error;

/// Errors raised by the engine.
///
/// Variants map onto distinct failure classes so callers (the CLI in
/// particular) can translate them into exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("analytic-mode-only: exact delta kernels cannot be {0}")]
    AnalyticModeOnly(&'static str),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("singular constraint map for system `{system}` at t0 = {t0}")]
    SingularConstraint { system: String, t0: f64 },

    #[error("quadrature did not converge: achieved error {achieved:e}, requested {requested:e}")]
    QuadratureNonConvergence { achieved: f64, requested: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported mode: {0}")]
    Unsupported(String),

    #[error(
        "zero acceptances over a window of {window} proposals at proposal_step = {step}; \
         reduce proposal_step (a value near the kernel width 1/m_delta is a good start)"
    )]
    StepSize { step: f64, window: usize },

    #[error("metropolis initialization failed: {0}")]
    Initialization(String),

    #[error("degenerate constraint: every importance weight vanished ({0})")]
    DegenerateWeights(String),

    #[error("divergent: observable `{observable}` has no finite expectation under the {kernel} kernel; use truncated_fejer")]
    Divergent { observable: String, kernel: String },

    #[error("lattice too large: {paths} paths exceeds the budget of {budget}")]
    LatticeBudget { paths: u64, budget: u64 },

    #[error("non-classical mode: {0}")]
    NonClassical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
