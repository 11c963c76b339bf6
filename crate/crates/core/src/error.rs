use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid system statistics: {0}")]
    InvalidStatistics(String),

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("topology is missing the self loop of sensor {0}")]
    MissingSelfLoop(usize),

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    #[error("solver hit the iteration limit ({iterations}) with relative gap {gap:e}")]
    MaxIterations { iterations: usize, gap: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("relaxation is not rank one (eigenvalue ratio {0:e})")]
    RankViolation(f64),

    #[error("degenerate homogenizing scale {0:e}")]
    DegenerateScale(f64),

    #[error("zero denominator in ratio evaluation")]
    ZeroDenominator,

    #[error("communication graph is disconnected ({components} components)")]
    Disconnected { components: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("too many failed trials: {failed} of {total}")]
    TrialFailures { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
