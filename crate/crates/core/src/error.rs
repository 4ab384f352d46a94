use thiserror::Error;

/// Errors raised by the accountant, the simulator and the experiment runner.
#[derive(Debug, Error)]
pub enum AirdpError {
    #[error("parameter out of domain: {0}")]
    Domain(String),

    /// The concentration window `mu - beta*K` is not positive, so the
    /// amplification bound has no admissible participant count.
    #[error("infeasible concentration window: mu - beta*K = {margin} (mu = {mu}, beta*K = {beta_k})")]
    InfeasibleConcentration { mu: f64, beta_k: f64, margin: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("trial {trial} failed at round {round}: {source}")]
    Trial {
        trial: u64,
        round: usize,
        #[source]
        source: Box<AirdpError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, AirdpError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(AirdpError::Domain(msg.into()))
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(AirdpError::Domain(msg()))
    }
}
