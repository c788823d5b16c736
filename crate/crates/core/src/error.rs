use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid user-supplied parameters (model, horizon, step count, panel).
    #[error("configuration error: {0}")]
    Configuration(String),
    /// Argument outside the domain of a function.
    #[error("domain error: {0}")]
    Domain(String),
    /// The model produced an inadmissible quantity (negative intensity, non-monotone hazard).
    #[error("model error: {0}")]
    Model(String),
    /// Processes or bases that must share a structure do not.
    #[error("structural error: {0}")]
    Structural(String),
    #[error("statistical power error: need at least {required} samples, got {actual}")]
    StatisticalPower { required: usize, actual: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn require_power(actual: usize, required: usize) -> Result<()> {
    if actual < required {
        Err(Error::StatisticalPower { required, actual })
    } else {
        Ok(())
    }
}
