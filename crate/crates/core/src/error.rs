use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical overflow at step {step}: state {state:?}")]
    NumericalOverflow { step: usize, state: Vec<f64> },

    #[error("rollout diverged for sample {sample} at step {step}")]
    DivergedRollout { sample: usize, step: usize },

    #[error("ill-posed policy: action block {block:?} is not positive definite")]
    IllPosedPolicy { block: Vec<f64> },

    #[error("linear program {status}: {detail}")]
    Lp { status: crate::lp::LpStatus, detail: String },

    #[error("unknown plant `{0}`")]
    UnknownPlant(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} has non-finite components: {values:?}")))
    }
}
