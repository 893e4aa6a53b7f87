use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A non-finite value appeared inside the flow map. `step` is the index of
    /// the sub-step (leapfrog step, or flow application) where it was detected.
    #[error("numerical divergence at step {step}: {detail}")]
    NumericalDivergence { step: usize, detail: String },

    #[error("optimization failed at iteration {iteration}: {detail}; last finite iterate mean={last_mean:?} log_scale={last_log_scale:?}")]
    OptimizationFailure {
        iteration: usize,
        detail: String,
        last_mean: Vec<f64>,
        last_log_scale: Vec<f64>,
    },

    #[error("data format error at row {row}, column {column:?}: {detail}")]
    DataFormat {
        /// 1-based line number in the file (header is line 1), or 0 when not tied to a row.
        row: usize,
        column: String,
        detail: String,
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn divergence(step: usize, detail: impl Into<String>) -> Self {
        Error::NumericalDivergence {
            step,
            detail: detail.into(),
        }
    }

    /// Re-labels a divergence with the outer flow-step index, keeping the inner detail.
    pub(crate) fn at_flow_step(self, flow_step: usize) -> Self {
        match self {
            Error::NumericalDivergence { step, detail } => Error::NumericalDivergence {
                step: flow_step,
                detail: format!("flow step {flow_step} (inner step {step}): {detail}"),
            },
            other => other,
        }
    }

    pub fn is_divergence(&self) -> bool {
        matches!(self, Error::NumericalDivergence { .. })
    }
}
