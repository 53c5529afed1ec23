use thiserror::Error;

pub type Result<T, E = FlowError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    Shape { expected: Vec<usize>, got: Vec<usize> },

    #[error("oracle construction failed: {0}")]
    OracleConstruction(String),

    #[error("insufficient samples: effective sample size {ess:.1} < {min}")]
    InsufficientSamples { ess: f64, min: f64 },

    /// A velocity evaluation returned NaN or infinity.
    #[error("non-finite velocity at step {step} (t = {t})")]
    Numerical { step: usize, t: f64 },

    #[error("training diverged at step {step}: loss = {loss}")]
    TrainingDiverged { step: usize, loss: f64 },

    #[error("model format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl FlowError {
    pub(crate) fn shape(expected: &[usize], got: &[usize]) -> Self {
        FlowError::Shape {
            expected: expected.to_vec(),
            got: got.to_vec(),
        }
    }

    /// True for errors caused by numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            FlowError::Numerical { .. }
                | FlowError::TrainingDiverged { .. }
                | FlowError::InsufficientSamples { .. }
        )
    }
}
