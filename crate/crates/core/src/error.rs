use thiserror::Error;

/// Errors surfaced by the bound constructions and the transient solver.
#[derive(Debug, Error)]
pub enum Error {
    /// The model violates one or more structural invariants.
    #[error("invalid model: {0:?}")]
    InvalidModel(Vec<String>),

    /// A method's hypotheses do not hold for the given model; no
    /// certificate is produced.
    #[error("method not applicable: {0}")]
    NotApplicable(String),

    /// A weight vector with a zero (or wrongly signed) component.
    #[error("invalid weight vector: {0}")]
    InvalidWeights(String),

    /// Power iteration failed to converge within the iteration cap.
    #[error("power iteration did not converge within {0} iterations")]
    PowerIterationDiverged(usize),

    /// Adaptive step-size control drove the step below the resolvable
    /// minimum.
    #[error("step size underflow at t = {t} (h = {h:.3e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    /// A numeric procedure produced an unusable result.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// State-space size exceeds a hard complexity guard.
    #[error("state space too large for this operation: S = {s}, limit {limit}")]
    TooLarge { s: usize, limit: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
