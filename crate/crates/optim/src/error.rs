use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    /// The symmetric part of the quadratic term has an eigenvalue below the
    /// convexity floor.
    #[error("quadratic term is not positive semidefinite (eigenvalue floor {floor:e} violated)")]
    NotConvex { floor: f64 },
    #[error("variable index {index} out of range for a problem with {n} variables")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("non-finite coefficient in {what}")]
    NonFinite { what: &'static str },
    #[error("binary variable {index} has bounds outside [0, 1]")]
    BinaryBounds { index: usize },
    #[error("warm-start incumbent has length {got}, expected {expected}")]
    IncumbentLength { got: usize, expected: usize },
}
