use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix must have at least one row and one column")]
    EmptyMatrix,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("iterate became non-finite at step {iteration}")]
    Diverged { iteration: usize },

    #[error("power iteration did not converge after {iterations} steps (last estimate {estimate})")]
    NotConverged { iterations: usize, estimate: f64 },

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("unsupported configuration: {0}")]
    Unsupported(&'static str),

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("unknown preconditioner catalog id `{0}`")]
    UnknownCatalogId(String),

    #[error("size {found} exceeds the limit {limit} for {context}")]
    SizeCap {
        context: &'static str,
        limit: usize,
        found: usize,
    },

    #[error("kernel vanishes on the given grids; the model cannot be normalized")]
    DegenerateModel,

    #[error("grid does not lie inside the domain of {0}")]
    DomainMismatch(&'static str),

    #[error("a-priori stopping index is unbounded for zero noise")]
    InfiniteIndex,

    #[error("dual Landweber state has no dual vector")]
    MissingDual,
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}

pub(crate) fn invalid(name: &'static str, value: f64, reason: &'static str) -> Error {
    Error::InvalidParameter {
        name,
        value,
        reason,
    }
}
