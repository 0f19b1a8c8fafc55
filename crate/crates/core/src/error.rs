use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("unstable SEM: spectral radius {0} is not below 1")]
    UnstableSem(f64),
    #[error("matrix is singular or not positive definite ({0})")]
    Singular(&'static str),
    #[error("rank condition violated: rank {rank} < required {required}")]
    RankDeficient { rank: usize, required: usize },
    #[error("ground-truth latents were not retained for domain {0}")]
    MissingLatents(usize),
}

impl Error {
    pub(crate) fn shape(
        op: &'static str,
        expected: impl core::fmt::Display,
        got: impl core::fmt::Display,
    ) -> Self {
        use alloc::string::ToString;
        Error::Shape {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
