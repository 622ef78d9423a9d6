use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("interpolation points share an x coordinate")]
    DuplicateX,
    #[error("key size {0} bits is not a multiple of the field size")]
    BadKeySize(usize),
    #[error("{got} points cannot determine a degree-{degree} polynomial")]
    TooFewPoints { got: usize, degree: usize },
    #[error("vault decoding failed")]
    DecodeFailed,
    #[error("feature index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("need at least {need} templates, got {got}")]
    TooFewTemplates { need: usize, got: usize },
    #[error("samples must contain both genuine and forgery labels")]
    DegenerateLabels,
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("key size {ks} does not match polynomial degree {k}")]
    KeyMismatch { ks: usize, k: usize },
    #[error("key of {ks} bits exceeds planned size of {max} bits")]
    KeyTooLarge { ks: usize, max: usize },
    #[error("cannot truncate a {ks}-bit key to {want} bits")]
    BadLength { ks: usize, want: usize },
    #[error("password must not be empty")]
    EmptyPassword,
    #[error("authentication failed")]
    AuthFailure,
    #[error("signature verification gate rejected the query")]
    SvReject,
    #[error("corrupt template file: {0}")]
    CorruptFile(String),
    #[error("unsupported template format version {0:?}")]
    VersionMismatch(String),
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("malformed dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}
