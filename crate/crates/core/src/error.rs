use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("k = {k} must be smaller than the node count {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("{op}: zero vector has no direction")]
    ZeroVector { op: &'static str },
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("loss must be a 1x1 tensor, got {rows}x{cols}")]
    NotScalarLoss { rows: usize, cols: usize },
    #[error("linearity length {l} must be smaller than the sequence length {t}")]
    LTooLarge { l: usize, t: usize },
    #[error("masking rate {0} outside [0, 1)")]
    RateOutOfRange(f64),
    #[error("missing target embeddings: need {expected}, got {actual}")]
    MissingTargets { expected: usize, actual: usize },
    #[error("entry (node {node}, t {t}) has no observed graph or temporal neighbour")]
    Unfillable { node: usize, t: usize },
    #[error("no entries in the scoring scope")]
    EmptyScope,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
