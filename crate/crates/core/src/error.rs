use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("node index {index} out of range for a graph with {num_nodes} nodes")]
    NodeOutOfRange { index: usize, num_nodes: usize },
    #[error("feature matrix has {rows} rows, expected {expected}")]
    FeatureRowMismatch { rows: usize, expected: usize },
    #[error("{labels} labels given for {num_nodes} nodes")]
    LabelCountMismatch { labels: usize, num_nodes: usize },
    #[error("label {label} of node {node} is not below num_classes = {num_classes}")]
    LabelOutOfRange {
        node: usize,
        label: usize,
        num_classes: usize,
    },
    #[error("graph has no labels")]
    MissingLabels,
    #[error("graph has no edges")]
    EmptyEdgeSet,
    #[error("graph is complete, no negative edges exist")]
    CompleteGraph,
    #[error("input is empty")]
    EmptyInput,
    #[error("cannot form {k} clusters from {points} points")]
    TooManyClusters { k: usize, points: usize },
    #[error("svd did not converge within {sweeps} sweeps")]
    SvdNoConvergence { sweeps: usize },
    #[error("weight {index} is not strictly positive ({value})")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("duplicate parameter `{0}`")]
    DuplicateParameter(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("non-finite value from {op} at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, op: &'static str },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
