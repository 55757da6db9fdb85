use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch { op: &'static str, left: (usize, usize), right: (usize, usize) },

    #[error("empty pooling selection")]
    EmptySelection,

    #[error("invalid node selection: {0}")]
    InvalidSelection(String),

    #[error("invalid graph: {}", .0.join("; "))]
    InvalidGraph(Vec<String>),

    #[error("loss must be scalar, got shape {0:?}")]
    NonScalarLoss((usize, usize)),

    #[error("backward already ran on this tape")]
    BackwardTwice,

    #[error("non-finite gradient")]
    NonFiniteGradient,

    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),

    #[error("qubit {qubit} out of range for a {n}-qubit register")]
    QubitOutOfRange { qubit: usize, n: usize },

    #[error("{0} qubits requested, at most {max} supported", max = crate::qsim::MAX_QUBITS)]
    TooManyQubits(usize),

    #[error("lambda {0} outside [0, 1]")]
    LambdaOutOfRange(f64),

    #[error("roc requires both classes to be present")]
    SingleClass,

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("decoder cache mismatch: {0}")]
    CacheMismatch(String),

    #[error("invalid config: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
