//! Crate-wide error type.

use crate::born::IndeterminateReason;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty layout")]
    EmptyLayout,
    #[error("duplicate subsystem name `{0}`")]
    DuplicateSubsystem(String),
    #[error("subsystem `{name}` has dimension {dim} but {labels} labels")]
    LabelCountMismatch {
        name: String,
        dim: usize,
        labels: usize,
    },
    #[error("subsystem `{name}` must have dimension >= 2, got {dim}")]
    DimensionTooSmall { name: String, dim: usize },
    #[error("duplicate label `{label}` in subsystem `{name}`")]
    DuplicateLabel { name: String, label: String },
    #[error("unknown subsystem `{0}`")]
    UnknownSubsystem(String),
    #[error("unknown label `{label}` for subsystem `{subsystem}`")]
    UnknownLabel { subsystem: String, label: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("vector is not normalized (norm = {norm})")]
    NotNormalized { norm: f64 },
    #[error("matrix is not unitary (max deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },
    #[error("map on configurations is not a bijection")]
    NotBijection,
    #[error("unitary is not a permutation of configurations")]
    NotPermutation,
    #[error("operands live on different layouts")]
    LayoutMismatch,
    #[error("invalid measurement spec: {0}")]
    InvalidMeasurement(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("unknown scenario `{0}` (expected `version1` or `version2`)")]
    UnknownScenario(String),
    #[error("unknown event id {0}")]
    UnknownEvent(usize),
    #[error("event {0} is not a measurement")]
    NotAMeasurement(usize),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("query assigns more than one outcome to event {0}")]
    ConflictingOutcomes(usize),
    #[error("Born-indeterminate: {0}")]
    BornIndeterminate(Box<IndeterminateReason>),
    #[error("dynamics rule not applicable: {0}")]
    RuleInapplicable(String),
    #[error("state carries no probability mass")]
    DegenerateState,
    #[error("event {0} has no readout in the trajectory logs")]
    EventNotLogged(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("packet support exceeds grid bounds")]
    PacketOutsideGrid,
    #[error("packets not separated enough: density overlap bound {bound:.3e} exceeds {limit:.3e}")]
    PacketsOverlap { bound: f64, limit: f64 },
    #[error(transparent)]
    Parse(#[from] crate::edl::ParseError),
    #[error(transparent)]
    Validate(#[from] crate::edl::ValidateError),
}
