use areasweep_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("map row {row} has {found} cells, expected {expected}")]
    NonRectangular { row: usize, expected: usize, found: usize },
    #[error("unknown map character {ch:?} at row {row}, column {col}")]
    UnknownCharacter { ch: char, row: usize, col: usize },
    #[error("map is empty")]
    EmptyMap,
    #[error("map has no free cell")]
    NoFreeCells,
    #[error("free cell (x={x}, y={y}) is not reachable from the first free cell")]
    DisconnectedFreeSpace { x: usize, y: usize },
    #[error("no path between cells {from} and {to}")]
    Unreachable { from: usize, to: usize },
    #[error("cell {0} is an obstacle or outside the map")]
    TargetIsObstacle(usize),
    #[error("no events have occurred")]
    NoEvents,
    #[error("no simulated time has elapsed")]
    ZeroElapsedTime,
    #[error("time must strictly increase between decision steps ({before} -> {after})")]
    NonMonotonicTime { before: f64, after: f64 },
    #[error("decision counter must advance by one ({before} -> {after})")]
    NonConsecutiveSteps { before: u64, after: u64 },
    #[error("empty reward list")]
    EmptyList,
    #[error("map has {0} free cells, at least 5 are needed")]
    TooFewFreeCells(usize),
    #[error("action mask is empty")]
    EmptyMask,
    #[error("replay holds {have} transitions, a batch needs {need}")]
    ReplayTooSmall { have: usize, need: usize },
    #[error("a {h}x{w} map is too small for the network plan: {reason}")]
    MapTooSmall { h: usize, w: usize, reason: String },
    #[error("decision process is not communicating: state {0} cannot reach every state")]
    NotUnichain(usize),
    #[error("value iteration did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
