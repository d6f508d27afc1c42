use thiserror::Error;

/// Errors raised by carpet construction, symbolic queries and the
/// deviation/experiment machinery.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("bad grid: need 2 <= m < n, got m={m}, n={n}")]
    BadGrid { m: u32, n: u32 },
    #[error("bad digit set: {0}")]
    BadDigits(String),
    #[error("bad weights: {0}")]
    BadWeights(String),
    #[error("depth {depth} needs {count} rectangles, cap is {cap}")]
    TooDeep {
        depth: usize,
        count: u128,
        cap: u128,
    },
    #[error("scale {0} is outside (0, 1)")]
    BadScale(f64),
    #[error("bad scales: {0}")]
    BadScales(String),
    #[error("bad index range: {0}")]
    BadRange(String),
    #[error("code has {have} letters, operation needs {need}")]
    CodeTooShort { have: usize, need: usize },
    #[error("point is not in the depth-{depth} approximation")]
    NotInSet { depth: usize },
    #[error("epsilon {eps} must lie in (0, {upper})")]
    BadEpsilon { eps: f64, upper: f64 },
    #[error("delta {delta} must lie in (1, {upper})")]
    BadDelta { delta: f64, upper: f64 },
    #[error("lambda {lambda} outside [{lower}, {upper})")]
    LambdaOutOfRange { lambda: f64, lower: f64, upper: f64 },
    #[error("exceedance window is empty")]
    WindowEmpty,
    #[error("dynamic programme needs {cells} cells, cap is {cap}")]
    StateSpaceTooLarge { cells: u128, cap: u128 },
    #[error("fibre variance is zero (uniform fibres)")]
    DegenerateSigma,
    #[error("integer overflow computing {0}")]
    Overflow(&'static str),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
