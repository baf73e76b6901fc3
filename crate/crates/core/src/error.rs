use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("metric is not symmetric: a[{row}][{col}] != a[{col}][{row}] at x = {x:?}")]
    NonSymmetricMetric { row: usize, col: usize, x: Vec<f64> },

    #[error("metric quadratic form is not positive at x = {x:?}, xi = {xi:?} (value {value:e})")]
    IndefiniteMetric { x: Vec<f64>, xi: Vec<f64>, value: f64 },

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("negative norm index: z = {z}, zeta = {zeta}")]
    NegativeIndex { z: i64, zeta: i64 },

    #[error("rk4 step dt = {dt:e} violates the stability limit; use dt <= {max_dt:e}")]
    CflViolation { dt: f64, max_dt: f64 },

    #[error("split-step scheme needs every generator term to be x-only or xi-only")]
    NotSplittable,

    #[error("invalid time argument: {0}")]
    InvalidTime(String),

    #[error("invalid spectral measure: {0}")]
    InvalidMeasure(String),

    #[error("spectral measure has infinite total mass; a finite integral of M(dxi) is required")]
    InfiniteMass,

    #[error("requested {requested} Cameron-Martin modes but only {max} are available")]
    BasisTooLarge { requested: usize, max: usize },

    #[error("probe {index} lies outside the locality ball (distance {distance:e} > radius {radius:e})")]
    ProbeOutsideBall { index: usize, distance: f64, radius: f64 },

    #[error("no Lipschitz constant for sigma; compute one with solver::lip_constants first")]
    MissingLipschitz,

    #[error("no admissible horizon: K(dt) = {k_first:e} >= 1 at dt = {dt:e}; use a smaller dt or weaker noise")]
    NoAdmissibleHorizon { dt: f64, k_first: f64 },

    #[error("Picard iteration did not reach tolerance after {iterations} iterations (distances {distances:?})")]
    PicardDiverged { iterations: usize, distances: Vec<f64> },

    #[error("iterate {iteration} left the closed ball of radius {radius:e} around u0 at t = {time} (distance {distance:e})")]
    LeftBall { iteration: usize, time: f64, distance: f64, radius: f64 },

    #[error("non-finite value in {what} (time index {time_index:?}, iteration {iteration:?})")]
    NonFinite { what: String, time_index: Option<usize>, iteration: Option<usize> },

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("unknown verification suite `{0}`")]
    UnknownSuite(String),

    #[error("checksum mismatch for {path}: expected {expected}, found {found}")]
    Checksum { path: String, expected: String, found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { path: path.into(), message: message.into() }
    }
}
