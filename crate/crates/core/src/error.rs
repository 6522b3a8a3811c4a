use thiserror::Error;

#[derive(Debug, Error)]
pub enum FfError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("time {t} is not a grid point (cell width {dt})")]
    OffGridTime { t: f64, dt: f64 },
    #[error("color {k} out of range 1..={n_colors}")]
    ColorOutOfRange { k: usize, n_colors: usize },
    #[error("filter {filter} exceeds the color range 1..={n_colors}")]
    FilterOutOfRange { filter: String, n_colors: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("dense materialization refused: {dim} basis states exceeds cap {cap}")]
    DenseCapExceeded { dim: usize, cap: usize },
    #[error("band index {k} exceeds color count {n_colors}")]
    BandOutOfRange { k: usize, n_colors: usize },
    #[error("m = {m} exceeds color count {n_colors}")]
    LevelOutOfRange { m: usize, n_colors: usize },
    #[error("infinite level requires a color-support bound")]
    UnboundedLevel,
    #[error("filter collection is not closed under intersections: {0}")]
    NotIntersectionClosed(String),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, FfError>;
