use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("ground truth mask has no positive pixels")]
    EmptyTruth,

    #[error("component has no pixels")]
    EmptyComponent,

    #[error("ground truth contains {0} separate buds; exactly one is required")]
    MultipleBuds(usize),

    #[error("dimension mismatch: expected {expected:?}, found {found:?} (width, height)")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("window size {size} does not fit a {width}x{height} image")]
    WindowTooLarge {
        size: usize,
        width: usize,
        height: usize,
    },

    #[error("inconsistent configuration: {0}")]
    InconsistentConfig(String),

    #[error("bud count is undefined for zero detection precision")]
    UndefinedCount,

    #[error("oracle input {width}x{height} exceeds the {limit}x{limit} limit")]
    OracleSize {
        width: usize,
        height: usize,
        limit: usize,
    },

    #[error("malformed image: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
