use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lens geometry: {0}")]
    InvalidLens(String),

    #[error("invalid array geometry: {0}")]
    InvalidArray(String),

    #[error("invalid dipole: {0}")]
    InvalidDipole(String),

    #[error("invalid angle {0} rad (must be finite with |theta| < pi/2)")]
    InvalidAngle(f64),

    #[error("cell {cell} maps to aperture index {index}, outside 1..={samples}")]
    CellOutsideAperture { cell: usize, index: i64, samples: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("atom {index} (theta = {theta} rad) is identically zero")]
    DegenerateAtom { index: usize, theta: f64 },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("negative input {0} where a non-negative value is required")]
    Negative(f64),

    #[error("zero-norm atom")]
    ZeroAtom,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("scenario draw rejected {0} times; separation constraint cannot be met")]
    RejectionCap(usize),

    #[error("assignment supports at most {max} users, got {got}")]
    TooManyUsers { max: usize, got: usize },

    #[error("dictionary file: {0}")]
    DictionaryFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),
}
