use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest schema violation at `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("duplicate image id `{0}`")]
    DuplicateImageId(String),

    #[error("duplicate dataset id `{0}`")]
    DuplicateDatasetId(String),

    #[error("failed to decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("image `{id}` declares {declared_w}x{declared_h} but file is {actual_w}x{actual_h}")]
    DimensionMismatch {
        id: String,
        declared_w: u32,
        declared_h: u32,
        actual_w: u32,
        actual_h: u32,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("negative weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },

    #[error("unbalanced transport problem: supply {supply} vs demand {demand}")]
    Unbalanced { supply: f64, demand: f64 },

    #[error("non-finite ground cost at ({row}, {col})")]
    NonFiniteCost { row: usize, col: usize },

    #[error("label overlap is zero and epsilon is zero")]
    DivisionGuard,

    #[error("no valid source for target `{0}`: every score is degenerate")]
    NoValidSource(String),

    #[error("augmentation directive for `{image_id}` -> `{new_id}` failed: {message}")]
    Directive {
        image_id: String,
        new_id: String,
        message: String,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            message: message.into(),
        }
    }
}
