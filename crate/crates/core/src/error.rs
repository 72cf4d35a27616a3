use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("image contains no foreground (ink) pixels")]
    EmptyForeground,
    #[error("normalized side {0} is not a positive multiple of 5")]
    BadSide(usize),
    #[error("raster {width}x{height} is too small (need at least {min} pixels per side)")]
    TooSmall {
        width: usize,
        height: usize,
        min: usize,
    },
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("invalid layer sizes {0}-{1}-{2}")]
    BadShape(usize, usize, usize),
    #[error("label index {label} out of range for {n_out} outputs")]
    LabelOutOfRange { label: usize, n_out: usize },
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    VersionMismatch(u8),
    #[error("file truncated")]
    TruncatedFile,
    #[error("classifier accuracy {0} is not positive")]
    NonPositiveAccuracy(f64),
    #[error("need at least 3 classes, got {0}")]
    TooFewClasses(usize),
    #[error("top score is zero")]
    DegenerateScores,
    #[error("corner ({x}, {y}) lies outside a {side}x{side} raster")]
    OutOfBounds { x: usize, y: usize, side: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("no templates stored for label {0:?}")]
    NoTemplates(String),
    #[error("corner count {0} does not fit in a byte")]
    CountOverflow(u32),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("no class directories found under {0}")]
    NoClasses(PathBuf),
    #[error("class {label:?} has {count} samples, at least {min} required")]
    ClassTooSmall {
        label: String,
        count: usize,
        min: usize,
    },
    #[error("malformed PGM: {0}")]
    Pgm(String),
    #[error("malformed bundle: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Attaches the offending file path.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// Errors caused by bad user input rather than a broken internal invariant.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::File { source, .. } => source.is_input_error(),
            Error::ShapeMismatch { .. }
            | Error::BadShape(..)
            | Error::LabelOutOfRange { .. }
            | Error::DegenerateScores
            | Error::OutOfBounds { .. }
            | Error::NoTemplates(_)
            | Error::CountOverflow(_) => false,
            _ => true,
        }
    }
}
