use std::fmt;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage an error originated in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Predict,
    Bucketing,
    Labeling,
    Scoring,
    Mitigation,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Predict => "predict",
            Stage::Bucketing => "bucketing",
            Stage::Labeling => "labeling",
            Stage::Scoring => "scoring",
            Stage::Mitigation => "mitigation",
        })
    }
}

/// Coarse error class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    UndefinedMetric,
    Internal,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("protected value {value:?} is not covered by group spec for {attribute:?}")]
    UncoveredGroupValue { attribute: String, value: String },

    #[error("invalid group spec: {0}")]
    InvalidGroupSpec(String),

    #[error("favorable fraction must lie in (0, 1), got {0}")]
    InvalidFraction(f64),

    #[error("label spec has not been fitted")]
    LabelSpecUnfitted,

    #[error("cannot fit label spec on an empty label set")]
    EmptyLabels,

    #[error("invalid mitigation config: {0}")]
    InvalidConfig(String),

    #[error("need at least 2 predictions to fit bands, got {0}")]
    TooFewPredictions(usize),

    #[error("prediction {0} is not finite")]
    NonFinitePrediction(f64),

    #[error("degenerate prediction distribution: standard deviation is zero")]
    DegenerateDistribution,

    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),

    #[error("tally invariant violated: {0}")]
    TallyInvariant(&'static str),

    #[error("no prediction for sample {sample_id:?} in group {group}")]
    MissingPrediction { sample_id: String, group: u8 },

    #[error("invalid samples: {0}")]
    InvalidSamples(String),

    #[error("invalid predictor: {0}")]
    InvalidPredictor(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSyntheticSpec(String),

    #[error("{path}: missing required column {column:?}")]
    MissingColumn { path: String, column: String },

    #[error("{path}: unknown column {column:?}")]
    UnknownColumn { path: String, column: String },

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: u64, message: String },

    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{stage} stage failed")]
    Pipeline {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at(stage: Stage) -> impl FnOnce(Error) -> Error {
        move |source| Error::Pipeline {
            stage,
            source: Box::new(source),
        }
    }

    /// The innermost error, looking through stage attribution.
    pub fn root(&self) -> &Error {
        match self {
            Error::Pipeline { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self.root() {
            Error::UndefinedMetric(_) => ErrorKind::UndefinedMetric,
            Error::TallyInvariant(_) => ErrorKind::Internal,
            _ => ErrorKind::Input,
        }
    }
}
