use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// What went wrong on a single line of a feature CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CsvFault {
    Header(String),
    MalformedRow(String),
    UnknownClass(usize),
    UnknownSplit(String),
    Dimension { expected: usize, found: usize },
}

impl std::fmt::Display for CsvFault {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CsvFault::Header(msg) => write!(f, "bad header: {msg}"),
            CsvFault::MalformedRow(msg) => write!(f, "malformed row: {msg}"),
            CsvFault::UnknownClass(c) => write!(f, "unknown class id {c}"),
            CsvFault::UnknownSplit(s) => write!(f, "unknown split {s:?} (expected train or test)"),
            CsvFault::Dimension { expected, found } => {
                write!(f, "expected {expected} feature values, found {found}")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    // curriculum validation
    #[error("class {0} appears more than once")]
    DuplicateClass(usize),
    #[error("class {0} is not covered by any task")]
    MissingClass(usize),
    #[error("task {0} has no classes")]
    EmptyTask(usize),
    #[error("class {class} is out of range for {n_classes} classes")]
    ClassOutOfRange { class: usize, n_classes: usize },
    #[error("a curriculum needs at least {min} tasks, got {found}")]
    TooFewTasks { min: usize, found: usize },
    #[error("no tasks given")]
    NoTasks,
    #[error("letter encoding supports at most 26 classes, got {0}")]
    UnsupportedSize(usize),
    #[error("cannot decode curriculum string {0:?}")]
    BadCurriculumString(String),

    // numerics
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cosine distance is undefined for a zero-norm vector")]
    ZeroNorm,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{what} = {value} is outside {range}")]
    OutOfRange {
        what: &'static str,
        value: f64,
        range: &'static str,
    },

    // designer
    #[error("step {step} is outside 1..={len}")]
    StepOutOfRange { step: usize, len: usize },
    #[error("distance matrix must be normalized to [0, 1] before scoring")]
    NotNormalized,
    #[error("{tasks}! curricula exceeds the enumeration limit of {limit}; reduce the number of tasks")]
    EnumerationLimit { tasks: usize, limit: usize },

    // learner
    #[error("label {0} is not among the seen classes")]
    LabelNotSeen(usize),
    #[error("training failed on task {task}: {source}")]
    Training {
        task: usize,
        #[source]
        source: Box<Error>,
    },

    // metrics
    #[error("accuracy entry ({row}, {col}) is undefined")]
    UndefinedAccuracy { row: usize, col: usize },
    #[error("rankings cover different curriculum sets")]
    UniverseMismatch,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("both samples have zero variance")]
    DegenerateVariance,

    // data / io
    #[error("{path}:{line}: {fault}")]
    Csv {
        path: PathBuf,
        line: usize,
        fault: CsvFault,
    },
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("strategy {strategy:?} has no records for {missing} curricula")]
    IncompleteRecords { strategy: String, missing: usize },
    #[error("report does not match a recomputation from the run records: {0}")]
    VerifyMismatch(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
