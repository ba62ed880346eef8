use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("intervals {first:?} and {second:?} are not in canonical order")]
    OrderViolation { first: (f64, f64), second: (f64, f64) },

    #[error("degenerate interval [{start}, {end}): start must precede end")]
    DegenerateInterval { start: f64, end: f64 },

    #[error("empty relation set")]
    EmptyRelationSet,

    #[error("composition closure produced {0} classes, expected 11")]
    ClassCountMismatch(usize),

    #[error("empty interval relation constraint on link ({from}, {to})")]
    EmptyConstraint { from: usize, to: usize },

    #[error("observed relation on link ({from}, {to}) lies outside its constraint")]
    RelationOutsideConstraint { from: usize, to: usize },

    #[error("instance has {len} intervals, more than k* = {k_star}")]
    InstanceTooLong { len: usize, k_star: usize },

    #[error("digamma is undefined for x = {0}")]
    Domain(f64),

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("no class models supplied")]
    NoModels,

    #[error("class `{class}` has {count} instances, fewer than {folds} folds")]
    InsufficientClassInstances { class: String, count: usize, folds: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: degenerate interval [{start}, {end})")]
    DegenerateIntervalAt { line: usize, start: f64, end: f64 },

    #[error("unknown relation `{0}`")]
    UnknownRelation(String),

    #[error("unknown class `{0}`")]
    UnknownClass(String),

    #[error("could not realize timestamps for a generated network")]
    Realization,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
