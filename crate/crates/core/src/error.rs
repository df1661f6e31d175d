use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("item id must be a non-empty string")]
    EmptyItemId,
    #[error("catalog must contain at least one item")]
    EmptyCatalog,
    #[error("duplicate item `{0}` in catalog")]
    DuplicateItem(String),
    #[error("unknown item `{0}`")]
    UnknownItem(String),
    #[error("item `{item}` is not in the choice space")]
    ItemNotInSpace { item: String },
    #[error("choice space must contain at least one item")]
    EmptySpace,
    #[error("matrix must be {expected}x{expected}, found a row of length {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix entry ({row}, {col}) is not finite")]
    NonFiniteEntry { row: usize, col: usize },
    #[error("scale factor must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("current and target must differ (both `{0}`)")]
    SameItem(String),
    #[error("pool item `{0}` overlaps the compared items or the base space")]
    PoolOverlap(String),
    #[error(
        "pool of {size} items exceeds the enumeration cap of {cap}; use the greedy approximation"
    )]
    PoolTooLarge { size: usize, cap: usize },
    #[error("choice spaces are not nested")]
    SpacesNotNested,
    #[error("timestamps must be non-decreasing (observation {index})")]
    TimestampOrder { index: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("incomplete evidence: {0}")]
    IncompleteEvidence(String),
    #[error("train and held-out spaces overlap")]
    OverlappingSplit,
    #[error("malformed plant: {0}")]
    MalformedPlant(String),
    #[error("linear program solve failed: {0}")]
    Solver(String),
    #[error("line {line}: {source}")]
    LogLine {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
