use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the indicator pipeline.
#[derive(Debug, Error)]
pub enum Error {
    // ingest
    #[error("missing column: {0}")]
    MissingColumn(String),
    #[error("parse error at row {row}, column {column}")]
    ParseError { row: usize, column: String },
    #[error("trace is empty after ingestion")]
    EmptyTrace,
    #[error("no samples survive the context filter")]
    EmptyAfterFilter,
    #[error("trace has fewer than 2 samples")]
    DegenerateTrace,

    // curve context
    #[error("curvature profile is empty")]
    EmptyProfile,
    #[error("trace does not cover curve {0}")]
    CurveNotCovered(u32),
    #[error("curve {0} window contains a filtered gap")]
    WindowContainsGap(u32),
    #[error("subject {0} has insufficient straight-driving data")]
    InsufficientStraightData(String),

    // kinematics / statistics
    #[error("smoothing window exceeds segment length ({window} > {len})")]
    WindowTooLarge { window: usize, len: usize },
    #[error("series is empty")]
    EmptySeries,
    #[error("no evaluable curves")]
    NoEvaluableCurves,

    // envelope / pca
    #[error("rotation stride {0} does not divide 360 degrees")]
    NonDivisorStride(f64),
    #[error("matrix is rank deficient")]
    RankDeficient,
    #[error("too few subjects ({n}) for {k} components")]
    TooFewSubjects { n: usize, k: usize },

    // stationary cornering
    #[error("too few points for regression ({0} < 3)")]
    TooFewPoints(usize),
    #[error("regressor has zero spread")]
    DegenerateSpread,

    // transient cornering
    #[error("curve window too short ({0} samples)")]
    TooShort(usize),
    #[error("curve segment is empty")]
    EmptySegment,
    #[error("zero distance traveled in curve window")]
    ZeroDistance,

    // mdsi
    #[error("answer {0} outside the 1..={1} scale")]
    OutOfScale(i64, i64),
    #[error("subject {subject} is missing answers: {items:?}")]
    MissingAnswers { subject: String, items: Vec<u32> },
    #[error("item correlation matrix is singular")]
    SingularCorrelation,
    #[error("cohort of {n} subjects is too small for refined scoring ({items} items)")]
    CohortTooSmall { n: usize, items: usize },
    #[error("incomplete factor scores")]
    IncompleteScores,
    #[error("degenerate variance")]
    DegenerateVariance,

    // correlation
    #[error("series length mismatch ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("covariates are collinear")]
    CollinearCovariates,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("config error: {0}")]
    Config(String),
}
