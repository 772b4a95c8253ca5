use thiserror::Error;

/// Errors produced by the factorisation library.
#[derive(Debug, Error)]
pub enum NmfError {
    #[error("malformed model spec `{0}`: expected NMF/<T|C>/<N|Po|TW[_p]|NB[_a]>[/K]")]
    SpecSyntax(String),

    #[error("Tweedie power p = {0} lies in the forbidden interval (0, 1)")]
    PowerInForbiddenInterval(f64),

    #[error("Tweedie power p = {0} is negative; negative powers are not supported")]
    NegativePower(f64),

    #[error("Tweedie power p = {0} exceeds 3, the largest power supported for fitting")]
    PowerTooLarge(f64),

    #[error("Negative Binomial dispersion alpha = {0} must be positive")]
    NonPositiveAlpha(f64),

    #[error("rank K = {0} must be a positive integer")]
    RankNotPositive(i64),

    #[error("model spec has no rank; a rank is required for this operation")]
    MissingRank,

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("value x = {x} at entry ({row}, {col}) is outside the support for p = {p}")]
    SupportViolation { x: f64, p: f64, row: usize, col: usize },

    #[error("value x = {x} is outside the support for p = {p}")]
    OutOfSupport { x: f64, p: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("log-density is not available for Tweedie power p = {0}; supported: 0, [1, 2], 3")]
    UnsupportedDensityPower(f64),

    #[error("compound-Poisson series did not converge after {terms} terms (x = {x})")]
    SeriesNonConvergence { x: f64, terms: usize },

    #[error("matrix entry ({row}, {col}) = {value} must be positive")]
    NonPositiveEntry { row: usize, col: usize, value: f64 },

    #[error("matrix entry ({row}, {col}) = {value} must be non-negative")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("entry ({row}, {col}) = {value} is not a non-negative integer count")]
    NonIntegerCount { row: usize, col: usize, value: f64 },

    #[error("column {0} of V^T E is degenerate (sums to zero)")]
    DegenerateColumn(usize),

    #[error("parameter grid is empty or not strictly increasing")]
    InvalidGrid,

    #[error("all entries of the data matrix are zero")]
    AllZeroData,

    #[error("residual degrees of freedom {0} must be positive")]
    NonPositiveDof(i64),

    #[error("Pearson dispersion requires dense data; matrix has sparsity {0}")]
    SparsityViolation(f64),

    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,

    #[error("label count {labels} does not match column count {cols}")]
    LabelMismatch { labels: usize, cols: usize },

    #[error("top-k {topk} exceeds the number of columns {cols}")]
    TopKTooLarge { topk: usize, cols: usize },

    #[error("matrix is empty")]
    EmptyMatrix,

    #[error("ragged row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("could not parse `{field}` as a number at row {row}")]
    FieldParse { row: usize, field: String },

    #[error("coordinate ({i}, {j}) is outside the declared {rows}x{cols} shape")]
    CoordinateOutOfRange {
        i: usize,
        j: usize,
        rows: usize,
        cols: usize,
    },

    #[error("{0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NmfError>;
