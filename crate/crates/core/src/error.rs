//! Error and warning types shared across the crate.
//!
//! Every error variant renders as `Name: detail` so callers (and the CLI)
//! can surface the failing contract by name.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("EmptyFile: {0}")]
    EmptyFile(String),

    #[error("RaggedRow: row {row} has {found} fields, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("TypeMismatch: column '{column}', row {row}: {detail}")]
    TypeMismatch {
        column: String,
        row: usize,
        detail: String,
    },

    #[error("SyntaxError: {0}")]
    SyntaxError(String),

    #[error("DuplicateTerm: {0}")]
    DuplicateTerm(String),

    #[error("UnknownColumn: {0}")]
    UnknownColumn(String),

    #[error("NonBinaryTreatment: column '{0}' is not binary")]
    NonBinaryTreatment(String),

    #[error("ContinuousGroupingCovariate: column '{0}' is numeric; grouping covariates must be binary or categorical")]
    ContinuousGroupingCovariate(String),

    #[error("ContinuousStratifyingCovariate: column '{0}' is numeric; stratifying covariates must be binary or categorical")]
    ContinuousStratifyingCovariate(String),

    #[error("BadFraction: pilot fraction must lie in (0, 1), got {0}")]
    BadFraction(f64),

    #[error("RankDeficient: design column '{0}' is linearly dependent on earlier columns")]
    RankDeficient(String),

    #[error("TooFewRows: {rows} rows for {params} parameters")]
    TooFewRows { rows: usize, params: usize },

    #[error("SingleClassOutcome: column '{0}' takes a single value; both classes are required")]
    SingleClassOutcome(String),

    #[error("SeparationDetected: fitted probabilities saturated while coefficients diverged (iteration {0})")]
    SeparationDetected(usize),

    #[error("UnseenLevel: {term}={value}")]
    UnseenLevel { term: String, value: String },

    #[error("TooManyStrata: {strata} strata requested for {rows} rows")]
    TooManyStrata { rows: usize, strata: usize },

    #[error("NonFiniteScore: score at index {0} is not finite")]
    NonFiniteScore(usize),

    #[error("ScoreLengthMismatch: expected {expected} scores, got {found}")]
    ScoreLengthMismatch { expected: usize, found: usize },

    #[error("Infeasible: cannot assign {k} distinct controls to each of {treated} treated units from {controls} controls")]
    Infeasible {
        treated: usize,
        controls: usize,
        k: usize,
    },

    #[error("NoStratumColumn: the frame has no 'stratum' column; stratify first")]
    NoStratumColumn,

    #[error("UnknownStratum: {0}")]
    UnknownStratum(u32),

    #[error("NoPrognosticScores: this plot requires prognostic scores; manual strata have none")]
    NoPrognosticScores,

    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),

    #[error("JsonError: {0}")]
    Json(#[from] serde_json::Error),
}

/// Non-fatal conditions recorded while stratifying.
#[derive(Debug, Clone, PartialEq)]
pub enum StrataWarning {
    /// Requested stratum size is at least the analysis-set size; one stratum results.
    SizeTooLarge { size: usize, rows: usize },
    /// Tied scores collapsed one or more quantile bins.
    DegenerateScores { requested: usize, effective: usize },
    /// The prognostic model hit its iteration cap before converging.
    PrognosticNotConverged { iterations: usize },
}

impl std::fmt::Display for StrataWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StrataWarning::SizeTooLarge { size, rows } => write!(
                f,
                "SizeTooLarge: size {size} >= analysis rows {rows}; producing a single stratum"
            ),
            StrataWarning::DegenerateScores {
                requested,
                effective,
            } => write!(
                f,
                "DegenerateScores: tied scores collapsed {requested} requested strata to {effective}"
            ),
            StrataWarning::PrognosticNotConverged { iterations } => write!(
                f,
                "NotConverged: prognostic model stopped after {iterations} iterations without converging"
            ),
        }
    }
}

/// Non-fatal conditions recorded while matching.
#[derive(Debug, Clone, PartialEq)]
pub enum MatchWarning {
    /// A stratum had too few controls for the requested ratio and was matched at a smaller one.
    DegradedRatio {
        stratum: u32,
        requested: usize,
        used: usize,
    },
    /// A stratum had fewer controls than treated units; the surplus treated stay unmatched.
    InsufficientControls {
        stratum: u32,
        treated: usize,
        controls: usize,
    },
}

impl MatchWarning {
    pub fn stratum(&self) -> u32 {
        match self {
            MatchWarning::DegradedRatio { stratum, .. } => *stratum,
            MatchWarning::InsufficientControls { stratum, .. } => *stratum,
        }
    }
}

impl std::fmt::Display for MatchWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MatchWarning::DegradedRatio {
                stratum,
                requested,
                used,
            } => write!(
                f,
                "DegradedRatio: stratum {stratum} matched 1:{used} instead of 1:{requested}"
            ),
            MatchWarning::InsufficientControls {
                stratum,
                treated,
                controls,
            } => write!(
                f,
                "InsufficientControls: stratum {stratum} has {treated} treated but only {controls} controls; unmatched treated remain"
            ),
        }
    }
}
