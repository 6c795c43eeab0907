use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: invalid character {ch:?}")]
    InvalidChar { line: usize, ch: char },
    #[error("line {line}: empty syllable")]
    EmptySyllable { line: usize },
    #[error("line {line}: syllable {syllable:?} ends with a hyphen")]
    TrailingHyphen { line: usize, syllable: String },
    #[error("syllable {0:?} consists only of hyphens")]
    HyphenOnlySyllable(String),
    #[error("invalid word: {0}")]
    InvalidWord(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("invalid synthesis config: {0}")]
    InvalidSynthesis(String),
    #[error("tag count {tags} does not match letter count {letters}")]
    TagLengthMismatch { tags: usize, letters: usize },
    #[error("tag sequence must start with S")]
    FirstTagNotStart,
    #[error("invalid tag character {0:?}")]
    InvalidTag(char),
    #[error("empty input")]
    EmptyInput,
    #[error("id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: usize, size: usize },
    #[error("symbol {0:?} is not in the vocabulary")]
    UnknownSymbol(char),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value at step {step}")]
    NonFinite { step: usize },
    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(String),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("all steps are masked")]
    AllMasked,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("reports cover different test sets")]
    MismatchedTestSets,
    #[error("need at least two reports to compare")]
    TooFewReports,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("architecture mismatch: expected {expected}, found {found}")]
    ArchitectureMismatch { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by malformed user input rather than runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidChar { .. }
                | Error::EmptySyllable { .. }
                | Error::TrailingHyphen { .. }
                | Error::HyphenOnlySyllable(_)
                | Error::InvalidWord(_)
                | Error::EmptyCorpus
                | Error::InvalidSplit(_)
                | Error::InvalidSynthesis(_)
                | Error::UnknownSymbol(_)
                | Error::Config(_)
                | Error::ArchitectureMismatch { .. }
                | Error::MismatchedTestSets
                | Error::TooFewReports
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
