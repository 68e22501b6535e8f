use thiserror::Error;

use crate::color::Condition;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("could not generate a {condition:?} context in {attempts} attempts")]
    GenerationFailed { condition: Condition, attempts: usize },

    #[error("invalid context: {0}")]
    InvalidContext(String),

    #[error("invalid lexicon: {0}")]
    InvalidLexicon(String),

    #[error("invalid grammar: {0}")]
    InvalidGrammar(String),

    #[error("invalid logical form: {0}")]
    InvalidLogicalForm(String),

    #[error("no clarification is pending")]
    NoPendingClarification,

    #[error("dialogue already closed by a selection")]
    DialogueClosed,

    #[error("illegal director action {action} in the current state")]
    IllegalAction { action: &'static str },

    #[error("not the {expected}'s turn")]
    WrongTurn { expected: &'static str },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("threshold calibration failed: {0}")]
    Calibration(String),

    #[error("training diverged at update {update}: mean |Q| = {mean_abs_q}")]
    Diverged { update: usize, mean_abs_q: f64 },

    #[error("non-finite gradient")]
    NonFiniteGradient,

    #[error("weight artifact mismatch: {0}")]
    WeightMismatch(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
