use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the toolkit. Parse failures carry a file locus so a bad
/// corpus file can be pinpointed; everything else names the offending object.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("corpus layout: {0}")]
    Layout(String),

    #[error("graph file {path}: {message}")]
    GraphFormat { path: PathBuf, message: String },

    #[error("solver produced a non-finite objective at iteration {iteration} (last finite value {last_objective})")]
    NonFiniteObjective {
        iteration: usize,
        last_objective: f64,
    },

    #[error("brute force refused: {vertices} vertices exceeds the guard of {max}")]
    BruteForceTooLarge { vertices: usize, max: usize },

    #[error("cut has {cut} sides but graph has {graph} vertices")]
    CutSizeMismatch { cut: usize, graph: usize },

    #[error("vertex ({entity_id}, {slot_type}, {value}) not found in the entity registry")]
    UnknownVertex {
        entity_id: String,
        slot_type: String,
        value: String,
    },

    #[error("no template available for slot type \"{0}\"")]
    MissingTemplate(String),

    #[error(
        "template for slot type \"{slot_type}\" rendered an answer without the value \"{value}\""
    )]
    TemplateLostValue { slot_type: String, value: String },

    #[error("token stream: {0}")]
    TokenStream(String),

    #[error("mix config: {0}")]
    MixConfig(String),

    #[error("solver config: {0}")]
    SolverConfig(String),

    #[error("evaluation: {0}")]
    Evaluation(String),

    #[error("pipeline stage {stage}: {message}")]
    Stage { stage: String, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, err: &serde_json::Error) -> Self {
        Error::Parse {
            path: path.into(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
