use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Ingest,
    Index,
    Route,
    Retrieve,
    Assemble,
    Synth,
    Eval,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Index => "index",
            Stage::Route => "route",
            Stage::Retrieve => "retrieve",
            Stage::Assemble => "assemble",
            Stage::Synth => "synth",
            Stage::Eval => "eval",
        }
    }
}

/// Error with a stage-prefixed code such as `route.FileNotFound`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub code: String,
    pub stage: Stage,
    pub message: String,
}

impl CliError {
    pub fn new(stage: Stage, code: &str, message: impl Into<String>) -> Self {
        Self {
            code: format!("{}.{code}", stage.as_str()),
            stage,
            message: message.into(),
        }
    }

    pub fn io(stage: Stage, path: &std::path::Path, e: std::io::Error) -> Self {
        let code = if e.kind() == std::io::ErrorKind::NotFound { "FileNotFound" } else { "Io" };
        Self::new(stage, code, format!("{}: {e}", path.display()))
    }

    /// The machine-readable error document.
    pub fn document(&self) -> serde_json::Value {
        serde_json::json!({ "error": self })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for CliError {}

/// Core errors expose `code()`; this lifts them into a stage.
pub trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, CliError>;
}

macro_rules! at_stage {
    ($($t:ty),* $(,)?) => {$(
        impl<T> AtStage<T> for Result<T, $t> {
            fn at(self, stage: Stage) -> Result<T, CliError> {
                self.map_err(|e| CliError::new(stage, e.code(), e.to_string()))
            }
        }
    )*};
}

at_stage!(
    avatar_core::catalog::CatalogError,
    avatar_core::index::IndexError,
    avatar_core::vecmath::VecError,
    avatar_core::router::RouterError,
    avatar_core::evidence::EvidenceError,
    avatar_core::retrieval::RetrievalError,
    avatar_core::assembly::AssemblyError,
    avatar_core::assembly::JudgeError,
    avatar_core::synth::SynthError,
    avatar_core::eval::EvalError,
);
