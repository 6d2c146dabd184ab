//! Versioned output documents.

use std::collections::BTreeMap;
use std::path::Path;

use avatar_core::assembly::{AvatarLook, FilteredPools, TournamentResult, UsageLedger};
use avatar_core::catalog::CatalogStats;
use avatar_core::retrieval::CandidatePool;
use avatar_core::router::RoutingPlan;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Stage};

pub const DOC_VERSION: u32 = 1;

pub const INGEST_REPORT: &str = "ingest_report.json";
pub const ROUTING_PLAN: &str = "routing_plan.json";
pub const POOLS: &str = "pools.json";
pub const LOOK: &str = "look.json";
pub const EVAL_REPORT: &str = "eval_report.json";
pub const EVAL_TABLE: &str = "eval_table.md";
pub const INDEX_MANIFEST: &str = "manifest.json";
pub const SUBSPACES: &str = "subspaces.json";

/// Envelope shared by every output: kind, version and the hash of the
/// settings that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document<T> {
    pub kind: String,
    pub version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub data: T,
}

impl<T> Document<T> {
    pub fn new(kind: &str, config_hash: &str, seed: u64, data: T) -> Self {
        Self {
            kind: kind.to_string(),
            version: DOC_VERSION,
            config_hash: config_hash.to_string(),
            seed,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub dim: Option<usize>,
    pub stats: CatalogStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub dim: usize,
    /// Category → snapshot file name.
    pub indices: BTreeMap<String, String>,
    pub subspaces: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteDoc {
    pub prompt: String,
    pub plan: RoutingPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolDump {
    pub prompt: String,
    pub pools: BTreeMap<String, CandidatePool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookDoc {
    pub prompt: String,
    pub winner: AvatarLook,
    pub candidates: Vec<AvatarLook>,
    pub tournament: TournamentResult,
    pub filtered: FilteredPools,
    pub usage: UsageLedger,
    pub warnings: Vec<String>,
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(stage: Stage, path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(stage, dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::new(stage, "Serialize", e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(stage, path, e))
}

pub fn read_json<T: DeserializeOwned>(stage: Stage, path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(stage, path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::new(stage, "Malformed", format!("{}: {e}", path.display())))
}

/// Reads a document and checks its kind and version.
pub fn read_doc<T: DeserializeOwned>(stage: Stage, path: &Path, kind: &str) -> Result<Document<T>, CliError> {
    let doc: Document<T> = read_json(stage, path)?;
    if doc.kind != kind {
        return Err(CliError::new(
            stage,
            "WrongDocument",
            format!("{}: expected '{kind}', found '{}'", path.display(), doc.kind),
        ));
    }
    if doc.version != DOC_VERSION {
        return Err(CliError::new(
            stage,
            "VersionMismatch",
            format!("{}: version {} (supported {DOC_VERSION})", path.display(), doc.version),
        ));
    }
    Ok(doc)
}
