//! Per-prompt visual and textual evidence: scaffold view embeddings, part
//! crop embeddings and the text priors of the routed queries.
//!
//! Everything here is produced by external models; this module validates it,
//! picks the right view per category and decides between part and global
//! evidence.
//!
//! Evidence file (JSON, `version` 1):
//!
//! ```text
//! {
//!   "version": 1,
//!   "prompt_text": "...",
//!   "concepts": [{"keyword": "cargo pants", "modifiers": ["olive"]}],
//!   "views": {"front": [..], "back": [..]},
//!   "parts": [{"category_id": "pants", "view": "front", "status": "valid", "embedding": [..]}],
//!   "text_priors": {"pants": [..]}
//! }
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Taxonomy, View};
use crate::router::{Concept, PromptSpec};
use crate::vecmath::{EmbeddingVector, VecError};

pub const EVIDENCE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EvidenceError {
    #[error("no scaffold views available")]
    NoViewsAvailable,
    #[error("evidence store is frozen")]
    Frozen,
    #[error("part evidence for '{category_id}': {message}")]
    InvalidPart {
        category_id: String,
        message: String,
    },
    #[error("embedding for {what}: {source}")]
    Embedding {
        what: String,
        #[source]
        source: VecError,
    },
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed evidence document: {0}")]
    Malformed(String),
    #[error("unsupported evidence version {0}")]
    VersionMismatch(u32),
}

impl EvidenceError {
    pub fn code(&self) -> &'static str {
        match self {
            EvidenceError::NoViewsAvailable => "NoViewsAvailable",
            EvidenceError::Frozen => "Frozen",
            EvidenceError::InvalidPart { .. } => "InvalidPart",
            EvidenceError::Embedding { source, .. } => source.code(),
            EvidenceError::FileNotFound(_) => "FileNotFound",
            EvidenceError::Io { .. } => "IoError",
            EvidenceError::Malformed(_) => "MalformedEvidence",
            EvidenceError::VersionMismatch(_) => "VersionMismatch",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartStatus {
    Valid,
    FallbackKeyword,
    Failed,
}

impl PartStatus {
    pub fn is_usable(self) -> bool {
        matches!(self, PartStatus::Valid | PartStatus::FallbackKeyword)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartEvidence {
    pub category_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingVector>,
    pub source_view: View,
    pub status: PartStatus,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvidenceStore {
    dim: Option<usize>,
    views: BTreeMap<View, EmbeddingVector>,
    parts: BTreeMap<String, PartEvidence>,
    text_priors: BTreeMap<String, EmbeddingVector>,
    frozen: bool,
}

impl EvidenceStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn admit(&mut self, what: &str, v: &EmbeddingVector) -> Result<EmbeddingVector, EvidenceError> {
        if self.frozen {
            return Err(EvidenceError::Frozen);
        }
        let wrap = |source| EvidenceError::Embedding {
            what: what.to_string(),
            source,
        };
        if let Some(d) = self.dim {
            if d != v.dim() {
                return Err(wrap(VecError::DimensionMismatch {
                    expected: d,
                    got: v.dim(),
                }));
            }
        }
        // Vectors already unit to rounding are stored bit-for-bit.
        let unit = if (v.norm() - 1.0).abs() <= 4.0 * f64::EPSILON {
            v.clone()
        } else {
            v.normalized().map_err(wrap)?
        };
        self.dim = Some(v.dim());
        Ok(unit)
    }

    pub fn register_view(&mut self, view: View, g: &EmbeddingVector) -> Result<(), EvidenceError> {
        let unit = self.admit(&format!("view {view}"), g)?;
        self.views.insert(view, unit);
        Ok(())
    }

    pub fn register_part(&mut self, part: PartEvidence) -> Result<(), EvidenceError> {
        let invalid = |message: &str| EvidenceError::InvalidPart {
            category_id: part.category_id.clone(),
            message: message.to_string(),
        };
        let embedding = match (part.status, &part.embedding) {
            (PartStatus::Failed, Some(_)) => return Err(invalid("failed part carries an embedding")),
            (PartStatus::Failed, None) => None,
            (_, None) => return Err(invalid("usable part has no embedding")),
            (_, Some(e)) => Some(self.admit(&format!("part {}", part.category_id), e)?),
        };
        if self.frozen {
            return Err(EvidenceError::Frozen);
        }
        self.parts.insert(
            part.category_id.clone(),
            PartEvidence { embedding, ..part },
        );
        Ok(())
    }

    pub fn register_text_prior(
        &mut self,
        category_id: &str,
        t: &EmbeddingVector,
    ) -> Result<(), EvidenceError> {
        let unit = self.admit(&format!("text prior {category_id}"), t)?;
        self.text_priors.insert(category_id.to_string(), unit);
        Ok(())
    }

    /// Makes the store read-only; later registrations fail with `Frozen`.
    pub fn freeze(&mut self) -> Result<(), EvidenceError> {
        if self.views.is_empty() {
            return Err(EvidenceError::NoViewsAvailable);
        }
        self.frozen = true;
        Ok(())
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn available_views(&self) -> BTreeSet<View> {
        self.views.keys().copied().collect()
    }

    pub fn view(&self, view: View) -> Option<&EmbeddingVector> {
        self.views.get(&view)
    }

    pub fn part(&self, category_id: &str) -> Option<&PartEvidence> {
        self.parts.get(category_id)
    }

    pub fn text_prior(&self, category_id: &str) -> Option<&EmbeddingVector> {
        self.text_priors.get(category_id)
    }

    /// The scaffold view embedding preferred for `category_id`.
    pub fn global_for(
        &self,
        category_id: &str,
        taxonomy: &Taxonomy,
    ) -> Result<(View, &EmbeddingVector), EvidenceError> {
        let sel = select_views(category_id, taxonomy, &self.available_views())?;
        let v = sel.views[0];
        Ok((v, &self.views[&v]))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewSelection {
    pub views: Vec<View>,
    /// None of the category's preferred views was available.
    pub low_confidence: bool,
}

pub fn select_views(
    category_id: &str,
    taxonomy: &Taxonomy,
    available: &BTreeSet<View>,
) -> Result<ViewSelection, EvidenceError> {
    if available.is_empty() {
        return Err(EvidenceError::NoViewsAvailable);
    }
    let default_order = || -> Vec<View> {
        View::ALL
            .iter()
            .copied()
            .filter(|v| available.contains(v))
            .collect()
    };
    match taxonomy.view_map.get(category_id) {
        Some(preferred) => {
            let views: Vec<View> = preferred
                .iter()
                .copied()
                .filter(|v| available.contains(v))
                .collect();
            if views.is_empty() {
                log::warn!("no preferred view for '{category_id}' available, using default order");
                Ok(ViewSelection {
                    views: default_order(),
                    low_confidence: true,
                })
            } else {
                Ok(ViewSelection {
                    views,
                    low_confidence: false,
                })
            }
        }
        None => Ok(ViewSelection {
            views: default_order(),
            low_confidence: false,
        }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PartOrGlobal<'a> {
    Part {
        embedding: &'a EmbeddingVector,
        view: View,
        status: PartStatus,
    },
    Global {
        embedding: &'a EmbeddingVector,
        view: View,
    },
}

impl PartOrGlobal<'_> {
    pub fn is_part(&self) -> bool {
        matches!(self, PartOrGlobal::Part { .. })
    }
}

pub fn resolve_part_or_global<'a>(
    category_id: &str,
    store: &'a EvidenceStore,
    taxonomy: &Taxonomy,
) -> Result<PartOrGlobal<'a>, EvidenceError> {
    if let Some(part) = store.part(category_id) {
        if part.status.is_usable() {
            if let Some(embedding) = &part.embedding {
                return Ok(PartOrGlobal::Part {
                    embedding,
                    view: part.source_view,
                    status: part.status,
                });
            }
        }
    }
    let (view, embedding) = store.global_for(category_id, taxonomy)?;
    Ok(PartOrGlobal::Global { embedding, view })
}

/// On-disk evidence document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceDocument {
    pub version: u32,
    pub prompt_text: String,
    #[serde(default)]
    pub concepts: Vec<Concept>,
    pub views: BTreeMap<View, EmbeddingVector>,
    #[serde(default)]
    pub parts: Vec<PartEvidence>,
    #[serde(default)]
    pub text_priors: BTreeMap<String, EmbeddingVector>,
}

impl EvidenceDocument {
    pub fn prompt_spec(&self) -> PromptSpec {
        PromptSpec {
            prompt_text: self.prompt_text.clone(),
            concepts: self.concepts.clone(),
        }
    }

    /// Validates the document into a frozen store.
    pub fn to_store(&self) -> Result<EvidenceStore, EvidenceError> {
        if self.version != EVIDENCE_VERSION {
            return Err(EvidenceError::VersionMismatch(self.version));
        }
        let mut store = EvidenceStore::new();
        for (view, g) in &self.views {
            store.register_view(*view, g)?;
        }
        for part in &self.parts {
            store.register_part(part.clone())?;
        }
        for (cat, t) in &self.text_priors {
            store.register_text_prior(cat, t)?;
        }
        store.freeze()?;
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self, EvidenceError> {
        let text = std::fs::read_to_string(path).map_err(|source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                EvidenceError::FileNotFound(path.to_path_buf())
            } else {
                EvidenceError::Io {
                    path: path.to_path_buf(),
                    source,
                }
            }
        })?;
        serde_json::from_str(&text).map_err(|e| EvidenceError::Malformed(e.to_string()))
    }
}
