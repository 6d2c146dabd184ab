//! Asset catalog ingestion and the per-category asset sets.
//!
//! The catalog file is line-delimited JSON, one asset per line:
//!
//! ```text
//! {"asset_id":"pants-0001","category_id":"pants","embedding":[0.1,...],
//!  "title":"olive cargo pants","quality_flag":"curated","bundle_id":null}
//! ```
//!
//! Malformed lines are skipped and reported in [`CatalogStats`]; a record
//! whose embedding dimension differs from the catalog's aborts ingestion.

pub(crate) mod taxonomy;

pub use taxonomy::{Taxonomy, View, Violation};

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vecmath::{EmbeddingVector, VecError};

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: embedding dimension {got} differs from catalog dimension {expected}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("unknown category '{0}'")]
    UnknownCategory(String),
    #[error("invalid taxonomy: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidTaxonomy(Vec<Violation>),
}

impl CatalogError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            CatalogError::FileNotFound(path.to_path_buf())
        } else {
            CatalogError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CatalogError::FileNotFound(_) => "FileNotFound",
            CatalogError::Io { .. } => "IoError",
            CatalogError::DimensionMismatch { .. } => "DimensionMismatch",
            CatalogError::UnknownCategory(_) => "UnknownCategory",
            CatalogError::InvalidTaxonomy(_) => "InvalidTaxonomy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityFlag {
    Curated,
    Unfiltered,
}

/// Catalog line as it appears on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogRecord {
    pub asset_id: String,
    pub category_id: String,
    pub embedding: Vec<f64>,
    #[serde(default)]
    pub title: String,
    pub quality_flag: QualityFlag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bundle_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Asset {
    pub asset_id: String,
    pub category_id: String,
    pub embedding: EmbeddingVector,
    pub title: String,
    pub quality_flag: QualityFlag,
    pub bundle_id: Option<String>,
}

impl Asset {
    pub fn to_record(&self) -> CatalogRecord {
        CatalogRecord {
            asset_id: self.asset_id.clone(),
            category_id: self.category_id.clone(),
            embedding: self.embedding.as_slice().to_vec(),
            title: self.title.clone(),
            quality_flag: self.quality_flag,
            bundle_id: self.bundle_id.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Malformed,
    UnknownCategory,
    DuplicateAssetId,
    ZeroEmbedding,
    NonFiniteEmbedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based line number in the catalog file.
    pub line: usize,
    pub asset_id: Option<String>,
    pub reason: RejectReason,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CatalogStats {
    /// Every non-blank record seen, accepted or rejected.
    pub total_assets: usize,
    pub per_category_counts: BTreeMap<String, usize>,
    pub rejected_records: usize,
    pub rejections: Vec<Rejection>,
}

impl CatalogStats {
    pub fn is_consistent(&self) -> bool {
        self.total_assets
            == self.per_category_counts.values().sum::<usize>() + self.rejected_records
    }
}

/// Accepted assets grouped by category, each group sorted by `asset_id`.
/// Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    dim: Option<usize>,
    by_category: BTreeMap<String, Vec<Asset>>,
}

impl Catalog {
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.by_category.keys().map(String::as_str)
    }

    pub fn assets_of(&self, category_id: &str) -> Result<&[Asset], CatalogError> {
        self.by_category
            .get(category_id)
            .map(Vec::as_slice)
            .ok_or_else(|| CatalogError::UnknownCategory(category_id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.by_category.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn find(&self, asset_id: &str) -> Option<&Asset> {
        self.by_category
            .values()
            .flat_map(|v| v.iter())
            .find(|a| a.asset_id == asset_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Asset> {
        self.by_category.values().flat_map(|v| v.iter())
    }

    /// Builds a catalog from in-memory records with the same validation as
    /// file ingestion. Line numbers in the stats are record indices + 1.
    pub fn from_records<I>(
        records: I,
        taxonomy: &Taxonomy,
    ) -> Result<(Catalog, CatalogStats), CatalogError>
    where
        I: IntoIterator<Item = CatalogRecord>,
    {
        let mut builder = Builder::new(taxonomy);
        for (i, rec) in records.into_iter().enumerate() {
            builder.push(i + 1, rec)?;
        }
        Ok(builder.finish())
    }

    /// Writes every asset as one catalog line, category then `asset_id` order.
    pub fn export<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for asset in self.iter() {
            serde_json::to_writer(&mut out, &asset.to_record())?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

struct Builder<'t> {
    taxonomy: &'t Taxonomy,
    dim: Option<usize>,
    seen: BTreeSet<String>,
    by_category: BTreeMap<String, Vec<Asset>>,
    stats: CatalogStats,
}

impl<'t> Builder<'t> {
    fn new(taxonomy: &'t Taxonomy) -> Self {
        let by_category = taxonomy
            .categories
            .iter()
            .map(|c| (c.clone(), Vec::new()))
            .collect();
        Self {
            taxonomy,
            dim: None,
            seen: BTreeSet::new(),
            by_category,
            stats: CatalogStats::default(),
        }
    }

    fn reject(&mut self, line: usize, asset_id: Option<String>, reason: RejectReason, detail: String) {
        self.stats.rejected_records += 1;
        self.stats.rejections.push(Rejection {
            line,
            asset_id,
            reason,
            detail,
        });
    }

    fn push_malformed(&mut self, line: usize, detail: String) {
        self.stats.total_assets += 1;
        self.reject(line, None, RejectReason::Malformed, detail);
    }

    fn push(&mut self, line: usize, rec: CatalogRecord) -> Result<(), CatalogError> {
        self.stats.total_assets += 1;
        let id = Some(rec.asset_id.clone());
        if rec.asset_id.trim().is_empty() {
            self.reject(line, None, RejectReason::Malformed, "empty asset_id".into());
            return Ok(());
        }
        if !self.taxonomy.contains(&rec.category_id) {
            let detail = format!("category '{}' not in taxonomy", rec.category_id);
            self.reject(line, id, RejectReason::UnknownCategory, detail);
            return Ok(());
        }
        match self.dim {
            None => self.dim = Some(rec.embedding.len()),
            Some(d) if d != rec.embedding.len() => {
                return Err(CatalogError::DimensionMismatch {
                    line,
                    expected: d,
                    got: rec.embedding.len(),
                });
            }
            Some(_) => {}
        }
        if self.seen.contains(&rec.asset_id) {
            self.reject(line, id, RejectReason::DuplicateAssetId, "asset_id already ingested".into());
            return Ok(());
        }
        let embedding = match EmbeddingVector::new(rec.embedding).and_then(|e| e.normalized()) {
            Ok(e) => e,
            Err(VecError::ZeroVector) => {
                self.reject(line, id, RejectReason::ZeroEmbedding, "zero-norm embedding".into());
                return Ok(());
            }
            Err(e) => {
                self.reject(line, id, RejectReason::NonFiniteEmbedding, e.to_string());
                return Ok(());
            }
        };
        self.seen.insert(rec.asset_id.clone());
        let asset = Asset {
            asset_id: rec.asset_id,
            category_id: rec.category_id.clone(),
            embedding,
            title: rec.title,
            quality_flag: rec.quality_flag,
            bundle_id: rec.bundle_id,
        };
        self.by_category
            .get_mut(&rec.category_id)
            .expect("category present")
            .push(asset);
        Ok(())
    }

    fn finish(mut self) -> (Catalog, CatalogStats) {
        for (cat, assets) in self.by_category.iter_mut() {
            assets.sort_by(|a, b| a.asset_id.cmp(&b.asset_id));
            self.stats
                .per_category_counts
                .insert(cat.clone(), assets.len());
        }
        (
            Catalog {
                dim: self.dim,
                by_category: self.by_category,
            },
            self.stats,
        )
    }
}

/// Reads, validates and normalizes a catalog file.
pub fn ingest_catalog(
    path: &Path,
    taxonomy: &Taxonomy,
) -> Result<(Catalog, CatalogStats), CatalogError> {
    let violations = taxonomy.validate();
    if !violations.is_empty() {
        return Err(CatalogError::InvalidTaxonomy(violations));
    }
    let file = std::fs::File::open(path).map_err(|e| CatalogError::io(path, e))?;
    let mut builder = Builder::new(taxonomy);
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CatalogError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CatalogRecord>(&line) {
            Ok(rec) => builder.push(line_no, rec)?,
            Err(e) => builder.push_malformed(line_no, e.to_string()),
        }
    }
    Ok(builder.finish())
}

pub fn write_catalog_file(path: &Path, records: &[CatalogRecord]) -> Result<(), CatalogError> {
    let file = std::fs::File::create(path).map_err(|e| CatalogError::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for rec in records {
        serde_json::to_writer(&mut out, rec).map_err(|e| CatalogError::io(path, e.into()))?;
        out.write_all(b"\n").map_err(|e| CatalogError::io(path, e))?;
    }
    out.flush().map_err(|e| CatalogError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::taxonomy::tests::fixture;
    use super::*;

    fn line(id: &str, cat: &str, emb: &[f64]) -> String {
        serde_json::to_string(&CatalogRecord {
            asset_id: id.into(),
            category_id: cat.into(),
            embedding: emb.to_vec(),
            title: format!("title {id}"),
            quality_flag: QualityFlag::Curated,
            bundle_id: None,
        })
        .unwrap()
    }

    fn write_lines(lines: &[String]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn happy_path() {
        let f = write_lines(&[
            line("p2", "pants", &[3.0, 4.0, 0.0]),
            line("p1", "pants", &[0.0, 1.0, 0.0]),
            line("b1", "body", &[1.0, 0.0, 0.0]),
        ]);
        let (cat, stats) = ingest_catalog(f.path(), &fixture()).unwrap();
        assert_eq!(stats.total_assets, 3);
        assert_eq!(stats.rejected_records, 0);
        assert!(stats.is_consistent());
        let pants = cat.assets_of("pants").unwrap();
        assert_eq!(
            pants.iter().map(|a| a.asset_id.as_str()).collect::<Vec<_>>(),
            ["p1", "p2"]
        );
        assert!(pants.iter().all(|a| a.embedding.is_unit()));
        assert_eq!(pants[1].embedding.as_slice(), &[0.6, 0.8, 0.0]);
    }

    #[test]
    fn unknown_category_is_rejected_not_fatal() {
        let f = write_lines(&[
            line("x", "cape", &[1.0, 0.0]),
            line("b", "body", &[1.0, 0.0]),
            "{not json".into(),
            line("b", "body", &[0.0, 1.0]),
            line("z", "body", &[0.0, 0.0]),
        ]);
        let (_, stats) = ingest_catalog(f.path(), &fixture()).unwrap();
        let reasons: Vec<RejectReason> = stats.rejections.iter().map(|r| r.reason).collect();
        assert_eq!(
            reasons,
            [
                RejectReason::UnknownCategory,
                RejectReason::Malformed,
                RejectReason::DuplicateAssetId,
                RejectReason::ZeroEmbedding
            ]
        );
        assert_eq!(stats.rejections[0].line, 1);
        assert_eq!(stats.total_assets, 5);
        assert!(stats.is_consistent());
    }

    #[test]
    fn dimension_mismatch_is_fatal() {
        let f = write_lines(&[
            line("a", "body", &vec![0.1; 512]),
            line("b", "body", &vec![0.1; 256]),
        ]);
        let err = ingest_catalog(f.path(), &fixture()).unwrap_err();
        assert!(matches!(
            err,
            CatalogError::DimensionMismatch {
                line: 2,
                expected: 512,
                got: 256
            }
        ));
    }

    #[test]
    fn missing_file() {
        let err = ingest_catalog(Path::new("/nonexistent/catalog.jsonl"), &fixture()).unwrap_err();
        assert_eq!(err.code(), "FileNotFound");
    }

    #[test]
    fn assets_of_contract() {
        let recs = vec![
            serde_json::from_str::<CatalogRecord>(&line("b2", "body", &[1.0, 1.0])).unwrap(),
            serde_json::from_str::<CatalogRecord>(&line("b1", "body", &[1.0, 0.0])).unwrap(),
        ];
        let (cat, _) = Catalog::from_records(recs, &fixture()).unwrap();
        let ids: Vec<_> = cat
            .assets_of("body")
            .unwrap()
            .iter()
            .map(|a| a.asset_id.clone())
            .collect();
        assert_eq!(ids, ["b1", "b2"]);
        assert!(cat.assets_of("halo").unwrap().is_empty());
        assert!(matches!(
            cat.assets_of("cape"),
            Err(CatalogError::UnknownCategory(_))
        ));
    }

    #[test]
    fn export_round_trip() {
        let f = write_lines(&[
            line("p2", "pants", &[3.0, 4.0, 0.0]),
            line("b1", "body", &[1.0, 0.0, 0.0]),
            line("h1", "halo", &[0.0, 0.0, 2.0]),
        ]);
        let (cat, _) = ingest_catalog(f.path(), &fixture()).unwrap();
        let mut buf = Vec::new();
        cat.export(&mut buf).unwrap();
        let out = write_lines(&[String::from_utf8(buf).unwrap().trim_end().to_string()]);
        let (again, stats) = ingest_catalog(out.path(), &fixture()).unwrap();
        assert_eq!(stats.rejected_records, 0);
        let a: Vec<&Asset> = cat.iter().collect();
        let b: Vec<&Asset> = again.iter().collect();
        assert_eq!(a, b);
    }
}
