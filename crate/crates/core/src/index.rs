//! Exact per-category cosine indices and their on-disk snapshots.
//!
//! # Snapshot layout (version 1, all integers little-endian)
//!
//! | offset | size      | field                                   |
//! |--------|-----------|-----------------------------------------|
//! | 0      | 4         | magic `b"AVIX"`                         |
//! | 4      | 2         | format version (`u16`, currently 1)     |
//! | 6      | 2         | reserved, zero                          |
//! | 8      | 4         | dimension `d` (`u32`)                   |
//! | 12     | 4         | row count `n` (`u32`)                   |
//! | 16     | 4         | category id length `L` (`u32`)          |
//! | 20     | L         | category id, UTF-8                      |
//! | ..     | 4·n·d     | rows, `f32`, row-major                  |
//! | ..     | ..        | `n` × (`u32` length + UTF-8 asset id)   |
//! | end-32 | 32        | SHA-256 of every preceding byte         |

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::catalog::Asset;
use crate::vecmath::{EmbeddingVector, VecError, ZERO_NORM};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"AVIX";
pub const SNAPSHOT_VERSION: u16 = 1;
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("asset '{asset_id}' belongs to '{found}', not '{expected}'")]
    MixedCategory {
        asset_id: String,
        expected: String,
        found: String,
    },
    #[error(transparent)]
    Vector(#[from] VecError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("snapshot checksum mismatch")]
    ChecksumMismatch,
    #[error("unsupported snapshot version {found} (this build reads {supported})")]
    VersionMismatch { found: u16, supported: u16 },
    #[error("not an index snapshot (bad magic)")]
    BadMagic,
    #[error("snapshot body is malformed: {0}")]
    Corrupt(String),
}

impl IndexError {
    pub fn code(&self) -> &'static str {
        match self {
            IndexError::MixedCategory { .. } => "MixedCategory",
            IndexError::Vector(e) => e.code(),
            IndexError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                "FileNotFound"
            }
            IndexError::Io { .. } => "IoError",
            IndexError::ChecksumMismatch => "ChecksumMismatch",
            IndexError::VersionMismatch { .. } => "VersionMismatch",
            IndexError::BadMagic => "BadMagic",
            IndexError::Corrupt(_) => "Corrupt",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub asset_id: String,
    pub score: f64,
    pub rank: usize,
}

/// Descending score, then ascending id.
pub fn hit_order(a_score: f64, a_id: &str, b_score: f64, b_id: &str) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_id.cmp(b_id))
}

/// Anything that can answer a top-k cosine query over one category.
pub trait VectorIndex {
    fn category_id(&self) -> &str;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<SearchHit>, IndexError>;
}

/// Flat exact index: normalized rows stored as `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryIndex {
    category_id: String,
    dim: usize,
    rows: Vec<f32>,
    ids: Vec<String>,
}

impl CategoryIndex {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    /// Largest deviation of any row norm from one.
    pub fn max_norm_error(&self) -> f64 {
        (0..self.ids.len())
            .map(|i| {
                let n: f64 = self.row(i).iter().map(|&x| (x as f64) * (x as f64)).sum();
                (n.sqrt() - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

pub fn build_index(category_id: &str, assets: &[Asset]) -> Result<CategoryIndex, IndexError> {
    let mut sorted: Vec<&Asset> = assets.iter().collect();
    sorted.sort_by(|a, b| a.asset_id.cmp(&b.asset_id));
    let dim = sorted.first().map(|a| a.embedding.dim()).unwrap_or(0);
    let mut rows = Vec::with_capacity(dim * sorted.len());
    let mut ids = Vec::with_capacity(sorted.len());
    for a in sorted {
        if a.category_id != category_id {
            return Err(IndexError::MixedCategory {
                asset_id: a.asset_id.clone(),
                expected: category_id.to_string(),
                found: a.category_id.clone(),
            });
        }
        if a.embedding.dim() != dim {
            return Err(VecError::DimensionMismatch {
                expected: dim,
                got: a.embedding.dim(),
            }
            .into());
        }
        let unit = a.embedding.normalized()?;
        rows.extend(unit.as_slice().iter().map(|&x| x as f32));
        ids.push(a.asset_id.clone());
    }
    Ok(CategoryIndex {
        category_id: category_id.to_string(),
        dim,
        rows,
        ids,
    })
}

impl VectorIndex for CategoryIndex {
    fn category_id(&self) -> &str {
        &self.category_id
    }

    fn len(&self) -> usize {
        self.ids.len()
    }

    fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<SearchHit>, IndexError> {
        let qn = query.norm();
        if qn <= ZERO_NORM {
            return Err(VecError::ZeroVector.into());
        }
        if self.ids.is_empty() || k == 0 {
            return Ok(Vec::new());
        }
        if query.dim() != self.dim {
            return Err(VecError::DimensionMismatch {
                expected: self.dim,
                got: query.dim(),
            }
            .into());
        }
        let q: Vec<f64> = query.as_slice().iter().map(|x| x / qn).collect();
        let mut scored: Vec<(f64, usize)> = self
            .rows
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(i, row)| {
                let s: f64 = row.iter().zip(&q).map(|(&r, &x)| r as f64 * x).sum();
                (s, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| {
            hit_order(a.0, &self.ids[a.1], b.0, &self.ids[b.1])
        };
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_by(cmp);
        Ok(scored
            .into_iter()
            .enumerate()
            .map(|(rank, (score, i))| SearchHit {
                asset_id: self.ids[i].clone(),
                score,
                rank,
            })
            .collect())
    }
}

impl CategoryIndex {
    pub fn to_snapshot_bytes(&self) -> Vec<u8> {
        let cat = self.category_id.as_bytes();
        let mut buf = Vec::with_capacity(20 + cat.len() + self.rows.len() * 4 + CHECKSUM_LEN);
        buf.extend_from_slice(SNAPSHOT_MAGIC);
        buf.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        buf.extend_from_slice(&0u16.to_le_bytes());
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.ids.len() as u32).to_le_bytes());
        buf.extend_from_slice(&(cat.len() as u32).to_le_bytes());
        buf.extend_from_slice(cat);
        for x in &self.rows {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        for id in &self.ids {
            buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
            buf.extend_from_slice(id.as_bytes());
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        buf
    }

    pub fn from_snapshot_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        if bytes.len() < 8 {
            return Err(IndexError::ChecksumMismatch);
        }
        if &bytes[..4] != SNAPSHOT_MAGIC {
            return Err(IndexError::BadMagic);
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != SNAPSHOT_VERSION {
            return Err(IndexError::VersionMismatch {
                found: version,
                supported: SNAPSHOT_VERSION,
            });
        }
        if bytes.len() < 20 + CHECKSUM_LEN {
            return Err(IndexError::ChecksumMismatch);
        }
        let (body, checksum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
        if Sha256::digest(body).as_slice() != checksum {
            return Err(IndexError::ChecksumMismatch);
        }

        let mut cur = Cursor { buf: body, pos: 8 };
        let dim = cur.u32()? as usize;
        let n = cur.u32()? as usize;
        let cat_len = cur.u32()? as usize;
        let category_id = cur.string(cat_len)?;
        let rows_bytes = cur.take(
            n.checked_mul(dim)
                .and_then(|x| x.checked_mul(4))
                .ok_or_else(|| IndexError::Corrupt("row block size overflows".into()))?,
        )?;
        let rows: Vec<f32> = rows_bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let mut ids = Vec::with_capacity(n);
        for _ in 0..n {
            let len = cur.u32()? as usize;
            ids.push(cur.string(len)?);
        }
        if cur.pos != body.len() {
            return Err(IndexError::Corrupt("trailing bytes before checksum".into()));
        }
        Ok(Self {
            category_id,
            dim,
            rows,
            ids,
        })
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], IndexError> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| IndexError::Corrupt(format!("unexpected end at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self, len: usize) -> Result<String, IndexError> {
        let b = self.take(len)?;
        String::from_utf8(b.to_vec()).map_err(|e| IndexError::Corrupt(e.to_string()))
    }
}

pub fn save_snapshot(index: &CategoryIndex, path: &Path) -> Result<(), IndexError> {
    std::fs::write(path, index.to_snapshot_bytes()).map_err(|source| IndexError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_snapshot(path: &Path) -> Result<CategoryIndex, IndexError> {
    let bytes = std::fs::read(path).map_err(|source| IndexError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    CategoryIndex::from_snapshot_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::QualityFlag;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn asset(id: &str, cat: &str, v: &[f64]) -> Asset {
        Asset {
            asset_id: id.into(),
            category_id: cat.into(),
            embedding: EmbeddingVector::new(v.to_vec()).unwrap().normalized().unwrap(),
            title: String::new(),
            quality_flag: QualityFlag::Curated,
            bundle_id: None,
        }
    }

    fn random_assets(n: usize, d: usize, seed: u64) -> Vec<Asset> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                asset(&format!("a{i:04}"), "c", &v)
            })
            .collect()
    }

    #[test]
    fn build_examples() {
        let idx = build_index(
            "c",
            &[
                asset("b", "c", &[1.0, 0.0]),
                asset("a", "c", &[0.0, 1.0]),
                asset("c", "c", &[1.0, 1.0]),
            ],
        )
        .unwrap();
        assert_eq!(idx.len(), 3);
        assert_eq!(idx.ids(), ["a", "b", "c"]);
        assert!(idx.max_norm_error() < 1e-6);

        let empty = build_index("c", &[]).unwrap();
        assert!(empty.is_empty());
        assert!(empty
            .search(&EmbeddingVector::basis(4, 0), 5)
            .unwrap()
            .is_empty());

        let err = build_index("c", &[asset("a", "c", &[1.0]), asset("b", "d", &[1.0])]);
        assert!(matches!(err, Err(IndexError::MixedCategory { .. })));
    }

    #[test]
    fn self_retrieval_and_k_zero() {
        let assets = random_assets(50, 16, 3);
        let idx = build_index("c", &assets).unwrap();
        let hits = idx.search(&assets[17].embedding, 1).unwrap();
        assert_eq!(hits[0].asset_id, assets[17].asset_id);
        assert!((hits[0].score - 1.0).abs() < 1e-6);
        assert!(idx.search(&assets[0].embedding, 0).unwrap().is_empty());
        assert!(matches!(
            idx.search(&EmbeddingVector::zeros(16), 3),
            Err(IndexError::Vector(VecError::ZeroVector))
        ));
    }

    #[test]
    fn ties_break_by_id() {
        let idx = build_index(
            "c",
            &[
                asset("z", "c", &[1.0, 0.0]),
                asset("m", "c", &[1.0, 0.0]),
                asset("a", "c", &[0.0, 1.0]),
            ],
        )
        .unwrap();
        let hits = idx.search(&EmbeddingVector::basis(2, 0), 3).unwrap();
        let ids: Vec<_> = hits.iter().map(|h| h.asset_id.as_str()).collect();
        assert_eq!(ids, ["m", "z", "a"]);
        assert_eq!(hits.iter().map(|h| h.rank).collect::<Vec<_>>(), [0, 1, 2]);
    }

    #[test]
    fn scale_invariance_and_monotonicity() {
        let assets = random_assets(200, 12, 9);
        let idx = build_index("c", &assets).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..20 {
            let q = EmbeddingVector::new((0..12).map(|_| rng.random_range(-1.0..1.0)).collect())
                .unwrap();
            let a = idx.search(&q, 25).unwrap();
            let b = idx.search(&q.scaled(4.0), 25).unwrap();
            assert_eq!(a, b);
            assert!(a.windows(2).all(|w| w[0].score >= w[1].score));
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let assets = random_assets(40, 8, 5);
        let idx = build_index("c", &assets).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.idx");
        save_snapshot(&idx, &path).unwrap();
        let back = load_snapshot(&path).unwrap();
        assert_eq!(back, idx);
        let q = assets[3].embedding.clone();
        assert_eq!(idx.search(&q, 10).unwrap(), back.search(&q, 10).unwrap());
    }

    #[test]
    fn snapshot_rejects_truncation_and_future_versions() {
        let idx = build_index("c", &random_assets(5, 4, 1)).unwrap();
        let bytes = idx.to_snapshot_bytes();
        for cut in [0, 3, 12, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(
                CategoryIndex::from_snapshot_bytes(&bytes[..cut]),
                Err(IndexError::ChecksumMismatch)
            ));
        }
        let mut flipped = bytes.clone();
        flipped[30] ^= 0x40;
        assert!(matches!(
            CategoryIndex::from_snapshot_bytes(&flipped),
            Err(IndexError::ChecksumMismatch)
        ));

        let mut future = bytes[..bytes.len() - 32].to_vec();
        future[4..6].copy_from_slice(&2u16.to_le_bytes());
        let digest = Sha256::digest(&future);
        future.extend_from_slice(&digest);
        assert!(matches!(
            CategoryIndex::from_snapshot_bytes(&future),
            Err(IndexError::VersionMismatch { found: 2, .. })
        ));

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            CategoryIndex::from_snapshot_bytes(&bad),
            Err(IndexError::BadMagic)
        ));
    }

    #[test]
    fn snapshot_golden_layout() {
        // Built by hand from the layout table.
        let idx = build_index("ab", &[asset("x", "ab", &[1.0, 0.0]), asset("yz", "ab", &[0.0, 1.0])])
            .unwrap();
        let mut expected: Vec<u8> = Vec::new();
        expected.extend_from_slice(b"AVIX");
        expected.extend_from_slice(&[1, 0, 0, 0]);
        expected.extend_from_slice(&[2, 0, 0, 0]);
        expected.extend_from_slice(&[2, 0, 0, 0]);
        expected.extend_from_slice(&[2, 0, 0, 0]);
        expected.extend_from_slice(b"ab");
        expected.extend_from_slice(&[0x00, 0x00, 0x80, 0x3f, 0, 0, 0, 0]);
        expected.extend_from_slice(&[0, 0, 0, 0, 0x00, 0x00, 0x80, 0x3f]);
        expected.extend_from_slice(&[1, 0, 0, 0]);
        expected.extend_from_slice(b"x");
        expected.extend_from_slice(&[2, 0, 0, 0]);
        expected.extend_from_slice(b"yz");
        let body_len = expected.len();
        let bytes = idx.to_snapshot_bytes();
        assert_eq!(&bytes[..body_len], expected.as_slice());
        assert_eq!(bytes.len(), body_len + 32);
        assert_eq!(
            hex::encode(&bytes[body_len..]),
            hex::encode(Sha256::digest(&expected))
        );
    }
}
