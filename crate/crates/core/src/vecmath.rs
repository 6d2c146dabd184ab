//! Numeric kernel: normalization, cosine similarity, per-category low-rank
//! subspaces and the orthogonal-complement suppression used by the
//! concept-residual retrieval branch.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Norms at or below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-12;
/// Tolerance for unit-norm and orthogonality checks.
pub const UNIT_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VecError {
    #[error("vector has (near-)zero norm")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("vector contains non-finite values")]
    NonFinite,
    #[error("no embeddings supplied for category subspace")]
    EmptyCategory,
    #[error("fused query has near-zero norm")]
    DegenerateFusion,
    #[error("fusion weight {0} outside [0, 1]")]
    WeightOutOfRange(f64),
    #[error("invalid rank policy: {0}")]
    InvalidRankPolicy(String),
}

impl VecError {
    pub fn code(&self) -> &'static str {
        match self {
            VecError::ZeroVector => "ZeroVector",
            VecError::DimensionMismatch { .. } => "DimensionMismatch",
            VecError::NonFinite => "NonFinite",
            VecError::EmptyCategory => "EmptyCategory",
            VecError::DegenerateFusion => "DegenerateFusion",
            VecError::WeightOutOfRange(_) => "WeightOutOfRange",
            VecError::InvalidRankPolicy(_) => "InvalidRankPolicy",
        }
    }
}

/// A dense embedding. Values are always finite; unit norm is not enforced by
/// the type, use [`EmbeddingVector::normalized`] where the contract needs it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, VecError> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(VecError::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// Standard basis vector `e_i` in `dim` dimensions.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_TOL
    }

    pub fn normalized(&self) -> Result<Self, VecError> {
        normalize(self)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.iter().map(|x| x * s).collect())
    }

    pub fn dot(&self, other: &Self) -> Result<f64, VecError> {
        check_dim(self.dim(), other.dim())?;
        Ok(dot(&self.0, &other.0))
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = VecError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<(), VecError> {
    if expected != got {
        return Err(VecError::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(v: &EmbeddingVector) -> Result<EmbeddingVector, VecError> {
    let n = v.norm();
    if !n.is_finite() {
        return Err(VecError::NonFinite);
    }
    if n <= ZERO_NORM {
        return Err(VecError::ZeroVector);
    }
    Ok(EmbeddingVector(v.0.iter().map(|x| x / n).collect()))
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, VecError> {
    check_dim(a.dim(), b.dim())?;
    let (na, nb) = (a.norm(), b.norm());
    if na <= ZERO_NORM || nb <= ZERO_NORM {
        return Err(VecError::ZeroVector);
    }
    Ok((dot(&a.0, &b.0) / (na * nb)).clamp(-1.0, 1.0))
}

/// How many principal directions a category subspace keeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RankPolicy {
    Fixed { rank: usize },
    /// Smallest rank whose cumulative squared singular values reach
    /// `threshold` of the total, never above `max_rank`.
    Variance { threshold: f64, max_rank: usize },
}

impl Default for RankPolicy {
    fn default() -> Self {
        RankPolicy::Variance {
            threshold: 0.90,
            max_rank: 16,
        }
    }
}

impl RankPolicy {
    pub fn validate(&self) -> Result<(), VecError> {
        match *self {
            RankPolicy::Fixed { rank: 0 } => {
                Err(VecError::InvalidRankPolicy("fixed rank must be >= 1".into()))
            }
            RankPolicy::Variance {
                threshold,
                max_rank,
            } if !(threshold > 0.0 && threshold <= 1.0) || max_rank == 0 => Err(
                VecError::InvalidRankPolicy(format!(
                    "variance threshold {threshold} must be in (0, 1] and max_rank >= 1"
                )),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SubspaceOptions {
    #[serde(default)]
    pub rank_policy: RankPolicy,
    /// Subtract the category mean before the decomposition. Off by default:
    /// the projection acts on raw embeddings.
    #[serde(default)]
    pub center: bool,
}

/// Top-`r` orthonormal principal directions of one category's embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySubspace {
    pub category_id: String,
    /// `rank` basis vectors, each of length `dim`.
    basis: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    dim: usize,
}

impl CategorySubspace {
    /// Builds a subspace from explicit basis vectors, orthonormalizing them
    /// (modified Gram-Schmidt). Vectors that collapse are dropped.
    pub fn from_basis(
        category_id: impl Into<String>,
        vectors: &[EmbeddingVector],
    ) -> Result<Self, VecError> {
        let first = vectors.first().ok_or(VecError::EmptyCategory)?;
        let dim = first.dim();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for v in vectors {
            check_dim(dim, v.dim())?;
            let mut w = v.as_slice().to_vec();
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(b, &w);
                    w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                }
            }
            let n = norm(&w);
            if n > 1e-10 {
                w.iter_mut().for_each(|x| *x /= n);
                basis.push(w);
            }
        }
        if basis.is_empty() {
            return Err(VecError::ZeroVector);
        }
        let singular_values = vec![1.0; basis.len()];
        Ok(Self {
            category_id: category_id.into(),
            basis,
            singular_values,
            dim,
        })
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    /// `P v = B Bᵀ v`.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>, VecError> {
        check_dim(self.dim, v.len())?;
        let mut out = vec![0.0; self.dim];
        for b in &self.basis {
            let c = dot(b, v);
            out.iter_mut().zip(b).for_each(|(o, x)| *o += c * x);
        }
        Ok(out)
    }

    /// `v - P v`.
    pub fn reject(&self, v: &[f64]) -> Result<Vec<f64>, VecError> {
        let p = self.project(v)?;
        Ok(v.iter().zip(&p).map(|(x, y)| x - y).collect())
    }

    /// Largest deviation of `BᵀB` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.basis.iter().enumerate() {
            for (j, b) in self.basis.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(a, b) - target).abs());
            }
        }
        worst
    }
}

/// Principal directions of the stacked embedding matrix, computed from the
/// symmetric eigendecomposition of `X Xᵀ` (its eigenvectors are the left
/// singular vectors of `X`, eigenvalues the squared singular values).
pub fn compute_category_subspace(
    category_id: &str,
    embeddings: &[EmbeddingVector],
    options: &SubspaceOptions,
) -> Result<CategorySubspace, VecError> {
    options.rank_policy.validate()?;
    let first = embeddings.first().ok_or(VecError::EmptyCategory)?;
    let dim = first.dim();
    for e in embeddings {
        check_dim(dim, e.dim())?;
    }
    let n = embeddings.len();

    let mean: Vec<f64> = if options.center {
        let mut m = vec![0.0; dim];
        for e in embeddings {
            m.iter_mut().zip(e.as_slice()).for_each(|(a, b)| *a += b);
        }
        m.iter_mut().for_each(|a| *a /= n as f64);
        m
    } else {
        vec![0.0; dim]
    };

    let mut gram = DMatrix::<f64>::zeros(dim, dim);
    let mut row = vec![0.0; dim];
    for e in embeddings {
        row.iter_mut()
            .zip(e.as_slice().iter().zip(&mean))
            .for_each(|(r, (x, m))| *r = x - m);
        for i in 0..dim {
            let ri = row[i];
            if ri == 0.0 {
                continue;
            }
            for j in i..dim {
                gram[(i, j)] += ri * row[j];
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            gram[(i, j)] = gram[(j, i)];
        }
    }

    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let sq: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = sq.iter().sum();

    // Directions with numerically zero energy carry no category signal.
    let numeric_rank = sq
        .iter()
        .take_while(|&&s| s > total * 1e-12)
        .count()
        .max(1);
    let upper = dim.min(n).min(numeric_rank);
    let rank = match options.rank_policy {
        RankPolicy::Fixed { rank } => rank.min(upper),
        RankPolicy::Variance {
            threshold,
            max_rank,
        } => {
            let mut acc = 0.0;
            let mut r = upper;
            for (i, s) in sq.iter().enumerate().take(upper) {
                acc += s;
                if acc >= threshold * total * (1.0 - 1e-12) {
                    r = i + 1;
                    break;
                }
            }
            r.min(max_rank)
        }
    }
    .max(1);

    let basis: Vec<Vec<f64>> = order[..rank]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    let singular_values = sq[..rank].iter().map(|s| s.sqrt()).collect();
    Ok(CategorySubspace {
        category_id: category_id.to_string(),
        basis,
        singular_values,
        dim,
    })
}

/// Removes every other category's subspace component from `g`, one
/// sequential pass in ascending `category_id` order. The result is not
/// renormalized.
pub fn suppress(
    g: &EmbeddingVector,
    others: &[&CategorySubspace],
) -> Result<EmbeddingVector, VecError> {
    let mut ordered: Vec<&CategorySubspace> = others.to_vec();
    ordered.sort_by(|a, b| a.category_id.cmp(&b.category_id));
    let mut r = g.as_slice().to_vec();
    for s in ordered {
        r = s.reject(&r)?;
    }
    EmbeddingVector::new(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        Self {
            alpha: 0.7,
            beta: 0.7,
        }
    }
}

impl FusionWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, VecError> {
        let w = Self { alpha, beta };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), VecError> {
        for w in [self.alpha, self.beta] {
            if !(0.0..=1.0).contains(&w) {
                return Err(VecError::WeightOutOfRange(w));
            }
        }
        Ok(())
    }
}

/// `normalize(w * primary + (1 - w) * text_prior)`.
pub fn fuse(
    primary: &EmbeddingVector,
    text_prior: &EmbeddingVector,
    w: f64,
) -> Result<EmbeddingVector, VecError> {
    if !(0.0..=1.0).contains(&w) {
        return Err(VecError::WeightOutOfRange(w));
    }
    check_dim(primary.dim(), text_prior.dim())?;
    let combined: Vec<f64> = primary
        .as_slice()
        .iter()
        .zip(text_prior.as_slice())
        .map(|(p, t)| w * p + (1.0 - w) * t)
        .collect();
    if norm(&combined) <= ZERO_NORM {
        return Err(VecError::DegenerateFusion);
    }
    normalize(&EmbeddingVector(combined))
}
