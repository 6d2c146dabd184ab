//! Synthetic catalogs with planted ground truth, and brute-force oracles.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{write_catalog_file, Asset, CatalogError, CatalogRecord, QualityFlag, Taxonomy, View};
use crate::index::{build_index, hit_order, CategoryIndex, IndexError};
use crate::retrieval::residual_query;
use crate::vecmath::{
    compute_category_subspace, CategorySubspace, EmbeddingVector, SubspaceOptions, VecError,
};

pub const DEFAULT_LAMBDA: f64 = 1.5;
pub const MAX_SCENARIO_RETRIES: usize = 100;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible spec: {0}")]
    InfeasibleSpec(String),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("scenario construction failed after {0} attempts")]
    ScenarioConstructionFailed(usize),
    #[error(transparent)]
    Vector(#[from] VecError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

impl SynthError {
    pub fn code(&self) -> &'static str {
        match self {
            SynthError::InfeasibleSpec(_) => "InfeasibleSpec",
            SynthError::InvalidSpec(_) => "InvalidSpec",
            SynthError::ScenarioConstructionFailed(_) => "ScenarioConstructionFailed",
            SynthError::Vector(e) => e.code(),
            SynthError::Index(e) => e.code(),
            SynthError::Catalog(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCategory {
    pub category_id: String,
    pub subspace_rank: usize,
    pub n_assets: usize,
}

/// Category `b` borrows `a`'s planted directions with weight `coefficient`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interference {
    pub a: String,
    pub b: String,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub d: usize,
    pub categories: Vec<SynthCategory>,
    #[serde(default)]
    pub interference: Vec<Interference>,
    #[serde(default)]
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// `n` categories of equal rank and size.
    pub fn uniform(d: usize, ids: &[&str], rank: usize, n_assets: usize, seed: u64) -> Self {
        Self {
            d,
            categories: ids
                .iter()
                .map(|id| SynthCategory {
                    category_id: id.to_string(),
                    subspace_rank: rank,
                    n_assets,
                })
                .collect(),
            interference: Vec::new(),
            noise_sigma: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let invalid = |m: String| Err(SynthError::InvalidSpec(m));
        if self.d == 0 {
            return invalid("d must be >= 1".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return invalid(format!("noise_sigma {} must be finite and >= 0", self.noise_sigma));
        }
        let mut seen = BTreeSet::new();
        for c in &self.categories {
            if c.subspace_rank == 0 {
                return invalid(format!("category '{}' has rank 0", c.category_id));
            }
            if !seen.insert(c.category_id.as_str()) {
                return invalid(format!("duplicate category '{}'", c.category_id));
            }
        }
        for i in &self.interference {
            if !seen.contains(i.a.as_str()) || !seen.contains(i.b.as_str()) || i.a == i.b {
                return invalid(format!("bad interference pair {} -> {}", i.a, i.b));
            }
            if !(0.0..=1.0).contains(&i.coefficient) {
                return invalid(format!("interference coefficient {} outside [0,1]", i.coefficient));
            }
        }
        let total: usize = self.categories.iter().map(|c| c.subspace_rank).sum();
        if total > self.d {
            return Err(SynthError::InfeasibleSpec(format!(
                "subspace ranks sum to {total} > d = {}",
                self.d
            )));
        }
        Ok(())
    }
}

/// Generated catalog plus the planted bases it was drawn from.
#[derive(Debug, Clone)]
pub struct SynthCatalog {
    pub records: Vec<CatalogRecord>,
    pub planted: BTreeMap<String, CategorySubspace>,
}

impl SynthCatalog {
    pub fn assets(&self) -> Vec<Asset> {
        self.records
            .iter()
            .map(|r| Asset {
                asset_id: r.asset_id.clone(),
                category_id: r.category_id.clone(),
                embedding: EmbeddingVector::new(r.embedding.clone())
                    .expect("generated embeddings are finite"),
                title: r.title.clone(),
                quality_flag: r.quality_flag,
                bundle_id: r.bundle_id.clone(),
            })
            .collect()
    }

    pub fn assets_of(&self, category_id: &str) -> Vec<Asset> {
        self.assets()
            .into_iter()
            .filter(|a| a.category_id == category_id)
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<(), SynthError> {
        Ok(write_catalog_file(path, &self.records)?)
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let m = DMatrix::from_fn(d, d, |_, _| gaussian(rng));
    m.qr().q()
}

/// Draws each category's basis from disjoint columns of a random orthogonal
/// matrix, mixes in interference, and samples unit assets from the spans.
pub fn generate_catalog(spec: &SynthSpec) -> Result<SynthCatalog, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let q = random_orthogonal(spec.d, &mut rng);

    let mut private: BTreeMap<&str, Vec<Vec<f64>>> = BTreeMap::new();
    let mut offset = 0;
    for c in &spec.categories {
        let cols = (offset..offset + c.subspace_rank)
            .map(|j| q.column(j).iter().copied().collect())
            .collect();
        private.insert(c.category_id.as_str(), cols);
        offset += c.subspace_rank;
    }

    let mut planted = BTreeMap::new();
    let mut records = Vec::new();
    for c in &spec.categories {
        let mut raw = private[c.category_id.as_str()].clone();
        for inter in spec.interference.iter().filter(|i| i.b == c.category_id) {
            let donor = &private[inter.a.as_str()];
            for (m, v) in raw.iter_mut().enumerate() {
                let src = &donor[m % donor.len()];
                v.iter_mut().zip(src).for_each(|(x, y)| *x += inter.coefficient * y);
            }
        }
        let raw: Vec<EmbeddingVector> = raw
            .into_iter()
            .map(EmbeddingVector::new)
            .collect::<Result<_, _>>()?;
        let basis = CategorySubspace::from_basis(c.category_id.clone(), &raw)?;

        let noise_scale = spec.noise_sigma / (spec.d as f64).sqrt();
        for i in 0..c.n_assets {
            let mut v = vec![0.0; spec.d];
            for b in basis.basis() {
                let coef = gaussian(&mut rng);
                v.iter_mut().zip(b).for_each(|(x, y)| *x += coef * y);
            }
            let mut v = EmbeddingVector::new(v)?.normalized()?.into_inner();
            if spec.noise_sigma > 0.0 {
                v.iter_mut().for_each(|x| *x += noise_scale * gaussian(&mut rng));
            }
            let v = EmbeddingVector::new(v)?.normalized()?;
            records.push(CatalogRecord {
                asset_id: format!("{}-{i:04}", c.category_id),
                category_id: c.category_id.clone(),
                embedding: v.into_inner(),
                title: format!("{} {i}", c.category_id.replace('_', " ")),
                quality_flag: QualityFlag::Curated,
                bundle_id: None,
            });
        }
        planted.insert(c.category_id.clone(), basis);
    }
    Ok(SynthCatalog { records, planted })
}

/// Full-scan ranking with the index's ordering contract: rows rounded to
/// `f32`, scores accumulated in `f64` against the normalized query.
pub fn brute_force_rank(
    assets: &[Asset],
    category_id: &str,
    query: &EmbeddingVector,
    k: usize,
) -> Result<Vec<String>, VecError> {
    let q = query.normalized()?;
    let mut scored: Vec<(f64, &str)> = Vec::new();
    for a in assets.iter().filter(|a| a.category_id == category_id) {
        let unit = a.embedding.normalized()?;
        if unit.dim() != q.dim() {
            return Err(VecError::DimensionMismatch {
                expected: q.dim(),
                got: unit.dim(),
            });
        }
        let s: f64 = unit
            .as_slice()
            .iter()
            .zip(q.as_slice())
            .map(|(&r, &x)| (r as f32) as f64 * x)
            .sum();
        scored.push((s, &a.asset_id));
    }
    scored.sort_by(|a, b| hit_order(a.0, a.1, b.0, b.1));
    Ok(scored.into_iter().take(k).map(|(_, id)| id.to_string()).collect())
}

/// Largest principal angle between two subspaces, in radians. Subspaces of
/// different rank are reported as π/2.
pub fn max_principal_angle(a: &CategorySubspace, b: &CategorySubspace) -> f64 {
    if a.rank() != b.rank() || a.dim() != b.dim() {
        return std::f64::consts::FRAC_PI_2;
    }
    // sin of the largest angle is the spectral norm of (I − P_a) B.
    let d = a.dim();
    let cols: Vec<f64> = b
        .basis()
        .iter()
        .flat_map(|v| a.reject(v).expect("same dimension"))
        .collect();
    let m = DMatrix::from_column_slice(d, b.rank(), &cols);
    let s = m.singular_values().max();
    s.clamp(0.0, 1.0).asin()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOptions {
    pub target_category: String,
    pub lambda: f64,
    /// Residual fusion weight used when checking the construction.
    pub beta: f64,
    pub subspace: SubspaceOptions,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self {
            target_category: "body".into(),
            lambda: DEFAULT_LAMBDA,
            beta: 0.7,
            subspace: SubspaceOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub target_category: String,
    pub target_asset_id: String,
    pub interfering_category: String,
    /// Same-category asset the interference pulls toward.
    pub distractor_asset_id: String,
    pub lambda: f64,
    pub g: EmbeddingVector,
    pub p_c: EmbeddingVector,
    pub t_c: EmbeddingVector,
    pub attempts: usize,
}

/// A planted catalog with computed subspaces, indices and one interference
/// construction.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub catalog: SynthCatalog,
    pub subspaces: BTreeMap<String, CategorySubspace>,
    pub indices: BTreeMap<String, CategoryIndex>,
    pub truth: PlantedTruth,
}

/// Normalized mean of a category's assets.
pub fn centroid(assets: &[Asset]) -> Result<EmbeddingVector, VecError> {
    let first = assets.first().ok_or(VecError::EmptyCategory)?;
    let mut m = vec![0.0; first.embedding.dim()];
    for a in assets {
        m.iter_mut()
            .zip(a.embedding.as_slice())
            .for_each(|(x, y)| *x += y);
    }
    EmbeddingVector::new(m)?.normalized()
}

pub fn computed_subspaces(
    catalog: &SynthCatalog,
    options: &SubspaceOptions,
) -> Result<BTreeMap<String, CategorySubspace>, VecError> {
    let mut out = BTreeMap::new();
    for cat in catalog.planted.keys() {
        let embs: Vec<EmbeddingVector> = catalog.assets_of(cat).into_iter().map(|a| a.embedding).collect();
        if embs.is_empty() {
            continue;
        }
        out.insert(cat.clone(), compute_category_subspace(cat, &embs, options)?);
    }
    Ok(out)
}

/// Plants a target asset and a global view `g = normalize(a_t + λ·v)` where
/// `v` lies in a non-target category's computed subspace and pulls toward
/// another target-category asset. Re-samples until the suppressed residual
/// query ranks the target first and the unsuppressed one does not (for
/// `λ = 0`, until both rank it first).
pub fn generate_interference_scenario(
    spec: &SynthSpec,
    options: &ScenarioOptions,
) -> Result<Scenario, SynthError> {
    if spec.categories.len() < 2 {
        return Err(SynthError::InvalidSpec(
            "interference scenario needs at least two categories".into(),
        ));
    }
    let target_cat = options.target_category.as_str();
    if !spec.categories.iter().any(|c| c.category_id == target_cat) {
        return Err(SynthError::InvalidSpec(format!("unknown target category '{target_cat}'")));
    }
    let catalog = generate_catalog(spec)?;
    let subspaces = computed_subspaces(&catalog, &options.subspace)?;
    let assets = catalog.assets();
    let mut indices = BTreeMap::new();
    for cat in catalog.planted.keys() {
        let of: Vec<Asset> = assets.iter().filter(|a| &a.category_id == cat).cloned().collect();
        indices.insert(cat.clone(), build_index(cat, &of)?);
    }
    let targets: Vec<Asset> = assets.iter().filter(|a| a.category_id == target_cat).cloned().collect();
    if targets.len() < 2 {
        return Err(SynthError::InvalidSpec(format!(
            "target category '{target_cat}' needs at least two assets"
        )));
    }
    let t_c = centroid(&targets)?;

    // Prefer categories planted to overlap the target.
    let mut donors: Vec<&str> = spec
        .interference
        .iter()
        .filter_map(|i| {
            if i.a == target_cat {
                Some(i.b.as_str())
            } else if i.b == target_cat {
                Some(i.a.as_str())
            } else {
                None
            }
        })
        .filter(|c| subspaces.contains_key(*c))
        .collect();
    if donors.is_empty() {
        donors = subspaces.keys().map(String::as_str).filter(|c| *c != target_cat).collect();
    }
    if donors.is_empty() {
        return Err(SynthError::InvalidSpec("no non-target subspace available".into()));
    }

    let all: Vec<&CategorySubspace> = subspaces.values().collect();
    let top1 = |q: &EmbeddingVector| -> Result<Option<String>, SynthError> {
        Ok(brute_force_rank(&targets, target_cat, q, 1)?.into_iter().next())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5EED_CAFE);
    for attempt in 1..=MAX_SCENARIO_RETRIES {
        let target = targets.choose(&mut rng).expect("non-empty");
        let distractor = loop {
            let d = targets.choose(&mut rng).expect("non-empty");
            if d.asset_id != target.asset_id {
                break d;
            }
        };
        let donor = *donors.choose(&mut rng).expect("non-empty");
        let a_t = &target.embedding;
        let diff: Vec<f64> = distractor
            .embedding
            .as_slice()
            .iter()
            .zip(a_t.as_slice())
            .map(|(x, y)| x - y)
            .collect();
        let v = EmbeddingVector::new(subspaces[donor].project(&diff)?)?;
        let Ok(v) = v.normalized() else { continue };
        let g: Vec<f64> = a_t
            .as_slice()
            .iter()
            .zip(v.as_slice())
            .map(|(x, y)| x + options.lambda * y)
            .collect();
        let Ok(g) = EmbeddingVector::new(g)?.normalized() else { continue };

        let (q_on, _) = residual_query(target_cat, &g, &all, &t_c, options.beta, true)?;
        let (q_off, _) = residual_query(target_cat, &g, &all, &t_c, options.beta, false)?;
        let on_hit = top1(&q_on)?.as_deref() == Some(target.asset_id.as_str());
        let off_hit = top1(&q_off)?.as_deref() == Some(target.asset_id.as_str());
        let ok = if options.lambda == 0.0 { on_hit && off_hit } else { on_hit && !off_hit };
        if ok {
            let truth = PlantedTruth {
                target_category: target_cat.to_string(),
                target_asset_id: target.asset_id.clone(),
                interfering_category: donor.to_string(),
                distractor_asset_id: distractor.asset_id.clone(),
                lambda: options.lambda,
                g,
                p_c: a_t.clone(),
                t_c,
                attempts: attempt,
            };
            return Ok(Scenario {
                catalog,
                subspaces,
                indices,
                truth,
            });
        }
    }
    Err(SynthError::ScenarioConstructionFailed(MAX_SCENARIO_RETRIES))
}

/// Picks a part target whose own embedding, fused with `text_prior` at
/// weight `alpha`, ranks it first by brute force. Re-samples at most
/// [`MAX_SCENARIO_RETRIES`] times.
pub fn plant_part_target<'a>(
    assets: &'a [Asset],
    category_id: &str,
    text_prior: &EmbeddingVector,
    alpha: f64,
    rng: &mut ChaCha8Rng,
) -> Result<&'a Asset, SynthError> {
    let pool: Vec<&Asset> = assets.iter().filter(|a| a.category_id == category_id).collect();
    if pool.is_empty() {
        return Err(SynthError::InvalidSpec(format!("category '{category_id}' has no assets")));
    }
    for _ in 0..MAX_SCENARIO_RETRIES {
        let pick = *pool.choose(rng).expect("non-empty");
        let q = crate::vecmath::fuse(&pick.embedding, text_prior, alpha)?;
        if brute_force_rank(assets, category_id, &q, 1)?.first() == Some(&pick.asset_id) {
            return Ok(pick);
        }
    }
    Err(SynthError::ScenarioConstructionFailed(MAX_SCENARIO_RETRIES))
}

pub const SUITE_CATEGORIES: [&str; 5] = ["body", "halo", "jacket", "pants", "sweater"];

/// Planted spec used by the evaluation suite: five rank-4 categories in
/// d = 64, with the jacket subspace overlapping body.
pub fn suite_spec(seed: u64) -> SynthSpec {
    let mut spec = SynthSpec::uniform(64, &SUITE_CATEGORIES, 4, 60, seed);
    spec.interference.push(Interference {
        a: "body".into(),
        b: "jacket".into(),
        coefficient: 1.0,
    });
    spec.noise_sigma = 0.05;
    spec
}

/// Taxonomy matching [`suite_spec`], including the hoodie ambiguity.
pub fn suite_taxonomy() -> Taxonomy {
    let set = |ids: &[&str]| ids.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
    Taxonomy {
        categories: set(&SUITE_CATEGORIES),
        concept_map: [
            ("hoodie", set(&["sweater", "jacket"])),
            ("jacket", set(&["jacket"])),
            ("sweater", set(&["sweater"])),
            ("pants", set(&["pants"])),
            ("trousers", set(&["pants"])),
            ("halo", set(&["halo"])),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect(),
        exclusion_groups: vec![set(&["sweater", "jacket"])],
        view_map: SUITE_CATEGORIES
            .iter()
            .map(|c| (c.to_string(), vec![View::Front]))
            .collect(),
        required_core: set(&["body"]),
        bundle_category: Some("body".into()),
        ..Default::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::VectorIndex;

    #[test]
    fn seed_determinism() {
        let spec = suite_spec(4);
        let a = generate_catalog(&spec).unwrap();
        let b = generate_catalog(&spec).unwrap();
        assert_eq!(a.records, b.records);
        let c = generate_catalog(&suite_spec(5)).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn infeasible_and_invalid_specs() {
        let spec = SynthSpec::uniform(8, &["a", "b", "c"], 3, 5, 1);
        assert!(matches!(generate_catalog(&spec), Err(SynthError::InfeasibleSpec(_))));
        let mut spec = SynthSpec::uniform(8, &["a", "b"], 2, 5, 1);
        spec.interference.push(Interference {
            a: "a".into(),
            b: "zz".into(),
            coefficient: 0.5,
        });
        assert!(matches!(generate_catalog(&spec), Err(SynthError::InvalidSpec(_))));
    }

    #[test]
    fn assets_are_unit_and_in_span() {
        let cat = generate_catalog(&SynthSpec::uniform(32, &["a", "b"], 3, 20, 9)).unwrap();
        assert_eq!(cat.records.len(), 40);
        for a in cat.assets() {
            assert!(a.embedding.is_unit());
            let off = cat.planted[&a.category_id].reject(a.embedding.as_slice()).unwrap();
            assert!(crate::vecmath::norm(&off) < 1e-10);
        }
    }

    #[test]
    fn noiseless_recovery() {
        let cat = generate_catalog(&SynthSpec::uniform(64, &["a", "b", "c"], 4, 30, 1)).unwrap();
        let computed = computed_subspaces(&cat, &SubspaceOptions::default()).unwrap();
        for (id, planted) in &cat.planted {
            assert!(max_principal_angle(planted, &computed[id]) <= 1e-4, "{id}");
        }
    }

    #[test]
    fn principal_angle_oracle() {
        let e = |i| EmbeddingVector::basis(3, i);
        let a = CategorySubspace::from_basis("a", &[e(0)]).unwrap();
        let b = CategorySubspace::from_basis("b", &[e(1)]).unwrap();
        let tilt = EmbeddingVector::new(vec![1.0, 1.0, 0.0]).unwrap();
        let c = CategorySubspace::from_basis("c", &[tilt]).unwrap();
        assert!((max_principal_angle(&a, &b) - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!((max_principal_angle(&a, &c) - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        assert!(max_principal_angle(&a, &a) < 1e-12);
    }

    #[test]
    fn brute_force_edges() {
        let cat = generate_catalog(&SynthSpec::uniform(8, &["a", "b"], 2, 5, 3)).unwrap();
        let assets = cat.assets();
        let q = EmbeddingVector::basis(8, 0);
        assert!(brute_force_rank(&assets, "missing", &q, 3).unwrap().is_empty());
        assert_eq!(brute_force_rank(&assets, "a", &q, 50).unwrap().len(), 5);
        let idx = build_index("a", &cat.assets_of("a")).unwrap();
        let hits: Vec<String> = idx.search(&q, 5).unwrap().into_iter().map(|h| h.asset_id).collect();
        assert_eq!(brute_force_rank(&assets, "a", &q, 5).unwrap(), hits);
    }

    #[test]
    fn scenario_seed_23_properties() {
        let s = generate_interference_scenario(&suite_spec(23), &ScenarioOptions::default()).unwrap();
        let all: Vec<&CategorySubspace> = s.subspaces.values().collect();
        let t = &s.truth;
        let targets = s.catalog.assets_of("body");
        let (on, _) = residual_query("body", &t.g, &all, &t.t_c, 0.7, true).unwrap();
        let (off, _) = residual_query("body", &t.g, &all, &t.t_c, 0.7, false).unwrap();
        assert_eq!(brute_force_rank(&targets, "body", &on, 1).unwrap(), vec![t.target_asset_id.clone()]);
        assert_ne!(brute_force_rank(&targets, "body", &off, 1).unwrap(), vec![t.target_asset_id.clone()]);
        assert_ne!(t.interfering_category, "body");
    }

    #[test]
    fn scenario_without_interference_agrees() {
        let opts = ScenarioOptions {
            lambda: 0.0,
            ..Default::default()
        };
        let s = generate_interference_scenario(&suite_spec(23), &opts).unwrap();
        assert_eq!(s.truth.g, s.truth.p_c);
    }

    #[test]
    fn scenario_needs_two_categories() {
        let spec = SynthSpec::uniform(8, &["body"], 2, 5, 1);
        assert!(matches!(
            generate_interference_scenario(&spec, &ScenarioOptions::default()),
            Err(SynthError::InvalidSpec(_))
        ));
    }

    #[test]
    fn planted_part_is_fused_top1() {
        let cat = generate_catalog(&suite_spec(11)).unwrap();
        let assets = cat.assets_of("pants");
        let t = centroid(&assets).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pick = plant_part_target(&assets, "pants", &t, 0.7, &mut rng).unwrap();
        let q = crate::vecmath::fuse(&pick.embedding, &t, 0.7).unwrap();
        let idx = build_index("pants", &assets).unwrap();
        assert_eq!(idx.search(&q, 1).unwrap()[0].asset_id, pick.asset_id);
    }

    #[test]
    fn suite_taxonomy_is_valid() {
        assert!(suite_taxonomy().validate().is_empty());
    }
}
