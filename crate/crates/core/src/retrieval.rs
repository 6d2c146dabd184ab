//! Hybrid category-wise retrieval.
//!
//! Two branches feed each category's pool:
//!
//! * **part**: the part crop embedding fused with the text prior,
//!   `q = normalize(α·p + (1−α)·t)`;
//! * **concept residual**: the preferred scaffold view with every other
//!   category's subspace projected out, renormalized and fused with the text
//!   prior, `q = normalize(β·normalize(r) + (1−β)·t)`.
//!
//! The pool is the union keyed by asset id, keeping the maximum score,
//! sorted and truncated to `pool_k`.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Taxonomy;
use crate::evidence::{resolve_part_or_global, EvidenceError, EvidenceStore};
use crate::index::{hit_order, CategoryIndex, IndexError, VectorIndex};
use crate::router::RoutingPlan;
use crate::vecmath::{fuse, suppress, CategorySubspace, EmbeddingVector, FusionWeights, VecError};

/// Residual norms at or below this count as a suppression collapse.
pub const COLLAPSE_NORM: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("no text prior for category '{0}'")]
    MissingTextPrior(String),
    #[error("no index for category '{0}'")]
    MissingIndex(String),
    #[error("category '{0}' is not a routed target")]
    NotRouted(String),
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Vector(#[from] VecError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
}

impl RetrievalError {
    pub fn code(&self) -> &'static str {
        match self {
            RetrievalError::MissingTextPrior(_) => "MissingTextPrior",
            RetrievalError::MissingIndex(_) => "MissingIndex",
            RetrievalError::NotRouted(_) => "NotRouted",
            RetrievalError::InvalidConfig(_) => "InvalidConfig",
            RetrievalError::Vector(e) => e.code(),
            RetrievalError::Index(e) => e.code(),
            RetrievalError::Evidence(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub weights: FusionWeights,
    /// Depth of each branch's index query.
    pub branch_k: usize,
    /// Pool size after dedup.
    pub pool_k: usize,
    /// Candidates kept per category after judge gating.
    pub gate_k: usize,
    /// Project out other categories' subspaces in the residual branch.
    pub suppression: bool,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            weights: FusionWeights::default(),
            branch_k: 40,
            pool_k: 40,
            gate_k: 20,
            suppression: true,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        self.weights.validate()?;
        if self.branch_k < 1 {
            return Err(RetrievalError::InvalidConfig("branch_k must be >= 1".into()));
        }
        if self.gate_k > self.pool_k {
            return Err(RetrievalError::InvalidConfig(format!(
                "gate_k {} exceeds pool_k {}",
                self.gate_k, self.pool_k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Part,
    ConceptResidual,
    Both,
}

impl Source {
    fn merge(self, other: Source) -> Source {
        if self == other {
            self
        } else {
            Source::Both
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub asset_id: String,
    pub score: f64,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub category_id: String,
    pub candidates: Vec<Candidate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl CandidatePool {
    pub fn contains(&self, asset_id: &str) -> bool {
        self.candidates.iter().any(|c| c.asset_id == asset_id)
    }

    pub fn top(&self) -> Option<&Candidate> {
        self.candidates.first()
    }
}

fn tag(hits: Vec<crate::index::SearchHit>, source: Source) -> Vec<Candidate> {
    hits.into_iter()
        .map(|h| Candidate {
            asset_id: h.asset_id,
            score: h.score,
            source,
        })
        .collect()
}

/// Precision branch: fused part + text query.
pub fn retrieve_part(
    part: &EmbeddingVector,
    text_prior: &EmbeddingVector,
    cfg: &RetrievalConfig,
    index: &dyn VectorIndex,
) -> Result<Vec<Candidate>, RetrievalError> {
    let q = fuse(&part.normalized()?, text_prior, cfg.weights.alpha)?;
    Ok(tag(index.search(&q, cfg.branch_k)?, Source::Part))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualOutcome {
    pub candidates: Vec<Candidate>,
    /// The residual vanished and the text prior alone was searched.
    pub collapsed: bool,
}

/// Residual-branch query: `g` with every other category's subspace
/// projected out (when `suppression` is on), fused with the text prior.
/// Returns the query and whether the residual collapsed to the text prior.
pub fn residual_query(
    category_id: &str,
    global: &EmbeddingVector,
    subspaces: &[&CategorySubspace],
    text_prior: &EmbeddingVector,
    beta: f64,
    suppression: bool,
) -> Result<(EmbeddingVector, bool), VecError> {
    let residual = if suppression {
        let others: Vec<&CategorySubspace> = subspaces
            .iter()
            .copied()
            .filter(|s| s.category_id != category_id)
            .collect();
        suppress(global, &others)?
    } else {
        global.clone()
    };
    if residual.norm() <= COLLAPSE_NORM {
        Ok((text_prior.clone(), true))
    } else {
        Ok((fuse(&residual.normalized()?, text_prior, beta)?, false))
    }
}

/// Recall branch: global view with other categories suppressed, fused with
/// the text prior. `subspaces` may include the target's own subspace; it is
/// skipped.
pub fn retrieve_concept_residual(
    category_id: &str,
    global: &EmbeddingVector,
    subspaces: &[&CategorySubspace],
    text_prior: &EmbeddingVector,
    cfg: &RetrievalConfig,
    index: &dyn VectorIndex,
) -> Result<ResidualOutcome, RetrievalError> {
    let (query, collapsed) = residual_query(
        category_id,
        global,
        subspaces,
        text_prior,
        cfg.weights.beta,
        cfg.suppression,
    )?;
    Ok(ResidualOutcome {
        candidates: tag(index.search(&query, cfg.branch_k)?, Source::ConceptResidual),
        collapsed,
    })
}

/// Max-score union of the branches, sorted and truncated to `pool_k`.
pub fn build_pool(category_id: &str, branches: &[Vec<Candidate>], pool_k: usize) -> CandidatePool {
    let mut best: HashMap<&str, (f64, Source)> = HashMap::new();
    for c in branches.iter().flatten() {
        best.entry(c.asset_id.as_str())
            .and_modify(|(score, source)| {
                *score = score.max(c.score);
                *source = source.merge(c.source);
            })
            .or_insert((c.score, c.source));
    }
    let mut candidates: Vec<Candidate> = best
        .into_iter()
        .map(|(id, (score, source))| Candidate {
            asset_id: id.to_string(),
            score,
            source,
        })
        .collect();
    candidates.sort_by(|a, b| hit_order(a.score, &a.asset_id, b.score, &b.asset_id));
    candidates.truncate(pool_k);
    CandidatePool {
        category_id: category_id.to_string(),
        candidates,
        warnings: Vec::new(),
    }
}

/// Shared read-only retrieval state.
pub struct RetrievalContext<'a> {
    pub taxonomy: &'a Taxonomy,
    pub indices: &'a BTreeMap<String, CategoryIndex>,
    pub subspaces: &'a BTreeMap<String, CategorySubspace>,
    pub cfg: RetrievalConfig,
}

impl RetrievalContext<'_> {
    fn all_subspaces(&self) -> Vec<&CategorySubspace> {
        self.subspaces.values().collect()
    }
}

pub fn retrieve_category(
    category_id: &str,
    plan: &RoutingPlan,
    store: &EvidenceStore,
    ctx: &RetrievalContext<'_>,
) -> Result<CandidatePool, RetrievalError> {
    if !plan.target_categories.contains(category_id) {
        return Err(RetrievalError::NotRouted(category_id.to_string()));
    }
    let text_prior = store
        .text_prior(category_id)
        .ok_or_else(|| RetrievalError::MissingTextPrior(category_id.to_string()))?;
    let index = ctx
        .indices
        .get(category_id)
        .ok_or_else(|| RetrievalError::MissingIndex(category_id.to_string()))?;
    if index.is_empty() {
        return Ok(build_pool(category_id, &[], ctx.cfg.pool_k));
    }

    let mut branches = Vec::with_capacity(2);
    let mut warnings = Vec::new();
    let evidence = resolve_part_or_global(category_id, store, ctx.taxonomy)?;
    if let crate::evidence::PartOrGlobal::Part { embedding, .. } = evidence {
        branches.push(retrieve_part(embedding, text_prior, &ctx.cfg, index)?);
    }
    let (_, global) = store.global_for(category_id, ctx.taxonomy)?;
    let residual = retrieve_concept_residual(
        category_id,
        global,
        &ctx.all_subspaces(),
        text_prior,
        &ctx.cfg,
        index,
    )?;
    if residual.collapsed {
        warnings.push(format!(
            "SuppressionCollapse: residual for '{category_id}' vanished, text prior used"
        ));
    }
    branches.push(residual.candidates);

    let mut pool = build_pool(category_id, &branches, ctx.cfg.pool_k);
    pool.warnings = warnings;
    Ok(pool)
}

/// Retrieves every routed category, in parallel.
pub fn retrieve_all(
    plan: &RoutingPlan,
    store: &EvidenceStore,
    ctx: &RetrievalContext<'_>,
) -> Result<BTreeMap<String, CandidatePool>, RetrievalError> {
    ctx.cfg.validate()?;
    let cats: Vec<&String> = plan.target_categories.iter().collect();
    cats.par_iter()
        .map(|c| retrieve_category(c, plan, store, ctx).map(|p| ((*c).clone(), p)))
        .collect::<Result<Vec<_>, _>>()
        .map(|v| v.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Asset, QualityFlag, View};
    use crate::evidence::{PartEvidence, PartStatus};
    use crate::index::build_index;
    use crate::router::Provenance;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn asset(id: &str, cat: &str, v: Vec<f64>) -> Asset {
        Asset {
            asset_id: id.into(),
            category_id: cat.into(),
            embedding: EmbeddingVector::new(v).unwrap().normalized().unwrap(),
            title: String::new(),
            quality_flag: QualityFlag::Curated,
            bundle_id: None,
        }
    }

    fn rand_unit(rng: &mut ChaCha8Rng, d: usize) -> EmbeddingVector {
        EmbeddingVector::new((0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap()
            .normalized()
            .unwrap()
    }

    fn cand(id: &str, score: f64, source: Source) -> Candidate {
        Candidate {
            asset_id: id.into(),
            score,
            source,
        }
    }

    fn ids(c: &[Candidate]) -> Vec<String> {
        c.iter().map(|c| c.asset_id.clone()).collect()
    }

    fn random_index(seed: u64, n: usize, d: usize) -> CategoryIndex {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let assets: Vec<Asset> = (0..n)
            .map(|i| asset(&format!("a{i:03}"), "c", rand_unit(&mut rng, d).into_inner()))
            .collect();
        build_index("c", &assets).unwrap()
    }

    #[test]
    fn part_branch_endpoints() {
        let idx = random_index(1, 120, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = rand_unit(&mut rng, 16);
        let t = rand_unit(&mut rng, 16);
        let mut cfg = RetrievalConfig {
            branch_k: 30,
            ..Default::default()
        };
        cfg.weights.alpha = 1.0;
        let got = retrieve_part(&p, &t, &cfg, &idx).unwrap();
        assert_eq!(ids(&got), ids(&tag(idx.search(&p, 30).unwrap(), Source::Part)));
        cfg.weights.alpha = 0.0;
        let got = retrieve_part(&p, &t, &cfg, &idx).unwrap();
        assert_eq!(ids(&got), ids(&tag(idx.search(&t, 30).unwrap(), Source::Part)));
        assert!(got.iter().all(|c| c.source == Source::Part));
    }

    #[test]
    fn residual_without_other_categories_is_plain_search() {
        let idx = random_index(3, 80, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = rand_unit(&mut rng, 8);
        let t = rand_unit(&mut rng, 8);
        let mut cfg = RetrievalConfig::default();
        cfg.weights.beta = 1.0;
        let out = retrieve_concept_residual("c", &g, &[], &t, &cfg, &idx).unwrap();
        assert!(!out.collapsed);
        assert_eq!(ids(&out.candidates), ids(&tag(idx.search(&g, 40).unwrap(), Source::Part)));
    }

    #[test]
    fn residual_collapse_falls_back_to_text() {
        let idx = random_index(5, 50, 4);
        let g = EmbeddingVector::basis(4, 0);
        let t = EmbeddingVector::basis(4, 2);
        let other = CategorySubspace::from_basis(
            "other",
            &[EmbeddingVector::basis(4, 0), EmbeddingVector::basis(4, 1)],
        )
        .unwrap();
        let cfg = RetrievalConfig::default();
        let out = retrieve_concept_residual("c", &g, &[&other], &t, &cfg, &idx).unwrap();
        assert!(out.collapsed);
        assert_eq!(ids(&out.candidates), ids(&tag(idx.search(&t, 40).unwrap(), Source::Part)));
    }

    #[test]
    fn own_subspace_is_not_suppressed() {
        let idx = random_index(6, 30, 4);
        let g = EmbeddingVector::basis(4, 0);
        let t = EmbeddingVector::basis(4, 1);
        let own = CategorySubspace::from_basis("c", &[EmbeddingVector::basis(4, 0)]).unwrap();
        let out = retrieve_concept_residual("c", &g, &[&own], &t, &RetrievalConfig::default(), &idx)
            .unwrap();
        assert!(!out.collapsed);
    }

    #[test]
    fn pool_merges_with_max_score() {
        let pool = build_pool(
            "c",
            &[
                vec![cand("x", 0.8, Source::Part), cand("y", 0.5, Source::Part)],
                vec![cand("x", 0.6, Source::ConceptResidual)],
            ],
            40,
        );
        assert_eq!(pool.candidates[0], cand("x", 0.8, Source::Both));
        assert_eq!(pool.candidates[1], cand("y", 0.5, Source::Part));
    }

    #[test]
    fn pool_sizes() {
        let a: Vec<Candidate> = (0..3).map(|i| cand(&format!("a{i}"), 0.1 * i as f64, Source::Part)).collect();
        let b: Vec<Candidate> = (0..4)
            .map(|i| cand(&format!("b{i}"), 0.05 * i as f64, Source::ConceptResidual))
            .collect();
        assert_eq!(build_pool("c", &[a, b], 40).candidates.len(), 7);

        let many: Vec<Candidate> = (0..60).map(|i| cand(&format!("m{i:02}"), i as f64, Source::Part)).collect();
        let pool = build_pool("c", &[many], 40);
        assert_eq!(pool.candidates.len(), 40);
        assert_eq!(pool.candidates[0].asset_id, "m59");
        assert_eq!(pool.candidates[39].asset_id, "m20");
    }

    proptest! {
        #[test]
        fn pool_matches_hashmap_oracle(
            entries in proptest::collection::vec((0u8..30, 0u8..10, any::<bool>()), 0..80),
            pool_k in 0usize..50,
        ) {
            let mut part = Vec::new();
            let mut resid = Vec::new();
            for (id, score, is_part) in &entries {
                let c = cand(&format!("id{id}"), *score as f64 / 10.0, if *is_part { Source::Part } else { Source::ConceptResidual });
                if *is_part { part.push(c) } else { resid.push(c) }
            }
            let pool = build_pool("c", &[part, resid], pool_k);

            let mut oracle: std::collections::HashMap<String, (f64, BTreeSet<bool>)> = Default::default();
            for (id, score, is_part) in &entries {
                let e = oracle.entry(format!("id{id}")).or_insert((f64::MIN, BTreeSet::new()));
                e.0 = e.0.max(*score as f64 / 10.0);
                e.1.insert(*is_part);
            }
            let mut expected: Vec<(String, f64)> = oracle.iter().map(|(k, v)| (k.clone(), v.0)).collect();
            expected.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            expected.truncate(pool_k);
            prop_assert_eq!(pool.candidates.len(), expected.len());
            for (c, (id, score)) in pool.candidates.iter().zip(&expected) {
                prop_assert_eq!(&c.asset_id, id);
                prop_assert_eq!(c.score, *score);
                let tags = &oracle[id].1;
                let want = if tags.len() == 2 { Source::Both } else if tags.contains(&true) { Source::Part } else { Source::ConceptResidual };
                prop_assert_eq!(c.source, want);
            }
        }
    }

    fn setup(part_status: PartStatus) -> (Taxonomy, BTreeMap<String, CategoryIndex>, BTreeMap<String, CategorySubspace>, EvidenceStore, RoutingPlan) {
        let d = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let taxonomy = Taxonomy {
            categories: ["pants", "hat", "empty"].iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        };
        let pants: Vec<Asset> = (0..30)
            .map(|i| asset(&format!("p{i:02}"), "pants", rand_unit(&mut rng, d).into_inner()))
            .collect();
        let hats: Vec<Asset> = (0..30)
            .map(|i| asset(&format!("h{i:02}"), "hat", rand_unit(&mut rng, d).into_inner()))
            .collect();
        let mut indices = BTreeMap::new();
        indices.insert("pants".to_string(), build_index("pants", &pants).unwrap());
        indices.insert("hat".to_string(), build_index("hat", &hats).unwrap());
        indices.insert("empty".to_string(), build_index("empty", &[]).unwrap());
        let mut subspaces = BTreeMap::new();
        subspaces.insert(
            "hat".to_string(),
            CategorySubspace::from_basis("hat", &[EmbeddingVector::basis(d, 0)]).unwrap(),
        );
        let mut store = EvidenceStore::new();
        store.register_view(View::Front, &rand_unit(&mut rng, d)).unwrap();
        store
            .register_part(PartEvidence {
                category_id: "pants".into(),
                embedding: (part_status != PartStatus::Failed).then(|| pants[3].embedding.clone()),
                source_view: View::Front,
                status: part_status,
            })
            .unwrap();
        for c in ["pants", "hat", "empty"] {
            store.register_text_prior(c, &rand_unit(&mut rng, d)).unwrap();
        }
        store.freeze().unwrap();
        let plan = RoutingPlan {
            target_categories: ["pants", "empty"].iter().map(|s| s.to_string()).collect(),
            queries: BTreeMap::new(),
            provenance: [("pants".to_string(), Provenance::ConceptExpanded)].into_iter().collect(),
            ..Default::default()
        };
        (taxonomy, indices, subspaces, store, plan)
    }

    #[test]
    fn category_with_valid_part_uses_both_branches() {
        let (taxonomy, indices, subspaces, store, plan) = setup(PartStatus::Valid);
        let ctx = RetrievalContext {
            taxonomy: &taxonomy,
            indices: &indices,
            subspaces: &subspaces,
            cfg: RetrievalConfig::default(),
        };
        let pool = retrieve_category("pants", &plan, &store, &ctx).unwrap();
        // Both branches return all 30 assets, so every entry is merged.
        assert_eq!(pool.candidates.len(), 30);
        assert!(pool.candidates.iter().all(|c| c.source == Source::Both));
        assert_eq!(pool.candidates[0].asset_id, "p03");
    }

    #[test]
    fn failed_part_gives_residual_only_pool() {
        let (taxonomy, indices, subspaces, store, plan) = setup(PartStatus::Failed);
        let ctx = RetrievalContext {
            taxonomy: &taxonomy,
            indices: &indices,
            subspaces: &subspaces,
            cfg: RetrievalConfig {
                branch_k: 10,
                ..Default::default()
            },
        };
        let pool = retrieve_category("pants", &plan, &store, &ctx).unwrap();
        assert_eq!(pool.candidates.len(), 10);
        assert!(pool.candidates.iter().all(|c| c.source == Source::ConceptResidual));
        assert!(retrieve_category("empty", &plan, &store, &ctx)
            .unwrap()
            .candidates
            .is_empty());
        assert!(matches!(
            retrieve_category("hat", &plan, &store, &ctx),
            Err(RetrievalError::NotRouted(_))
        ));
        let all = retrieve_all(&plan, &store, &ctx).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all["pants"], pool);
    }

    #[test]
    fn config_validation() {
        let mut cfg = RetrievalConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.gate_k = 41;
        assert!(cfg.validate().is_err());
        cfg.gate_k = 20;
        cfg.branch_k = 0;
        assert!(cfg.validate().is_err());
    }
}
