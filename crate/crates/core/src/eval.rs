//! Ablation runs over seeded planted scenarios.
//!
//! Each case plants a body target behind interference in the global view,
//! a part-evidence target for the prompt's garment and for pants, and a
//! prompt whose hoodie concept is ambiguous between sweater and jacket.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::judge::{
    CompareRequest, CompareResponse, ConceptContext, Edit, FilterRequest, FilterResponse,
    JudgeClient, JudgeError, SelectRequest, SelectResponse, VerificationReport, VerifyRequest,
};
use crate::assembly::{run_assembly, AssemblySession, GenerationBudget};
use crate::catalog::{Taxonomy, View};
use crate::evidence::{EvidenceDocument, EvidenceError, PartEvidence, PartStatus, EVIDENCE_VERSION};
use crate::retrieval::{retrieve_all, retrieve_concept_residual, RetrievalConfig, RetrievalContext, RetrievalError};
use crate::vecmath::FusionWeights;
use crate::router::{route, route_naive, Concept, PromptSpec, RouterError, RoutingPlan};
use crate::synth::{
    centroid, generate_interference_scenario, plant_part_target, suite_spec, suite_taxonomy, Scenario,
    ScenarioOptions, SynthError, DEFAULT_LAMBDA,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Router(#[from] RouterError),
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
}

impl EvalError {
    pub fn code(&self) -> &'static str {
        match self {
            EvalError::Synth(e) => e.code(),
            EvalError::Router(e) => e.code(),
            EvalError::Evidence(e) => e.code(),
            EvalError::Retrieval(e) => e.code(),
        }
    }
}

/// Pipeline component switched off for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ablation {
    None,
    /// Residual branch skips subspace suppression.
    Suppression,
    /// Router replaced by one naive guess per concept.
    Router,
    /// No scaffold view: the residual branch queries with the text prior.
    Scaffold,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::None,
        Ablation::Suppression,
        Ablation::Router,
        Ablation::Scaffold,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::Suppression => "suppression",
            Ablation::Router => "router",
            Ablation::Scaffold => "scaffold",
        }
    }

    pub fn apply(&self, cfg: &RetrievalConfig) -> RetrievalConfig {
        let mut cfg = *cfg;
        match self {
            Ablation::Suppression => cfg.suppression = false,
            Ablation::Scaffold => cfg.weights.beta = 0.0,
            Ablation::None | Ablation::Router => {}
        }
        cfg
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown ablation '{s}' (none | suppression | router | scaffold)"))
    }
}

/// One seeded scenario with everything the pipeline consumes.
#[derive(Debug, Clone)]
pub struct SuiteCase {
    pub seed: u64,
    pub scenario: Scenario,
    pub taxonomy: Taxonomy,
    pub evidence: EvidenceDocument,
    /// Planted category → planted asset.
    pub planted: BTreeMap<String, String>,
}

impl SuiteCase {
    pub fn prompt_spec(&self) -> PromptSpec {
        self.evidence.prompt_spec()
    }

    pub fn planted_categories(&self) -> BTreeSet<String> {
        self.planted.keys().cloned().collect()
    }
}

fn suite_prompt(seed: u64) -> (String, Vec<Concept>, &'static str) {
    if seed.is_multiple_of(2) {
        (
            "a knight in a zip-up hoodie and pants".into(),
            vec![Concept::new("hoodie", &["zip-up"]), Concept::new("pants", &[])],
            "jacket",
        )
    } else {
        (
            "a scholar in a knit hoodie and pants".into(),
            vec![Concept::new("hoodie", &["knit"]), Concept::new("pants", &[])],
            "sweater",
        )
    }
}

pub fn build_suite_case(seed: u64, lambda: f64, weights: FusionWeights) -> Result<SuiteCase, EvalError> {
    let spec = suite_spec(seed);
    let scenario = generate_interference_scenario(
        &spec,
        &ScenarioOptions {
            lambda,
            beta: weights.beta,
            ..Default::default()
        },
    )?;
    let (prompt, concepts, garment) = suite_prompt(seed);
    let truth = &scenario.truth;

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut planted = BTreeMap::new();
    planted.insert(truth.target_category.clone(), truth.target_asset_id.clone());
    let mut parts = vec![PartEvidence {
        category_id: truth.target_category.clone(),
        embedding: None,
        source_view: View::Front,
        status: PartStatus::Failed,
    }];
    let mut text_priors = BTreeMap::new();
    for cat in scenario.catalog.planted.keys() {
        let t = if *cat == truth.target_category {
            truth.t_c.clone()
        } else {
            centroid(&scenario.catalog.assets_of(cat)).map_err(SynthError::from)?
        };
        text_priors.insert(cat.clone(), t);
    }
    for cat in [garment, "pants"] {
        let assets = scenario.catalog.assets_of(cat);
        let pick = plant_part_target(&assets, cat, &text_priors[cat], weights.alpha, &mut rng)?;
        planted.insert(cat.to_string(), pick.asset_id.clone());
        parts.push(PartEvidence {
            category_id: cat.to_string(),
            embedding: Some(pick.embedding.clone()),
            source_view: View::Front,
            status: PartStatus::Valid,
        });
    }

    let evidence = EvidenceDocument {
        version: EVIDENCE_VERSION,
        prompt_text: prompt,
        concepts,
        views: [(View::Front, truth.g.clone())].into_iter().collect(),
        parts,
        text_priors,
    };
    Ok(SuiteCase {
        seed,
        scenario,
        taxonomy: suite_taxonomy(),
        evidence,
        planted,
    })
}

/// Judge that knows the planted assets: it selects them when they are in
/// the pool, asks for them during verification, and prefers looks holding
/// more of them.
pub struct PlantedJudge {
    pub planted: BTreeMap<String, String>,
}

impl PlantedJudge {
    fn hits(&self, items: &[crate::assembly::judge::LookItem]) -> usize {
        items
            .iter()
            .filter(|i| self.planted.get(&i.category_id) == Some(&i.asset_id))
            .count()
    }
}

impl JudgeClient for PlantedJudge {
    fn filter_grid(&self, request: &FilterRequest) -> Result<FilterResponse, JudgeError> {
        Ok(FilterResponse {
            kept: request.candidates.iter().map(|c| c.asset_id.clone()).collect(),
        })
    }

    fn select_outfit(&self, request: &SelectRequest) -> Result<SelectResponse, JudgeError> {
        let mut selections = BTreeMap::new();
        for (cat, pool) in &request.pools {
            let planted = self.planted.get(cat);
            let pick = pool
                .iter()
                .find(|c| Some(&c.asset_id) == planted)
                .or_else(|| pool.first());
            if let Some(c) = pick {
                selections.insert(cat.clone(), c.asset_id.clone());
            }
        }
        Ok(SelectResponse { selections })
    }

    fn verify(&self, request: &VerifyRequest) -> Result<VerificationReport, JudgeError> {
        let mut edits = Vec::new();
        for (cat, asset) in &self.planted {
            match request.look.items.iter().find(|i| &i.category_id == cat) {
                Some(item) if &item.asset_id == asset => {}
                Some(_) => edits.push(Edit::substitute(cat, asset)),
                None => edits.push(Edit::add(cat, asset)),
            }
        }
        if edits.is_empty() {
            Ok(VerificationReport::pass())
        } else {
            Ok(VerificationReport::fail(edits))
        }
    }

    fn compare_batch(&self, request: &CompareRequest) -> Result<CompareResponse, JudgeError> {
        let mut best = 0;
        for (i, look) in request.looks.iter().enumerate() {
            if self.hits(&look.items) > self.hits(&request.looks[best].items) {
                best = i;
            }
        }
        Ok(CompareResponse { winner: best })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub seed: u64,
    /// Residual-branch top-1 equals the planted target.
    pub residual_top1_hit: bool,
    /// Share of planted assets present in their category's pool.
    pub pool_recall: f64,
    /// Share of planted categories the router targeted.
    pub category_coverage: f64,
    /// Tournament winner holds the planted target.
    pub final_look_hit: bool,
    pub refine_iterations: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assembly_error: Option<String>,
    pub scenario_attempts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub residual_top1_accuracy: f64,
    pub pool_recall: f64,
    pub category_coverage: f64,
    pub final_look_accuracy: f64,
    pub mean_refine_iterations: f64,
    pub assembly_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ablation: Ablation,
    pub n_cases: usize,
    pub lambda: f64,
    pub metrics: Metrics,
    pub cases: Vec<CaseMetrics>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub retrieval: RetrievalConfig,
    pub budget: GenerationBudget,
    pub lambda: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            retrieval: RetrievalConfig::default(),
            budget: GenerationBudget::default(),
            lambda: DEFAULT_LAMBDA,
        }
    }
}

pub fn routing_for(case: &SuiteCase, ablation: Ablation) -> Result<RoutingPlan, EvalError> {
    let spec = case.prompt_spec();
    Ok(match ablation {
        Ablation::Router => route_naive(&spec, &case.taxonomy),
        _ => route(&spec, &case.taxonomy, None)?,
    })
}

pub fn evaluate_case(case: &SuiteCase, ablation: Ablation, opts: &EvalOptions) -> Result<CaseMetrics, EvalError> {
    let cfg = ablation.apply(&opts.retrieval);
    let plan = routing_for(case, ablation)?;
    let store = case.evidence.to_store()?;
    let ctx = RetrievalContext {
        taxonomy: &case.taxonomy,
        indices: &case.scenario.indices,
        subspaces: &case.scenario.subspaces,
        cfg,
    };
    let pools = retrieve_all(&plan, &store, &ctx)?;

    let truth = &case.scenario.truth;
    let target_cat = truth.target_category.as_str();
    let residual_top1_hit = if plan.target_categories.contains(target_cat) {
        let (_, g) = store.global_for(target_cat, &case.taxonomy)?;
        let t = store
            .text_prior(target_cat)
            .ok_or_else(|| RetrievalError::MissingTextPrior(target_cat.to_string()))?;
        let subspaces: Vec<_> = case.scenario.subspaces.values().collect();
        let branch = retrieve_concept_residual(
            target_cat,
            g,
            &subspaces,
            t,
            &cfg,
            &case.scenario.indices[target_cat],
        )?;
        branch.candidates.first().map(|c| c.asset_id.as_str()) == Some(truth.target_asset_id.as_str())
    } else {
        false
    };

    let n = case.planted.len() as f64;
    let covered = case
        .planted
        .keys()
        .filter(|c| plan.target_categories.contains(*c))
        .count();
    let recalled = case
        .planted
        .iter()
        .filter(|(c, a)| pools.get(*c).is_some_and(|p| p.contains(a)))
        .count();

    let judge = PlantedJudge {
        planted: case.planted.clone(),
    };
    let session = AssemblySession {
        prompt: &case.evidence.prompt_text,
        context: ConceptContext {
            concepts: case.evidence.concepts.clone(),
            views: store.available_views().into_iter().collect(),
        },
        taxonomy: &case.taxonomy,
    };
    let (final_look_hit, refine_iterations, assembly_error) =
        match run_assembly(&pools, &session, &judge, &opts.budget, cfg.gate_k, false) {
            Ok(out) => {
                let hit = out.tournament.winner.selections.get(target_cat) == Some(&truth.target_asset_id);
                let iters = out.candidates.iter().map(|l| l.verifications).sum::<usize>() as f64
                    / out.candidates.len() as f64;
                (hit, iters, None)
            }
            Err(e) => (false, 0.0, Some(e.code().to_string())),
        };

    Ok(CaseMetrics {
        seed: case.seed,
        residual_top1_hit,
        pool_recall: recalled as f64 / n,
        category_coverage: covered as f64 / n,
        final_look_hit,
        refine_iterations,
        assembly_error,
        scenario_attempts: truth.attempts,
    })
}

fn summarize(cases: &[CaseMetrics]) -> Metrics {
    let n = cases.len().max(1) as f64;
    let mean = |f: &dyn Fn(&CaseMetrics) -> f64| cases.iter().map(f).sum::<f64>() / n;
    let assembled: Vec<&CaseMetrics> = cases.iter().filter(|c| c.assembly_error.is_none()).collect();
    Metrics {
        residual_top1_accuracy: mean(&|c| c.residual_top1_hit as u8 as f64),
        pool_recall: mean(&|c| c.pool_recall),
        category_coverage: mean(&|c| c.category_coverage),
        final_look_accuracy: mean(&|c| c.final_look_hit as u8 as f64),
        mean_refine_iterations: if assembled.is_empty() {
            0.0
        } else {
            assembled.iter().map(|c| c.refine_iterations).sum::<f64>() / assembled.len() as f64
        },
        assembly_failures: cases.len() - assembled.len(),
    }
}

/// Runs `seeds` under one ablation. Cases are built and scored in parallel;
/// the report lists them in seed order.
pub fn run_eval(
    ablation: Ablation,
    seeds: &[u64],
    opts: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    let cases = seeds
        .par_iter()
        .map(|&s| {
            let case = build_suite_case(s, opts.lambda, opts.retrieval.weights)?;
            evaluate_case(&case, ablation, opts)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport {
        ablation,
        n_cases: cases.len(),
        lambda: opts.lambda,
        metrics: summarize(&cases),
        cases,
    })
}

/// Markdown table, one row per report.
pub fn metrics_table(reports: &[EvalReport]) -> String {
    let mut out = String::from(
        "| ablation | cases | residual top-1 | pool recall | coverage | final look | refine iters | assembly failures |\n\
         |---|---|---|---|---|---|---|---|\n",
    );
    for r in reports {
        let m = &r.metrics;
        out.push_str(&format!(
            "| {} | {} | {:.2} | {:.3} | {:.3} | {:.2} | {:.2} | {} |\n",
            r.ablation,
            r.n_cases,
            m.residual_top1_accuracy,
            m.pool_recall,
            m.category_coverage,
            m.final_look_accuracy,
            m.mean_refine_iterations,
            m.assembly_failures
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ablation_names_round_trip() {
        for a in Ablation::ALL {
            assert_eq!(a.as_str().parse::<Ablation>().unwrap(), a);
        }
        assert!("bogus".parse::<Ablation>().is_err());
    }

    #[test]
    fn full_pipeline_finds_planted_assets() {
        let case = build_suite_case(23, DEFAULT_LAMBDA, FusionWeights::default()).unwrap();
        let m = evaluate_case(&case, Ablation::None, &EvalOptions::default()).unwrap();
        assert!(m.residual_top1_hit);
        assert_eq!(m.category_coverage, 1.0);
        assert_eq!(m.pool_recall, 1.0);
        assert!(m.final_look_hit);
        assert!(m.assembly_error.is_none());
    }

    #[test]
    fn ablations_order_on_a_few_seeds() {
        let seeds: Vec<u64> = (1..=8).collect();
        let opts = EvalOptions::default();
        let none = run_eval(Ablation::None, &seeds, &opts).unwrap();
        let supp = run_eval(Ablation::Suppression, &seeds, &opts).unwrap();
        let router = run_eval(Ablation::Router, &seeds, &opts).unwrap();
        assert_eq!(none.metrics.residual_top1_accuracy, 1.0);
        assert_eq!(supp.metrics.residual_top1_accuracy, 0.0);
        assert!(router.metrics.category_coverage < none.metrics.category_coverage);
        let table = metrics_table(&[none, supp, router]);
        assert_eq!(table.lines().count(), 5);
    }
}
