//! One function per subcommand. Each reads its stage inputs from the
//! configured paths and writes its outputs under the output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use avatar_core::assembly::{
    run_assembly, AssemblySession, ConceptContext, JudgeClient, ScriptPolicy, ScriptedJudge,
};
use avatar_core::catalog::{ingest_catalog, Catalog, Taxonomy};
use avatar_core::eval::{build_suite_case, metrics_table, run_eval, Ablation, EvalOptions};
use avatar_core::evidence::EvidenceDocument;
use avatar_core::index::{build_index, load_snapshot, save_snapshot, CategoryIndex};
use avatar_core::retrieval::{retrieve_all, RetrievalContext};
use avatar_core::router::{route, route_naive, AdvisorClient, RoutingPlan};
use avatar_core::transport::{HttpAdvisor, HttpJudge, ScriptedAdvisor};
use avatar_core::vecmath::{compute_category_subspace, CategorySubspace, EmbeddingVector};
use log::info;
use serde::{Deserialize, Serialize};

use crate::config::{AdvisorMode, JudgeMode, RunConfig};
use crate::docs::*;
use crate::error::{AtStage, CliError, Stage};

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.paths.output_dir.join(name)
}

fn load_taxonomy(cfg: &RunConfig, stage: Stage) -> Result<Taxonomy, CliError> {
    Taxonomy::load(&cfg.paths.taxonomy).at(stage)
}

fn load_catalog(cfg: &RunConfig, stage: Stage) -> Result<(Taxonomy, Catalog, avatar_core::catalog::CatalogStats), CliError> {
    let taxonomy = load_taxonomy(cfg, stage)?;
    let (catalog, stats) = ingest_catalog(&cfg.paths.catalog, &taxonomy).at(stage)?;
    Ok((taxonomy, catalog, stats))
}

pub fn cmd_ingest(cfg: &RunConfig) -> Result<Document<IngestReport>, CliError> {
    let (_, catalog, stats) = load_catalog(cfg, Stage::Ingest)?;
    info!(
        "ingested {} assets, rejected {}",
        stats.total_assets, stats.rejected_records
    );
    let doc = Document::new(
        "ingest_report",
        &cfg.hash(),
        cfg.seed,
        IngestReport {
            dim: catalog.dim(),
            stats,
        },
    );
    write_json(Stage::Ingest, &out_path(cfg, INGEST_REPORT), &doc)?;
    Ok(doc)
}

/// Writes one snapshot per taxonomy category (empty categories included),
/// the category subspaces and a manifest.
pub fn cmd_build_index(cfg: &RunConfig) -> Result<Document<IndexManifest>, CliError> {
    let stage = Stage::Index;
    let (taxonomy, catalog, _) = load_catalog(cfg, stage)?;
    let dir = &cfg.paths.index_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(stage, dir, e))?;
    let mut indices = BTreeMap::new();
    let mut subspaces = BTreeMap::new();
    for cat in &taxonomy.categories {
        let assets = catalog.assets_of(cat).unwrap_or(&[]);
        let index = build_index(cat, assets).at(stage)?;
        let file = format!("{cat}.idx");
        save_snapshot(&index, &dir.join(&file)).at(stage)?;
        indices.insert(cat.clone(), file);
        if !assets.is_empty() {
            let embs: Vec<EmbeddingVector> = assets.iter().map(|a| a.embedding.clone()).collect();
            let s = compute_category_subspace(cat, &embs, &cfg.subspace).at(stage)?;
            info!("{cat}: {} assets, subspace rank {}", assets.len(), s.rank());
            subspaces.insert(cat.clone(), s);
        }
    }
    write_json(stage, &dir.join(SUBSPACES), &subspaces)?;
    let doc = Document::new(
        "index_manifest",
        &cfg.hash(),
        cfg.seed,
        IndexManifest {
            dim: catalog.dim().unwrap_or(0),
            indices,
            subspaces: SUBSPACES.to_string(),
        },
    );
    write_json(stage, &dir.join(INDEX_MANIFEST), &doc)?;
    Ok(doc)
}

fn load_evidence(cfg: &RunConfig, stage: Stage) -> Result<EvidenceDocument, CliError> {
    EvidenceDocument::load(&cfg.paths.evidence).at(stage)
}

fn build_advisor(cfg: &RunConfig) -> Result<Option<Box<dyn AdvisorClient>>, CliError> {
    Ok(match &cfg.advisor {
        AdvisorMode::None => None,
        AdvisorMode::Scripted(p) => Some(Box::new(
            ScriptedAdvisor::load(p).map_err(|e| CliError::new(Stage::Route, "AdvisorScript", e.to_string()))?,
        )),
        AdvisorMode::Http(url) => Some(Box::new(HttpAdvisor::new(url, cfg.judge_timeout()))),
    })
}

pub fn cmd_route(cfg: &RunConfig) -> Result<Document<RouteDoc>, CliError> {
    let stage = Stage::Route;
    let taxonomy = load_taxonomy(cfg, stage)?;
    let evidence = load_evidence(cfg, stage)?;
    let spec = evidence.prompt_spec();
    let plan = if cfg.ablation == Ablation::Router {
        route_naive(&spec, &taxonomy)
    } else {
        let advisor = build_advisor(cfg)?;
        route(&spec, &taxonomy, advisor.as_deref()).at(stage)?
    };
    let doc = Document::new(
        "routing_plan",
        &cfg.hash(),
        cfg.seed,
        RouteDoc {
            prompt: spec.prompt_text,
            plan,
        },
    );
    write_json(stage, &out_path(cfg, ROUTING_PLAN), &doc)?;
    Ok(doc)
}

type Indices = BTreeMap<String, CategoryIndex>;
type Subspaces = BTreeMap<String, CategorySubspace>;

fn load_indices(dir: &Path, categories: impl IntoIterator<Item = String>) -> Result<(Indices, Subspaces), CliError> {
    let stage = Stage::Retrieve;
    let manifest: Document<IndexManifest> = read_doc(stage, &dir.join(INDEX_MANIFEST), "index_manifest")?;
    let mut indices = BTreeMap::new();
    for cat in categories {
        let Some(file) = manifest.data.indices.get(&cat) else {
            return Err(CliError::new(stage, "MissingIndex", format!("no index for category '{cat}'")));
        };
        indices.insert(cat, load_snapshot(&dir.join(file)).at(stage)?);
    }
    let subspaces = read_json(stage, &dir.join(&manifest.data.subspaces))?;
    Ok((indices, subspaces))
}

pub fn cmd_retrieve(cfg: &RunConfig) -> Result<Document<PoolDump>, CliError> {
    let stage = Stage::Retrieve;
    let taxonomy = load_taxonomy(cfg, stage)?;
    let route_doc: Document<RouteDoc> = read_doc(stage, &out_path(cfg, ROUTING_PLAN), "routing_plan")?;
    let plan: RoutingPlan = route_doc.data.plan;
    let store = load_evidence(cfg, stage)?.to_store().at(stage)?;
    let (indices, subspaces) = load_indices(&cfg.paths.index_dir, plan.target_categories.iter().cloned())?;
    let ctx = RetrievalContext {
        taxonomy: &taxonomy,
        indices: &indices,
        subspaces: &subspaces,
        cfg: cfg.effective_retrieval(),
    };
    let pools = retrieve_all(&plan, &store, &ctx).at(stage)?;
    let doc = Document::new(
        "pools",
        &cfg.hash(),
        cfg.seed,
        PoolDump {
            prompt: route_doc.data.prompt,
            pools,
        },
    );
    write_json(stage, &out_path(cfg, POOLS), &doc)?;
    Ok(doc)
}

pub fn build_judge(cfg: &RunConfig) -> Result<Box<dyn JudgeClient>, CliError> {
    Ok(match &cfg.judge {
        JudgeMode::Policy => Box::new(ScriptedJudge::with_policy(ScriptPolicy::default())),
        JudgeMode::Scripted(p) => Box::new(ScriptedJudge::load(p).at(Stage::Assemble)?),
        JudgeMode::Http(url) => Box::new(HttpJudge::new(url, cfg.judge_timeout())),
    })
}

pub fn cmd_assemble(cfg: &RunConfig) -> Result<Document<LookDoc>, CliError> {
    let stage = Stage::Assemble;
    let taxonomy = load_taxonomy(cfg, stage)?;
    let pools: Document<PoolDump> = read_doc(stage, &out_path(cfg, POOLS), "pools")?;
    let evidence = load_evidence(cfg, stage)?;
    let judge = build_judge(cfg)?;
    let session = AssemblySession {
        prompt: &evidence.prompt_text,
        context: ConceptContext {
            concepts: evidence.concepts.clone(),
            views: evidence.views.keys().copied().collect(),
        },
        taxonomy: &taxonomy,
    };
    let out = run_assembly(
        &pools.data.pools,
        &session,
        judge.as_ref(),
        &cfg.budget,
        cfg.retrieval.gate_k,
        cfg.pass_through,
    )
    .at(stage)?;
    let doc = Document::new(
        "look",
        &cfg.hash(),
        cfg.seed,
        LookDoc {
            prompt: evidence.prompt_text.clone(),
            winner: out.tournament.winner.clone(),
            candidates: out.candidates,
            tournament: out.tournament,
            filtered: out.filtered,
            usage: out.ledger,
            warnings: out.warnings,
        },
    );
    write_json(stage, &out_path(cfg, LOOK), &doc)?;
    Ok(doc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub seed: u64,
    pub planted: BTreeMap<String, String>,
    pub truth: avatar_core::synth::PlantedTruth,
}

/// Writes a planted scenario as pipeline inputs plus `run.toml` wiring them
/// together, all under the output directory.
pub fn cmd_synth(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let stage = Stage::Synth;
    let case = build_suite_case(cfg.seed, cfg.eval.lambda, cfg.retrieval.weights).at(stage)?;
    let dir = &cfg.paths.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(stage, dir, e))?;
    case.scenario.catalog.write(&dir.join("catalog.jsonl")).at(stage)?;
    write_json(stage, &dir.join("taxonomy.json"), &case.taxonomy)?;
    write_json(stage, &dir.join("evidence.json"), &case.evidence)?;
    write_json(
        stage,
        &dir.join("truth.json"),
        &SynthTruth {
            seed: cfg.seed,
            planted: case.planted.clone(),
            truth: case.scenario.truth.clone(),
        },
    )?;
    let mut run = cfg.clone();
    run.paths = crate::config::Paths::default();
    let text = toml::to_string(&run).map_err(|e| CliError::new(stage, "Serialize", e.to_string()))?;
    let run_path = dir.join("run.toml");
    std::fs::write(&run_path, text).map_err(|e| CliError::io(stage, &run_path, e))?;
    Ok(run_path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub ablation: Ablation,
    pub metric: String,
    pub baseline: f64,
    pub ablated: f64,
    /// baseline ≥ ablated
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub seeds: Vec<u64>,
    pub reports: Vec<avatar_core::eval::EvalReport>,
    pub orderings: Vec<OrderingCheck>,
    pub table: String,
}

/// Runs the baseline and each requested ablation on the same seeds
/// (`seed .. seed + cases`).
pub fn cmd_eval(cfg: &RunConfig, ablations: &[Ablation]) -> Result<Document<EvalOutput>, CliError> {
    let stage = Stage::Eval;
    let seeds: Vec<u64> = (0..cfg.eval.cases as u64).map(|i| cfg.seed + i).collect();
    let opts = EvalOptions {
        retrieval: cfg.retrieval,
        budget: cfg.budget,
        lambda: cfg.eval.lambda,
    };
    let mut modes = vec![Ablation::None];
    modes.extend(ablations.iter().copied().filter(|a| *a != Ablation::None));
    modes.dedup();
    let mut reports = Vec::new();
    for mode in &modes {
        reports.push(run_eval(*mode, &seeds, &opts).at(stage)?);
    }
    let base = reports[0].metrics;
    let orderings = reports[1..]
        .iter()
        .map(|r| {
            let (metric, b, a) = match r.ablation {
                Ablation::Router => ("category_coverage", base.category_coverage, r.metrics.category_coverage),
                _ => (
                    "residual_top1_accuracy",
                    base.residual_top1_accuracy,
                    r.metrics.residual_top1_accuracy,
                ),
            };
            OrderingCheck {
                ablation: r.ablation,
                metric: metric.to_string(),
                baseline: b,
                ablated: a,
                holds: b >= a,
            }
        })
        .collect();
    let table = metrics_table(&reports);
    let doc = Document::new(
        "eval_report",
        &cfg.hash(),
        cfg.seed,
        EvalOutput {
            seeds,
            reports,
            orderings,
            table: table.clone(),
        },
    );
    write_json(stage, &out_path(cfg, EVAL_REPORT), &doc)?;
    let table_path = out_path(cfg, EVAL_TABLE);
    std::fs::write(&table_path, &table).map_err(|e| CliError::io(stage, &table_path, e))?;
    Ok(doc)
}
