//! Judge-gated filtering, outfit selection, verification loop, usage-capped
//! candidate generation and tournament selection.

pub mod judge;

use std::collections::{BTreeMap, BTreeSet};

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Taxonomy;
use crate::retrieval::{Candidate, CandidatePool};

pub use judge::{
    CompareRequest, CompareResponse, ConceptContext, Edit, EditAction, FilterRequest,
    FilterResponse, Issue, IssueKind, JudgeClient, JudgeError, JudgeOp, JudgeScript,
    LookDescriptor, LookItem, ScriptPolicy, ScriptedJudge, SelectRequest, SelectResponse,
    Verdict, VerificationReport, VerifyRequest,
};

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("required category '{0}' has an empty pool")]
    MissingCoreCategory(String),
    #[error("usage caps leave category '{0}' unfillable")]
    BudgetInfeasible(String),
    #[error("invalid generation budget: {0}")]
    InvalidBudget(String),
    #[error("no body bundles available")]
    NoBundles,
    #[error("tournament needs at least one look")]
    NoLooks,
    #[error(transparent)]
    Judge(#[from] JudgeError),
}

impl AssemblyError {
    pub fn code(&self) -> &'static str {
        match self {
            AssemblyError::MissingCoreCategory(_) => "MissingCoreCategory",
            AssemblyError::BudgetInfeasible(_) => "BudgetInfeasible",
            AssemblyError::InvalidBudget(_) => "InvalidBudget",
            AssemblyError::NoBundles => "NoBundles",
            AssemblyError::NoLooks => "NoLooks",
            AssemblyError::Judge(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationBudget {
    pub n_candidates: usize,
    pub per_asset_cap: usize,
    pub per_bundle_cap: usize,
    pub bundle_rotation: usize,
    pub max_refine_iters: usize,
    pub batch_size: usize,
}

impl Default for GenerationBudget {
    fn default() -> Self {
        Self {
            n_candidates: 6,
            per_asset_cap: 2,
            per_bundle_cap: 2,
            bundle_rotation: 3,
            max_refine_iters: 3,
            batch_size: 4,
        }
    }
}

impl GenerationBudget {
    pub fn validate(&self) -> Result<(), AssemblyError> {
        let fields = [
            ("n_candidates", self.n_candidates),
            ("per_asset_cap", self.per_asset_cap),
            ("per_bundle_cap", self.per_bundle_cap),
            ("bundle_rotation", self.bundle_rotation),
            ("max_refine_iters", self.max_refine_iters),
        ];
        for (name, v) in fields {
            if v < 1 {
                return Err(AssemblyError::InvalidBudget(format!("{name} must be >= 1")));
            }
        }
        if self.batch_size < 2 {
            return Err(AssemblyError::InvalidBudget("batch_size must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LookStatus {
    Draft,
    Verified,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvatarLook {
    pub look_id: u32,
    pub selections: BTreeMap<String, String>,
    pub body_bundle_id: Option<String>,
    pub history: Vec<Edit>,
    pub status: LookStatus,
    pub final_report: Option<VerificationReport>,
    /// Verify calls spent on this look.
    pub verifications: usize,
}

impl AvatarLook {
    pub fn new(look_id: u32) -> Self {
        Self {
            look_id,
            selections: BTreeMap::new(),
            body_bundle_id: None,
            history: Vec::new(),
            status: LookStatus::Draft,
            final_report: None,
            verifications: 0,
        }
    }

    pub fn descriptor(&self, pools: &FilteredPools) -> LookDescriptor {
        LookDescriptor {
            look_id: self.look_id,
            body_bundle_id: self.body_bundle_id.clone(),
            items: self
                .selections
                .iter()
                .map(|(cat, id)| LookItem {
                    category_id: cat.clone(),
                    asset_id: id.clone(),
                    score: pools.score(cat, id).unwrap_or(0.0),
                })
                .collect(),
        }
    }

    /// Pool membership and exclusion safety. One asset per category holds
    /// by construction of the map.
    pub fn check(&self, pools: &FilteredPools, taxonomy: &Taxonomy) -> Result<(), String> {
        for (cat, id) in &self.selections {
            if !pools.contains(cat, id) {
                return Err(format!("'{id}' is not in the filtered '{cat}' pool"));
            }
        }
        let cats: Vec<&String> = self.selections.keys().collect();
        for (i, a) in cats.iter().enumerate() {
            for b in &cats[i + 1..] {
                if taxonomy.mutually_exclusive(a, b) {
                    return Err(format!("'{a}' and '{b}' are mutually exclusive"));
                }
            }
        }
        Ok(())
    }

    fn conflicts_with(&self, category_id: &str, taxonomy: &Taxonomy) -> Option<String> {
        self.selections
            .keys()
            .find(|c| c.as_str() != category_id && taxonomy.mutually_exclusive(c, category_id))
            .cloned()
    }
}

/// Judge-gated pools.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilteredPools {
    pub pools: BTreeMap<String, CandidatePool>,
    /// Categories the judge emptied.
    pub at_risk: BTreeSet<String>,
    pub warnings: Vec<String>,
}

impl FilteredPools {
    pub fn candidates(&self, category_id: &str) -> &[Candidate] {
        self.pools
            .get(category_id)
            .map(|p| p.candidates.as_slice())
            .unwrap_or(&[])
    }

    pub fn contains(&self, category_id: &str, asset_id: &str) -> bool {
        self.candidates(category_id).iter().any(|c| c.asset_id == asset_id)
    }

    pub fn score(&self, category_id: &str, asset_id: &str) -> Option<f64> {
        self.candidates(category_id)
            .iter()
            .find(|c| c.asset_id == asset_id)
            .map(|c| c.score)
    }

    pub fn top(&self, category_id: &str) -> Option<&Candidate> {
        self.candidates(category_id).first()
    }
}

pub struct AssemblySession<'a> {
    pub prompt: &'a str,
    pub context: ConceptContext,
    pub taxonomy: &'a Taxonomy,
}

fn note(warnings: &mut Vec<String>, msg: String) {
    debug!("{msg}");
    warnings.push(msg);
}

/// Intersects each pool with the judge's kept ids, preserving pool order,
/// and truncates to `gate_k`. With `pass_through`, an unavailable judge
/// keeps the pool unfiltered instead of failing.
pub fn filter_pools(
    pools: &BTreeMap<String, CandidatePool>,
    judge: &dyn JudgeClient,
    session: &AssemblySession<'_>,
    gate_k: usize,
    pass_through: bool,
) -> Result<FilteredPools, AssemblyError> {
    let mut out = FilteredPools::default();
    for (cat, pool) in pools {
        let request = FilterRequest {
            prompt: session.prompt.to_string(),
            category_id: cat.clone(),
            candidates: pool.candidates.clone(),
        };
        let kept: BTreeSet<String> = match judge.filter_grid(&request) {
            Ok(resp) => {
                let mut kept = BTreeSet::new();
                for id in resp.kept {
                    if pool.contains(&id) {
                        kept.insert(id);
                    } else {
                        note(&mut out.warnings, format!("filter: ignored foreign id '{id}' for '{cat}'"));
                    }
                }
                kept
            }
            Err(JudgeError::Unavailable(msg)) if pass_through => {
                note(&mut out.warnings, format!("filter: judge unavailable for '{cat}', passing through: {msg}"));
                pool.candidates.iter().map(|c| c.asset_id.clone()).collect()
            }
            Err(e) => return Err(e.into()),
        };
        let candidates: Vec<Candidate> = pool
            .candidates
            .iter()
            .filter(|c| kept.contains(&c.asset_id))
            .take(gate_k)
            .cloned()
            .collect();
        if candidates.is_empty() {
            out.at_risk.insert(cat.clone());
        }
        out.pools.insert(
            cat.clone(),
            CandidatePool {
                category_id: cat.clone(),
                candidates,
                warnings: pool.warnings.clone(),
            },
        );
    }
    Ok(out)
}

/// Asks the judge for one asset per category and repairs the answer:
/// off-pool picks fall back to the category's top candidate, picks that
/// clash with an earlier one are dropped, and missing required categories
/// are filled with their top candidate.
pub fn assemble_initial(
    pools: &FilteredPools,
    session: &AssemblySession<'_>,
    judge: &dyn JudgeClient,
    look_id: u32,
    warnings: &mut Vec<String>,
) -> Result<AvatarLook, AssemblyError> {
    let taxonomy = session.taxonomy;
    for core in &taxonomy.required_core {
        if pools.candidates(core).is_empty() {
            return Err(AssemblyError::MissingCoreCategory(core.clone()));
        }
    }
    let request = SelectRequest {
        prompt: session.prompt.to_string(),
        context: session.context.clone(),
        pools: pools
            .pools
            .iter()
            .map(|(c, p)| (c.clone(), p.candidates.clone()))
            .collect(),
    };
    let picks = judge.select_outfit(&request)?.selections;

    let mut look = AvatarLook::new(look_id);
    for core in &taxonomy.required_core {
        let pick = match picks.get(core) {
            Some(id) if pools.contains(core, id) => id.clone(),
            other => {
                let top = pools.top(core).expect("checked non-empty").asset_id.clone();
                if let Some(id) = other {
                    note(warnings, format!("select: '{id}' not in '{core}' pool, using '{top}'"));
                }
                top
            }
        };
        look.selections.insert(core.clone(), pick);
    }
    for (cat, id) in &picks {
        if taxonomy.required_core.contains(cat) {
            continue;
        }
        if !pools.pools.contains_key(cat) {
            note(warnings, format!("select: ignored pick for unrouted category '{cat}'"));
            continue;
        }
        let pick = if pools.contains(cat, id) {
            id.clone()
        } else if let Some(top) = pools.top(cat) {
            note(warnings, format!("select: '{id}' not in '{cat}' pool, using '{}'", top.asset_id));
            top.asset_id.clone()
        } else {
            note(warnings, format!("select: '{cat}' pool is empty, pick dropped"));
            continue;
        };
        if let Some(other) = look.conflicts_with(cat, taxonomy) {
            note(warnings, format!("select: dropped '{cat}' pick, excluded by '{other}'"));
            continue;
        }
        look.selections.insert(cat.clone(), pick);
    }
    if let Some(bundle_cat) = taxonomy.bundle_category() {
        look.body_bundle_id = look.selections.get(bundle_cat).cloned();
    }
    Ok(look)
}

/// Per-asset and per-bundle usage counts across committed looks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageLedger {
    pub per_asset_cap: usize,
    pub per_bundle_cap: usize,
    pub assets: BTreeMap<String, usize>,
    pub bundles: BTreeMap<String, usize>,
}

impl UsageLedger {
    pub fn new(budget: &GenerationBudget) -> Self {
        Self {
            per_asset_cap: budget.per_asset_cap,
            per_bundle_cap: budget.per_bundle_cap,
            ..Default::default()
        }
    }

    pub fn asset_free(&self, asset_id: &str) -> bool {
        self.assets.get(asset_id).copied().unwrap_or(0) < self.per_asset_cap
    }

    pub fn bundle_free(&self, bundle_id: &str) -> bool {
        self.bundles.get(bundle_id).copied().unwrap_or(0) < self.per_bundle_cap
            && self.asset_free(bundle_id)
    }

    pub fn commit(&mut self, look: &AvatarLook) {
        for id in look.selections.values() {
            *self.assets.entry(id.clone()).or_default() += 1;
        }
        if let Some(b) = &look.body_bundle_id {
            *self.bundles.entry(b.clone()).or_default() += 1;
        }
    }

    pub fn within_caps(&self) -> bool {
        self.assets.values().all(|&n| n <= self.per_asset_cap)
            && self.bundles.values().all(|&n| n <= self.per_bundle_cap)
    }
}

/// Applies one edit if it keeps the look valid and within caps; returns the
/// reason otherwise and leaves the look untouched.
pub fn apply_edit(
    look: &mut AvatarLook,
    edit: &Edit,
    pools: &FilteredPools,
    taxonomy: &Taxonomy,
    ledger: Option<&UsageLedger>,
) -> Result<(), String> {
    let cat = edit.category_id.as_str();
    let selected = look.selections.contains_key(cat);
    let is_bundle = taxonomy.bundle_category() == Some(cat);
    let asset = match edit.action {
        EditAction::Remove => None,
        EditAction::Add | EditAction::Substitute => Some(
            edit.asset_id
                .as_deref()
                .ok_or_else(|| format!("{:?} on '{cat}' has no asset_id", edit.action))?,
        ),
    };
    match edit.action {
        EditAction::Add if selected => return Err(format!("add on already selected '{cat}'")),
        EditAction::Substitute | EditAction::Remove if !selected => {
            return Err(format!("{:?} on unselected '{cat}'", edit.action))
        }
        EditAction::Remove if taxonomy.required_core.contains(cat) => {
            return Err(format!("remove on required category '{cat}'"))
        }
        _ => {}
    }
    if let Some(id) = asset {
        if !pools.contains(cat, id) {
            return Err(format!("'{id}' is not in the filtered '{cat}' pool"));
        }
        if look.selections.get(cat).map(String::as_str) == Some(id) {
            return Err(format!("substitute on '{cat}' keeps '{id}'"));
        }
        if let Some(other) = look.conflicts_with(cat, taxonomy) {
            return Err(format!("'{cat}' is excluded by selected '{other}'"));
        }
        if let Some(ledger) = ledger {
            let free = if is_bundle { ledger.bundle_free(id) } else { ledger.asset_free(id) };
            if !free {
                return Err(format!("'{id}' is at its usage cap"));
            }
        }
    }

    let before = look.clone();
    match asset {
        Some(id) => {
            look.selections.insert(cat.to_string(), id.to_string());
        }
        None => {
            look.selections.remove(cat);
        }
    }
    if is_bundle {
        look.body_bundle_id = look.selections.get(cat).cloned();
    }
    if let Err(e) = look.check(pools, taxonomy) {
        *look = before;
        return Err(format!("edit would break look invariants: {e}"));
    }
    look.history.push(edit.clone());
    Ok(())
}

/// Verify → edit loop with at most `max_refine_iters` verifications. Edits
/// proposed by the final verification are not applied, so the returned look
/// is always the one last verified.
pub fn refine(
    mut look: AvatarLook,
    pools: &FilteredPools,
    judge: &dyn JudgeClient,
    session: &AssemblySession<'_>,
    budget: &GenerationBudget,
    ledger: Option<&UsageLedger>,
    warnings: &mut Vec<String>,
) -> Result<AvatarLook, AssemblyError> {
    for iter in 1..=budget.max_refine_iters {
        let request = VerifyRequest {
            prompt: session.prompt.to_string(),
            context: session.context.clone(),
            look: look.descriptor(pools),
        };
        let report = judge.verify(&request)?;
        report.validate()?;
        look.verifications += 1;
        let passed = report.verdict == Verdict::Pass;
        let edits = report.edits.clone();
        look.final_report = Some(report);
        if passed {
            look.status = LookStatus::Verified;
            return Ok(look);
        }
        if iter == budget.max_refine_iters {
            break;
        }
        for edit in &edits {
            if let Err(reason) = apply_edit(&mut look, edit, pools, session.taxonomy, ledger) {
                note(warnings, format!("refine: look {} skipped edit: {reason}", look.look_id));
            }
        }
    }
    look.status = LookStatus::Draft;
    Ok(look)
}

/// Builds `n_candidates` refined looks. Candidate `i` starts from the
/// judge's outfit with bundle `i mod rotation`; capped assets are replaced
/// by the next unblocked candidate in pool order.
pub fn generate_candidates(
    pools: &FilteredPools,
    bundles: &[String],
    session: &AssemblySession<'_>,
    judge: &dyn JudgeClient,
    budget: &GenerationBudget,
    warnings: &mut Vec<String>,
) -> Result<(Vec<AvatarLook>, UsageLedger), AssemblyError> {
    budget.validate()?;
    if bundles.is_empty() {
        return Err(AssemblyError::NoBundles);
    }
    let taxonomy = session.taxonomy;
    let bundle_cat = taxonomy.bundle_category();
    let base = assemble_initial(pools, session, judge, 0, warnings)?;
    let rotation = budget.bundle_rotation.min(bundles.len());
    let mut ledger = UsageLedger::new(budget);
    let mut looks = Vec::with_capacity(budget.n_candidates);

    for i in 0..budget.n_candidates {
        let mut look = AvatarLook::new(i as u32);
        let start = i % rotation;
        let bundle = (0..bundles.len())
            .map(|k| &bundles[(start + k) % bundles.len()])
            .find(|b| ledger.bundle_free(b))
            .ok_or_else(|| AssemblyError::BudgetInfeasible(bundle_cat.unwrap_or("bundle").to_string()))?;
        look.body_bundle_id = Some(bundle.clone());
        if let Some(bc) = bundle_cat {
            look.selections.insert(bc.to_string(), bundle.clone());
        }

        for (cat, preferred) in &base.selections {
            if Some(cat.as_str()) == bundle_cat {
                continue;
            }
            let pick = if ledger.asset_free(preferred) {
                Some(preferred.clone())
            } else {
                pools
                    .candidates(cat)
                    .iter()
                    .find(|c| ledger.asset_free(&c.asset_id))
                    .map(|c| c.asset_id.clone())
            };
            match pick {
                Some(id) => {
                    look.selections.insert(cat.clone(), id);
                }
                None if taxonomy.required_core.contains(cat) => {
                    return Err(AssemblyError::BudgetInfeasible(cat.clone()));
                }
                None => note(warnings, format!("generate: look {i} omits '{cat}', usage caps reached")),
            }
        }
        if let Err(e) = look.check(pools, taxonomy) {
            // Only reachable if the bundle list is not drawn from the pool.
            return Err(AssemblyError::InvalidBudget(e));
        }
        let look = refine(look, pools, judge, session, budget, Some(&ledger), warnings)?;
        ledger.commit(&look);
        looks.push(look);
    }
    Ok((looks, ledger))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentResult {
    pub winner: AvatarLook,
    /// Look ids entering each round.
    pub rounds: Vec<Vec<u32>>,
    pub compare_calls: usize,
}

/// Batches looks greedily in insertion order; each batch's judged winner
/// advances. A lone look advances without a judge call.
pub fn tournament(
    looks: Vec<AvatarLook>,
    pools: &FilteredPools,
    judge: &dyn JudgeClient,
    session: &AssemblySession<'_>,
    batch_size: usize,
    warnings: &mut Vec<String>,
) -> Result<TournamentResult, AssemblyError> {
    if looks.is_empty() {
        return Err(AssemblyError::NoLooks);
    }
    if batch_size < 2 {
        return Err(AssemblyError::InvalidBudget("batch_size must be >= 2".into()));
    }
    let mut round = looks;
    let mut rounds = Vec::new();
    let mut compare_calls = 0;
    while round.len() > 1 {
        rounds.push(round.iter().map(|l| l.look_id).collect());
        let mut next = Vec::with_capacity(round.len().div_ceil(batch_size));
        for batch in round.chunks(batch_size) {
            if batch.len() == 1 {
                next.push(batch[0].clone());
                continue;
            }
            let request = CompareRequest {
                prompt: session.prompt.to_string(),
                looks: batch.iter().map(|l| l.descriptor(pools)).collect(),
            };
            compare_calls += 1;
            let mut w = judge.compare_batch(&request)?.winner;
            if w >= batch.len() {
                note(warnings, format!("tournament: winner index {w} out of range, taking first"));
                w = 0;
            }
            next.push(batch[w].clone());
        }
        round = next;
    }
    Ok(TournamentResult {
        winner: round.pop().expect("one survivor"),
        rounds,
        compare_calls,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssemblyOutcome {
    pub filtered: FilteredPools,
    pub candidates: Vec<AvatarLook>,
    pub ledger: UsageLedger,
    pub tournament: TournamentResult,
    pub warnings: Vec<String>,
}

/// Filter → generate (each candidate refined) → tournament. Bundles are
/// the bundle category's filtered pool, in pool order.
pub fn run_assembly(
    pools: &BTreeMap<String, CandidatePool>,
    session: &AssemblySession<'_>,
    judge: &dyn JudgeClient,
    budget: &GenerationBudget,
    gate_k: usize,
    pass_through: bool,
) -> Result<AssemblyOutcome, AssemblyError> {
    budget.validate()?;
    let filtered = filter_pools(pools, judge, session, gate_k, pass_through)?;
    let mut warnings = filtered.warnings.clone();
    let bundles: Vec<String> = match session.taxonomy.bundle_category() {
        Some(bc) => filtered.candidates(bc).iter().map(|c| c.asset_id.clone()).collect(),
        None => vec!["default".to_string()],
    };
    if bundles.is_empty() {
        let bc = session.taxonomy.bundle_category().unwrap_or_default().to_string();
        return Err(if session.taxonomy.required_core.contains(&bc) {
            AssemblyError::MissingCoreCategory(bc)
        } else {
            AssemblyError::NoBundles
        });
    }
    let (candidates, ledger) =
        generate_candidates(&filtered, &bundles, session, judge, budget, &mut warnings)?;
    let tournament = tournament(
        candidates.clone(),
        &filtered,
        judge,
        session,
        budget.batch_size,
        &mut warnings,
    )?;
    Ok(AssemblyOutcome {
        filtered,
        candidates,
        ledger,
        tournament,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::Source;

    fn taxonomy() -> Taxonomy {
        crate::catalog::taxonomy::tests::fixture()
    }

    fn pool(cat: &str, n: usize) -> CandidatePool {
        CandidatePool {
            category_id: cat.into(),
            candidates: (0..n)
                .map(|i| Candidate {
                    asset_id: format!("{cat}{i}"),
                    score: 1.0 - i as f64 * 0.01,
                    source: Source::Both,
                })
                .collect(),
            warnings: vec![],
        }
    }

    fn pools(spec: &[(&str, usize)]) -> BTreeMap<String, CandidatePool> {
        spec.iter().map(|(c, n)| (c.to_string(), pool(c, *n))).collect()
    }

    fn session(tax: &Taxonomy) -> AssemblySession<'_> {
        AssemblySession {
            prompt: "a knight in a zip-up hoodie",
            context: ConceptContext::default(),
            taxonomy: tax,
        }
    }

    fn filtered(spec: &[(&str, usize)]) -> FilteredPools {
        FilteredPools {
            pools: pools(spec),
            ..Default::default()
        }
    }

    fn select(picks: &[(&str, &str)]) -> SelectResponse {
        SelectResponse {
            selections: picks.iter().map(|(c, a)| (c.to_string(), a.to_string())).collect(),
        }
    }

    #[test]
    fn filter_keeps_all_then_gates() {
        let tax = taxonomy();
        let judge = ScriptedJudge::with_policy(ScriptPolicy::default());
        let f = filter_pools(&pools(&[("body", 40)]), &judge, &session(&tax), 20, false).unwrap();
        assert_eq!(f.candidates("body").len(), 20);
        assert_eq!(f.candidates("body")[19].asset_id, "body19");
    }

    #[test]
    fn filter_empty_and_foreign() {
        let tax = taxonomy();
        let judge = ScriptedJudge::new(JudgeScript {
            filter_grid: vec![
                FilterResponse {
                    kept: vec!["body3".into(), "zzz".into(), "body1".into()],
                },
                FilterResponse::default(),
            ],
            ..Default::default()
        });
        let f = filter_pools(&pools(&[("body", 5), ("halo", 5)]), &judge, &session(&tax), 20, false)
            .unwrap();
        let kept: Vec<&str> = f.candidates("body").iter().map(|c| c.asset_id.as_str()).collect();
        assert_eq!(kept, vec!["body1", "body3"]);
        assert!(f.candidates("halo").is_empty());
        assert!(f.at_risk.contains("halo"));
        assert_eq!(f.warnings.len(), 1);
    }

    struct Down;
    impl JudgeClient for Down {
        fn filter_grid(&self, _: &FilterRequest) -> Result<FilterResponse, JudgeError> {
            Err(JudgeError::Unavailable("down".into()))
        }
        fn select_outfit(&self, _: &SelectRequest) -> Result<SelectResponse, JudgeError> {
            Err(JudgeError::Unavailable("down".into()))
        }
        fn verify(&self, _: &VerifyRequest) -> Result<VerificationReport, JudgeError> {
            Err(JudgeError::Unavailable("down".into()))
        }
        fn compare_batch(&self, _: &CompareRequest) -> Result<CompareResponse, JudgeError> {
            Err(JudgeError::Unavailable("down".into()))
        }
    }

    #[test]
    fn unavailable_judge_is_fatal_unless_pass_through() {
        let tax = taxonomy();
        let p = pools(&[("body", 30)]);
        let err = filter_pools(&p, &Down, &session(&tax), 20, false).unwrap_err();
        assert_eq!(err.code(), "JudgeUnavailable");
        let f = filter_pools(&p, &Down, &session(&tax), 20, true).unwrap();
        assert_eq!(f.candidates("body").len(), 20);
    }

    #[test]
    fn initial_top1_everywhere() {
        let tax = taxonomy();
        let judge = ScriptedJudge::with_policy(ScriptPolicy::default());
        let f = filtered(&[("body", 3), ("jacket", 3), ("pants", 3)]);
        let look = assemble_initial(&f, &session(&tax), &judge, 0, &mut vec![]).unwrap();
        assert_eq!(look.selections["body"], "body0");
        assert_eq!(look.selections["jacket"], "jacket0");
        assert_eq!(look.selections["pants"], "pants0");
        assert_eq!(look.body_bundle_id.as_deref(), Some("body0"));
        assert_eq!(look.status, LookStatus::Draft);
    }

    #[test]
    fn initial_drops_excluded_second_pick() {
        let tax = taxonomy();
        let judge = ScriptedJudge::new(JudgeScript {
            select_outfit: vec![select(&[("body", "body1"), ("jacket", "jacket0"), ("sweater", "sweater0")])],
            ..Default::default()
        });
        let f = filtered(&[("body", 3), ("jacket", 3), ("sweater", 3)]);
        let mut w = vec![];
        let look = assemble_initial(&f, &session(&tax), &judge, 0, &mut w).unwrap();
        assert_eq!(look.selections.len(), 2);
        assert_eq!(look.selections["jacket"], "jacket0");
        assert_eq!(look.selections["body"], "body1");
        assert_eq!(w.len(), 1);
        assert!(look.check(&f, &tax).is_ok());
    }

    #[test]
    fn initial_repairs_off_pool_picks() {
        let tax = taxonomy();
        let judge = ScriptedJudge::new(JudgeScript {
            select_outfit: vec![select(&[("body", "nope"), ("pants", "pants9"), ("halo", "halo0")])],
            ..Default::default()
        });
        let f = filtered(&[("body", 3), ("pants", 3)]);
        let look = assemble_initial(&f, &session(&tax), &judge, 0, &mut vec![]).unwrap();
        assert_eq!(look.selections["body"], "body0");
        assert_eq!(look.selections["pants"], "pants0");
        assert!(!look.selections.contains_key("halo"));
    }

    #[test]
    fn initial_requires_core() {
        let tax = taxonomy();
        let judge = ScriptedJudge::with_policy(ScriptPolicy::default());
        let f = filtered(&[("body", 0), ("pants", 3)]);
        let err = assemble_initial(&f, &session(&tax), &judge, 0, &mut vec![]).unwrap_err();
        assert!(matches!(err, AssemblyError::MissingCoreCategory(c) if c == "body"));
    }

    fn base_look(f: &FilteredPools, tax: &Taxonomy) -> AvatarLook {
        let judge = ScriptedJudge::with_policy(ScriptPolicy::default());
        assemble_initial(f, &session(tax), &judge, 0, &mut vec![]).unwrap()
    }

    #[test]
    fn refine_passes_immediately() {
        let tax = taxonomy();
        let f = filtered(&[("body", 3), ("halo", 3)]);
        let judge = ScriptedJudge::new(JudgeScript {
            select_outfit: vec![select(&[("body", "body0")])],
            ..Default::default()
        });
        let look = assemble_initial(&f, &session(&tax), &judge, 0, &mut vec![]).unwrap();
        let out = refine(look, &f, &judge, &session(&tax), &GenerationBudget::default(), None, &mut vec![])
            .unwrap();
        assert_eq!(out.status, LookStatus::Verified);
        assert_eq!(out.verifications, 1);
        assert!(out.history.is_empty());
    }

    #[test]
    fn refine_add_then_pass() {
        let tax = taxonomy();
        let f = filtered(&[("body", 3), ("halo", 3)]);
        let mut look = base_look(&f, &tax);
        look.selections.remove("halo");
        let judge = ScriptedJudge::new(JudgeScript {
            verify: vec![VerificationReport::fail(vec![Edit::add("halo", "halo1")])],
            ..Default::default()
        });
        let out = refine(look, &f, &judge, &session(&tax), &GenerationBudget::default(), None, &mut vec![])
            .unwrap();
        assert_eq!(out.status, LookStatus::Verified);
        assert_eq!(out.history, vec![Edit::add("halo", "halo1")]);
        assert_eq!(out.verifications, 2);
    }

    #[test]
    fn refine_always_failing_stops_at_budget() {
        let tax = taxonomy();
        let f = filtered(&[("body", 3), ("pants", 5)]);
        let look = base_look(&f, &tax);
        let judge = ScriptedJudge::new(JudgeScript {
            verify: (1..=5)
                .map(|i| VerificationReport::fail(vec![Edit::substitute("pants", &format!("pants{i}"))]))
                .collect(),
            ..Default::default()
        });
        let out = refine(look, &f, &judge, &session(&tax), &GenerationBudget::default(), None, &mut vec![])
            .unwrap();
        assert_eq!(out.status, LookStatus::Draft);
        assert_eq!(judge.calls(JudgeOp::Verify), 3);
        // Edits from the third verification are not applied.
        assert_eq!(out.history.len(), 2);
        assert_eq!(out.selections["pants"], "pants2");
        assert!(out.final_report.is_some());
    }

    #[test]
    fn invalid_edits_are_skipped() {
        let tax = taxonomy();
        let f = filtered(&[("body", 3), ("jacket", 2), ("sweater", 2), ("pants", 2)]);
        let mut look = base_look(&f, &tax);
        look.selections.remove("sweater");
        let edits = vec![
            Edit::add("sweater", "sweater0"),
            Edit::add("pants", "pants1"),
            Edit::substitute("halo", "halo0"),
            Edit::remove("body"),
            Edit::substitute("pants", "ghost"),
            Edit::remove("pants"),
        ];
        let mut applied = 0;
        for e in &edits {
            if apply_edit(&mut look, e, &f, &tax, None).is_ok() {
                applied += 1;
            }
            assert!(look.check(&f, &tax).is_ok());
        }
        assert_eq!(applied, 1);
        assert_eq!(look.history, vec![Edit::remove("pants")]);
    }

    #[test]
    fn fail_verdict_needs_reason() {
        let tax = taxonomy();
        let f = filtered(&[("body", 3)]);
        let judge = ScriptedJudge::new(JudgeScript {
            verify: vec![VerificationReport::fail(vec![])],
            ..Default::default()
        });
        let err = refine(base_look(&f, &tax), &f, &judge, &session(&tax), &GenerationBudget::default(), None, &mut vec![])
            .unwrap_err();
        assert_eq!(err.code(), "InvalidResponse");
    }

    #[test]
    fn bundle_rotation_sequence() {
        let tax = taxonomy();
        let f = filtered(&[("body", 5), ("pants", 10)]);
        let judge = ScriptedJudge::with_policy(ScriptPolicy::default());
        let bundles: Vec<String> = f.candidates("body").iter().map(|c| c.asset_id.clone()).collect();
        let (looks, ledger) =
            generate_candidates(&f, &bundles, &session(&tax), &judge, &GenerationBudget::default(), &mut vec![])
                .unwrap();
        let seq: Vec<&str> = looks.iter().map(|l| l.body_bundle_id.as_deref().unwrap()).collect();
        assert_eq!(seq, vec!["body0", "body1", "body2", "body0", "body1", "body2"]);
        let pants: Vec<&str> = looks.iter().map(|l| l.selections["pants"].as_str()).collect();
        assert_eq!(pants, vec!["pants0", "pants0", "pants1", "pants1", "pants2", "pants2"]);
        assert!(ledger.within_caps());
    }

    #[test]
    fn caps_make_core_infeasible_or_omit_optional() {
        let tax = taxonomy();
        let budget = GenerationBudget {
            n_candidates: 2,
            per_asset_cap: 1,
            per_bundle_cap: 1,
            ..Default::default()
        };
        let judge = ScriptedJudge::with_policy(ScriptPolicy::default());
        let f = filtered(&[("body", 1), ("pants", 3)]);
        let err = generate_candidates(&f, &["body0".to_string()], &session(&tax), &judge, &budget, &mut vec![])
            .unwrap_err();
        assert!(matches!(err, AssemblyError::BudgetInfeasible(_)));

        let f = filtered(&[("body", 2), ("halo", 1)]);
        let bundles = vec!["body0".to_string(), "body1".to_string()];
        let (looks, _) =
            generate_candidates(&f, &bundles, &session(&tax), &judge, &budget, &mut vec![]).unwrap();
        assert!(looks[0].selections.contains_key("halo"));
        assert!(!looks[1].selections.contains_key("halo"));
    }

    fn looks(n: u32) -> Vec<AvatarLook> {
        (0..n).map(AvatarLook::new).collect()
    }

    #[test]
    fn tournament_bracket() {
        let tax = taxonomy();
        let f = filtered(&[]);
        let judge = ScriptedJudge::with_policy(ScriptPolicy {
            compare_batch: judge::ComparePolicy::MaxLookId,
            ..Default::default()
        });
        let r = tournament(looks(8), &f, &judge, &session(&tax), 4, &mut vec![]).unwrap();
        assert_eq!(r.compare_calls, 3);
        assert_eq!(judge.calls(JudgeOp::CompareBatch), 3);
        assert_eq!(r.winner.look_id, 7);
        assert_eq!(r.rounds, vec![(0..8).collect::<Vec<_>>(), vec![3, 7]]);

        let judge = ScriptedJudge::with_policy(ScriptPolicy::default());
        let r = tournament(looks(1), &f, &judge, &session(&tax), 4, &mut vec![]).unwrap();
        assert_eq!(r.winner.look_id, 0);
        assert_eq!(judge.calls(JudgeOp::CompareBatch), 0);
    }

    #[test]
    fn tournament_bad_winner_index() {
        let tax = taxonomy();
        let judge = ScriptedJudge::new(JudgeScript {
            compare_batch: vec![CompareResponse { winner: 99 }],
            ..Default::default()
        });
        let mut w = vec![];
        let r = tournament(looks(3), &filtered(&[]), &judge, &session(&tax), 4, &mut w).unwrap();
        assert_eq!(r.winner.look_id, 0);
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn tournament_call_bound() {
        let tax = taxonomy();
        let f = filtered(&[]);
        for n in 1..40u32 {
            for b in 2..6usize {
                let judge = ScriptedJudge::with_policy(ScriptPolicy::default());
                let r = tournament(looks(n), &f, &judge, &session(&tax), b, &mut vec![]).unwrap();
                let bound = (n as usize).div_ceil(b - 1) + n as usize;
                assert!(r.compare_calls <= bound);
            }
        }
    }

    #[test]
    fn full_run_is_deterministic() {
        let tax = taxonomy();
        let p = pools(&[("body", 40), ("jacket", 40), ("pants", 40)]);
        let run = || {
            let judge = ScriptedJudge::with_policy(ScriptPolicy::default());
            serde_json::to_string(
                &run_assembly(&p, &session(&tax), &judge, &GenerationBudget::default(), 20, false).unwrap(),
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }
}
