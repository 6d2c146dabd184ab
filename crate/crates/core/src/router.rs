//! Prompt-conditioned taxonomy routing.
//!
//! A deterministic rule engine turns the prompt's concept decomposition into
//! a target category set and one text query per category:
//!
//! 1. every concept is matched against the concept map (longest keyword
//!    first) and *all* categories it may denote are kept;
//! 2. required-core categories are added;
//! 3. each exclusion group is reduced to a single member, chosen by how many
//!    of the source concepts' modifiers hit that category's keyword table
//!    (ties go to the smallest category id);
//! 4. queries are built as `"<concept>, <modifiers...>, <category name>"`.
//!
//! An optional [`AdvisorClient`] may then propose extra categories or query
//! rewrites; proposals that break the taxonomy constraints are rejected as a
//! whole and logged.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Taxonomy, Violation};

/// Words of the prompt used as the fallback query for categories that no
/// concept mentions.
pub const FALLBACK_QUERY_WORDS: usize = 12;

#[derive(Debug, Error)]
pub enum RouterError {
    #[error("prompt text is empty")]
    EmptyPrompt,
    #[error("invalid taxonomy: {} violation(s)", .0.len())]
    InvalidTaxonomy(Vec<Violation>),
}

impl RouterError {
    pub fn code(&self) -> &'static str {
        match self {
            RouterError::EmptyPrompt => "EmptyPrompt",
            RouterError::InvalidTaxonomy(_) => "InvalidTaxonomy",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdvisorError {
    #[error("advisor unavailable: {0}")]
    Unavailable(String),
    #[error("advisor response malformed: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub keyword: String,
    #[serde(default)]
    pub modifiers: Vec<String>,
}

impl Concept {
    pub fn new(keyword: &str, modifiers: &[&str]) -> Self {
        Self {
            keyword: keyword.to_string(),
            modifiers: modifiers.iter().map(|m| m.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub prompt_text: String,
    #[serde(default)]
    pub concepts: Vec<Concept>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ConceptExpanded,
    RequiredCore,
    AdvisorAdded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub kept: String,
    pub dropped: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoutingPlan {
    pub target_categories: BTreeSet<String>,
    pub queries: BTreeMap<String, String>,
    pub provenance: BTreeMap<String, Provenance>,
    pub resolved_exclusions: Vec<Resolution>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub advisor_violations: Vec<String>,
}

impl RoutingPlan {
    /// Checks the plan invariants against `taxonomy`; returns the broken ones.
    pub fn check(&self, taxonomy: &Taxonomy) -> Vec<String> {
        let mut out = Vec::new();
        for core in &taxonomy.required_core {
            if !self.target_categories.contains(core) {
                out.push(format!("required_core '{core}' missing"));
            }
        }
        for group in &taxonomy.exclusion_groups {
            let hits: Vec<&String> = group.intersection(&self.target_categories).collect();
            if hits.len() > 1 {
                out.push(format!("exclusive categories {hits:?} both targeted"));
            }
        }
        for cat in &self.target_categories {
            if self.queries.get(cat).is_none_or(|q| q.trim().is_empty()) {
                out.push(format!("category '{cat}' has no query"));
            }
        }
        out
    }
}

/// Result of concept expansion: the categories plus which concepts (by
/// index into `PromptSpec::concepts`) produced each of them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConceptExpansion {
    pub categories: BTreeSet<String>,
    pub sources: BTreeMap<String, Vec<usize>>,
    pub warnings: Vec<String>,
}

/// Keyword table used when the taxonomy does not provide one for a category.
pub fn default_modifier_keywords(category_id: &str) -> &'static [&'static str] {
    match category_id {
        "jacket" => &[
            "zip-up", "zip up", "zipper", "zip", "bomber", "leather", "denim", "windbreaker",
            "parka", "puffer", "blazer", "coat", "varsity",
        ],
        "sweater" => &[
            "knit", "knitted", "pullover", "cable", "wool", "cashmere", "crewneck", "cardigan",
            "fleece", "cozy", "turtleneck",
        ],
        "shirt" => &["button-up", "collared", "flannel", "tee", "t-shirt", "graphic"],
        "pants" => &["cargo", "jeans", "denim", "chinos", "joggers", "trousers"],
        "shorts" => &["bermuda", "board", "athletic"],
        "dress" => &["gown", "sundress", "maxi", "midi"],
        _ => &[],
    }
}

fn keywords_for<'a>(taxonomy: &'a Taxonomy, category_id: &str) -> Vec<&'a str> {
    match taxonomy.modifier_keywords.get(category_id) {
        Some(list) => list.iter().map(String::as_str).collect(),
        None => default_modifier_keywords(category_id).to_vec(),
    }
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric()
}

/// Finds `needle` in `haystack` at word boundaries; returns the byte offset.
fn find_word(haystack: &str, needle: &str) -> Option<usize> {
    if needle.is_empty() {
        return None;
    }
    let h = haystack.as_bytes();
    let mut start = 0;
    while let Some(pos) = haystack[start..].find(needle) {
        let at = start + pos;
        let end = at + needle.len();
        let left_ok = at == 0 || !is_word_byte(h[at - 1]);
        let right_ok = end == h.len() || !is_word_byte(h[end]);
        if left_ok && right_ok {
            return Some(at);
        }
        start = at + haystack[at..].chars().next().map_or(1, char::len_utf8);
    }
    None
}

/// Concept-map keywords found in `text`, longest first; a matched span is
/// consumed so shorter keywords inside it do not fire again.
fn match_keywords<'t>(text: &str, taxonomy: &'t Taxonomy) -> Vec<&'t str> {
    let mut remaining = text.to_lowercase();
    let mut keys: Vec<(&'t str, String)> = taxonomy
        .concept_map
        .keys()
        .map(|k| (k.as_str(), k.trim().to_lowercase()))
        .collect();
    keys.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then_with(|| a.1.cmp(&b.1)));
    let mut out = Vec::new();
    for (key, lower) in keys {
        if let Some(at) = find_word(&remaining, &lower) {
            out.push(key);
            let blank = " ".repeat(lower.len());
            remaining.replace_range(at..at + lower.len(), &blank);
        }
    }
    out
}

pub fn expand_concepts(spec: &PromptSpec, taxonomy: &Taxonomy) -> ConceptExpansion {
    let mut out = ConceptExpansion::default();
    for (i, concept) in spec.concepts.iter().enumerate() {
        let matched = match_keywords(&concept.keyword, taxonomy);
        if matched.is_empty() {
            out.warnings.push(format!(
                "concept '{}' matches no concept_map keyword",
                concept.keyword
            ));
            continue;
        }
        for key in matched {
            for cat in &taxonomy.concept_map[key] {
                out.categories.insert(cat.clone());
                let src = out.sources.entry(cat.clone()).or_default();
                if !src.contains(&i) {
                    src.push(i);
                }
            }
        }
    }
    out
}

/// How many modifiers (and concept phrases) of the category's source
/// concepts hit its keyword table.
fn modifier_support(
    category_id: &str,
    sources: &BTreeMap<String, Vec<usize>>,
    spec: &PromptSpec,
    taxonomy: &Taxonomy,
) -> usize {
    let keywords: Vec<String> = keywords_for(taxonomy, category_id)
        .iter()
        .map(|k| k.to_lowercase())
        .collect();
    let Some(idx) = sources.get(category_id) else {
        return 0;
    };
    let mut support = 0;
    for &i in idx {
        let concept = &spec.concepts[i];
        for text in concept.modifiers.iter().chain(std::iter::once(&concept.keyword)) {
            let lower = text.to_lowercase();
            if keywords.iter().any(|k| find_word(&lower, k).is_some()) {
                support += 1;
            }
        }
    }
    support
}

/// Keeps exactly one member of every exclusion group present in
/// `categories`. Required-core members always win; otherwise the member with
/// the most modifier support, ties to the smallest id.
pub fn resolve_exclusions(
    categories: &BTreeSet<String>,
    sources: &BTreeMap<String, Vec<usize>>,
    spec: &PromptSpec,
    taxonomy: &Taxonomy,
) -> (BTreeSet<String>, Vec<Resolution>) {
    let mut kept = categories.clone();
    let mut resolutions = Vec::new();
    for group in &taxonomy.exclusion_groups {
        let present: Vec<&String> = group.intersection(categories).collect();
        if present.len() < 2 {
            continue;
        }
        let scored: Vec<(&String, bool, usize)> = present
            .iter()
            .map(|c| {
                (
                    *c,
                    taxonomy.required_core.contains(*c),
                    modifier_support(c, sources, spec, taxonomy),
                )
            })
            .collect();
        // `present` is id-ascending, so the first maximum is the tie-break.
        let mut winner = scored[0];
        for s in &scored[1..] {
            if (s.1, s.2) > (winner.1, winner.2) {
                winner = *s;
            }
        }
        let top_support = winner.2;
        let tied = scored.iter().filter(|s| (s.1, s.2) == (winner.1, winner.2)).count() > 1;
        for (cat, _, support) in &scored {
            if *cat == winner.0 {
                continue;
            }
            kept.remove(*cat);
            let reason = if winner.1 {
                "required_core".to_string()
            } else if tied {
                format!("tie at modifier support {top_support}; smallest id kept")
            } else {
                format!("modifier support {top_support} > {support}")
            };
            resolutions.push(Resolution {
                kept: winner.0.clone(),
                dropped: (*cat).clone(),
                reason,
            });
        }
    }
    (kept, resolutions)
}

fn fallback_query(prompt: &str) -> String {
    prompt
        .split_whitespace()
        .take(FALLBACK_QUERY_WORDS)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn build_queries(
    categories: &BTreeSet<String>,
    sources: &BTreeMap<String, Vec<usize>>,
    spec: &PromptSpec,
    taxonomy: &Taxonomy,
) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for cat in categories {
        let first = sources.get(cat).and_then(|v| v.first()).copied();
        let query = match first {
            Some(i) => {
                let concept = &spec.concepts[i];
                let mut parts: Vec<String> = vec![concept.keyword.trim().to_string()];
                parts.extend(
                    concept
                        .modifiers
                        .iter()
                        .map(|m| m.trim())
                        .filter(|m| !m.is_empty())
                        .map(str::to_string),
                );
                parts.push(taxonomy.display_name(cat));
                parts.join(", ")
            }
            None => fallback_query(&spec.prompt_text),
        };
        out.insert(cat.clone(), query);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomySummary {
    pub categories: BTreeSet<String>,
    pub exclusion_groups: Vec<BTreeSet<String>>,
    pub required_core: BTreeSet<String>,
}

impl From<&Taxonomy> for TaxonomySummary {
    fn from(t: &Taxonomy) -> Self {
        Self {
            categories: t.categories.clone(),
            exclusion_groups: t.exclusion_groups.clone(),
            required_core: t.required_core.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvisorRequest {
    pub prompt: String,
    pub taxonomy: TaxonomySummary,
    pub plan: RoutingPlan,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdvisorResponse {
    #[serde(default)]
    pub added_categories: Vec<String>,
    #[serde(default)]
    pub query_rewrites: BTreeMap<String, String>,
}

pub trait AdvisorClient {
    fn advise(&self, request: &AdvisorRequest) -> Result<AdvisorResponse, AdvisorError>;
}

/// Routes a prompt. Without an advisor the result is purely rule-based.
pub fn route(
    spec: &PromptSpec,
    taxonomy: &Taxonomy,
    advisor: Option<&dyn AdvisorClient>,
) -> Result<RoutingPlan, RouterError> {
    if spec.prompt_text.trim().is_empty() {
        return Err(RouterError::EmptyPrompt);
    }
    let violations = taxonomy.validate();
    if !violations.is_empty() {
        return Err(RouterError::InvalidTaxonomy(violations));
    }

    let expansion = expand_concepts(spec, taxonomy);
    let mut provenance: BTreeMap<String, Provenance> = expansion
        .categories
        .iter()
        .map(|c| (c.clone(), Provenance::ConceptExpanded))
        .collect();
    let mut categories = expansion.categories.clone();
    for core in &taxonomy.required_core {
        categories.insert(core.clone());
        provenance.insert(core.clone(), Provenance::RequiredCore);
    }
    let (kept, resolutions) =
        resolve_exclusions(&categories, &expansion.sources, spec, taxonomy);
    provenance.retain(|c, _| kept.contains(c));
    let queries = build_queries(&kept, &expansion.sources, spec, taxonomy);

    let mut plan = RoutingPlan {
        target_categories: kept,
        queries,
        provenance,
        resolved_exclusions: resolutions,
        warnings: expansion.warnings,
        advisor_violations: Vec::new(),
    };

    if let Some(advisor) = advisor {
        let request = AdvisorRequest {
            prompt: spec.prompt_text.clone(),
            taxonomy: taxonomy.into(),
            plan: plan.clone(),
        };
        match advisor.advise(&request) {
            Ok(response) => apply_advice(&mut plan, &response, spec, taxonomy),
            Err(e) => plan
                .warnings
                .push(format!("advisor unavailable, rule-based plan kept: {e}")),
        }
    }
    debug_assert!(plan.check(taxonomy).is_empty(), "{:?}", plan.check(taxonomy));
    Ok(plan)
}

/// Applies an advisor proposal atomically: any violation rejects all of it.
fn apply_advice(
    plan: &mut RoutingPlan,
    response: &AdvisorResponse,
    spec: &PromptSpec,
    taxonomy: &Taxonomy,
) {
    let mut violations = Vec::new();
    let mut proposed = plan.target_categories.clone();
    let mut added = Vec::new();
    for cat in &response.added_categories {
        if !taxonomy.contains(cat) {
            violations.push(format!("advisor added unknown category '{cat}'"));
            continue;
        }
        if let Some(conflict) = proposed
            .iter()
            .find(|c| taxonomy.mutually_exclusive(c, cat))
        {
            violations.push(format!(
                "advisor added '{cat}', exclusive with targeted '{conflict}'"
            ));
            continue;
        }
        if proposed.insert(cat.clone()) {
            added.push(cat.clone());
        }
    }
    for (cat, query) in &response.query_rewrites {
        if !proposed.contains(cat) {
            violations.push(format!("advisor rewrote query of untargeted '{cat}'"));
        } else if query.trim().is_empty() {
            violations.push(format!("advisor rewrote '{cat}' to an empty query"));
        }
    }
    if !violations.is_empty() {
        plan.advisor_violations.extend(violations);
        return;
    }
    let fallback = fallback_query(&spec.prompt_text);
    for cat in added {
        plan.queries.insert(cat.clone(), fallback.clone());
        plan.provenance.insert(cat.clone(), Provenance::AdvisorAdded);
        plan.target_categories.insert(cat);
    }
    for (cat, query) in &response.query_rewrites {
        plan.queries.insert(cat.clone(), query.trim().to_string());
    }
}

/// Single best-guess category per concept, no required core and no
/// exclusion handling. Only used to ablate the router.
pub fn route_naive(spec: &PromptSpec, taxonomy: &Taxonomy) -> RoutingPlan {
    let mut sources: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut warnings = Vec::new();
    for (i, concept) in spec.concepts.iter().enumerate() {
        let guess = match_keywords(&concept.keyword, taxonomy)
            .first()
            .and_then(|k| taxonomy.concept_map[*k].iter().next().cloned());
        match guess {
            Some(cat) => sources.entry(cat).or_default().push(i),
            None => warnings.push(format!("concept '{}' unmatched", concept.keyword)),
        }
    }
    let categories: BTreeSet<String> = sources.keys().cloned().collect();
    let queries = build_queries(&categories, &sources, spec, taxonomy);
    RoutingPlan {
        provenance: categories
            .iter()
            .map(|c| (c.clone(), Provenance::ConceptExpanded))
            .collect(),
        target_categories: categories,
        queries,
        resolved_exclusions: Vec::new(),
        warnings,
        advisor_violations: Vec::new(),
    }
}
