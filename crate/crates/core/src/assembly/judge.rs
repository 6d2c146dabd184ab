//! Judge interface and the scripted mock.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::View;
use crate::retrieval::Candidate;
use crate::router::Concept;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JudgeError {
    #[error("judge unavailable: {0}")]
    Unavailable(String),
    #[error("invalid judge response: {0}")]
    InvalidResponse(String),
    #[error("judge script error: {0}")]
    Script(String),
}

impl JudgeError {
    pub fn code(&self) -> &'static str {
        match self {
            JudgeError::Unavailable(_) => "JudgeUnavailable",
            JudgeError::InvalidResponse(_) => "InvalidResponse",
            JudgeError::Script(_) => "JudgeScript",
        }
    }
}

/// What the judge sees of the prompt beyond its text.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConceptContext {
    pub concepts: Vec<Concept>,
    pub views: Vec<View>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookItem {
    pub category_id: String,
    pub asset_id: String,
    pub score: f64,
}

/// Structured stand-in for a rendering of a look.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookDescriptor {
    pub look_id: u32,
    pub body_bundle_id: Option<String>,
    pub items: Vec<LookItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRequest {
    pub prompt: String,
    pub category_id: String,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterResponse {
    pub kept: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectRequest {
    pub prompt: String,
    pub context: ConceptContext,
    pub pools: BTreeMap<String, Vec<Candidate>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectResponse {
    pub selections: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRequest {
    pub prompt: String,
    pub context: ConceptContext,
    pub look: LookDescriptor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    MissingCategory,
    IllFitting,
    Clipping,
    OffPrompt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub kind: IssueKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditAction {
    Add,
    Remove,
    Substitute,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub action: EditAction,
    pub category_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset_id: Option<String>,
}

impl Edit {
    pub fn add(category_id: &str, asset_id: &str) -> Self {
        Self {
            action: EditAction::Add,
            category_id: category_id.into(),
            asset_id: Some(asset_id.into()),
        }
    }

    pub fn remove(category_id: &str) -> Self {
        Self {
            action: EditAction::Remove,
            category_id: category_id.into(),
            asset_id: None,
        }
    }

    pub fn substitute(category_id: &str, asset_id: &str) -> Self {
        Self {
            action: EditAction::Substitute,
            category_id: category_id.into(),
            asset_id: Some(asset_id.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub verdict: Verdict,
    #[serde(default)]
    pub issues: Vec<Issue>,
    #[serde(default)]
    pub edits: Vec<Edit>,
}

impl VerificationReport {
    pub fn pass() -> Self {
        Self {
            verdict: Verdict::Pass,
            issues: Vec::new(),
            edits: Vec::new(),
        }
    }

    pub fn fail(edits: Vec<Edit>) -> Self {
        Self {
            verdict: Verdict::Fail,
            issues: Vec::new(),
            edits,
        }
    }

    /// A failing verdict must explain itself.
    pub fn validate(&self) -> Result<(), JudgeError> {
        if self.verdict == Verdict::Fail && self.issues.is_empty() && self.edits.is_empty() {
            return Err(JudgeError::InvalidResponse(
                "fail verdict without issues or edits".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRequest {
    pub prompt: String,
    pub looks: Vec<LookDescriptor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompareResponse {
    pub winner: usize,
}

pub trait JudgeClient: Send + Sync {
    fn filter_grid(&self, request: &FilterRequest) -> Result<FilterResponse, JudgeError>;
    fn select_outfit(&self, request: &SelectRequest) -> Result<SelectResponse, JudgeError>;
    fn verify(&self, request: &VerifyRequest) -> Result<VerificationReport, JudgeError>;
    fn compare_batch(&self, request: &CompareRequest) -> Result<CompareResponse, JudgeError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeOp {
    FilterGrid,
    SelectOutfit,
    Verify,
    CompareBatch,
}

/// Answers used once an operation's scripted responses run out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptPolicy {
    pub filter_grid: FilterPolicy,
    pub select_outfit: SelectPolicy,
    pub verify: VerifyPolicy,
    pub compare_batch: ComparePolicy,
}

impl Default for ScriptPolicy {
    fn default() -> Self {
        Self {
            filter_grid: FilterPolicy::KeepAll,
            select_outfit: SelectPolicy::Top1,
            verify: VerifyPolicy::Pass,
            compare_batch: ComparePolicy::First,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterPolicy {
    KeepAll,
    KeepNone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectPolicy {
    Top1,
    Nothing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyPolicy {
    Pass,
    /// Fail with an `off_prompt` issue and no edits.
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparePolicy {
    First,
    MaxLookId,
}

/// Script file: canned responses per operation, consumed in call order,
/// then the policy answers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JudgeScript {
    pub filter_grid: Vec<FilterResponse>,
    pub select_outfit: Vec<SelectResponse>,
    pub verify: Vec<VerificationReport>,
    pub compare_batch: Vec<CompareResponse>,
    pub policy: ScriptPolicy,
}

impl JudgeScript {
    pub fn load(path: &Path) -> Result<Self, JudgeError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| JudgeError::Script(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| JudgeError::Script(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Default)]
struct ScriptState {
    filter_grid: VecDeque<FilterResponse>,
    select_outfit: VecDeque<SelectResponse>,
    verify: VecDeque<VerificationReport>,
    compare_batch: VecDeque<CompareResponse>,
    calls: BTreeMap<JudgeOp, usize>,
}

/// Deterministic judge replaying a [`JudgeScript`].
#[derive(Debug)]
pub struct ScriptedJudge {
    policy: ScriptPolicy,
    state: Mutex<ScriptState>,
}

impl ScriptedJudge {
    pub fn new(script: JudgeScript) -> Self {
        Self {
            policy: script.policy,
            state: Mutex::new(ScriptState {
                filter_grid: script.filter_grid.into(),
                select_outfit: script.select_outfit.into(),
                verify: script.verify.into(),
                compare_batch: script.compare_batch.into(),
                calls: BTreeMap::new(),
            }),
        }
    }

    pub fn with_policy(policy: ScriptPolicy) -> Self {
        Self::new(JudgeScript {
            policy,
            ..Default::default()
        })
    }

    pub fn load(path: &Path) -> Result<Self, JudgeError> {
        Ok(Self::new(JudgeScript::load(path)?))
    }

    pub fn calls(&self, op: JudgeOp) -> usize {
        self.state.lock().expect("judge state").calls.get(&op).copied().unwrap_or(0)
    }

    fn next<T>(&self, op: JudgeOp, take: impl FnOnce(&mut ScriptState) -> Option<T>) -> Option<T> {
        let mut state = self.state.lock().expect("judge state");
        *state.calls.entry(op).or_default() += 1;
        take(&mut state)
    }
}

impl JudgeClient for ScriptedJudge {
    fn filter_grid(&self, request: &FilterRequest) -> Result<FilterResponse, JudgeError> {
        Ok(self
            .next(JudgeOp::FilterGrid, |s| s.filter_grid.pop_front())
            .unwrap_or_else(|| match self.policy.filter_grid {
                FilterPolicy::KeepAll => FilterResponse {
                    kept: request.candidates.iter().map(|c| c.asset_id.clone()).collect(),
                },
                FilterPolicy::KeepNone => FilterResponse::default(),
            }))
    }

    fn select_outfit(&self, request: &SelectRequest) -> Result<SelectResponse, JudgeError> {
        Ok(self
            .next(JudgeOp::SelectOutfit, |s| s.select_outfit.pop_front())
            .unwrap_or_else(|| match self.policy.select_outfit {
                SelectPolicy::Top1 => SelectResponse {
                    selections: request
                        .pools
                        .iter()
                        .filter_map(|(cat, pool)| Some((cat.clone(), pool.first()?.asset_id.clone())))
                        .collect(),
                },
                SelectPolicy::Nothing => SelectResponse::default(),
            }))
    }

    fn verify(&self, _request: &VerifyRequest) -> Result<VerificationReport, JudgeError> {
        Ok(self
            .next(JudgeOp::Verify, |s| s.verify.pop_front())
            .unwrap_or_else(|| match self.policy.verify {
                VerifyPolicy::Pass => VerificationReport::pass(),
                VerifyPolicy::Fail => VerificationReport {
                    verdict: Verdict::Fail,
                    issues: vec![Issue {
                        kind: IssueKind::OffPrompt,
                        category_id: None,
                    }],
                    edits: Vec::new(),
                },
            }))
    }

    fn compare_batch(&self, request: &CompareRequest) -> Result<CompareResponse, JudgeError> {
        Ok(self
            .next(JudgeOp::CompareBatch, |s| s.compare_batch.pop_front())
            .unwrap_or_else(|| match self.policy.compare_batch {
                ComparePolicy::First => CompareResponse { winner: 0 },
                ComparePolicy::MaxLookId => CompareResponse {
                    winner: request
                        .looks
                        .iter()
                        .enumerate()
                        .max_by_key(|(_, l)| l.look_id)
                        .map(|(i, _)| i)
                        .unwrap_or(0),
                },
            }))
    }
}
