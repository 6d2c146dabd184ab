//! Run configuration: TOML file, flag and environment overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use avatar_core::assembly::GenerationBudget;
use avatar_core::eval::Ablation;
use avatar_core::retrieval::RetrievalConfig;
use avatar_core::vecmath::SubspaceOptions;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Stage};

pub const JUDGE_URL_ENV: &str = "AVATAR_JUDGE_URL";
pub const JUDGE_TIMEOUT_ENV: &str = "AVATAR_JUDGE_TIMEOUT_MS";

/// Where the judge answers come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JudgeMode {
    /// Built-in policy answers, no script file.
    Policy,
    Scripted(PathBuf),
    Http(String),
}

/// Accepts `scripted`, `scripted:<path>`, `http:<url>` or a bare
/// `http://` URL.
fn parse_mode(s: &str) -> Result<JudgeMode, String> {
    if s == "scripted" || s == "policy" {
        return Ok(JudgeMode::Policy);
    }
    if let Some(path) = s.strip_prefix("scripted:") {
        return Ok(JudgeMode::Scripted(PathBuf::from(path)));
    }
    if s.starts_with("http://") || s.starts_with("https://") {
        return Ok(JudgeMode::Http(s.to_string()));
    }
    if let Some(rest) = s.strip_prefix("http:") {
        let url = if rest.starts_with("http://") || rest.starts_with("https://") {
            rest.to_string()
        } else {
            format!("http://{}", rest.trim_start_matches('/'))
        };
        return Ok(JudgeMode::Http(url));
    }
    Err(format!("expected scripted:<path> or http:<url>, got '{s}'"))
}

impl FromStr for JudgeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_mode(s)
    }
}

impl fmt::Display for JudgeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JudgeMode::Policy => f.write_str("scripted"),
            JudgeMode::Scripted(p) => write!(f, "scripted:{}", p.display()),
            JudgeMode::Http(u) => write!(f, "http:{u}"),
        }
    }
}

impl Serialize for JudgeMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for JudgeMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdvisorMode {
    None,
    Scripted(PathBuf),
    Http(String),
}

impl FromStr for AdvisorMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "none" {
            return Ok(AdvisorMode::None);
        }
        match parse_mode(s)? {
            JudgeMode::Policy => Ok(AdvisorMode::None),
            JudgeMode::Scripted(p) => Ok(AdvisorMode::Scripted(p)),
            JudgeMode::Http(u) => Ok(AdvisorMode::Http(u)),
        }
    }
}

impl fmt::Display for AdvisorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdvisorMode::None => f.write_str("none"),
            AdvisorMode::Scripted(p) => write!(f, "scripted:{}", p.display()),
            AdvisorMode::Http(u) => write!(f, "http:{u}"),
        }
    }
}

impl Serialize for AdvisorMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AdvisorMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub catalog: PathBuf,
    pub taxonomy: PathBuf,
    pub evidence: PathBuf,
    pub index_dir: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            catalog: "catalog.jsonl".into(),
            taxonomy: "taxonomy.json".into(),
            evidence: "evidence.json".into(),
            index_dir: "index".into(),
            output_dir: "out".into(),
        }
    }
}

impl Paths {
    fn rebase(&mut self, base: &Path) {
        for p in [
            &mut self.catalog,
            &mut self.taxonomy,
            &mut self.evidence,
            &mut self.index_dir,
            &mut self.output_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub cases: usize,
    pub lambda: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            cases: 100,
            lambda: avatar_core::synth::DEFAULT_LAMBDA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub retrieval: RetrievalConfig,
    pub budget: GenerationBudget,
    pub subspace: SubspaceOptions,
    pub judge: JudgeMode,
    pub judge_timeout_ms: u64,
    /// Keep pools unfiltered when the judge is unreachable.
    pub pass_through: bool,
    pub advisor: AdvisorMode,
    pub ablation: Ablation,
    pub eval: EvalSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            paths: Paths::default(),
            retrieval: RetrievalConfig::default(),
            budget: GenerationBudget::default(),
            subspace: SubspaceOptions::default(),
            judge: JudgeMode::Policy,
            judge_timeout_ms: avatar_core::transport::DEFAULT_TIMEOUT_MS,
            pass_through: false,
            advisor: AdvisorMode::None,
            ablation: Ablation::None,
            eval: EvalSettings::default(),
        }
    }
}

/// Command-line overrides; `None` keeps the file or default value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub ablation: Option<Ablation>,
    pub judge: Option<JudgeMode>,
    pub advisor: Option<AdvisorMode>,
    pub output_dir: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub evidence: Option<PathBuf>,
    pub index_dir: Option<PathBuf>,
}

/// Subset of the config that determines results; paths are excluded so
/// runs in different directories hash alike.
#[derive(Serialize)]
struct Effective<'a> {
    seed: u64,
    retrieval: &'a RetrievalConfig,
    budget: &'a GenerationBudget,
    subspace: &'a SubspaceOptions,
    ablation: Ablation,
    pass_through: bool,
}

impl RunConfig {
    /// Reads a TOML file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            let code = if e.kind() == std::io::ErrorKind::NotFound { "FileNotFound" } else { "Io" };
            CliError::new(Stage::Config, code, format!("{}: {e}", path.display()))
        })?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::new(Stage::Config, "InvalidConfig", format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.paths.rebase(base);
        for mode in [&mut cfg.judge] {
            if let JudgeMode::Scripted(p) = mode {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        if let AdvisorMode::Scripted(p) = &mut cfg.advisor {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Precedence: flags, then environment, then file.
    pub fn apply(&mut self, o: Overrides) {
        if let Ok(url) = std::env::var(JUDGE_URL_ENV) {
            if !url.is_empty() {
                self.judge = JudgeMode::Http(url);
            }
        }
        if let Some(ms) = std::env::var(JUDGE_TIMEOUT_ENV).ok().and_then(|v| v.parse().ok()) {
            self.judge_timeout_ms = ms;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.ablation {
            self.ablation = v;
        }
        if let Some(v) = o.judge {
            self.judge = v;
        }
        if let Some(v) = o.advisor {
            self.advisor = v;
        }
        if let Some(v) = o.output_dir {
            self.paths.output_dir = v;
        }
        if let Some(v) = o.catalog {
            self.paths.catalog = v;
        }
        if let Some(v) = o.taxonomy {
            self.paths.taxonomy = v;
        }
        if let Some(v) = o.evidence {
            self.paths.evidence = v;
        }
        if let Some(v) = o.index_dir {
            self.paths.index_dir = v;
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let invalid = |m: String| CliError::new(Stage::Config, "InvalidConfig", m);
        self.retrieval.validate().map_err(|e| invalid(e.to_string()))?;
        self.budget.validate().map_err(|e| invalid(e.to_string()))?;
        self.subspace.rank_policy.validate().map_err(|e| invalid(e.to_string()))?;
        if self.judge_timeout_ms == 0 {
            return Err(invalid("judge_timeout_ms must be >= 1".into()));
        }
        Ok(())
    }

    pub fn judge_timeout(&self) -> Duration {
        Duration::from_millis(self.judge_timeout_ms)
    }

    /// Retrieval settings after the ablation is applied.
    pub fn effective_retrieval(&self) -> RetrievalConfig {
        self.ablation.apply(&self.retrieval)
    }

    /// SHA-256 of the result-determining settings, hex encoded.
    pub fn hash(&self) -> String {
        let eff = Effective {
            seed: self.seed,
            retrieval: &self.retrieval,
            budget: &self.budget,
            subspace: &self.subspace,
            ablation: self.ablation,
            pass_through: self.pass_through,
        };
        let bytes = serde_json::to_vec(&eff).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
