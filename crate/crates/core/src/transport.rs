//! Remote judge and advisor over HTTP JSON, and the file-backed advisor.
//!
//! Each operation is a `POST {base_url}/{operation}` with the request
//! document as the body and the response document as the reply, e.g.
//! `POST /verify` with a [`VerifyRequest`] answered by a
//! [`VerificationReport`]. The advisor uses `POST {base_url}/advise`.

use std::path::Path;
use std::time::Duration;

use log::warn;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::assembly::judge::{
    CompareRequest, CompareResponse, FilterRequest, FilterResponse, JudgeClient, JudgeError,
    SelectRequest, SelectResponse, VerificationReport, VerifyRequest,
};
use crate::router::{AdvisorClient, AdvisorError, AdvisorRequest, AdvisorResponse};

pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

#[derive(Debug, Clone)]
enum CallError {
    Transport(String),
    Decode(String),
}

/// Blocking JSON-over-HTTP client with a per-call timeout and one retry.
#[derive(Debug, Clone)]
pub struct HttpTransport {
    base_url: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            agent,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn once<Req: Serialize, Resp: DeserializeOwned>(&self, url: &str, body: &Req) -> Result<Resp, CallError> {
        let resp = self
            .agent
            .post(url)
            .send_json(body)
            .map_err(|e| CallError::Transport(e.to_string()))?;
        resp.into_body()
            .read_json()
            .map_err(|e| CallError::Decode(e.to_string()))
    }

    fn call<Req: Serialize, Resp: DeserializeOwned>(&self, op: &str, body: &Req) -> Result<Resp, CallError> {
        let url = format!("{}/{op}", self.base_url);
        match self.once(&url, body) {
            Err(CallError::Transport(first)) => {
                warn!("{url}: {first}; retrying once");
                self.once(&url, body)
            }
            other => other,
        }
    }
}

pub struct HttpJudge {
    transport: HttpTransport,
}

impl HttpJudge {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        Self {
            transport: HttpTransport::new(base_url, timeout),
        }
    }

    fn call<Req: Serialize, Resp: DeserializeOwned>(&self, op: &str, body: &Req) -> Result<Resp, JudgeError> {
        self.transport.call(op, body).map_err(|e| match e {
            CallError::Transport(m) => JudgeError::Unavailable(format!("{op}: {m}")),
            CallError::Decode(m) => JudgeError::InvalidResponse(format!("{op}: {m}")),
        })
    }
}

impl JudgeClient for HttpJudge {
    fn filter_grid(&self, request: &FilterRequest) -> Result<FilterResponse, JudgeError> {
        self.call("filter_grid", request)
    }

    fn select_outfit(&self, request: &SelectRequest) -> Result<SelectResponse, JudgeError> {
        self.call("select_outfit", request)
    }

    fn verify(&self, request: &VerifyRequest) -> Result<VerificationReport, JudgeError> {
        self.call("verify", request)
    }

    fn compare_batch(&self, request: &CompareRequest) -> Result<CompareResponse, JudgeError> {
        self.call("compare_batch", request)
    }
}

pub struct HttpAdvisor {
    transport: HttpTransport,
}

impl HttpAdvisor {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        Self {
            transport: HttpTransport::new(base_url, timeout),
        }
    }
}

impl AdvisorClient for HttpAdvisor {
    fn advise(&self, request: &AdvisorRequest) -> Result<AdvisorResponse, AdvisorError> {
        self.transport.call("advise", request).map_err(|e| match e {
            CallError::Transport(m) => AdvisorError::Unavailable(m),
            CallError::Decode(m) => AdvisorError::Malformed(m),
        })
    }
}

/// Advisor answering from a file: an [`AdvisorResponse`] document, or
/// `{"unavailable": true}` to simulate an outage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptedAdvisor {
    #[serde(default)]
    pub unavailable: bool,
    #[serde(flatten)]
    pub response: AdvisorResponse,
}

impl ScriptedAdvisor {
    pub fn load(path: &Path) -> Result<Self, AdvisorError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AdvisorError::Unavailable(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| AdvisorError::Malformed(e.to_string()))
    }
}

impl AdvisorClient for ScriptedAdvisor {
    fn advise(&self, _request: &AdvisorRequest) -> Result<AdvisorResponse, AdvisorError> {
        if self.unavailable {
            return Err(AdvisorError::Unavailable("scripted outage".into()));
        }
        Ok(self.response.clone())
    }
}
