//! Optional LLM-assisted proposal of candidate invariants and attack ideas.
//!
//! Proposals are untrusted text: everything returned passes through the same
//! parser and validation gates as any other rule source. Network access is
//! isolated behind a [`Transport`] so tests and offline runs never touch the
//! wire; a fixture file can stand in for the remote model entirely.

use crate::dsl::{parse_rules_file, DslError, Invariant, Provenance};
use crate::signal::Registry;
use crate::synth::AttackPattern;
use serde_json::json;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Duration;
use thiserror::Error;

pub const ENV_API_URL: &str = "ATTACKLLM_API_URL";
pub const ENV_API_KEY: &str = "ATTACKLLM_API_KEY";
pub const ENV_MODEL: &str = "ATTACKLLM_MODEL";

#[derive(Debug, Clone, PartialEq)]
pub struct ProposerConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout_s: u64,
    /// When set, responses come from this file and no request is sent.
    pub offline_fixture: Option<PathBuf>,
}

impl ProposerConfig {
    pub fn from_env() -> Result<Self, ProposerError> {
        let endpoint = std::env::var(ENV_API_URL)
            .map_err(|_| ProposerError::Config(format!("{ENV_API_URL} is not set")))?;
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| "default".to_string());
        Ok(ProposerConfig {
            endpoint,
            model,
            api_key: std::env::var(ENV_API_KEY).ok(),
            timeout_s: 30,
            offline_fixture: None,
        })
    }

    pub fn offline(fixture: PathBuf) -> Self {
        ProposerConfig {
            endpoint: String::new(),
            model: "fixture".to_string(),
            api_key: None,
            timeout_s: 0,
            offline_fixture: Some(fixture),
        }
    }
}

#[derive(Debug, Error)]
pub enum ProposerError {
    #[error("proposer configuration: {0}")]
    Config(String),
    #[error("network error: {0}")]
    NetworkError(String),
    #[error("authentication rejected: {0}")]
    AuthError(String),
    #[error("request timed out after {0}s")]
    Timeout(u64),
    #[error("malformed response: {0}")]
    BadResponse(String),
    #[error("fixture read failed: {0}")]
    Fixture(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptKind {
    InvariantExtraction,
    AttackGeneration,
}

pub struct PromptContext<'a> {
    pub registry: &'a Registry,
    pub known_rules: &'a [Invariant],
    /// Short description of the data the rules were mined from.
    pub trace_digest: Option<String>,
}

/// Deterministic prompt assembly: grammar, signal inventory, known rules.
pub fn build_prompt(kind: PromptKind, ctx: &PromptContext) -> String {
    let mut p = String::new();
    match kind {
        PromptKind::InvariantExtraction => {
            p.push_str(
                "You are auditing a water-treatment stage. Propose control invariants, \
                 one per line, using exactly this grammar:\n\n\
                 rule  := \"IF\" cond \"THEN\" act (\"&\" act)* | NUM UNIT? \"<=\" TAG \"<=\" NUM UNIT?\n\
                 cond  := TAG cmp NUM UNIT? (\"AND\"|\"OR\" cond)*\n\
                 act   := \"ALARM\" | TAG \"=\" (\"OPEN\"|\"CLOSE\"|\"START\"|\"STOP\")\n\n\
                 Lines that do not parse are discarded.\n\nSignals:\n",
            );
        }
        PromptKind::AttackGeneration => {
            p.push_str(
                "You are red-teaming a water-treatment stage. Propose attack patterns as \
                 JSON objects, one per line, each with fields: class, manipulations, \
                 start_s, termination, declared_impact. Lines that do not parse are \
                 discarded.\n\nSignals:\n",
            );
        }
    }
    for spec in ctx.registry.specs() {
        let _ = writeln!(p, "- {} ({:?})", spec.tag, spec.kind);
    }
    if let Some(d) = &ctx.trace_digest {
        let _ = writeln!(p, "\nHistorian data summary: {d}");
    }
    if !ctx.known_rules.is_empty() {
        p.push_str("\nRules already known (do not repeat):\n");
        for inv in ctx.known_rules {
            let _ = writeln!(p, "- {}", crate::dsl::render_invariant(inv));
        }
    }
    p
}

/// Anything that can answer a completion request. Lets tests run against a
/// recorder and keeps reqwest out of every other code path.
pub trait Transport {
    fn post(
        &self,
        url: &str,
        api_key: Option<&str>,
        body: &serde_json::Value,
        timeout: Duration,
    ) -> Result<String, ProposerError>;
}

/// Blocking HTTP transport (`POST {model, prompt}` -> `{text}`).
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn post(
        &self,
        url: &str,
        api_key: Option<&str>,
        body: &serde_json::Value,
        timeout: Duration,
    ) -> Result<String, ProposerError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ProposerError::NetworkError(e.to_string()))?;
        let mut req = client.post(url).json(body);
        if let Some(key) = api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                ProposerError::Timeout(timeout.as_secs())
            } else {
                ProposerError::NetworkError(e.to_string())
            }
        })?;
        match resp.status().as_u16() {
            401 | 403 => return Err(ProposerError::AuthError(resp.status().to_string())),
            s if s >= 400 => return Err(ProposerError::NetworkError(resp.status().to_string())),
            _ => {}
        }
        resp.text().map_err(|e| ProposerError::BadResponse(e.to_string()))
    }
}

fn extract_text(raw: &str) -> Result<String, ProposerError> {
    let v: serde_json::Value =
        serde_json::from_str(raw).map_err(|e| ProposerError::BadResponse(e.to_string()))?;
    v.get("text")
        .and_then(|t| t.as_str())
        .map(str::to_string)
        .ok_or_else(|| ProposerError::BadResponse("missing \"text\" field".to_string()))
}

/// Obtain raw proposal text for `prompt`. With an offline fixture configured
/// the transport is never touched.
pub fn propose_with(
    cfg: &ProposerConfig,
    prompt: &str,
    transport: &dyn Transport,
) -> Result<String, ProposerError> {
    if let Some(path) = &cfg.offline_fixture {
        return std::fs::read_to_string(path)
            .map_err(|e| ProposerError::Fixture(format!("{}: {e}", path.display())));
    }
    let body = json!({ "model": cfg.model, "prompt": prompt });
    let raw = transport.post(
        &cfg.endpoint,
        cfg.api_key.as_deref(),
        &body,
        Duration::from_secs(cfg.timeout_s),
    )?;
    extract_text(&raw)
}

pub fn propose(cfg: &ProposerConfig, prompt: &str) -> Result<String, ProposerError> {
    propose_with(cfg, prompt, &HttpTransport)
}

/// Parsed proposals plus the lines the gates rejected.
#[derive(Debug)]
pub enum ProposalSet {
    Invariants { accepted: Vec<Invariant>, rejected: Vec<(usize, String, DslError)> },
    Attacks { accepted: Vec<AttackPattern>, rejected: Vec<(usize, String, String)> },
}

/// Run proposal text through the corresponding parser; nothing an LLM says
/// enters the pipeline except through these gates.
pub fn parse_proposals(kind: PromptKind, text: &str, registry: &Registry) -> ProposalSet {
    match kind {
        PromptKind::InvariantExtraction => {
            let (accepted, rejected) = parse_rules_file(text, registry, Provenance::LLMProposed);
            ProposalSet::Invariants { accepted, rejected }
        }
        PromptKind::AttackGeneration => {
            let mut accepted = Vec::new();
            let mut rejected = Vec::new();
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                match serde_json::from_str::<AttackPattern>(line) {
                    Ok(p) => accepted.push(p),
                    Err(e) => rejected.push((i + 1, line.to_string(), e.to_string())),
                }
            }
            ProposalSet::Attacks { accepted, rejected }
        }
    }
}
