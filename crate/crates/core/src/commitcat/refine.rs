//! Selective refinement of low/medium-confidence categorizations by an
//! external language-model service.
//!
//! The wire format is line-oriented text in both directions. A request is a
//! block of `key: value` header lines followed by `text:` and the raw commit
//! text. A response carries four keys:
//!
//! ```text
//! layers: MAC, NAS
//! components: memory
//! change_type: refactoring
//! rationale: UL payload handling lives in MAC; 5G-S-TMSI is NAS state
//! ```

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::commitcat::category::{Category, ChangeType, Confidence};
use crate::commitcat::keyword::{detect_change_type, CategorizationResult, CommitText};
use crate::commitcat::rules::RuleSet;

pub const MAX_REFINED_LAYERS: usize = 4;

pub const INSTRUCTION: &str = "You validate categorizations of RAN software commits. Confirm or reject each \
candidate layer and component, add missing ones only from the allowed vocabulary, return at most four \
layers, pick exactly one primary change type, and justify briefly.";

/// Environment variable holding the bearer credential for the HTTP transport.
pub const CREDENTIAL_ENV: &str = "RANPERF_REFINE_TOKEN";

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementRequest {
    pub hash: String,
    pub text: String,
    pub draft_layers: Vec<Category>,
    pub draft_components: Vec<Category>,
    pub draft_change_type: ChangeType,
}

fn join(cats: &[Category]) -> String {
    cats.iter().map(|c| c.name()).collect::<Vec<_>>().join(",")
}

impl RefinementRequest {
    pub fn new(commit: &CommitText, draft: &CategorizationResult) -> Self {
        RefinementRequest {
            hash: commit.hash.clone(),
            text: commit.message.clone(),
            draft_layers: draft.layers().collect(),
            draft_components: draft.components().collect(),
            draft_change_type: draft.change_type,
        }
    }

    pub fn to_body(&self) -> String {
        let types: Vec<_> = ChangeType::ALL.iter().map(|t| t.name()).collect();
        format!(
            "instruction: {INSTRUCTION}\ncommit: {}\nallowed_layers: {}\nallowed_components: {}\n\
             allowed_change_types: {}\ndraft_layers: {}\ndraft_components: {}\ndraft_change_type: {}\ntext:\n{}\n",
            self.hash,
            join(&Category::LAYERS),
            join(&Category::COMPONENTS),
            types.join(","),
            join(&self.draft_layers),
            join(&self.draft_components),
            self.draft_change_type.name(),
            self.text
        )
    }

    pub fn from_body(body: &str) -> Result<Self, String> {
        let (header, text) = body.split_once("\ntext:\n").ok_or("request has no `text:` section")?;
        let mut req = RefinementRequest {
            hash: String::new(),
            text: text.strip_suffix('\n').unwrap_or(text).to_string(),
            draft_layers: Vec::new(),
            draft_components: Vec::new(),
            draft_change_type: ChangeType::Refactoring,
        };
        for line in header.lines() {
            let Some((k, v)) = line.split_once(':') else { continue };
            let v = v.trim();
            match k.trim() {
                "commit" => req.hash = v.to_string(),
                "draft_layers" => req.draft_layers = parse_list(v)?,
                "draft_components" => req.draft_components = parse_list(v)?,
                "draft_change_type" => req.draft_change_type = v.parse()?,
                _ => {}
            }
        }
        Ok(req)
    }
}

fn parse_list(v: &str) -> Result<Vec<Category>, String> {
    let v = v.trim();
    if v.is_empty() || v.eq_ignore_ascii_case("none") {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|s| s.trim().trim_matches(|c| c == '[' || c == ']'))
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<Category>().map_err(|e| e.to_string()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefinementResponse {
    pub layers: BTreeSet<Category>,
    pub components: BTreeSet<Category>,
    pub change_type: ChangeType,
    pub rationale: String,
}

impl RefinementResponse {
    pub fn to_body(&self) -> String {
        let l: Vec<_> = self.layers.iter().copied().collect();
        let c: Vec<_> = self.components.iter().copied().collect();
        format!(
            "layers: {}\ncomponents: {}\nchange_type: {}\nrationale: {}\n",
            join(&l),
            join(&c),
            self.change_type.name(),
            self.rationale
        )
    }

    /// Parses and structurally validates a service response.
    pub fn parse(body: &str) -> Result<Self, String> {
        let mut layers = None;
        let mut components = None;
        let mut change_types: Vec<ChangeType> = Vec::new();
        let mut rationale = None;
        for line in body.lines() {
            let Some((k, v)) = line.split_once(':') else { continue };
            match k.trim().to_ascii_lowercase().as_str() {
                "layers" => layers = Some(parse_list(v)?),
                "components" => components = Some(parse_list(v)?),
                "change_type" => {
                    for t in v.split(',').filter(|t| !t.trim().is_empty()) {
                        change_types.push(t.parse()?);
                    }
                }
                "rationale" => rationale = Some(v.trim().to_string()),
                _ => {}
            }
        }
        let layers: BTreeSet<_> = layers.ok_or("missing `layers`")?.into_iter().collect();
        let components: BTreeSet<_> = components.ok_or("missing `components`")?.into_iter().collect();
        if let Some(c) = layers.iter().find(|c| !c.is_layer()) {
            return Err(format!("`{c}` listed as a layer"));
        }
        if let Some(c) = components.iter().find(|c| c.is_layer()) {
            return Err(format!("`{c}` listed as a component"));
        }
        if layers.len() > MAX_REFINED_LAYERS {
            return Err(format!("{} layers exceeds the bound of {MAX_REFINED_LAYERS}", layers.len()));
        }
        if change_types.len() != 1 {
            return Err(format!("expected exactly one change_type, got {}", change_types.len()));
        }
        let rationale = rationale.filter(|r| !r.is_empty()).ok_or("missing rationale")?;
        Ok(RefinementResponse {
            layers,
            components,
            change_type: change_types[0],
            rationale,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportError(pub String);

impl std::fmt::Display for TransportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Carries a request body to the refinement service and returns the raw reply.
pub trait RefinementTransport: Send + Sync {
    fn send(&self, body: &str) -> Result<String, TransportError>;
}

/// Plain HTTP POST transport with a per-request timeout.
pub struct HttpTransport {
    endpoint: String,
    credential: Option<String>,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(endpoint: &str, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpTransport {
            endpoint: endpoint.to_string(),
            credential: std::env::var(CREDENTIAL_ENV).ok().filter(|s| !s.is_empty()),
            agent,
        }
    }
}

impl RefinementTransport for HttpTransport {
    fn send(&self, body: &str) -> Result<String, TransportError> {
        let mut req = self.agent.post(&self.endpoint).header("Content-Type", "text/plain; charset=utf-8");
        if let Some(token) = &self.credential {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send(body).map_err(|e| TransportError(e.to_string()))?;
        resp.body_mut()
            .read_to_string()
            .map_err(|e| TransportError(e.to_string()))
    }
}

/// Replies with the draft unchanged.
pub struct EchoStub;

impl RefinementTransport for EchoStub {
    fn send(&self, body: &str) -> Result<String, TransportError> {
        let req = RefinementRequest::from_body(body).map_err(TransportError)?;
        Ok(RefinementResponse {
            layers: req.draft_layers.into_iter().collect(),
            components: req.draft_components.into_iter().collect(),
            change_type: req.draft_change_type,
            rationale: "draft confirmed".into(),
        }
        .to_body())
    }
}

/// Replays a fixed list of replies; the last one repeats once exhausted.
pub struct ScriptedStub {
    replies: Vec<Result<String, TransportError>>,
    next: AtomicUsize,
}

impl ScriptedStub {
    pub fn new(replies: Vec<Result<String, TransportError>>) -> Self {
        assert!(!replies.is_empty());
        ScriptedStub {
            replies,
            next: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.next.load(Ordering::SeqCst)
    }
}

impl RefinementTransport for ScriptedStub {
    fn send(&self, _body: &str) -> Result<String, TransportError> {
        let i = self.next.fetch_add(1, Ordering::SeqCst);
        self.replies[i.min(self.replies.len() - 1)].clone()
    }
}

/// Always fails, as an unreachable endpoint would.
pub struct UnreachableStub;

impl RefinementTransport for UnreachableStub {
    fn send(&self, _body: &str) -> Result<String, TransportError> {
        Err(TransportError("connection refused".into()))
    }
}

/// Contextual phrases the lexicon stub resolves that plain keywords miss.
const CONTEXT_LEXICON: &[(&str, Category)] = &[
    ("ul payload", Category::Mac),
    ("dl payload", Category::Mac),
    ("logical channel", Category::Mac),
    ("ra procedure", Category::Mac),
    ("tmsi", Category::Nas),
    ("registration", Category::Nas),
    ("guti", Category::Nas),
    ("sidelink", Category::Phy),
    ("radio bearer", Category::Pdcp),
    ("drb", Category::Pdcp),
    ("srb", Category::Rrc),
    ("rlc entity", Category::Rlc),
    ("amf", Category::Ngap),
    ("cu-up", Category::E1ap),
    ("split", Category::F1ap),
    ("worker", Category::Threading),
    ("lock", Category::Threading),
    ("copy", Category::Memory),
    ("alloc", Category::Memory),
    ("slot", Category::Scheduler),
    ("deadline", Category::Timer),
];

/// Deterministic offline stand-in for the language model.
///
/// Keeps the draft, adds categories for known contextual phrases, trims the
/// layer set to the bound (draft layers first) and re-derives the change
/// type from the rule set.
pub struct LexiconStub {
    rules: RuleSet,
}

impl LexiconStub {
    pub fn new(rules: RuleSet) -> Self {
        LexiconStub { rules }
    }
}

impl RefinementTransport for LexiconStub {
    fn send(&self, body: &str) -> Result<String, TransportError> {
        let req = RefinementRequest::from_body(body).map_err(TransportError)?;
        let lower = req.text.to_lowercase();
        let mut layers: Vec<Category> = req.draft_layers.clone();
        let mut components: BTreeSet<Category> = req.draft_components.iter().copied().collect();
        let mut hits = Vec::new();
        for (phrase, cat) in CONTEXT_LEXICON {
            if lower.contains(phrase) {
                hits.push(*phrase);
                if cat.is_layer() {
                    if !layers.contains(cat) {
                        layers.push(*cat);
                    }
                } else {
                    components.insert(*cat);
                }
            }
        }
        layers.truncate(MAX_REFINED_LAYERS);
        let rationale = if hits.is_empty() {
            "no additional context; draft kept".to_string()
        } else {
            format!("context phrases: {}", hits.join("; "))
        };
        Ok(RefinementResponse {
            layers: layers.into_iter().collect(),
            components,
            change_type: detect_change_type(&req.text, &self.rules),
            rationale,
        }
        .to_body())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefinementStatus {
    /// Draft was high confidence; the service was not called.
    Skipped,
    Refined,
    /// Every attempt returned a structurally invalid response.
    InvalidResponse,
    /// The service could not be reached; running in degraded mode.
    Unavailable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementOutcome {
    pub result: CategorizationResult,
    pub status: RefinementStatus,
    pub attempts: usize,
    pub last_error: Option<String>,
}

impl RefinementOutcome {
    pub fn degraded_mode(&self) -> bool {
        self.status == RefinementStatus::Unavailable
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefinementPolicy {
    /// Retries after the first attempt.
    pub max_retries: usize,
    pub concurrency: usize,
}

impl Default for RefinementPolicy {
    fn default() -> Self {
        RefinementPolicy {
            max_retries: 2,
            concurrency: 4,
        }
    }
}

/// Sends a low/medium-confidence draft for refinement.
///
/// High-confidence drafts are returned untouched. Invalid responses and
/// transport failures are retried; when retries run out the draft comes
/// back unchanged with `refined_by_llm = false`.
pub fn refine_with_llm(
    commit: &CommitText,
    draft: &CategorizationResult,
    client: &dyn RefinementTransport,
    policy: &RefinementPolicy,
) -> RefinementOutcome {
    if draft.confidence == Confidence::High {
        return RefinementOutcome {
            result: draft.clone(),
            status: RefinementStatus::Skipped,
            attempts: 0,
            last_error: None,
        };
    }
    let body = RefinementRequest::new(commit, draft).to_body();
    let mut last_error = None;
    let mut transport_failed = false;
    let mut attempts = 0;
    for _ in 0..=policy.max_retries {
        attempts += 1;
        match client.send(&body) {
            Err(e) => {
                transport_failed = true;
                last_error = Some(e.0);
            }
            Ok(reply) => {
                transport_failed = false;
                match RefinementResponse::parse(&reply) {
                    Ok(resp) => {
                        let mut result = draft.clone();
                        result.set_affected(resp.layers.union(&resp.components).copied().collect());
                        result.change_type = resp.change_type;
                        result.rationale = resp.rationale;
                        result.refined_by_llm = true;
                        return RefinementOutcome {
                            result,
                            status: RefinementStatus::Refined,
                            attempts,
                            last_error: None,
                        };
                    }
                    Err(e) => last_error = Some(e),
                }
            }
        }
    }
    let status = if transport_failed {
        RefinementStatus::Unavailable
    } else {
        RefinementStatus::InvalidResponse
    };
    log::warn!(
        "refinement of {} failed after {attempts} attempts ({status:?}): {}",
        commit.hash,
        last_error.as_deref().unwrap_or("")
    );
    RefinementOutcome {
        result: draft.clone(),
        status,
        attempts,
        last_error,
    }
}

/// Refines many commits with at most `policy.concurrency` requests in flight.
/// Output order matches input order.
pub fn refine_batch(
    items: &[(CommitText, CategorizationResult)],
    client: &dyn RefinementTransport,
    policy: &RefinementPolicy,
) -> Vec<RefinementOutcome> {
    let slots: Vec<Mutex<Option<RefinementOutcome>>> = items.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = policy.concurrency.max(1).min(items.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((commit, draft)) = items.get(i) else { break };
                let outcome = refine_with_llm(commit, draft, client, policy);
                *slots[i].lock().unwrap() = Some(outcome);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("every slot filled"))
        .collect()
}
