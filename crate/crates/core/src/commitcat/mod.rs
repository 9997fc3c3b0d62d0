//! Commit categorization: weighted keyword matching over the commit text,
//! optional refinement of ambiguous drafts, and the fixed-layout commit
//! feature vector.

mod category;
mod features;
mod keyword;
mod refine;
mod rules;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use category::{Category, ChangeType, Confidence, Strength, UnknownCategory, CATEGORY_COUNT};
pub use features::{
    binary_slots, build_feature_vector, merge_ref_count, CommitFeatures, DecodedFeatures, FEATURE_COUNT,
    FEATURE_LAYOUT_VERSION, FEATURE_NAMES,
};
pub use keyword::{
    categorize_keywords, confidence_rule, detect_change_type, keyword_score, CategorizationResult, CommitText,
};
pub use refine::{
    refine_batch, refine_with_llm, EchoStub, HttpTransport, LexiconStub, RefinementOutcome, RefinementPolicy,
    RefinementRequest, RefinementResponse, RefinementStatus, RefinementTransport, ScriptedStub, TransportError,
    UnreachableStub, CREDENTIAL_ENV, INSTRUCTION, MAX_REFINED_LAYERS,
};
pub use rules::{ChangeTypeRule, ComplexityWeights, ConfidenceTable, KeywordRule, RuleSet};

use crate::error::{Error, Result};

/// Source of commit metadata.
pub trait CommitMetadataProvider {
    fn commits(&self) -> Result<Vec<CommitText>>;
}

/// Reads one JSON object per line: `{"hash", "message", "files_changed", ...}`.
pub struct JsonLinesCommits<'a> {
    pub path: &'a Path,
}

impl CommitMetadataProvider for JsonLinesCommits<'_> {
    fn commits(&self) -> Result<Vec<CommitText>> {
        let text = std::fs::read_to_string(self.path).map_err(|e| Error::io(self.path, e))?;
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut c: CommitText = serde_json::from_str(line)
                .map_err(|e| Error::data(format!("{}:{}: {e}", self.path.display(), i + 1)))?;
            c.hash = c.hash.trim().to_ascii_lowercase();
            if !crate::ingest::is_hex_like(&c.hash) {
                return Err(Error::data(format!("{}:{}: hash `{}` is not hex", self.path.display(), i + 1, c.hash)));
            }
            out.push(c);
        }
        Ok(out)
    }
}

/// Feature-store row for one commit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub schema_version: u32,
    pub layout_version: u32,
    pub hash: String,
    pub features: Vec<f64>,
    pub affected: Vec<Category>,
    pub change_type: ChangeType,
    pub confidence: Confidence,
    pub refinement: RefinementStatus,
    pub degraded_mode: bool,
    #[serde(default)]
    pub rationale: String,
    #[serde(default)]
    pub matched_keywords: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deployed_at: Option<chrono::NaiveDateTime>,
}

impl CommitRecord {
    pub fn commit_features(&self) -> Result<CommitFeatures> {
        CommitFeatures::from_vector(&self.hash, self.features.clone())
    }
}

/// Keyword stage for every commit, refinement for the ambiguous ones, then
/// feature vectors. Output is sorted by hash.
pub fn categorize_commits(
    commits: &[CommitText],
    rules: &RuleSet,
    client: Option<&dyn RefinementTransport>,
    policy: &RefinementPolicy,
) -> Vec<CommitRecord> {
    let mut sorted: Vec<CommitText> = commits.to_vec();
    sorted.sort_by(|a, b| a.hash.cmp(&b.hash));
    sorted.dedup_by(|a, b| a.hash == b.hash);

    let items: Vec<(CommitText, CategorizationResult)> = sorted
        .into_iter()
        .map(|c| {
            let draft = categorize_keywords(&c, rules);
            (c, draft)
        })
        .collect();
    let outcomes: Vec<RefinementOutcome> = match client {
        Some(client) => refine_batch(&items, client, policy),
        None => items
            .iter()
            .map(|(_, d)| RefinementOutcome {
                result: d.clone(),
                status: RefinementStatus::Skipped,
                attempts: 0,
                last_error: None,
            })
            .collect(),
    };
    items
        .iter()
        .zip(outcomes)
        .map(|((commit, _), outcome)| {
            let features = build_feature_vector(&outcome.result, commit, &rules.complexity);
            CommitRecord {
                schema_version: crate::ingest::RECORD_SCHEMA_VERSION,
                layout_version: FEATURE_LAYOUT_VERSION,
                hash: commit.hash.clone(),
                features: features.values,
                affected: outcome.result.affected.iter().copied().collect(),
                change_type: outcome.result.change_type,
                confidence: outcome.result.confidence,
                degraded_mode: outcome.degraded_mode(),
                refinement: outcome.status,
                rationale: outcome.result.rationale.clone(),
                matched_keywords: outcome.result.matched_keywords.clone(),
                deployed_at: commit.deployed_at,
            }
        })
        .collect()
}
