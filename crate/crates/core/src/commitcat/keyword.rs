use std::collections::BTreeSet;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::commitcat::category::{Category, ChangeType, Confidence, Strength, CATEGORY_COUNT};
use crate::commitcat::rules::{ConfidenceTable, RuleSet};

/// Aggregated commit text plus churn counters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitText {
    pub hash: String,
    pub message: String,
    #[serde(default)]
    pub files_changed: u64,
    #[serde(default)]
    pub lines_added: u64,
    #[serde(default)]
    pub lines_deleted: u64,
    /// When the revision was deployed to the test bed, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deployed_at: Option<NaiveDateTime>,
}

impl CommitText {
    pub fn new(hash: &str, message: &str) -> Self {
        CommitText {
            hash: hash.to_string(),
            message: message.to_string(),
            files_changed: 0,
            lines_added: 0,
            lines_deleted: 0,
            deployed_at: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorizationResult {
    pub affected: BTreeSet<Category>,
    pub scores: Vec<f64>,
    pub layer_count: usize,
    pub component_count: usize,
    /// Sum of all matched keyword weights.
    pub evidence: f64,
    pub strong_matches: usize,
    pub confidence: Confidence,
    pub refined_by_llm: bool,
    pub change_type: ChangeType,
    #[serde(default)]
    pub rationale: String,
    /// Matched keywords in rule order, for display.
    #[serde(default)]
    pub matched_keywords: Vec<String>,
}

impl CategorizationResult {
    pub fn layers(&self) -> impl Iterator<Item = Category> + '_ {
        self.affected.iter().copied().filter(|c| c.is_layer())
    }

    pub fn components(&self) -> impl Iterator<Item = Category> + '_ {
        self.affected.iter().copied().filter(|c| !c.is_layer())
    }

    /// Replaces the affected set and keeps the counts consistent with it.
    pub fn set_affected(&mut self, affected: BTreeSet<Category>) {
        self.layer_count = affected.iter().filter(|c| c.is_layer()).count();
        self.component_count = affected.len() - self.layer_count;
        self.affected = affected;
    }
}

fn matches(text_lower: &str, needle: &str) -> bool {
    !needle.is_empty() && text_lower.contains(needle)
}

/// Weighted keyword evidence for one category; each distinct keyword counts once.
pub fn keyword_score(message: &str, rules: &RuleSet, category: Category) -> f64 {
    let lower = message.to_lowercase();
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    rules
        .keywords_for(category)
        .filter(|k| seen.insert(k.needle.as_str()) && matches(&lower, &k.needle))
        .map(|k| k.weight())
        .sum()
}

pub fn confidence_rule(
    table: &ConfidenceTable,
    layers: usize,
    components: usize,
    evidence: f64,
    strong: usize,
) -> Confidence {
    table.decide(layers, components, evidence, strong)
}

/// Change type with the most distinct keyword hits; ties resolve in
/// [`ChangeType::ALL`] order and no evidence means refactoring.
pub fn detect_change_type(message: &str, rules: &RuleSet) -> ChangeType {
    let lower = message.to_lowercase();
    let mut hits = [0usize; 4];
    let mut seen: BTreeSet<(ChangeType, &str)> = BTreeSet::new();
    for r in &rules.change_types {
        if seen.insert((r.change_type, r.needle.as_str())) && matches(&lower, &r.needle) {
            hits[r.change_type.index()] += 1;
        }
    }
    let best = hits.iter().copied().max().unwrap_or(0);
    if best == 0 {
        return ChangeType::Refactoring;
    }
    ChangeType::ALL
        .into_iter()
        .find(|t| hits[t.index()] == best)
        .unwrap_or(ChangeType::Refactoring)
}

/// The keyword stage: per-category scores, thresholding and confidence.
pub fn categorize_keywords(commit: &CommitText, rules: &RuleSet) -> CategorizationResult {
    let lower = commit.message.to_lowercase();
    let mut scores = vec![0.0; CATEGORY_COUNT];
    let mut evidence = 0.0;
    let mut strong = 0usize;
    let mut matched = Vec::new();
    let mut seen: BTreeSet<(Category, &str)> = BTreeSet::new();

    for k in &rules.keywords {
        if !seen.insert((k.category, k.needle.as_str())) || !matches(&lower, &k.needle) {
            continue;
        }
        scores[k.category.index()] += k.weight();
        evidence += k.weight();
        if k.strength == Strength::Strong {
            strong += 1;
        }
        matched.push(k.keyword.clone());
    }

    let affected: BTreeSet<Category> = Category::ALL
        .into_iter()
        .filter(|c| scores[c.index()] >= rules.threshold(*c))
        .collect();
    let layer_count = affected.iter().filter(|c| c.is_layer()).count();
    let component_count = affected.len() - layer_count;
    CategorizationResult {
        confidence: rules.confidence.decide(layer_count, component_count, evidence, strong),
        affected,
        scores,
        layer_count,
        component_count,
        evidence,
        strong_matches: strong,
        refined_by_llm: false,
        change_type: detect_change_type(&commit.message, rules),
        rationale: String::new(),
        matched_keywords: matched,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layers_of(msg: &str) -> Vec<Category> {
        categorize_keywords(&CommitText::new("a", msg), &RuleSet::default())
            .layers()
            .collect()
    }

    #[test]
    fn msg3_reaches_mac_threshold() {
        let rules = RuleSet::default();
        let s = keyword_score("NR UE MSG3 buffer", &rules, Category::Mac);
        assert!(s >= 2.0);
        assert_eq!(layers_of("NR UE MSG3 buffer"), vec![Category::Mac]);
    }

    #[test]
    fn empty_message_scores_zero() {
        let rules = RuleSet::default();
        for c in Category::ALL {
            assert_eq!(keyword_score("", &rules, c), 0.0);
        }
        let r = categorize_keywords(&CommitText::new("a", ""), &rules);
        assert!(r.affected.is_empty());
        assert_eq!(r.confidence, Confidence::Low);
        assert_eq!(r.change_type, ChangeType::Refactoring);
    }

    #[test]
    fn repeated_weak_keyword_counts_once() {
        let rules = RuleSet::default();
        let msg = "grow the buffer, then shrink the buffer";
        // oracle: distinct matched keywords, summed
        let expected: f64 = {
            let lower = msg.to_lowercase();
            let mut set = std::collections::BTreeMap::new();
            for k in rules.keywords_for(Category::Memory) {
                if lower.contains(&k.keyword.to_lowercase()) {
                    set.insert(k.keyword.to_lowercase(), k.weight());
                }
            }
            set.values().sum()
        };
        assert_eq!(expected, 0.5);
        assert_eq!(keyword_score(msg, &rules, Category::Memory), expected);
    }

    #[test]
    fn worked_commit_examples() {
        assert_eq!(layers_of("fix duplicate call of RCconfig_NR_L1"), vec![Category::Phy]);
        assert_eq!(
            layers_of("Sidelink configuration passed from RRC->MAC"),
            vec![Category::Mac, Category::Rrc]
        );
        let r = categorize_keywords(&CommitText::new("a", "L1 tx thread"), &RuleSet::default());
        assert!(r.affected.contains(&Category::Phy));
        assert!(r.affected.contains(&Category::Threading));
    }

    #[test]
    fn change_type_priority() {
        let rules = RuleSet::default();
        assert_eq!(detect_change_type("fix crash in rework", &rules), ChangeType::Bugfix);
        assert_eq!(detect_change_type("optimize and rework", &rules), ChangeType::Optimization);
        assert_eq!(detect_change_type("cleanup and rework", &rules), ChangeType::Refactoring);
        assert_eq!(detect_change_type("nothing", &rules), ChangeType::Refactoring);
    }

    proptest! {
        #[test]
        fn appending_keyword_is_monotone(base in "[a-zA-Z _]{0,40}", idx in 0usize..100) {
            let rules = RuleSet::default();
            let kw = &rules.keywords[idx % rules.keywords.len()].keyword;
            let before = categorize_keywords(&CommitText::new("a", &base), &rules);
            let after = categorize_keywords(&CommitText::new("a", &format!("{base} {kw}")), &rules);
            for c in Category::ALL {
                prop_assert!(after.scores[c.index()] >= before.scores[c.index()]);
            }
            prop_assert!(before.affected.is_subset(&after.affected));
            let again = categorize_keywords(&CommitText::new("a", &base), &rules);
            prop_assert_eq!(before, again);
        }
    }
}
