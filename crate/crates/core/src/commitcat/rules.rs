use std::path::Path;

use crate::commitcat::category::{Category, ChangeType, Confidence, Strength, CATEGORY_COUNT};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KeywordRule {
    pub category: Category,
    pub keyword: String,
    pub strength: Strength,
    /// Lower-cased keyword used for matching.
    pub(crate) needle: String,
}

impl KeywordRule {
    pub fn new(category: Category, keyword: &str, strength: Strength) -> Self {
        KeywordRule {
            category,
            keyword: keyword.to_string(),
            strength,
            needle: keyword.to_lowercase(),
        }
    }

    pub fn weight(&self) -> f64 {
        self.strength.weight()
    }
}

/// Thresholds of the rule-based confidence decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceTable {
    pub high_min_strong: f64,
    pub high_min_evidence: f64,
    pub high_max_layers: f64,
    pub high_max_components: f64,
    pub medium_min_evidence: f64,
}

impl Default for ConfidenceTable {
    fn default() -> Self {
        ConfidenceTable {
            high_min_strong: 1.0,
            high_min_evidence: 2.0,
            high_max_layers: 2.0,
            high_max_components: 2.0,
            medium_min_evidence: 1.0,
        }
    }
}

impl ConfidenceTable {
    /// Maps (layer count, component count, evidence, strong matches) to a label.
    pub fn decide(&self, layers: usize, components: usize, evidence: f64, strong: usize) -> Confidence {
        let high = strong as f64 >= self.high_min_strong
            && evidence >= self.high_min_evidence
            && layers as f64 <= self.high_max_layers
            && components as f64 <= self.high_max_components;
        if high {
            Confidence::High
        } else if evidence >= self.medium_min_evidence {
            Confidence::Medium
        } else {
            Confidence::Low
        }
    }
}

/// Coefficients of the bounded change-complexity blend.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexityWeights {
    pub churn_weight: f64,
    pub churn_scale: f64,
    pub scope_weight: f64,
    pub files_weight: f64,
    pub files_scale: f64,
}

impl Default for ComplexityWeights {
    fn default() -> Self {
        ComplexityWeights {
            churn_weight: 0.4,
            churn_scale: 1000.0,
            scope_weight: 0.3,
            files_weight: 0.3,
            files_scale: 50.0,
        }
    }
}

impl ComplexityWeights {
    pub fn score(&self, total_churn: u64, categories: usize, files_changed: u64) -> f64 {
        self.churn_weight * (total_churn as f64 / self.churn_scale).min(1.0)
            + self.scope_weight * categories as f64 / CATEGORY_COUNT as f64
            + self.files_weight * (files_changed as f64 / self.files_scale).min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChangeTypeRule {
    pub change_type: ChangeType,
    pub keyword: String,
    pub(crate) needle: String,
}

/// Full configuration of the keyword stage.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet {
    pub keywords: Vec<KeywordRule>,
    pub thresholds: [f64; CATEGORY_COUNT],
    pub change_types: Vec<ChangeTypeRule>,
    pub confidence: ConfidenceTable,
    pub complexity: ComplexityWeights,
}

const DEFAULT_RULES: &str = include_str!("../../rules/commit_keywords.txt");

impl Default for RuleSet {
    fn default() -> Self {
        RuleSet::parse(DEFAULT_RULES).expect("shipped keyword rules are valid")
    }
}

impl RuleSet {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut set = RuleSet {
            keywords: Vec::new(),
            thresholds: [1.0; CATEGORY_COUNT],
            change_types: Vec::new(),
            confidence: ConfidenceTable::default(),
            complexity: ComplexityWeights::default(),
        };
        let mut overrides: Vec<(Category, f64)> = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::config(format!("rule line {}: {msg}", lineno + 1));
            let mut parts = line.splitn(2, char::is_whitespace);
            let directive = parts.next().unwrap_or_default();
            let rest = parts.next().unwrap_or_default().trim();
            match directive {
                "keyword" => {
                    let mut it = rest.splitn(3, char::is_whitespace);
                    let cat = it.next().unwrap_or_default();
                    let strength = it.next().unwrap_or_default();
                    let kw = it.next().unwrap_or_default().trim();
                    let cat: Category = cat.parse().map_err(|e| err(format!("{e}")))?;
                    let strength: Strength = strength.parse().map_err(err)?;
                    if kw.is_empty() {
                        return Err(err("empty keyword".into()));
                    }
                    set.keywords.push(KeywordRule::new(cat, kw, strength));
                }
                "threshold" => {
                    let (target, value) = two_fields(rest).ok_or_else(|| err("expected `threshold <category> <value>`".into()))?;
                    let value = positive(value).ok_or_else(|| err(format!("threshold `{value}` must be > 0")))?;
                    if target == "default" {
                        set.thresholds = [value; CATEGORY_COUNT];
                    } else {
                        let cat: Category = target.parse().map_err(|e| err(format!("{e}")))?;
                        overrides.push((cat, value));
                    }
                }
                "changetype" => {
                    let (ty, kw) = two_fields(rest).ok_or_else(|| err("expected `changetype <type> <text>`".into()))?;
                    let change_type: ChangeType = ty.parse().map_err(err)?;
                    set.change_types.push(ChangeTypeRule {
                        change_type,
                        keyword: kw.to_string(),
                        needle: kw.to_lowercase(),
                    });
                }
                "confidence" => {
                    let (key, value) = two_fields(rest).ok_or_else(|| err("expected `confidence <key> <value>`".into()))?;
                    let v: f64 = value
                        .parse()
                        .ok()
                        .filter(|v: &f64| *v >= 0.0)
                        .ok_or_else(|| err(format!("confidence value `{value}` must be >= 0")))?;
                    let t = &mut set.confidence;
                    match key {
                        "high_min_strong" => t.high_min_strong = v,
                        "high_min_evidence" => t.high_min_evidence = v,
                        "high_max_layers" => t.high_max_layers = v,
                        "high_max_components" => t.high_max_components = v,
                        "medium_min_evidence" => t.medium_min_evidence = v,
                        other => return Err(err(format!("unknown confidence key `{other}`"))),
                    }
                }
                "complexity" => {
                    let (key, value) = two_fields(rest).ok_or_else(|| err("expected `complexity <key> <value>`".into()))?;
                    let v = positive(value).ok_or_else(|| err(format!("complexity value `{value}` must be > 0")))?;
                    let w = &mut set.complexity;
                    match key {
                        "churn_weight" => w.churn_weight = v,
                        "churn_scale" => w.churn_scale = v,
                        "scope_weight" => w.scope_weight = v,
                        "files_weight" => w.files_weight = v,
                        "files_scale" => w.files_scale = v,
                        other => return Err(err(format!("unknown complexity key `{other}`"))),
                    }
                }
                other => return Err(err(format!("unknown directive `{other}`"))),
            }
        }
        for (cat, v) in overrides {
            set.thresholds[cat.index()] = v;
        }
        if set.keywords.is_empty() {
            return Err(Error::config("keyword rule set is empty"));
        }
        Ok(set)
    }

    pub fn threshold(&self, category: Category) -> f64 {
        self.thresholds[category.index()]
    }

    pub fn keywords_for(&self, category: Category) -> impl Iterator<Item = &KeywordRule> {
        self.keywords.iter().filter(move |k| k.category == category)
    }
}

fn two_fields(rest: &str) -> Option<(&str, &str)> {
    let (a, b) = rest.split_once(char::is_whitespace)?;
    let b = b.trim();
    (!b.is_empty()).then_some((a, b))
}

fn positive(s: &str) -> Option<f64> {
    s.parse().ok().filter(|v: &f64| *v > 0.0 && v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_rules_cover_every_category() {
        let rules = RuleSet::default();
        for c in Category::ALL {
            assert!(rules.keywords_for(c).next().is_some(), "{c} has no keywords");
        }
        assert_eq!(rules.threshold(Category::Mac), 1.0);
        assert_eq!(rules.threshold(Category::Memory), 0.5);
        for t in ChangeType::ALL {
            assert!(rules.change_types.iter().any(|r| r.change_type == t));
        }
    }

    #[test]
    fn confidence_defaults() {
        let t = ConfidenceTable::default();
        assert_eq!(t.decide(1, 0, 2.0, 1), Confidence::High);
        assert_eq!(t.decide(0, 1, 0.5, 0), Confidence::Low);
        assert_eq!(t.decide(5, 1, 3.0, 2), Confidence::Medium);
        assert_eq!(t.decide(1, 3, 4.0, 2), Confidence::Medium);
        assert_eq!(t.decide(0, 0, 0.0, 0), Confidence::Low);
    }

    #[test]
    fn bad_lines_are_config_errors() {
        for bad in [
            "keyword XYZ strong foo",
            "keyword MAC mighty foo",
            "keyword MAC strong",
            "threshold MAC -1",
            "threshold MAC",
            "confidence high_min_strong x",
            "confidence nonsense 1",
            "changetype hotfix fix",
            "frobnicate",
        ] {
            assert!(RuleSet::parse(&format!("keyword MAC strong MAC\n{bad}")).unwrap_err().is_config(), "{bad}");
        }
    }

    #[test]
    fn threshold_override_order_independent() {
        let a = RuleSet::parse("keyword MAC strong MAC\nthreshold MAC 3\nthreshold default 2").unwrap();
        assert_eq!(a.threshold(Category::Mac), 3.0);
        assert_eq!(a.threshold(Category::Phy), 2.0);
    }
}
