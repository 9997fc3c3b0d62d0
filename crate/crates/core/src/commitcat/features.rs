use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::commitcat::category::{Category, ChangeType, Confidence, CATEGORY_COUNT};
use crate::commitcat::keyword::{CategorizationResult, CommitText};
use crate::commitcat::rules::ComplexityWeights;
use crate::error::{Error, Result};

pub const FEATURE_COUNT: usize = 34;
pub const FEATURE_LAYOUT_VERSION: u32 = 1;

/// Slot names of the commit feature vector, in order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "cat_phy",
    "cat_mac",
    "cat_rlc",
    "cat_pdcp",
    "cat_rrc",
    "cat_nas",
    "cat_ngap",
    "cat_f1ap",
    "cat_e1ap",
    "cat_memory",
    "cat_threading",
    "cat_radio",
    "cat_scheduler",
    "cat_timer",
    "cat_queue",
    "type_bugfix",
    "type_optimization",
    "type_feature",
    "type_refactoring",
    "layer_count",
    "component_count",
    "files_changed",
    "lines_added",
    "lines_deleted",
    "total_churn",
    "complexity_score",
    "confidence_high",
    "confidence_medium",
    "confidence_low",
    "refined_by_llm",
    "keyword_evidence",
    "strong_matches",
    "message_length",
    "merge_ref_count",
];

const TYPE_BASE: usize = CATEGORY_COUNT;
const COUNT_BASE: usize = TYPE_BASE + 4;
const CONF_BASE: usize = 26;
const REFINED: usize = 29;

/// Slots restricted to {0, 1}.
pub fn binary_slots() -> Vec<usize> {
    (0..COUNT_BASE).chain(CONF_BASE..=REFINED).collect()
}

/// Named view of a commit feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedFeatures {
    pub categories: [bool; CATEGORY_COUNT],
    pub change_type: ChangeType,
    pub layer_count: u64,
    pub component_count: u64,
    pub files_changed: u64,
    pub lines_added: u64,
    pub lines_deleted: u64,
    pub total_churn: u64,
    pub complexity_score: f64,
    pub confidence: Confidence,
    pub refined_by_llm: bool,
    pub keyword_evidence: f64,
    pub strong_matches: u64,
    pub message_length: u64,
    pub merge_ref_count: u64,
}

impl DecodedFeatures {
    pub fn encode(&self) -> [f64; FEATURE_COUNT] {
        let mut v = [0.0; FEATURE_COUNT];
        for (i, &on) in self.categories.iter().enumerate() {
            v[i] = f64::from(u8::from(on));
        }
        v[TYPE_BASE + self.change_type.index()] = 1.0;
        let counts = [
            self.layer_count,
            self.component_count,
            self.files_changed,
            self.lines_added,
            self.lines_deleted,
            self.total_churn,
        ];
        for (i, c) in counts.into_iter().enumerate() {
            v[COUNT_BASE + i] = c as f64;
        }
        v[25] = self.complexity_score;
        v[CONF_BASE + self.confidence.index()] = 1.0;
        v[REFINED] = f64::from(u8::from(self.refined_by_llm));
        v[30] = self.keyword_evidence;
        v[31] = self.strong_matches as f64;
        v[32] = self.message_length as f64;
        v[33] = self.merge_ref_count as f64;
        v
    }

    pub fn affected(&self) -> impl Iterator<Item = Category> + '_ {
        Category::ALL.into_iter().filter(|c| self.categories[c.index()])
    }
}

/// The per-commit feature vector, keyed by revision hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitFeatures {
    pub hash: String,
    pub values: Vec<f64>,
}

fn one_hot(values: &[f64]) -> Option<usize> {
    let mut hot = None;
    for (i, &v) in values.iter().enumerate() {
        if v == 1.0 {
            if hot.is_some() {
                return None;
            }
            hot = Some(i);
        } else if v != 0.0 {
            return None;
        }
    }
    hot
}

fn count(v: f64, name: &str) -> Result<u64> {
    if v >= 0.0 && v.fract() == 0.0 && v.is_finite() {
        Ok(v as u64)
    } else {
        Err(Error::data(format!("feature {name} = {v} is not a count")))
    }
}

impl CommitFeatures {
    /// Validates the layout invariants of a raw vector.
    pub fn from_vector(hash: &str, values: Vec<f64>) -> Result<Self> {
        let f = CommitFeatures {
            hash: hash.to_string(),
            values,
        };
        f.decode()?;
        Ok(f)
    }

    pub fn decode(&self) -> Result<DecodedFeatures> {
        let v = &self.values;
        if v.len() != FEATURE_COUNT {
            return Err(Error::data(format!("commit feature vector has {} slots, expected {FEATURE_COUNT}", v.len())));
        }
        let mut categories = [false; CATEGORY_COUNT];
        for (i, slot) in categories.iter_mut().enumerate() {
            *slot = match v[i] {
                0.0 => false,
                1.0 => true,
                other => return Err(Error::data(format!("{} = {other} is not binary", FEATURE_NAMES[i]))),
            };
        }
        let change_type = one_hot(&v[TYPE_BASE..COUNT_BASE])
            .map(|i| ChangeType::ALL[i])
            .ok_or_else(|| Error::data("change-type slots are not one-hot"))?;
        let confidence = one_hot(&v[CONF_BASE..REFINED])
            .map(|i| Confidence::ALL[i])
            .ok_or_else(|| Error::data("confidence slots are not one-hot"))?;
        let refined_by_llm = match v[REFINED] {
            0.0 => false,
            1.0 => true,
            other => return Err(Error::data(format!("refined_by_llm = {other} is not binary"))),
        };
        let c = |i: usize| count(v[i], FEATURE_NAMES[i]);
        let decoded = DecodedFeatures {
            categories,
            change_type,
            layer_count: c(19)?,
            component_count: c(20)?,
            files_changed: c(21)?,
            lines_added: c(22)?,
            lines_deleted: c(23)?,
            total_churn: c(24)?,
            complexity_score: v[25],
            confidence,
            refined_by_llm,
            keyword_evidence: v[30],
            strong_matches: c(31)?,
            message_length: c(32)?,
            merge_ref_count: c(33)?,
        };
        let layers = decoded.categories[..9].iter().filter(|b| **b).count() as u64;
        let comps = decoded.categories[9..].iter().filter(|b| **b).count() as u64;
        if layers != decoded.layer_count || comps != decoded.component_count {
            return Err(Error::data("layer/component counts disagree with indicators"));
        }
        if decoded.refined_by_llm && decoded.layer_count > 4 {
            return Err(Error::data("refined commit lists more than four layers"));
        }
        if !(decoded.complexity_score.is_finite() && decoded.keyword_evidence.is_finite() && decoded.keyword_evidence >= 0.0) {
            return Err(Error::data("non-finite or negative score slot"));
        }
        Ok(decoded)
    }

    pub fn layers(&self) -> Vec<Category> {
        Category::LAYERS
            .into_iter()
            .filter(|c| self.values.get(c.index()) == Some(&1.0))
            .collect()
    }

    pub fn is_refined(&self) -> bool {
        self.values.get(REFINED) == Some(&1.0)
    }
}

pub fn merge_ref_count(message: &str) -> u64 {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"!\d+").unwrap())
        .find_iter(message)
        .count() as u64
}

pub fn build_feature_vector(
    result: &CategorizationResult,
    commit: &CommitText,
    weights: &ComplexityWeights,
) -> CommitFeatures {
    let mut categories = [false; CATEGORY_COUNT];
    for c in &result.affected {
        categories[c.index()] = true;
    }
    let total_churn = commit.lines_added + commit.lines_deleted;
    let decoded = DecodedFeatures {
        categories,
        change_type: result.change_type,
        layer_count: result.layer_count as u64,
        component_count: result.component_count as u64,
        files_changed: commit.files_changed,
        lines_added: commit.lines_added,
        lines_deleted: commit.lines_deleted,
        total_churn,
        complexity_score: weights.score(total_churn, result.affected.len(), commit.files_changed),
        confidence: result.confidence,
        refined_by_llm: result.refined_by_llm,
        keyword_evidence: result.evidence,
        strong_matches: result.strong_matches as u64,
        message_length: commit.message.chars().count() as u64,
        merge_ref_count: merge_ref_count(&commit.message),
    };
    CommitFeatures {
        hash: commit.hash.clone(),
        values: decoded.encode().to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::commitcat::keyword::categorize_keywords;
    use crate::commitcat::rules::RuleSet;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn result_with(affected: &[Category]) -> CategorizationResult {
        let mut r = categorize_keywords(&CommitText::new("a", ""), &RuleSet::default());
        r.set_affected(affected.iter().copied().collect());
        r
    }

    #[test]
    fn layout_constants() {
        assert_eq!(FEATURE_NAMES.len(), 34);
        assert_eq!(FEATURE_NAMES[CONF_BASE], "confidence_high");
        assert_eq!(FEATURE_NAMES[REFINED], "refined_by_llm");
        assert_eq!(FEATURE_NAMES[COUNT_BASE], "layer_count");
        assert_eq!(binary_slots().len(), 23);
    }

    #[test]
    fn phy_mac_indicators() {
        let r = result_with(&[Category::Phy, Category::Mac]);
        let f = build_feature_vector(&r, &CommitText::new("a", "x"), &ComplexityWeights::default());
        assert_eq!(&f.values[..15], &[1., 1., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0., 0.]);
        assert_eq!(f.values[19], 2.0);
        assert_eq!(f.values[20], 0.0);
    }

    #[test]
    fn zero_churn_complexity_is_scope_only() {
        let r = result_with(&[Category::Phy, Category::Memory, Category::Timer]);
        let f = build_feature_vector(&r, &CommitText::new("a", "x"), &ComplexityWeights::default());
        assert_eq!(f.values[24], 0.0);
        assert!((f.values[25] - 0.3 * 3.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn complexity_formula_with_churn() {
        let r = result_with(&[Category::Phy]);
        let mut c = CommitText::new("a", "!12 and !13 merged");
        c.files_changed = 100;
        c.lines_added = 300;
        c.lines_deleted = 200;
        let f = build_feature_vector(&r, &c, &ComplexityWeights::default());
        let d = f.decode().unwrap();
        assert_eq!(d.total_churn, 500);
        assert!((d.complexity_score - (0.4 * 0.5 + 0.3 / 15.0 + 0.3)).abs() < 1e-15);
        assert_eq!(d.merge_ref_count, 2);
        assert_eq!(d.message_length, 18);
    }

    #[test]
    fn rejects_bad_vectors() {
        let good = build_feature_vector(&result_with(&[Category::Mac]), &CommitText::new("a", "x"), &ComplexityWeights::default());
        let mut short = good.values.clone();
        short.pop();
        assert!(CommitFeatures::from_vector("a", short).is_err());
        let mut two_types = good.values.clone();
        two_types[15] = 1.0;
        two_types[16] = 1.0;
        assert!(CommitFeatures::from_vector("a", two_types).is_err());
        let mut half = good.values.clone();
        half[3] = 0.5;
        assert!(CommitFeatures::from_vector("a", half).is_err());
    }

    fn arb_decoded() -> impl Strategy<Value = DecodedFeatures> {
        (
            proptest::array::uniform15(any::<bool>()),
            0usize..4,
            0usize..3,
            any::<bool>(),
            (0u64..500, 0u64..5000, 0u64..5000),
            (0.0f64..1.0, 0.0f64..40.0, 0u64..20, 0u64..2000, 0u64..10),
        )
            .prop_filter_map("refined implies <= 4 layers", |(cats, ty, conf, refined, churn, rest)| {
                let layers = cats[..9].iter().filter(|b| **b).count() as u64;
                if refined && layers > 4 {
                    return None;
                }
                Some(DecodedFeatures {
                    categories: cats,
                    change_type: ChangeType::ALL[ty],
                    layer_count: layers,
                    component_count: cats[9..].iter().filter(|b| **b).count() as u64,
                    files_changed: churn.0,
                    lines_added: churn.1,
                    lines_deleted: churn.2,
                    total_churn: churn.1 + churn.2,
                    complexity_score: rest.0,
                    confidence: Confidence::ALL[conf],
                    refined_by_llm: refined,
                    keyword_evidence: rest.1,
                    strong_matches: rest.2,
                    message_length: rest.3,
                    merge_ref_count: rest.4,
                })
            })
    }

    proptest! {
        #[test]
        fn decode_encode_identity(d in arb_decoded()) {
            let f = CommitFeatures::from_vector("ab", d.encode().to_vec()).unwrap();
            let back = f.decode().unwrap();
            prop_assert_eq!(&back, &d);
            prop_assert_eq!(back.encode().to_vec(), f.values.clone());
            let types: f64 = f.values[15..19].iter().sum();
            let confs: f64 = f.values[26..29].iter().sum();
            prop_assert_eq!(types, 1.0);
            prop_assert_eq!(confs, 1.0);
            let affected: BTreeSet<_> = back.affected().collect();
            for c in Category::ALL {
                prop_assert_eq!(f.values[c.index()] == 1.0, affected.contains(&c));
            }
        }
    }
}
