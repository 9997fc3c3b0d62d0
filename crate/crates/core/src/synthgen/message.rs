use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::commitcat::{categorize_keywords, Category, CommitText, RuleSet, Strength};
use crate::error::{Error, Result};

const VERBS: [&str; 8] = ["Fix", "Improve", "Add", "Clean up", "Rework", "Speed up", "Update", "Adjust"];

const FILLERS: [&str; 10] = [
    "handling",
    "for edge cases",
    "after review",
    "in the hot path",
    "and update comments",
    "when load is high",
    "per customer report",
    "behind a flag",
    "on startup",
    "and logging",
];

const MAX_ATTEMPTS: usize = 500;

/// Builds a commit message whose keyword categorization is exactly `planted`.
///
/// Each planted category contributes one to three of its keywords; the
/// message is redrawn until no other category crosses its threshold.
pub fn synthesize_message<R: Rng + ?Sized>(
    planted: &BTreeSet<Category>,
    rules: &RuleSet,
    rng: &mut R,
) -> Result<String> {
    for _ in 0..MAX_ATTEMPTS {
        let mut parts: Vec<String> = vec![VERBS.choose(rng).expect("non-empty").to_string()];
        for &cat in planted {
            let strong: Vec<&str> = rules
                .keywords_for(cat)
                .filter(|k| k.strength == Strength::Strong)
                .map(|k| k.keyword.as_str())
                .collect();
            let any: Vec<&str> = rules.keywords_for(cat).map(|k| k.keyword.as_str()).collect();
            let pool = if strong.is_empty() { &any } else { &strong };
            let Some(first) = pool.choose(rng) else {
                return Err(Error::config(format!("no keywords for category {cat}")));
            };
            parts.push(first.to_string());
            for _ in 0..rng.random_range(0..=2) {
                parts.push(any.choose(rng).expect("non-empty").to_string());
            }
        }
        parts.push(FILLERS.choose(rng).expect("non-empty").to_string());
        let message = parts.join(" ");
        let got = categorize_keywords(&CommitText::new("", &message), rules).affected;
        if &got == planted {
            return Ok(message);
        }
    }
    Err(Error::config(format!(
        "could not build a message categorized as exactly {:?}",
        planted.iter().map(|c| c.name()).collect::<Vec<_>>()
    )))
}
