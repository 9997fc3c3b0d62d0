use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::rules::{ParseRuleSet, RuleKind};
use crate::ingest::types::{EventCounts, RadioKpm, CORE_EVENTS};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LogParse {
    pub radio: RadioKpm,
    pub events: EventCounts,
    /// Fields whose aggregate fell outside the physical range and were dropped.
    pub rejected: Vec<String>,
}

#[derive(Default, Clone, Copy)]
struct Acc {
    sum: f64,
    n: u64,
}

pub fn parse_gnb_log(path: &Path, rules: &ParseRuleSet) -> Result<LogParse> {
    parse_gnb_logs(&[path], rules)
}

/// Applies the rule set to every line of the given logs, treated as one stream.
pub fn parse_gnb_logs<P: AsRef<Path>>(paths: &[P], rules: &ParseRuleSet) -> Result<LogParse> {
    let mut texts = Vec::with_capacity(paths.len());
    for p in paths {
        let p = p.as_ref();
        let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
        texts.push(decode_log(&bytes).map_err(|e| Error::data(format!("{}: {e}", p.display())))?);
    }
    Ok(parse_gnb_text(texts.iter().map(String::as_str), rules))
}

fn decode_log(bytes: &[u8]) -> Result<String> {
    if bytes.contains(&0) {
        return Err(Error::data("unreadable log"));
    }
    String::from_utf8(bytes.to_vec()).map_err(|_| Error::data("unreadable log"))
}

pub fn parse_gnb_text<'a>(texts: impl IntoIterator<Item = &'a str>, rules: &ParseRuleSet) -> LogParse {
    let mut means: BTreeMap<&str, Acc> = BTreeMap::new();
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for rule in rules.rules() {
        match rule.kind {
            RuleKind::Mean => {
                means.entry(&rule.field).or_default();
            }
            RuleKind::Count => {
                counts.entry(&rule.field).or_default();
            }
        }
    }

    for text in texts {
        for line in text.lines() {
            for rule in rules.rules() {
                match rule.kind {
                    RuleKind::Count => {
                        if rule.pattern.is_match(line) {
                            *counts.get_mut(rule.field.as_str()).unwrap() += 1;
                        }
                    }
                    RuleKind::Mean => {
                        if let Some(caps) = rule.pattern.captures(line) {
                            if let Ok(v) = caps[1].parse::<f64>() {
                                if v.is_finite() {
                                    let acc = means.get_mut(rule.field.as_str()).unwrap();
                                    acc.sum += v * rule.unit.scale();
                                    acc.n += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    let mut out = LogParse::default();
    for e in CORE_EVENTS {
        out.events.insert(e.to_string(), 0);
    }
    for (field, count) in counts {
        if let Some(slot) = out.radio.slot(field) {
            *slot = Some(count as f64);
        } else {
            out.events.insert(field.to_string(), count);
        }
    }
    for (field, acc) in means {
        if acc.n == 0 {
            continue;
        }
        let mean = acc.sum / acc.n as f64;
        if RadioKpm::in_range(field, mean) {
            *out.radio.slot(field).expect("mean rules target radio fields") = Some(mean);
        } else {
            out.rejected.push(field.to_string());
        }
    }
    out
}
