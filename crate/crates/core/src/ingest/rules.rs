use std::path::Path;

use regex::Regex;

use crate::error::{Error, Result};
use crate::ingest::types::RadioKpm;

/// Aggregation applied to the matches of one rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    Mean,
    Count,
}

/// Unit tag carried by a rule. Percentages are rescaled to fractions and
/// kbps to Mbps; every other unit is taken as-is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Dbm,
    Db,
    Fraction,
    Percent,
    Mbps,
    Kbps,
    Count,
    None,
}

impl Unit {
    fn parse(s: &str) -> Option<Unit> {
        Some(match s.to_ascii_lowercase().as_str() {
            "dbm" => Unit::Dbm,
            "db" => Unit::Db,
            "fraction" => Unit::Fraction,
            "percent" | "%" => Unit::Percent,
            "mbps" => Unit::Mbps,
            "kbps" => Unit::Kbps,
            "count" => Unit::Count,
            "none" | "-" => Unit::None,
            _ => return None,
        })
    }

    pub fn scale(self) -> f64 {
        match self {
            Unit::Percent => 0.01,
            Unit::Kbps => 0.001,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParseRule {
    pub field: String,
    pub pattern: Regex,
    pub unit: Unit,
    pub kind: RuleKind,
}

/// Validated, ordered collection of log parse rules.
#[derive(Debug, Clone)]
pub struct ParseRuleSet {
    rules: Vec<ParseRule>,
}

const DEFAULT_RULES: &str = include_str!("../../rules/gnb_parse_rules.txt");

impl ParseRuleSet {
    pub fn default_rules() -> Self {
        Self::parse(DEFAULT_RULES).expect("shipped parse rules are valid")
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            rules.push(parse_line(line).map_err(|msg| {
                Error::config(format!("parse rule line {}: {msg}", lineno + 1))
            })?);
        }
        if rules.is_empty() {
            return Err(Error::config("parse rule set is empty"));
        }
        Ok(ParseRuleSet { rules })
    }

    pub fn rules(&self) -> &[ParseRule] {
        &self.rules
    }

    /// Distinct target fields in first-appearance order.
    pub fn fields(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rules {
            if !out.contains(&r.field.as_str()) {
                out.push(&r.field);
            }
        }
        out
    }
}

fn parse_line(line: &str) -> std::result::Result<ParseRule, String> {
    let mut tail = line.rsplitn(3, ',');
    let kind = tail.next().map(str::trim).unwrap_or_default();
    let unit = tail.next().map(str::trim).ok_or("expected 4 comma-separated entries")?;
    let head = tail.next().ok_or("expected 4 comma-separated entries")?;
    let (field, pattern) = head
        .split_once(',')
        .ok_or("expected 4 comma-separated entries")?;
    let field = field.trim();
    let pattern = pattern.trim();

    if field.is_empty()
        || !field
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
    {
        return Err(format!("invalid field name `{field}`"));
    }
    let kind = match kind {
        "mean" => RuleKind::Mean,
        "count" => RuleKind::Count,
        other => return Err(format!("unknown kind `{other}` (expected mean|count)")),
    };
    let unit = Unit::parse(unit).ok_or_else(|| format!("unknown unit `{unit}`"))?;
    let pattern = Regex::new(pattern).map_err(|e| format!("bad regex: {e}"))?;
    let groups = pattern.captures_len() - 1;
    match kind {
        RuleKind::Mean if groups != 1 => {
            return Err(format!("mean rule `{field}` needs exactly one capture group, has {groups}"))
        }
        RuleKind::Count if groups > 1 => {
            return Err(format!("count rule `{field}` has {groups} capture groups"))
        }
        _ => {}
    }
    if kind == RuleKind::Mean && !RadioKpm::is_field(field) {
        return Err(format!("`{field}` is not a numeric KPM; event fields must use kind count"));
    }
    Ok(ParseRule {
        field: field.to_string(),
        pattern,
        unit,
        kind,
    })
}
