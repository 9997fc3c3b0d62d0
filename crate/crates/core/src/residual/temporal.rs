use std::collections::BTreeMap;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::DegradationLabel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemporalWindow {
    /// Faults later than this many seconds after deployment are ignored.
    pub length_s: f64,
    /// Decay rate per second.
    pub lambda: f64,
}

impl TemporalWindow {
    /// Weight halves at the window midpoint.
    pub fn halving_at_midpoint(length_s: f64) -> Self {
        TemporalWindow {
            length_s,
            lambda: std::f64::consts::LN_2 / (length_s / 2.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemporalConfig {
    pub windows: Vec<TemporalWindow>,
    pub threshold: f64,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        TemporalConfig {
            windows: [3_600.0, 86_400.0, 604_800.0]
                .into_iter()
                .map(TemporalWindow::halving_at_midpoint)
                .collect(),
            threshold: 1.0,
        }
    }
}

/// Sum over windows of exponentially decayed weights of the faults that
/// fall inside each window.
pub fn temporal_score(fault_delays_s: &[f64], windows: &[TemporalWindow]) -> Result<f64> {
    if let Some(d) = fault_delays_s.iter().find(|d| !(**d >= 0.0)) {
        return Err(Error::data(format!("negative time since deployment: {d}")));
    }
    Ok(windows
        .iter()
        .map(|w| {
            fault_delays_s
                .iter()
                .filter(|&&d| d <= w.length_s)
                .map(|&d| (-w.lambda * d).exp())
                .sum::<f64>()
        })
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalFlag {
    pub commit_hash: String,
    pub faults: usize,
    pub score: f64,
    pub flagged: bool,
}

/// Runs the comparison detector. A fault is any test with `rho < tau_rho`,
/// with no environment gating. Commits missing from `deployed_at` are
/// treated as deployed at their first test.
pub fn temporal_baseline_flags(
    labels: &[DegradationLabel],
    deployed_at: &BTreeMap<String, NaiveDateTime>,
    config: &TemporalConfig,
    tau_rho: f64,
) -> Result<Vec<TemporalFlag>> {
    let mut groups: BTreeMap<&str, Vec<&DegradationLabel>> = BTreeMap::new();
    for l in labels {
        groups.entry(l.commit_hash.as_str()).or_default().push(l);
    }
    groups
        .into_iter()
        .map(|(hash, ls)| {
            let deploy = match deployed_at.get(hash) {
                Some(t) => *t,
                None => ls.iter().map(|l| l.test.datetime()).min().expect("non-empty group"),
            };
            let delays: Vec<f64> = ls
                .iter()
                .filter(|l| l.rho < tau_rho)
                .map(|l| (l.test.datetime() - deploy).num_seconds() as f64)
                .collect();
            let score = temporal_score(&delays, &config.windows)
                .map_err(|e| Error::data(format!("commit {hash}: {e}")))?;
            Ok(TemporalFlag {
                commit_hash: hash.to_string(),
                faults: delays.len(),
                score,
                flagged: score >= config.threshold,
            })
        })
        .collect()
}
