//! Residual labeling, layer attribution, per-commit rollup and the
//! temporal-correlation detector used for comparison.

mod temporal;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use temporal::{temporal_baseline_flags, temporal_score, TemporalConfig, TemporalFlag, TemporalWindow};

use crate::commitcat::Category;
use crate::error::{Error, Result};
use crate::ingest::TestId;
use crate::stats::{cohens_d, mean, median, sample_variance, welch_t, WelchTest};
use crate::store::AnalysisRow;

/// Guard below which the expected efficiency is treated as zero.
pub const EPSILON: f64 = 1e-6;
/// Reporting cap for residual outliers. Labeling uses the raw value.
pub const RHO_REPORT_CAP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub tau_rho: f64,
    pub tau_exp: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            tau_rho: 0.9,
            tau_exp: 0.6,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tau_rho", self.tau_rho), ("tau_exp", self.tau_exp)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::config(format!("{name} = {v} must be in (0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gating {
    Normal,
    EnvironmentalLimit,
    Degraded,
}

impl Gating {
    pub fn name(self) -> &'static str {
        match self {
            Gating::Normal => "normal",
            Gating::EnvironmentalLimit => "environmental_limit",
            Gating::Degraded => "degraded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationLabel {
    pub test: TestId,
    pub commit_hash: String,
    pub rho: f64,
    pub eta_exp: f64,
    pub eta_test: f64,
    pub degraded: bool,
    pub gating: Gating,
    pub attributed_layers: Vec<Category>,
}

impl DegradationLabel {
    pub fn rho_reported(&self) -> f64 {
        self.rho.min(RHO_REPORT_CAP)
    }
}

pub fn residual(eta_test: f64, eta_exp: f64) -> Result<f64> {
    if !(eta_exp > EPSILON) {
        return Err(Error::data("undefined residual, expected efficiency ~0"));
    }
    Ok(eta_test / eta_exp)
}

pub fn gate(rho: f64, eta_exp: f64, th: &Thresholds) -> Gating {
    match (rho < th.tau_rho, eta_exp >= th.tau_exp) {
        (true, true) => Gating::Degraded,
        (true, false) => Gating::EnvironmentalLimit,
        (false, _) => Gating::Normal,
    }
}

/// Labels one test. `layers` are the layers its commit touches.
pub fn label_one(
    test: TestId,
    commit_hash: &str,
    eta_test: f64,
    eta_exp: f64,
    layers: &[Category],
    th: &Thresholds,
) -> Result<DegradationLabel> {
    let rho = residual(eta_test, eta_exp).map_err(|e| Error::data(format!("test {test}: {e}")))?;
    let gating = gate(rho, eta_exp, th);
    let degraded = gating == Gating::Degraded;
    Ok(DegradationLabel {
        test,
        commit_hash: commit_hash.to_string(),
        rho,
        eta_exp,
        eta_test,
        degraded,
        gating,
        attributed_layers: if degraded { layers.to_vec() } else { Vec::new() },
    })
}

/// Labels every row against its (cross-fitted) expected efficiency.
pub fn label(rows: &[AnalysisRow], eta_exp: &[f64], th: &Thresholds) -> Result<Vec<DegradationLabel>> {
    th.validate()?;
    if rows.len() != eta_exp.len() {
        return Err(Error::data("expected-efficiency column length differs from rows"));
    }
    rows.iter()
        .zip(eta_exp)
        .map(|(row, &exp)| {
            let eta = row
                .eta_test()
                .ok_or_else(|| Error::data(format!("test {}: no measured efficiency", row.id())))?;
            label_one(row.id(), &row.commit.hash, eta, exp, &row.layers(), th)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

fn group_stats(xs: &[f64]) -> Option<GroupStats> {
    if xs.is_empty() {
        return None;
    }
    Some(GroupStats {
        n: xs.len(),
        mean: mean(xs),
        std: if xs.len() > 1 { sample_variance(xs).sqrt() } else { 0.0 },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub fraction_below: f64,
    pub tau_rho: f64,
    pub degraded: Option<GroupStats>,
    pub not_degraded: Option<GroupStats>,
    pub welch: Option<WelchTest>,
    pub cohens_d: Option<f64>,
    /// Set when either group is too small (or degenerate) for the
    /// two-group statistics.
    pub two_group_omitted: bool,
}

pub fn residual_summary(labels: &[DegradationLabel], tau_rho: f64) -> Result<ResidualSummary> {
    if labels.is_empty() {
        return Err(Error::data("no labels to summarize"));
    }
    let rho: Vec<f64> = labels.iter().map(|l| l.rho).collect();
    let deg: Vec<f64> = labels.iter().filter(|l| l.degraded).map(|l| l.rho).collect();
    let rest: Vec<f64> = labels.iter().filter(|l| !l.degraded).map(|l| l.rho).collect();
    let (welch, d) = match (welch_t(&deg, &rest), cohens_d(&deg, &rest)) {
        (Ok(w), Ok(d)) => (Some(w), Some(d)),
        _ => (None, None),
    };
    Ok(ResidualSummary {
        n: rho.len(),
        mean: mean(&rho),
        median: median(&rho),
        std: if rho.len() > 1 { sample_variance(&rho).sqrt() } else { 0.0 },
        fraction_below: rho.iter().filter(|&&r| r < tau_rho).count() as f64 / rho.len() as f64,
        tau_rho,
        degraded: group_stats(&deg),
        not_degraded: group_stats(&rest),
        two_group_omitted: welch.is_none(),
        welch,
        cohens_d: d,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerImpactRow {
    pub layer: Category,
    pub degraded_cases: usize,
    pub mean_rho: f64,
    pub median_rho: f64,
    /// Sample standard deviation; 0 for a single case.
    pub std_rho: f64,
}

/// Statistics of degraded residuals per touched layer, most severe first.
/// A test on a multi-layer commit counts once for each layer.
pub fn layer_impact_table(labels: &[DegradationLabel]) -> Vec<LayerImpactRow> {
    let mut by_layer: BTreeMap<Category, Vec<f64>> = BTreeMap::new();
    for l in labels.iter().filter(|l| l.degraded) {
        for &layer in &l.attributed_layers {
            by_layer.entry(layer).or_default().push(l.rho);
        }
    }
    let mut rows: Vec<LayerImpactRow> = by_layer
        .into_iter()
        .map(|(layer, rho)| LayerImpactRow {
            layer,
            degraded_cases: rho.len(),
            mean_rho: mean(&rho),
            median_rho: median(&rho),
            std_rho: if rho.len() > 1 { sample_variance(&rho).sqrt() } else { 0.0 },
        })
        .collect();
    rows.sort_by(|a, b| a.mean_rho.total_cmp(&b.mean_rho).then(a.layer.cmp(&b.layer)));
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Normal,
    Degraded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitRollup {
    pub commit_hash: String,
    pub first_test: TestId,
    pub tests: usize,
    pub degraded: usize,
    pub environmental_limit: usize,
    pub min_rho: f64,
    pub mean_rho: f64,
    pub verdict: Verdict,
}

/// Per-commit summary; a commit is degraded once `min_degraded` of its
/// tests are. Ordered by first test time.
pub fn commit_rollup(labels: &[DegradationLabel], min_degraded: usize) -> Vec<CommitRollup> {
    let mut groups: BTreeMap<&str, Vec<&DegradationLabel>> = BTreeMap::new();
    for l in labels {
        groups.entry(l.commit_hash.as_str()).or_default().push(l);
    }
    let mut out: Vec<CommitRollup> = groups
        .into_iter()
        .map(|(hash, ls)| {
            let rho: Vec<f64> = ls.iter().map(|l| l.rho).collect();
            let degraded = ls.iter().filter(|l| l.degraded).count();
            CommitRollup {
                commit_hash: hash.to_string(),
                first_test: ls.iter().map(|l| l.test).min().expect("non-empty group"),
                tests: ls.len(),
                degraded,
                environmental_limit: ls.iter().filter(|l| l.gating == Gating::EnvironmentalLimit).count(),
                min_rho: rho.iter().copied().fold(f64::INFINITY, f64::min),
                mean_rho: mean(&rho),
                verdict: if degraded >= min_degraded.max(1) {
                    Verdict::Degraded
                } else {
                    Verdict::Normal
                },
            }
        })
        .collect();
    out.sort_by(|a, b| a.first_test.cmp(&b.first_test).then_with(|| a.commit_hash.cmp(&b.commit_hash)));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Fixed-width bins from 0 covering every reported (capped) residual.
pub fn residual_histogram(labels: &[DegradationLabel], width: f64) -> Result<Vec<HistogramBin>> {
    if !(width > 0.0) {
        return Err(Error::config("histogram bin width must be positive"));
    }
    let values: Vec<f64> = labels.iter().map(|l| l.rho_reported().max(0.0)).collect();
    let top = values.iter().copied().fold(0.0, f64::max);
    let n_bins = ((top / width).floor() as usize + 1).max(1);
    let mut bins: Vec<HistogramBin> = (0..n_bins)
        .map(|i| HistogramBin {
            lo: i as f64 * width,
            hi: (i + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for v in values {
        let i = ((v / width).floor() as usize).min(n_bins - 1);
        bins[i].count += 1;
    }
    Ok(bins)
}
