use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub r2: f64,
    pub mae: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineEvaluation {
    pub efficiency: RegressionMetrics,
    /// Same errors after scaling by each test's target rate.
    pub mbps: Option<RegressionMetrics>,
    pub n_test: usize,
}

/// R² is `1 - SS_res / SS_tot`; a constant truth gives `-inf` or NaN and is
/// rejected.
pub fn regression_metrics(truth: &[f64], pred: &[f64]) -> Result<RegressionMetrics> {
    if truth.is_empty() || truth.len() != pred.len() {
        return Err(Error::data("metrics need equal-length, non-empty columns"));
    }
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let (mut ss_res, mut ss_tot, mut abs) = (0.0, 0.0, 0.0);
    for (&t, &p) in truth.iter().zip(pred) {
        ss_res += (t - p) * (t - p);
        ss_tot += (t - mean) * (t - mean);
        abs += (t - p).abs();
    }
    if ss_tot == 0.0 {
        return Err(Error::data("R² undefined for a constant test target"));
    }
    Ok(RegressionMetrics {
        r2: 1.0 - ss_res / ss_tot,
        mae: abs / n,
        rmse: (ss_res / n).sqrt(),
    })
}
