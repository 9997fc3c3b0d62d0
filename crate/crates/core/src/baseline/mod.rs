//! Environment baseline: a random forest mapping channel and load features
//! to the throughput efficiency a test should reach without code effects.

mod matrix;
mod metrics;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

pub use matrix::{chronological_order, default_environment_columns, FeatureMatrix, FieldSource};
pub use metrics::{regression_metrics, BaselineEvaluation, RegressionMetrics};

use crate::error::{Error, Result};
use crate::tree::{read_model, weighted_mean, write_model, TrainSet, Tree, TreeParams};

pub const MODEL_SCHEMA_VERSION: u32 = 1;
pub const MODEL_KIND: &str = "random_forest_regressor";
pub const MIN_TRAIN_ROWS: usize = 50;
pub const MIN_FOLD_ROWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Fraction of features tried per split; `None` means `sqrt(p) / p`.
    pub feature_fraction: Option<f64>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: 8,
            min_samples_leaf: 1,
            feature_fraction: None,
            seed: 0,
        }
    }
}

impl ForestParams {
    fn mtry(&self, p: usize) -> usize {
        let frac = self.feature_fraction.unwrap_or(1.0 / (p as f64).sqrt());
        ((frac * p as f64).round() as usize).clamp(1, p.max(1))
    }

    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 {
            return Err(Error::config("n_trees and max_depth must be positive"));
        }
        if let Some(f) = self.feature_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::config("feature_fraction must be in (0, 1]"));
            }
        }
        Ok(())
    }
}

/// Per-tree seed from the master seed; fixed arithmetic so the forest does
/// not depend on thread scheduling.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    master ^ (index.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Anything that maps feature rows to predictions. Lets the evaluation
/// harness compare other regressors against the forest.
pub trait Regressor {
    fn columns(&self) -> &[String];
    fn predict_row(&self, row: &[f64]) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub kind: String,
    pub schema_version: u32,
    pub params: ForestParams,
    pub columns: Vec<String>,
    pub imputation: BTreeMap<String, f64>,
    pub n_train: usize,
    pub target_min: f64,
    pub target_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub header: ModelHeader,
    pub trees: Vec<Tree>,
}

impl Regressor for BaselineModel {
    fn columns(&self) -> &[String] {
        &self.header.columns
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        (sum / self.trees.len() as f64).max(0.0)
    }
}

/// Predicts the training mean everywhere; the floor any model must beat.
#[derive(Debug, Clone)]
pub struct MeanRegressor {
    pub columns: Vec<String>,
    pub mean: f64,
}

impl Regressor for MeanRegressor {
    fn columns(&self) -> &[String] {
        &self.columns
    }

    fn predict_row(&self, _row: &[f64]) -> f64 {
        self.mean
    }
}

pub fn train_baseline(x: &FeatureMatrix, y: &[f64], params: &ForestParams) -> Result<BaselineModel> {
    params.validate()?;
    let n = x.n_rows();
    if y.len() != n {
        return Err(Error::data("target length differs from feature rows"));
    }
    if n < MIN_TRAIN_ROWS {
        return Err(Error::data(format!("baseline needs at least {MIN_TRAIN_ROWS} rows, got {n}")));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("non-finite target value"));
    }
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if lo == hi {
        return Err(Error::data("degenerate target"));
    }

    let weight = vec![1.0; n];
    let data = TrainSet {
        x: &x.values,
        target: y,
        weight: &weight,
    };
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        mtry: params.mtry(x.columns.len()),
    };
    let trees: Vec<Tree> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, t as u64));
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            Tree::grow(&data, rows, &tree_params, &mut rng, &|r| weighted_mean(&data, r))
        })
        .collect();

    Ok(BaselineModel {
        header: ModelHeader {
            kind: MODEL_KIND.into(),
            schema_version: MODEL_SCHEMA_VERSION,
            params: *params,
            columns: x.columns.clone(),
            imputation: x.imputation.clone(),
            n_train: n,
            target_min: lo,
            target_max: hi,
        },
        trees,
    })
}

impl BaselineModel {
    /// Expected efficiency for one record; missing fields fall back to the
    /// training medians.
    pub fn predict_record<T: FieldSource>(&self, record: &T) -> Result<f64> {
        let row = self
            .header
            .columns
            .iter()
            .map(|c| match record.value(c) {
                Some(v) if v.is_finite() => Ok(v),
                _ => self
                    .header
                    .imputation
                    .get(c)
                    .copied()
                    .ok_or_else(|| Error::data(format!("test {}: column {c} missing and not imputable", record.row_id()))),
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(self.predict_row(&row))
    }

    pub fn predict_matrix(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        check_columns(self, x)?;
        Ok(x.values.par_iter().map(|r| self.predict_row(r)).collect())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Header line first, then one tree per line.
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        write_model(w, &self.header, &self.trees)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let (header, trees): (ModelHeader, Vec<Tree>) = read_model(r)?;
        if header.kind != MODEL_KIND || header.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::data(format!(
                "unsupported model file: {} v{}",
                header.kind, header.schema_version
            )));
        }
        if trees.len() != header.params.n_trees {
            return Err(Error::data("model file truncated"));
        }
        Ok(BaselineModel { header, trees })
    }

    /// SHA-256 over the serialized model.
    pub fn hash(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        hex::encode(Sha256::digest(&buf))
    }
}

fn check_columns<R: Regressor + ?Sized>(model: &R, x: &FeatureMatrix) -> Result<()> {
    if model.columns() != x.columns.as_slice() {
        return Err(Error::data("feature columns differ from the model's columns"));
    }
    Ok(())
}

/// Metrics on a held-out matrix. When `target_rates` is given the errors are
/// also reported in Mbps (efficiency times target rate).
pub fn evaluate<R: Regressor + Sync + ?Sized>(
    model: &R,
    x_test: &FeatureMatrix,
    y_test: &[f64],
    target_rates: Option<&[f64]>,
) -> Result<BaselineEvaluation> {
    check_columns(model, x_test)?;
    if y_test.is_empty() {
        return Err(Error::data("empty test set"));
    }
    if y_test.len() != x_test.n_rows() {
        return Err(Error::data("target length differs from feature rows"));
    }
    let pred: Vec<f64> = x_test.values.iter().map(|r| model.predict_row(r)).collect();
    let efficiency = regression_metrics(y_test, &pred)?;
    let mbps = match target_rates {
        Some(rates) if rates.len() == y_test.len() => {
            let ym: Vec<f64> = y_test.iter().zip(rates).map(|(y, r)| y * r).collect();
            let pm: Vec<f64> = pred.iter().zip(rates).map(|(p, r)| p * r).collect();
            Some(regression_metrics(&ym, &pm)?)
        }
        Some(_) => return Err(Error::data("target rate column length mismatch")),
        None => None,
    };
    Ok(BaselineEvaluation {
        efficiency,
        mbps,
        n_test: y_test.len(),
    })
}

/// Splits row indices into contiguous, nearly equal blocks in chronological
/// order.
pub fn chronological_folds(x: &FeatureMatrix, k: usize) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::config("k_folds must be >= 2"));
    }
    let order = chronological_order(&x.ids);
    let n = order.len();
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = n / k + usize::from(f < n % k);
        if len < MIN_FOLD_ROWS {
            return Err(Error::data(format!("fold {} has {len} rows, need at least {MIN_FOLD_ROWS}", f + 1)));
        }
        folds.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

/// Out-of-fold expected efficiency: every row is predicted by a forest that
/// never saw its chronological block.
pub fn cross_fit_predictions(x: &FeatureMatrix, y: &[f64], k_folds: usize, params: &ForestParams) -> Result<Vec<f64>> {
    if y.len() != x.n_rows() {
        return Err(Error::data("target length differs from feature rows"));
    }
    let folds = chronological_folds(x, k_folds)?;
    let mut out = vec![f64::NAN; y.len()];
    for (f, held_out) in folds.iter().enumerate() {
        let mut in_fold = vec![false; y.len()];
        for &i in held_out {
            in_fold[i] = true;
        }
        let train_idx: Vec<usize> = (0..y.len()).filter(|&i| !in_fold[i]).collect();
        let xt = x.subset(&train_idx);
        let yt: Vec<f64> = train_idx.iter().map(|&i| y[i]).collect();
        let fold_params = ForestParams {
            seed: derive_seed(params.seed, 1_000_000 + f as u64),
            ..*params
        };
        let model = train_baseline(&xt, &yt, &fold_params)?;
        for &i in held_out {
            out[i] = model.predict_row(&x.values[i]);
        }
    }
    Ok(out)
}

/// Indices of the earliest `train_fraction` of rows and of the rest.
pub fn chronological_split(x: &FeatureMatrix, train_fraction: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config("train fraction must be in (0, 1)"));
    }
    let order = chronological_order(&x.ids);
    let cut = (order.len() as f64 * train_fraction).round() as usize;
    if cut == 0 || cut == order.len() {
        return Err(Error::data("split leaves an empty side"));
    }
    Ok((order[..cut].to_vec(), order[cut..].to_vec()))
}

#[cfg(test)]
mod tests;
