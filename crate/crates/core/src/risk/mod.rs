//! Degradation-risk classifier: SMOTE oversampling, a gradient-boosted tree
//! classifier with balanced class weights, and imbalance-aware metrics.

mod metrics;
mod smote;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use metrics::{roc_auc, ClassMetrics, ClassifierMetrics, Confusion};
pub use smote::{nearest_neighbors, round_binary, smote_oversample, SyntheticSample};

use crate::baseline::{default_environment_columns, FieldSource};
use crate::commitcat::{binary_slots, FEATURE_NAMES};
use crate::error::{Error, Result};
use crate::ingest::TestId;
use crate::tree::{read_model, write_model, TrainSet, Tree, TreeParams};

pub const RISK_SCHEMA_VERSION: u32 = 1;
pub const RISK_MODEL_KIND: &str = "gradient_boosted_classifier";

/// Environment columns followed by every commit feature slot.
pub fn default_risk_columns() -> Vec<String> {
    let mut cols = default_environment_columns();
    cols.extend(FEATURE_NAMES.iter().map(|s| s.to_string()));
    cols
}

/// Positions of binary commit-feature slots within `columns`.
pub fn binary_columns(columns: &[String]) -> Vec<usize> {
    let names: Vec<&str> = binary_slots().into_iter().map(|i| FEATURE_NAMES[i]).collect();
    columns
        .iter()
        .enumerate()
        .filter(|(_, c)| names.contains(&c.as_str()))
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Observed { test: TestId },
    Synthetic { base: TestId, neighbor: TestId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRow {
    pub values: Vec<f64>,
    pub degraded: bool,
    pub provenance: Provenance,
}

impl LabeledRow {
    pub fn is_synthetic(&self) -> bool {
        matches!(self.provenance, Provenance::Synthetic { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub columns: Vec<String>,
    pub rows: Vec<LabeledRow>,
}

/// Held-out rows. Construction refuses oversampled rows, so synthetic
/// samples can never be scored.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    columns: Vec<String>,
    rows: Vec<LabeledRow>,
}

impl EvalSet {
    pub fn new(columns: Vec<String>, rows: Vec<LabeledRow>) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.is_synthetic()) {
            return Err(Error::data(format!("synthetic row {:?} cannot enter an evaluation set", r.provenance)));
        }
        Ok(EvalSet { columns, rows })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[LabeledRow] {
        &self.rows
    }
}

/// Builds labeled rows from any field source, imputing missing values.
pub fn labeled_rows<T: FieldSource>(
    sources: &[&T],
    degraded: &[bool],
    columns: &[String],
    imputation: &BTreeMap<String, f64>,
) -> Result<Vec<LabeledRow>> {
    if sources.len() != degraded.len() {
        return Err(Error::data("label count differs from rows"));
    }
    let m = crate::baseline::FeatureMatrix::with_imputation(sources, columns, imputation)?;
    Ok(m.values
        .into_iter()
        .zip(m.ids)
        .zip(degraded)
        .map(|((values, test), &d)| LabeledRow {
            values,
            degraded: d,
            provenance: Provenance::Observed { test },
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoteParams {
    pub k_neighbors: usize,
    /// Target minority:majority ratio after oversampling.
    pub ratio: f64,
    pub seed: u64,
}

impl Default for SmoteParams {
    fn default() -> Self {
        SmoteParams {
            k_neighbors: 5,
            ratio: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OversampleReport {
    pub minority_before: usize,
    pub majority: usize,
    pub synthetic: usize,
    /// Neighbor count actually used (lowered when the minority is small).
    pub k_used: usize,
}

/// Appends SMOTE samples of the degraded class to a training set.
/// `k` shrinks to `minority - 1` when the minority class is too small for
/// the configured value.
pub fn oversample(set: &TrainingSet, params: &SmoteParams) -> Result<(TrainingSet, OversampleReport)> {
    if set.rows.iter().any(LabeledRow::is_synthetic) {
        return Err(Error::data("training set is already oversampled"));
    }
    let minority: Vec<&LabeledRow> = set.rows.iter().filter(|r| r.degraded).collect();
    let majority = set.rows.len() - minority.len();
    if minority.len() < 2 {
        return Err(Error::data(format!("insufficient minority samples: {}", minority.len())));
    }
    let k = params.k_neighbors.min(minority.len() - 1);
    if k < params.k_neighbors {
        log::warn!("only {} degraded rows; SMOTE k lowered to {k}", minority.len());
    }
    let target = (majority as f64 * params.ratio).round() as usize;
    let values: Vec<Vec<f64>> = minority.iter().map(|r| r.values.clone()).collect();
    let synth = smote_oversample(&values, k, target, &binary_columns(&set.columns), params.seed)?;
    let id = |i: usize| match minority[i].provenance {
        Provenance::Observed { test } => test,
        Provenance::Synthetic { base, .. } => base,
    };
    let mut rows = set.rows.clone();
    let report = OversampleReport {
        minority_before: minority.len(),
        majority,
        synthetic: synth.len(),
        k_used: k,
    };
    rows.extend(synth.into_iter().map(|s| LabeledRow {
        values: s.values,
        degraded: true,
        provenance: Provenance::Synthetic {
            base: id(s.base),
            neighbor: id(s.neighbor),
        },
    }));
    Ok((
        TrainingSet {
            columns: set.columns.clone(),
            rows,
        },
        report,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    /// Weight classes inversely to their frequency.
    pub balanced: bool,
    /// Fraction of features tried per split; `None` tries all.
    pub feature_fraction: Option<f64>,
    pub seed: u64,
}

impl Default for RiskParams {
    fn default() -> Self {
        RiskParams {
            n_estimators: 400,
            max_depth: 4,
            learning_rate: 0.1,
            min_samples_leaf: 5,
            balanced: true,
            feature_fraction: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskHeader {
    pub kind: String,
    pub schema_version: u32,
    pub params: RiskParams,
    pub columns: Vec<String>,
    pub imputation: BTreeMap<String, f64>,
    /// Weights of the negative and positive class.
    pub class_weights: [f64; 2],
    pub init_score: f64,
    pub n_train: usize,
    pub n_synthetic: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskModel {
    pub header: RiskHeader,
    pub trees: Vec<Tree>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Fits logistic-loss boosting with Newton leaf values. Rows may include
/// synthetic samples; `imputation` is stored for scoring raw records.
pub fn train_risk(set: &TrainingSet, params: &RiskParams, imputation: &BTreeMap<String, f64>) -> Result<RiskModel> {
    if params.n_estimators == 0 || params.max_depth == 0 || !(params.learning_rate > 0.0) {
        return Err(Error::config("n_estimators, max_depth and learning_rate must be positive"));
    }
    let n = set.rows.len();
    let n_pos = set.rows.iter().filter(|r| r.degraded).count();
    if n_pos == 0 || n_pos == n {
        return Err(Error::data("risk training needs both classes"));
    }
    let p = set.columns.len();
    if set.rows.iter().any(|r| r.values.len() != p || r.values.iter().any(|v| !v.is_finite())) {
        return Err(Error::data("risk rows must be finite and match the column count"));
    }
    let class_weights = if params.balanced {
        [n as f64 / (2.0 * (n - n_pos) as f64), n as f64 / (2.0 * n_pos as f64)]
    } else {
        [1.0, 1.0]
    };
    let x: Vec<Vec<f64>> = set.rows.iter().map(|r| r.values.clone()).collect();
    let y: Vec<f64> = set.rows.iter().map(|r| f64::from(u8::from(r.degraded))).collect();
    let w: Vec<f64> = set.rows.iter().map(|r| class_weights[usize::from(r.degraded)]).collect();

    let wp: f64 = y.iter().zip(&w).map(|(y, w)| y * w).sum();
    let wn: f64 = w.iter().sum::<f64>() - wp;
    let init_score = (wp / wn).ln();

    let mtry = match params.feature_fraction {
        Some(f) if f > 0.0 && f <= 1.0 => ((f * p as f64).round() as usize).max(1),
        Some(_) => return Err(Error::config("feature_fraction must be in (0, 1]")),
        None => p,
    };
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        mtry,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut score = vec![init_score; n];
    let mut trees = Vec::with_capacity(params.n_estimators);
    let all: Vec<usize> = (0..n).collect();
    for _ in 0..params.n_estimators {
        let prob: Vec<f64> = score.iter().map(|&s| sigmoid(s)).collect();
        let residual: Vec<f64> = y.iter().zip(&prob).map(|(y, p)| y - p).collect();
        let data = TrainSet {
            x: &x,
            target: &residual,
            weight: &w,
        };
        let newton = |rows: &[usize]| {
            let (mut num, mut den) = (0.0, 0.0);
            for &i in rows {
                num += w[i] * residual[i];
                den += w[i] * prob[i] * (1.0 - prob[i]);
            }
            if den < 1e-12 {
                0.0
            } else {
                params.learning_rate * num / den
            }
        };
        let tree = Tree::grow(&data, all.clone(), &tree_params, &mut rng, &newton);
        for (s, row) in score.iter_mut().zip(&x) {
            *s += tree.predict(row);
        }
        trees.push(tree);
    }
    Ok(RiskModel {
        header: RiskHeader {
            kind: RISK_MODEL_KIND.into(),
            schema_version: RISK_SCHEMA_VERSION,
            params: *params,
            columns: set.columns.clone(),
            imputation: imputation.clone(),
            class_weights,
            init_score,
            n_train: n,
            n_synthetic: set.rows.iter().filter(|r| r.is_synthetic()).count(),
        },
        trees,
    })
}

impl RiskModel {
    /// Degradation probability for one feature row. Leaf values already
    /// include the learning rate.
    pub fn predict_values(&self, row: &[f64]) -> f64 {
        let z = self.header.init_score + self.trees.iter().map(|t| t.predict(row)).sum::<f64>();
        sigmoid(z)
    }

    pub fn predict_source<T: FieldSource>(&self, source: &T) -> Result<f64> {
        let row = self
            .header
            .columns
            .iter()
            .map(|c| match source.value(c) {
                Some(v) if v.is_finite() => Ok(v),
                _ => self
                    .header
                    .imputation
                    .get(c)
                    .copied()
                    .ok_or_else(|| Error::data(format!("test {}: column {c} missing", source.row_id()))),
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(self.predict_values(&row))
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        write_model(w, &self.header, &self.trees)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let (header, trees): (RiskHeader, Vec<Tree>) = read_model(r)?;
        if header.kind != RISK_MODEL_KIND || header.schema_version != RISK_SCHEMA_VERSION {
            return Err(Error::data(format!(
                "unsupported model file: {} v{}",
                header.kind, header.schema_version
            )));
        }
        if trees.len() != header.params.n_estimators {
            return Err(Error::data("model file truncated"));
        }
        Ok(RiskModel { header, trees })
    }

    pub fn hash(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        hex::encode(Sha256::digest(&buf))
    }
}

pub fn predict_risk(model: &RiskModel, row: &[f64]) -> f64 {
    model.predict_values(row)
}

/// Scores an evaluation set at `threshold` and reports both classes.
pub fn evaluate_classifier(model: &RiskModel, eval: &EvalSet, threshold: f64) -> Result<ClassifierMetrics> {
    if eval.columns() != model.header.columns.as_slice() {
        return Err(Error::data("evaluation columns differ from the model's columns"));
    }
    if eval.rows().is_empty() {
        return Err(Error::data("empty evaluation set"));
    }
    let scores: Vec<f64> = eval.rows().iter().map(|r| model.predict_values(&r.values)).collect();
    let truth: Vec<bool> = eval.rows().iter().map(|r| r.degraded).collect();
    let predicted: Vec<bool> = scores.iter().map(|&s| s >= threshold).collect();
    let mut m = ClassifierMetrics::from_confusion(Confusion::from_predictions(&truth, &predicted));
    m.auc = roc_auc(&scores, &truth);
    Ok(m)
}
