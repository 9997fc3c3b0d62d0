//! End-to-end steps shared by the command-line tool and the acceptance
//! suite: each step takes in-memory inputs and returns plain results;
//! `report` turns them into delimited files.

pub mod report;

use std::collections::BTreeMap;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::baseline::{
    chronological_split, cross_fit_predictions, default_environment_columns, evaluate, train_baseline,
    BaselineEvaluation, BaselineModel, FeatureMatrix, FieldSource, ForestParams,
};
use crate::commitcat::{categorize_commits, Category, CommitText, RefinementPolicy, RuleSet, FEATURE_NAMES};
use crate::error::{Error, Result};
use crate::ingest::{ingest_dataset, IngestOptions, ParseRuleSet, TestId};
use crate::residual::{
    commit_rollup, label, layer_impact_table, residual_histogram, residual_summary, temporal_baseline_flags,
    CommitRollup, DegradationLabel, HistogramBin, LayerImpactRow, ResidualSummary, TemporalConfig, TemporalFlag,
    Thresholds, Verdict,
};
use crate::risk::{
    default_risk_columns, evaluate_classifier, labeled_rows, oversample, train_risk, ClassifierMetrics, EvalSet,
    OversampleReport, RiskModel, RiskParams, SmoteParams, TrainingSet,
};
use crate::stats::{c_var, discretize, DiscretizedColumn, VarianceReport};
use crate::store::{assemble, AnalysisRow, Assembled};

/// A named group of columns treated as one factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bundle {
    pub name: String,
    pub columns: Vec<String>,
}

pub fn default_bundles() -> Vec<Bundle> {
    let cols = |c: &[&str]| c.iter().map(|s| s.to_string()).collect();
    vec![
        Bundle {
            name: "Channel".into(),
            columns: cols(&["rsrp", "sinr", "dl_bler", "ul_bler"]),
        },
        Bundle {
            name: "Load".into(),
            columns: cols(&["target_rate"]),
        },
        Bundle {
            name: "Code".into(),
            columns: FEATURE_NAMES[..Category::ALL.len()].iter().map(|s| s.to_string()).collect(),
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeConfig {
    pub targets: Vec<String>,
    pub bundles: Vec<Bundle>,
    pub n_bins: usize,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        DecomposeConfig {
            targets: vec!["throughput_efficiency".into()],
            bundles: default_bundles(),
            n_bins: 5,
        }
    }
}

fn bin_column(name: &str, values: &[f64], n_bins: usize) -> Result<DiscretizedColumn> {
    if values.iter().all(|v| *v == 0.0 || *v == 1.0) {
        return Ok(DiscretizedColumn::categorical(name, values.iter().map(|v| *v as usize).collect()));
    }
    match discretize(name, values, n_bins) {
        Ok(d) => Ok(d),
        Err(e) if e.to_string().contains("zero variance") => {
            log::warn!("column {name} is constant; treated as a single group");
            Ok(DiscretizedColumn::categorical(name, vec![0; values.len()]))
        }
        Err(e) => Err(e),
    }
}

/// Variance share of each bundle per target, both on its own and on top of
/// the other bundles.
pub fn decompose(rows: &[AnalysisRow], config: &DecomposeConfig) -> Result<Vec<VarianceReport>> {
    if config.bundles.is_empty() {
        return Err(Error::config("at least one factor bundle is required"));
    }
    let mut reports = Vec::new();
    for target in &config.targets {
        let kept: Vec<&AnalysisRow> = rows.iter().filter(|r| r.field(target).is_some_and(f64::is_finite)).collect();
        if kept.len() < 2 {
            return Err(Error::data(format!("target {target}: fewer than 2 rows with a value")));
        }
        if kept.len() < rows.len() {
            log::warn!("target {target}: {} rows without a value skipped", rows.len() - kept.len());
        }
        let y: Vec<f64> = kept.iter().map(|r| r.field(target).expect("filtered")).collect();
        let all_cols: Vec<String> = config.bundles.iter().flat_map(|b| b.columns.iter().cloned()).collect();
        let m = FeatureMatrix::from_records(&kept, &all_cols)?;
        let mut binned: BTreeMap<&str, DiscretizedColumn> = BTreeMap::new();
        for col in &all_cols {
            let values = m.column(col).expect("column present");
            binned.insert(col.as_str(), bin_column(col, &values, config.n_bins)?);
        }
        let labels_of = |b: &Bundle| -> Vec<&[usize]> {
            b.columns.iter().map(|c| binned[c.as_str()].labels.as_slice()).collect()
        };
        for (i, bundle) in config.bundles.iter().enumerate() {
            let p = labels_of(bundle);
            let others: Vec<&Bundle> = config.bundles.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, b)| b).collect();
            let q: Vec<&[usize]> = others.iter().flat_map(|b| labels_of(b)).collect();
            let mut marginal = c_var(&y, &p, &[])?;
            marginal.target = target.clone();
            marginal.factor = bundle.name.clone();
            reports.push(marginal);
            if !q.is_empty() {
                let mut conditional = c_var(&y, &p, &q)?;
                conditional.target = target.clone();
                conditional.factor = bundle.name.clone();
                conditional.conditioning = others.iter().map(|b| b.name.clone()).collect();
                reports.push(conditional);
            }
        }
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub columns: Vec<String>,
    pub forest: ForestParams,
    pub k_folds: usize,
    pub train_fraction: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            columns: default_environment_columns(),
            forest: ForestParams::default(),
            k_folds: 5,
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedRow {
    pub test: TestId,
    pub eta_exp: f64,
}

#[derive(Debug, Clone)]
pub struct BaselineRun {
    /// Fitted on the chronological training share; the one evaluated.
    pub model: BaselineModel,
    pub evaluation: BaselineEvaluation,
    pub n_train: usize,
    /// Cross-fitted expected efficiency for every usable row.
    pub expected: Vec<ExpectedRow>,
    /// Rows without a measured efficiency, left out.
    pub skipped: Vec<TestId>,
}

/// Rows with a finite measured efficiency, in chronological order.
fn usable(rows: &[AnalysisRow]) -> (Vec<&AnalysisRow>, Vec<TestId>) {
    let mut kept = Vec::new();
    let mut skipped = Vec::new();
    for r in rows {
        match r.eta_test() {
            Some(e) if e.is_finite() => kept.push(r),
            _ => skipped.push(r.id()),
        }
    }
    kept.sort_by_key(|r| r.id());
    (kept, skipped)
}

pub fn run_baseline(rows: &[AnalysisRow], config: &BaselineConfig) -> Result<BaselineRun> {
    let (kept, skipped) = usable(rows);
    if !skipped.is_empty() {
        log::warn!("{} tests without throughput efficiency skipped", skipped.len());
    }
    let x = FeatureMatrix::from_records(&kept, &config.columns)?;
    let y: Vec<f64> = kept.iter().map(|r| r.eta_test().expect("filtered")).collect();
    let rates: Vec<f64> = kept.iter().map(|r| r.value("target_rate").unwrap_or(f64::NAN)).collect();

    let (train_idx, test_idx) = chronological_split(&x, config.train_fraction)?;
    let pick = |v: &[f64], idx: &[usize]| idx.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let x_train = x.subset(&train_idx);
    let model = train_baseline(&x_train, &pick(&y, &train_idx), &config.forest)?;
    let test_rates = pick(&rates, &test_idx);
    let rates_known = test_rates.iter().all(|r| r.is_finite());
    let evaluation = evaluate(
        &model,
        &x.subset(&test_idx),
        &pick(&y, &test_idx),
        rates_known.then_some(test_rates.as_slice()),
    )?;

    let eta = cross_fit_predictions(&x, &y, config.k_folds, &config.forest)?;
    let expected = x.ids.iter().zip(eta).map(|(&test, eta_exp)| ExpectedRow { test, eta_exp }).collect();
    Ok(BaselineRun {
        model,
        evaluation,
        n_train: train_idx.len(),
        expected,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub thresholds: Thresholds,
    /// Degraded tests needed for a degraded commit verdict.
    pub min_degraded: usize,
    pub temporal: TemporalConfig,
    pub histogram_width: f64,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig {
            thresholds: Thresholds::default(),
            min_degraded: 2,
            temporal: TemporalConfig::default(),
            histogram_width: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub labels: Vec<DegradationLabel>,
    pub summary: ResidualSummary,
    pub layers: Vec<LayerImpactRow>,
    pub rollup: Vec<CommitRollup>,
    pub temporal: Vec<TemporalFlag>,
    pub histogram: Vec<HistogramBin>,
    /// Tests with no expected efficiency, left out.
    pub skipped: Vec<TestId>,
}

impl Analysis {
    pub fn degraded_commits(&self) -> Vec<&str> {
        self.rollup
            .iter()
            .filter(|r| r.verdict == Verdict::Degraded)
            .map(|r| r.commit_hash.as_str())
            .collect()
    }

    pub fn any_degraded(&self) -> bool {
        self.rollup.iter().any(|r| r.verdict == Verdict::Degraded)
    }
}

pub fn analyze(rows: &[AnalysisRow], expected: &[ExpectedRow], config: &AnalyzeConfig) -> Result<Analysis> {
    if config.min_degraded == 0 {
        return Err(Error::config("min_degraded must be >= 1"));
    }
    let by_test: BTreeMap<TestId, f64> = expected.iter().map(|e| (e.test, e.eta_exp)).collect();
    let (kept, mut skipped) = usable(rows);
    let mut joined = Vec::new();
    let mut eta = Vec::new();
    for r in kept {
        match by_test.get(&r.id()) {
            Some(&e) => {
                joined.push(r.clone());
                eta.push(e);
            }
            None => skipped.push(r.id()),
        }
    }
    skipped.sort();
    if !skipped.is_empty() {
        log::warn!("{} tests without expected efficiency or measurement skipped", skipped.len());
    }
    let labels = label(&joined, &eta, &config.thresholds)?;
    let deployed: BTreeMap<String, NaiveDateTime> = joined
        .iter()
        .filter_map(|r| r.commit.deployed_at.map(|t| (r.commit.hash.clone(), t)))
        .collect();
    Ok(Analysis {
        summary: residual_summary(&labels, config.thresholds.tau_rho)?,
        layers: layer_impact_table(&labels),
        rollup: commit_rollup(&labels, config.min_degraded),
        temporal: temporal_baseline_flags(&labels, &deployed, &config.temporal, config.thresholds.tau_rho)?,
        histogram: residual_histogram(&labels, config.histogram_width)?,
        labels,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskConfig {
    pub columns: Vec<String>,
    pub train_fraction: f64,
    pub threshold: f64,
    pub smote: SmoteParams,
    pub model: RiskParams,
}

impl Default for RiskConfig {
    fn default() -> Self {
        RiskConfig {
            columns: default_risk_columns(),
            train_fraction: 0.8,
            threshold: 0.5,
            smote: SmoteParams::default(),
            model: RiskParams::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RiskRun {
    pub model: RiskModel,
    pub oversampling: OversampleReport,
    pub metrics: ClassifierMetrics,
    pub n_train: usize,
    pub n_test: usize,
}

/// Chronological split, oversampling on the training share only, boosting,
/// then evaluation on the untouched later share.
pub fn run_risk(rows: &[AnalysisRow], labels: &[DegradationLabel], config: &RiskConfig) -> Result<RiskRun> {
    if !(config.threshold > 0.0 && config.threshold < 1.0) {
        return Err(Error::config("risk threshold must be in (0, 1)"));
    }
    let by_test: BTreeMap<TestId, bool> = labels.iter().map(|l| (l.test, l.degraded)).collect();
    let mut joined: Vec<(&AnalysisRow, bool)> =
        rows.iter().filter_map(|r| by_test.get(&r.id()).map(|&d| (r, d))).collect();
    joined.sort_by_key(|(r, _)| r.id());
    if joined.len() < 2 {
        return Err(Error::data("fewer than 2 labeled rows"));
    }
    let n_train = ((joined.len() as f64) * config.train_fraction).round() as usize;
    if n_train == 0 || n_train >= joined.len() {
        return Err(Error::config("train_fraction leaves an empty split"));
    }
    let (train, test) = joined.split_at(n_train);

    let sources: Vec<&AnalysisRow> = train.iter().map(|(r, _)| *r).collect();
    let flags: Vec<bool> = train.iter().map(|(_, d)| *d).collect();
    let imputation = FeatureMatrix::from_records(&sources, &config.columns)?.imputation;
    let set = TrainingSet {
        columns: config.columns.clone(),
        rows: labeled_rows(&sources, &flags, &config.columns, &imputation)?,
    };
    let (balanced, oversampling) = oversample(&set, &config.smote)?;
    let model = train_risk(&balanced, &config.model, &imputation)?;

    let test_sources: Vec<&AnalysisRow> = test.iter().map(|(r, _)| *r).collect();
    let test_flags: Vec<bool> = test.iter().map(|(_, d)| *d).collect();
    let eval = EvalSet::new(
        config.columns.clone(),
        labeled_rows(&test_sources, &test_flags, &config.columns, &imputation)?,
    )?;
    let metrics = evaluate_classifier(&model, &eval, config.threshold)?;
    Ok(RiskRun {
        model,
        oversampling,
        metrics,
        n_train: train.len(),
        n_test: test.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskScore {
    pub test: TestId,
    pub commit_hash: String,
    pub probability: f64,
    pub high_risk: bool,
}

pub fn score(model: &RiskModel, rows: &[AnalysisRow], threshold: f64) -> Result<Vec<RiskScore>> {
    let mut sorted: Vec<&AnalysisRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.id());
    sorted
        .into_iter()
        .map(|r| {
            let probability = model.predict_source(r)?;
            Ok(RiskScore {
                test: r.id(),
                commit_hash: r.commit.hash.clone(),
                probability,
                high_risk: probability >= threshold,
            })
        })
        .collect()
}

/// Ingests a dataset, categorizes commits with keywords only and joins the
/// two. Used by tests and examples that do not need refinement.
pub fn assemble_corpus(
    dataset: &std::path::Path,
    commits: &[CommitText],
    parse_rules: &ParseRuleSet,
    keyword_rules: &RuleSet,
) -> Result<Assembled> {
    let ingested = ingest_dataset(dataset, parse_rules, &IngestOptions::default())?;
    for issue in &ingested.issues {
        log::warn!("{issue:?}");
    }
    let records = categorize_commits(commits, keyword_rules, None, &RefinementPolicy::default());
    Ok(assemble(&ingested.records, &records))
}
