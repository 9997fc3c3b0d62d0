//! Delimited report files. Every table is a header plus one row per item,
//! written in a fixed order so reruns are byte-identical.

use std::path::Path;

use serde::Serialize;

use super::{Analysis, BaselineRun, ExpectedRow, RiskRun, RiskScore};
use crate::error::{Error, Result};
use crate::ingest::TestId;
use crate::residual::ResidualSummary;
use crate::risk::ClassMetrics;
use crate::stats::VarianceReport;

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::data(format!("{}: {other:?}", path.display())),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Serialize)]
struct KeyValue {
    key: String,
    value: String,
}

fn kv(key: &str, value: impl ToString) -> KeyValue {
    KeyValue {
        key: key.to_string(),
        value: value.to_string(),
    }
}

#[derive(Serialize)]
struct VarianceRow<'a> {
    target: &'a str,
    factor: &'a str,
    conditioning: String,
    score: f64,
    n: usize,
    groups: usize,
}

pub fn write_variance(path: &Path, reports: &[VarianceReport]) -> Result<()> {
    let rows: Vec<VarianceRow> = reports
        .iter()
        .map(|r| VarianceRow {
            target: &r.target,
            factor: &r.factor,
            conditioning: r.conditioning.join(";"),
            score: r.score,
            n: r.n,
            groups: r.group_counts.len(),
        })
        .collect();
    write_csv(path, &rows)
}

#[derive(Serialize)]
struct MetricRow {
    unit: &'static str,
    r2: f64,
    mae: f64,
    rmse: f64,
    n_train: usize,
    n_test: usize,
}

pub fn write_baseline_metrics(path: &Path, run: &BaselineRun) -> Result<()> {
    let e = &run.evaluation;
    let mut rows = vec![MetricRow {
        unit: "efficiency",
        r2: e.efficiency.r2,
        mae: e.efficiency.mae,
        rmse: e.efficiency.rmse,
        n_train: run.n_train,
        n_test: e.n_test,
    }];
    if let Some(m) = e.mbps {
        rows.push(MetricRow {
            unit: "mbps",
            r2: m.r2,
            mae: m.mae,
            rmse: m.rmse,
            n_train: run.n_train,
            n_test: e.n_test,
        });
    }
    write_csv(path, &rows)
}

pub fn write_expected(path: &Path, expected: &[ExpectedRow]) -> Result<()> {
    write_csv(path, expected)
}

pub fn read_expected(path: &Path) -> Result<Vec<ExpectedRow>> {
    #[derive(serde::Deserialize)]
    struct Row {
        test: String,
        eta_exp: f64,
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize::<Row>()
        .map(|row| {
            let row = row?;
            Ok(ExpectedRow {
                test: row.test.parse::<TestId>()?,
                eta_exp: row.eta_exp,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct LabelRow<'a> {
    test: String,
    commit_hash: &'a str,
    rho: f64,
    rho_reported: f64,
    eta_exp: f64,
    eta_test: f64,
    degraded: bool,
    gating: &'static str,
    attributed_layers: String,
}

#[derive(Serialize)]
struct LayerRow {
    layer: &'static str,
    degraded_cases: usize,
    mean_rho: f64,
    median_rho: f64,
    std_rho: f64,
}

#[derive(Serialize)]
struct RollupRow<'a> {
    commit_hash: &'a str,
    first_test: String,
    tests: usize,
    degraded: usize,
    environmental_limit: usize,
    min_rho: f64,
    mean_rho: f64,
    verdict: &'static str,
}

#[derive(Serialize)]
struct TemporalRow<'a> {
    commit_hash: &'a str,
    faults: usize,
    score: f64,
    temporal_flagged: bool,
    rollup_degraded: bool,
}

fn summary_rows(s: &ResidualSummary) -> Vec<KeyValue> {
    let mut rows = vec![
        kv("n", s.n),
        kv("mean", s.mean),
        kv("median", s.median),
        kv("std", s.std),
        kv("tau_rho", s.tau_rho),
        kv("fraction_below", s.fraction_below),
    ];
    for (name, g) in [("degraded", &s.degraded), ("not_degraded", &s.not_degraded)] {
        rows.push(kv(&format!("{name}_n"), g.map_or(0, |g| g.n)));
        rows.push(kv(&format!("{name}_mean"), opt(g.map(|g| g.mean))));
        rows.push(kv(&format!("{name}_std"), opt(g.map(|g| g.std))));
    }
    rows.push(kv("welch_t", opt(s.welch.map(|w| w.t))));
    rows.push(kv("welch_df", opt(s.welch.map(|w| w.df))));
    rows.push(kv("welch_p", opt(s.welch.map(|w| w.p))));
    rows.push(kv("cohens_d", opt(s.cohens_d)));
    rows.push(kv("two_group_omitted", s.two_group_omitted));
    rows
}

/// Writes every `analyze` output into `dir`.
pub fn write_analysis(dir: &Path, a: &Analysis) -> Result<()> {
    crate::store::write_jsonl(&dir.join("labels.jsonl"), &a.labels)?;
    let labels: Vec<LabelRow> = a
        .labels
        .iter()
        .map(|l| LabelRow {
            test: l.test.to_string(),
            commit_hash: &l.commit_hash,
            rho: l.rho,
            rho_reported: l.rho_reported(),
            eta_exp: l.eta_exp,
            eta_test: l.eta_test,
            degraded: l.degraded,
            gating: l.gating.name(),
            attributed_layers: l.attributed_layers.iter().map(|c| c.name()).collect::<Vec<_>>().join(";"),
        })
        .collect();
    write_csv(&dir.join("labels.csv"), &labels)?;

    let layers: Vec<LayerRow> = a
        .layers
        .iter()
        .map(|r| LayerRow {
            layer: r.layer.name(),
            degraded_cases: r.degraded_cases,
            mean_rho: r.mean_rho,
            median_rho: r.median_rho,
            std_rho: r.std_rho,
        })
        .collect();
    write_csv(&dir.join("layer_impact.csv"), &layers)?;

    let rollup: Vec<RollupRow> = a
        .rollup
        .iter()
        .map(|r| RollupRow {
            commit_hash: &r.commit_hash,
            first_test: r.first_test.to_string(),
            tests: r.tests,
            degraded: r.degraded,
            environmental_limit: r.environmental_limit,
            min_rho: r.min_rho,
            mean_rho: r.mean_rho,
            verdict: match r.verdict {
                crate::residual::Verdict::Normal => "normal",
                crate::residual::Verdict::Degraded => "degraded",
            },
        })
        .collect();
    write_csv(&dir.join("commit_rollup.csv"), &rollup)?;

    let degraded = a.degraded_commits();
    let temporal: Vec<TemporalRow> = a
        .temporal
        .iter()
        .map(|t| TemporalRow {
            commit_hash: &t.commit_hash,
            faults: t.faults,
            score: t.score,
            temporal_flagged: t.flagged,
            rollup_degraded: degraded.contains(&t.commit_hash.as_str()),
        })
        .collect();
    write_csv(&dir.join("temporal_baseline.csv"), &temporal)?;
    write_csv(&dir.join("residual_histogram.csv"), &a.histogram)?;
    write_csv(&dir.join("residual_summary.csv"), &summary_rows(&a.summary))
}

#[derive(Serialize)]
struct ClassRow {
    class: &'static str,
    precision: String,
    recall: String,
    f1: String,
    support: usize,
}

fn class_row(class: &'static str, m: &ClassMetrics) -> ClassRow {
    ClassRow {
        class,
        precision: opt(m.precision),
        recall: opt(m.recall),
        f1: opt(m.f1),
        support: m.support,
    }
}

/// Per-class table plus a key/value file with the confusion matrix, AUC and
/// oversampling counts.
pub fn write_risk_metrics(dir: &Path, run: &RiskRun) -> Result<()> {
    let m = &run.metrics;
    write_csv(
        &dir.join("risk_metrics.csv"),
        &[class_row("degraded", &m.positive), class_row("normal", &m.negative)],
    )?;
    let c = m.confusion;
    let o = run.oversampling;
    write_csv(
        &dir.join("risk_summary.csv"),
        &[
            kv("tp", c.tp),
            kv("fp", c.fp),
            kv("tn", c.tn),
            kv("fn", c.fn_),
            kv("accuracy", opt(m.accuracy)),
            kv("auc", opt(m.auc)),
            kv("n_train", run.n_train),
            kv("n_test", run.n_test),
            kv("minority_before", o.minority_before),
            kv("majority", o.majority),
            kv("synthetic", o.synthetic),
            kv("k_used", o.k_used),
        ],
    )
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    test: String,
    commit_hash: &'a str,
    probability: f64,
    high_risk: bool,
}

pub fn write_scores(path: &Path, scores: &[RiskScore]) -> Result<()> {
    let rows: Vec<ScoreRow> = scores
        .iter()
        .map(|s| ScoreRow {
            test: s.test.to_string(),
            commit_hash: &s.commit_hash,
            probability: s.probability,
            high_risk: s.high_risk,
        })
        .collect();
    write_csv(path, &rows)
}
