//! Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and
//! exits non-zero when a required criterion fails.
//!
//! Criterion 9 needs the public dataset: set `RANPERF_PUBLIC_DATASET` to
//! the dataset root and `RANPERF_PUBLIC_COMMITS` to its commit JSONL file.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::statistics::Statistics;

use ranperf_core::commitcat::{
    categorize_commits, categorize_keywords, Category, CommitText, LexiconStub, RefinementPolicy, RefinementStatus, RuleSet,
};
use ranperf_core::ingest::{ParseRuleSet, TestId};
use ranperf_core::pipeline::{self, report, AnalyzeConfig, BaselineConfig, RiskConfig};
use ranperf_core::residual::{gate, label_one, Gating, Thresholds};
use ranperf_core::risk::{
    oversample, smote_oversample, ClassifierMetrics, Confusion, LabeledRow, Provenance, SmoteParams, TrainingSet,
};
use ranperf_core::stats::{c_var, cohens_d, welch_t};
use ranperf_core::store::{read_jsonl, AnalysisRow};
use ranperf_core::synthgen::{generate, GroundTruth, Injection, ScenarioSpec};

type Criterion = (&'static str, fn() -> Outcome);

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed < Duration::from_secs(limit_s)
}

fn corpus(spec: &ScenarioSpec, dir: &Path) -> (Vec<AnalysisRow>, GroundTruth) {
    let rules = RuleSet::default();
    let (truth, paths) = generate(spec, &rules, dir).expect("scenario generates");
    let commits: Vec<CommitText> = read_jsonl(&paths.commits).expect("commits readable");
    let a = pipeline::assemble_corpus(&paths.dataset, &commits, &ParseRuleSet::default_rules(), &rules)
        .expect("corpus assembles");
    (a.rows, truth)
}

fn seeded_baseline(seed: u64) -> BaselineConfig {
    let mut cfg = BaselineConfig::default();
    cfg.forest.seed = seed;
    cfg
}

/// Population variance of the per-row group mean, by scanning all rows for each row.
fn nested_loop_explained(y: &[f64], cols: &[Vec<usize>]) -> f64 {
    let n = y.len();
    let means: Vec<f64> = (0..n)
        .map(|i| {
            let (mut s, mut c) = (0.0, 0.0);
            for j in 0..n {
                if cols.iter().all(|col| col[i] == col[j]) {
                    s += y[j];
                    c += 1.0;
                }
            }
            s / c
        })
        .collect();
    let m = means.iter().sum::<f64>() / n as f64;
    means.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(2..=12);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let col = |rng: &mut ChaCha8Rng| -> Vec<usize> { (0..n).map(|_| rng.random_range(0..3)).collect() };
        let (np, nq) = (rng.random_range(1..=2), rng.random_range(0..=2));
        let p: Vec<Vec<usize>> = (0..np).map(|_| col(&mut rng)).collect();
        let q: Vec<Vec<usize>> = (0..nq).map(|_| col(&mut rng)).collect();
        let pr: Vec<&[usize]> = p.iter().map(Vec::as_slice).collect();
        let qr: Vec<&[usize]> = q.iter().map(Vec::as_slice).collect();
        let got = c_var(&y, &pr, &qr).expect("non-constant target").score;
        let joint: Vec<Vec<usize>> = p.iter().chain(&q).cloned().collect();
        // one group per row recovers Var(y) itself
        let total = nested_loop_explained(&y, &[(0..n).collect()]);
        let oracle = (nested_loop_explained(&y, &joint) - nested_loop_explained(&y, &q)) / total;
        worst = worst.max((got - oracle).abs());
    }
    let y = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let p = [0, 0, 1, 1, 2, 2];
    let hand = c_var(&y, &[&p], &[]).unwrap().score;
    let elapsed = start.elapsed();
    verdict(
        worst <= 1e-12 && (hand - 32.0 / 35.0).abs() <= 1e-12 && within(elapsed, 5),
        format!("max |c_var - oracle| = {worst:.2e} over 200 tables; hand example {hand:.6} (32/35); {elapsed:.2?}"),
    )
}

fn criterion_2() -> Outcome {
    use Category::*;
    let start = Instant::now();
    let cases: [(&str, &str, &[Category]); 7] = [
        ("2557", "fix duplicate call of RCconfig_NR_L1", &[Phy]),
        ("2556", "Support RC SM aperiodic subscription for \"UE RRC State Change\"", &[Rrc]),
        ("2550", "use pointer to structure instead of module_id inside MAC", &[Mac]),
        ("2548", "NR UE MSG3 buffer", &[Mac]),
        ("2495", "Sidelink configuration passed from RRC->MAC", &[Rrc, Mac]),
        ("2490", "reworking configuration of LogicalChannelConfig at MAC UE", &[Mac]),
        ("2220", "L1 tx thread", &[Phy]),
    ];
    let rules = RuleSet::default();
    let mut wrong = Vec::new();
    for (id, msg, want) in cases {
        let got: BTreeSet<Category> = categorize_keywords(&CommitText::new(id, msg), &rules).layers().collect();
        let want: BTreeSet<Category> = want.iter().copied().collect();
        if got != want {
            wrong.push(format!("{id} -> {got:?}"));
        }
    }
    let elapsed = start.elapsed();
    verdict(
        wrong.is_empty() && within(elapsed, 1),
        format!("{}/7 mappings reproduced {wrong:?}; {elapsed:.2?}", 7 - wrong.len()),
    )
}

fn criterion_3() -> Outcome {
    let th = Thresholds {
        tau_rho: 0.9,
        tau_exp: 0.6,
    };
    let test = TestId::from_datetime(chrono::NaiveDateTime::default());
    let cases = [
        ("normal", 0.80, 0.80, Gating::Normal),
        ("environmental_limit", 0.425, 0.50, Gating::EnvironmentalLimit),
        ("degraded", 0.595, 0.70, Gating::Degraded),
    ];
    let mut ok = true;
    let mut seen = Vec::new();
    for (name, eta_test, eta_exp, want) in cases {
        let l = label_one(test, "c", eta_test, eta_exp, &[Category::Pdcp], &th).unwrap();
        ok &= l.gating == want && l.degraded == (want == Gating::Degraded);
        ok &= l.attributed_layers.is_empty() != l.degraded;
        seen.push(format!("{name}: rho {:.2} eta_exp {:.2} -> {}", l.rho, l.eta_exp, l.gating.name()));
    }
    ok &= gate(0.85, 0.70, &th) == Gating::Degraded
        && gate(0.85, 0.50, &th) == Gating::EnvironmentalLimit
        && gate(1.00, 0.80, &th) == Gating::Normal;
    verdict(ok, seen.join("; "))
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let inj = |commit, layers: &[Category], drop, onset| Injection {
        commit,
        layers: layers.to_vec(),
        drop,
        onset,
    };
    let spec = ScenarioSpec {
        seed: 7,
        n_commits: 40,
        tests_per_commit: 10,
        noise_std: 0.03,
        injections: vec![
            inj(5, &[Category::Pdcp], 0.3, 0),
            inj(14, &[Category::Mac, Category::Rlc], 0.25, 0),
            inj(23, &[Category::Phy], 0.35, 0),
            inj(32, &[Category::Rrc], 0.3, 7),
        ],
        ..ScenarioSpec::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let (rows, truth) = corpus(&spec, dir.path());
    let run = pipeline::run_baseline(&rows, &seeded_baseline(7)).unwrap();
    let a = pipeline::analyze(&rows, &run.expected, &AnalyzeConfig::default()).unwrap();

    let want = truth.degraded_commits();
    let got: BTreeSet<String> = a.degraded_commits().into_iter().map(str::to_string).collect();
    let tp = got.intersection(&want).count() as f64;
    let recall = tp / want.len() as f64;
    let precision = if got.is_empty() { 0.0 } else { tp / got.len() as f64 };

    let temporal: BTreeMap<&str, bool> = a.temporal.iter().map(|f| (f.commit_hash.as_str(), f.flagged)).collect();
    let late_missed: Vec<usize> = truth
        .commits
        .iter()
        .filter(|c| c.injected && c.onset > 0)
        .filter(|c| got.contains(&c.hash) && !temporal.get(c.hash.as_str()).copied().unwrap_or(false))
        .map(|c| c.index)
        .collect();
    let elapsed = start.elapsed();
    verdict(
        recall >= 0.75 && precision >= 0.75 && !late_missed.is_empty() && within(elapsed, 60),
        format!(
            "recall {recall:.2}, precision {precision:.2} ({} flagged, {} injected); late-onset commits missed by the temporal baseline but flagged: {late_missed:?}; {elapsed:.2?}",
            got.len(),
            want.len()
        ),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let spec = ScenarioSpec {
        seed: 5,
        ..ScenarioSpec::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let (rows, _) = corpus(&spec, dir.path());
    let run = pipeline::run_baseline(&rows, &seeded_baseline(5)).unwrap();
    let e = run.evaluation.efficiency;
    let mut ordered = e.rmse >= e.mae;
    if let Some(m) = run.evaluation.mbps {
        ordered &= m.rmse >= m.mae;
    }
    let elapsed = start.elapsed();
    verdict(
        e.r2 >= 0.7 && ordered && within(elapsed, 30),
        format!(
            "held-out R2 {:.3} (n_test {}), rmse {:.4} >= mae {:.4}; {elapsed:.2?}",
            e.r2, run.evaluation.n_test, e.rmse, e.mae
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut violations = 0;
    let mut samples = 0;
    let mut deterministic = true;
    let mut worst_gap = 0i64;
    for trial in 0..40 {
        let m = rng.random_range(3..15);
        let width = rng.random_range(2..6);
        let minority: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                let mut r: Vec<f64> = (0..width).map(|_| rng.random_range(-3.0..3.0)).collect();
                r[0] = rng.random_range(0..2) as f64;
                r
            })
            .collect();
        let k = rng.random_range(1..m);
        let target = m + rng.random_range(1..60);
        let out = smote_oversample(&minority, k, target, &[0], trial).unwrap();
        deterministic &= out == smote_oversample(&minority, k, target, &[0], trial).unwrap();
        let neighbors = ranperf_core::risk::nearest_neighbors(&minority, k);
        for s in &out {
            samples += 1;
            let (x, nn) = (&minority[s.base], &minority[s.neighbor]);
            let mut ok = (0.0..=1.0).contains(&s.u) && neighbors[s.base].contains(&s.neighbor);
            ok &= s.values[0] == 0.0 || s.values[0] == 1.0;
            for j in 1..width {
                let lo = x[j].min(nn[j]) - 1e-12;
                let hi = x[j].max(nn[j]) + 1e-12;
                ok &= (s.values[j] - (x[j] + s.u * (nn[j] - x[j]))).abs() <= 1e-12;
                ok &= (lo..=hi).contains(&s.values[j]);
            }
            violations += !ok as usize;
        }

        let n_major = rng.random_range(m + 1..200);
        let mut row = |i: usize, degraded: bool| LabeledRow {
            values: (0..width).map(|_| rng.random_range(-3.0..3.0)).collect(),
            degraded,
            provenance: Provenance::Observed {
                test: TestId::from_datetime(chrono::NaiveDateTime::default() + chrono::Duration::hours(i as i64)),
            },
        };
        let mut rows: Vec<LabeledRow> = (0..m).map(|i| row(i, true)).collect();
        rows.extend((m..m + n_major).map(|i| row(i, false)));
        let set = TrainingSet {
            columns: (0..width).map(|j| format!("x{j}")).collect(),
            rows,
        };
        let params = SmoteParams {
            k_neighbors: 5,
            ratio: 1.0,
            seed: trial,
        };
        let (balanced, _) = oversample(&set, &params).unwrap();
        let pos = balanced.rows.iter().filter(|r| r.degraded).count() as i64;
        let neg = balanced.rows.len() as i64 - pos;
        worst_gap = worst_gap.max((pos - neg).abs());
        deterministic &= balanced == oversample(&set, &params).unwrap().0;
    }
    verdict(
        violations == 0 && deterministic && worst_gap <= 1,
        format!(
            "{samples} synthetic samples, {violations} off their segment; deterministic {deterministic}; worst minority:majority gap {worst_gap}"
        ),
    )
}

fn criterion_7() -> Outcome {
    let m = ClassifierMetrics::from_confusion(Confusion {
        tp: 11,
        fp: 4,
        tn: 180,
        fn_: 7,
    });
    let recall = m.positive.recall.unwrap_or(f64::NAN);
    verdict(
        (recall - 0.611).abs() <= 0.001 && m.positive.support == 18,
        format!("minority recall {recall:.4} on support {}", m.positive.support),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut dt, mut dd, mut dp) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let draw = |rng: &mut ChaCha8Rng, n: usize, mu: f64, sd: f64| -> Vec<f64> {
            (0..n).map(|_| mu + sd * rng.sample::<f64, _>(rand_distr::StandardNormal)).collect()
        };
        let (na, nb) = (rng.random_range(3..40), rng.random_range(3..40));
        let (ma, mb) = (rng.random_range(0.5..1.1), rng.random_range(0.5..1.1));
        let (sa, sb) = (rng.random_range(0.02..0.3), rng.random_range(0.02..0.3));
        let a = draw(&mut rng, na, ma, sa);
        let b = draw(&mut rng, nb, mb, sb);

        let (va, vb) = (a.iter().variance(), b.iter().variance());
        let (ea, eb) = (a.iter().mean(), b.iter().mean());
        let (wa, wb) = (va / na as f64, vb / nb as f64);
        let t_ref = (ea - eb) / (wa + wb).sqrt();
        let df = (wa + wb).powi(2) / (wa * wa / (na as f64 - 1.0) + wb * wb / (nb as f64 - 1.0));
        let p_ref = 2.0 * StudentsT::new(0.0, 1.0, df).unwrap().sf(t_ref.abs());
        let pooled = (((na - 1) as f64 * va + (nb - 1) as f64 * vb) / (na + nb - 2) as f64).sqrt();
        let d_ref = (ea - eb) / pooled;

        let w = welch_t(&a, &b).unwrap();
        let d = cohens_d(&a, &b).unwrap();
        dt = dt.max((w.t - t_ref).abs());
        dp = dp.max((w.p - p_ref).abs());
        dd = dd.max((d - d_ref).abs());
    }
    verdict(
        dt <= 1e-8 && dd <= 1e-8 && dp <= 1e-6,
        format!("50 pairs: max |dt| {dt:.1e}, max |dd| {dd:.1e}, max |dp| {dp:.1e}"),
    )
}

fn criterion_9() -> Outcome {
    let (Some(dataset), Some(commits)) =
        (std::env::var_os("RANPERF_PUBLIC_DATASET"), std::env::var_os("RANPERF_PUBLIC_COMMITS"))
    else {
        return Outcome::Skip("optional; RANPERF_PUBLIC_DATASET and RANPERF_PUBLIC_COMMITS not set".into());
    };
    let run = || -> ranperf_core::Result<Outcome> {
        let commits: Vec<CommitText> = read_jsonl(&PathBuf::from(commits))?;
        let rules = RuleSet::default();
        let a = pipeline::assemble_corpus(&PathBuf::from(dataset), &commits, &ParseRuleSet::default_rules(), &rules)?;
        let run = pipeline::run_baseline(&a.rows, &seeded_baseline(0))?;
        let an = pipeline::analyze(&a.rows, &run.expected, &AnalyzeConfig::default())?;
        let s = &an.summary;
        let mut ok = (s.mean - 0.998).abs() <= 0.02 && (s.fraction_below - 0.042).abs() <= 0.015;
        let pdcp = an.layers.iter().find(|r| r.layer == Category::Pdcp);
        let pdcp_text = match pdcp {
            Some(r) => {
                let cells = [
                    (r.degraded_cases as f64, 14.0),
                    (r.mean_rho, 0.70),
                    (r.median_rho, 0.83),
                    (r.std_rho, 0.28),
                ];
                ok &= cells.iter().all(|(got, want)| (got - want).abs() <= 0.3 * want);
                format!(
                    "PDCP cases {} mean {:.2} median {:.2} std {:.2}",
                    r.degraded_cases, r.mean_rho, r.median_rho, r.std_rho
                )
            }
            None => {
                ok = false;
                "no PDCP row".into()
            }
        };
        Ok(verdict(
            ok,
            format!("residual mean {:.3}, below 0.9 {:.1}%; {pdcp_text}", s.mean, 100.0 * s.fraction_below),
        ))
    };
    run().unwrap_or_else(|e| Outcome::Fail(format!("error: {e}")))
}

/// Runs the whole chain into `out` and returns every written file.
fn chain(out: &Path, synth: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let spec = ScenarioSpec {
        seed: 10,
        n_commits: 20,
        tests_per_commit: 8,
        injections: vec![Injection {
            commit: 6,
            layers: vec![Category::Pdcp],
            drop: 0.3,
            onset: 0,
        }],
        ..ScenarioSpec::default()
    };
    let (rows, _) = corpus(&spec, synth);
    let decomposed = pipeline::decompose(&rows, &Default::default()).unwrap();
    report::write_variance(&out.join("variance.csv"), &decomposed).unwrap();
    let run = pipeline::run_baseline(&rows, &seeded_baseline(10)).unwrap();
    run.model.write(&out.join("baseline_model.jsonl")).unwrap();
    report::write_baseline_metrics(&out.join("baseline_metrics.csv"), &run).unwrap();
    report::write_expected(&out.join("expected_efficiency.csv"), &run.expected).unwrap();
    let a = pipeline::analyze(&rows, &run.expected, &AnalyzeConfig::default()).unwrap();
    report::write_analysis(out, &a).unwrap();
    let mut risk = RiskConfig::default();
    risk.model.seed = 10;
    risk.smote.seed = 10;
    let r = pipeline::run_risk(&rows, &a.labels, &risk).unwrap();
    r.model.write(&out.join("risk_model.jsonl")).unwrap();
    report::write_risk_metrics(out, &r).unwrap();
    let scores = pipeline::score(&r.model, &rows, 0.5).unwrap();
    report::write_scores(&out.join("risk_scores.csv"), &scores).unwrap();

    let mut files = BTreeMap::new();
    for root in [out, synth] {
        let mut stack = vec![root.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in std::fs::read_dir(&d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    let rel = Path::new(root.file_name().unwrap()).join(p.strip_prefix(root).unwrap());
                    files.insert(rel, std::fs::read(&p).unwrap());
                }
            }
        }
    }
    files
}

fn criterion_10() -> Outcome {
    let runs: Vec<BTreeMap<PathBuf, Vec<u8>>> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let (out, synth) = (dir.path().join("out"), dir.path().join("synth"));
            std::fs::create_dir_all(&out).unwrap();
            std::fs::create_dir_all(&synth).unwrap();
            chain(&out, &synth)
        })
        .collect();
    let identical = runs[0] == runs[1];

    // refinement through the in-process stub only: no socket is opened
    let rules = RuleSet::default();
    let commits = [
        CommitText::new("2024aa16", "remove a useless copy and specific buffer for all UE UL payload"),
        CommitText::new("2024aa17", "L1 tx thread"),
    ];
    let stub = LexiconStub::new(rules.clone());
    let policy = RefinementPolicy::default();
    let first = categorize_commits(&commits, &rules, Some(&stub), &policy);
    let second = categorize_commits(&commits, &rules, Some(&stub), &policy);
    let refined = first.iter().filter(|r| r.refinement == RefinementStatus::Refined).count();
    let offline = first == second && refined >= 1 && first.iter().all(|r| !r.degraded_mode);
    verdict(
        identical && offline,
        format!(
            "{} files byte-identical across reruns: {identical}; stub refinement deterministic and offline: {offline}",
            runs[0].len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("variance decomposition matches the nested-loop oracle", criterion_1),
        ("keyword categorization reproduces the seven example mappings", criterion_2),
        ("residual gating truth table", criterion_3),
        ("end-to-end synthetic detection", criterion_4),
        ("baseline held-out quality", criterion_5),
        ("SMOTE properties", criterion_6),
        ("classifier metric identities", criterion_7),
        ("Welch t and Cohen's d against statrs", criterion_8),
        ("public dataset residual distribution", criterion_9),
        ("determinism and offline refinement", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (tag, detail) = match check() {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                // the public-dataset check is informational by definition
                if i + 1 != 9 {
                    failed += 1;
                }
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("criterion {:>2} {tag}: {name}: {detail}", i + 1);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
