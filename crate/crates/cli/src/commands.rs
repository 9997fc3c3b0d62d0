use std::path::{Path, PathBuf};
use std::time::Duration;

use ranperf_core::commitcat::{
    categorize_commits, CommitMetadataProvider, HttpTransport, JsonLinesCommits, LexiconStub, RefinementPolicy,
    RefinementTransport, RuleSet,
};
use ranperf_core::ingest::{ingest_dataset, IngestOptions, ParseRuleSet, TestRecord};
use ranperf_core::pipeline::{self, report};
use ranperf_core::residual::DegradationLabel;
use ranperf_core::risk::RiskModel;
use ranperf_core::store::{append_jsonl, assemble, read_jsonl, write_jsonl, AnalysisRow};
use ranperf_core::synthgen::{generate, ScenarioSpec};
use ranperf_core::{Error, Result};

use crate::config::PipelineConfig;

pub const TESTS_FILE: &str = "tests.jsonl";
pub const COMMIT_FEATURES_FILE: &str = "commit_features.jsonl";
pub const ANALYSIS_FILE: &str = "analysis.jsonl";
pub const EXPECTED_FILE: &str = "expected_efficiency.csv";
pub const BASELINE_MODEL_FILE: &str = "baseline_model.jsonl";
pub const RISK_MODEL_FILE: &str = "risk_model.jsonl";

/// Exit status when `analyze` finds a degraded commit.
pub const EXIT_DEGRADED: u8 = 3;

pub struct Context {
    pub cfg: PipelineConfig,
    pub out: PathBuf,
}

impl Context {
    fn path(&self, flag: Option<PathBuf>, default_name: &str) -> PathBuf {
        flag.unwrap_or_else(|| self.out.join(default_name))
    }

    fn rows(&self, flag: Option<PathBuf>) -> Result<Vec<AnalysisRow>> {
        let path = self.path(flag, ANALYSIS_FILE);
        let rows: Vec<AnalysisRow> = read_jsonl(&path)?;
        if rows.is_empty() {
            return Err(Error::data(format!("{}: no analysis rows", path.display())));
        }
        Ok(rows)
    }

    fn keyword_rules(&self, flag: Option<PathBuf>) -> Result<RuleSet> {
        match flag.or_else(|| self.cfg.categorize.keyword_rules.clone()) {
            Some(p) => RuleSet::from_file(&p),
            None => Ok(RuleSet::default()),
        }
    }

    pub fn ingest(&self, dataset: Option<PathBuf>, rules: Option<PathBuf>, default_rate: Option<f64>) -> Result<u8> {
        let s = &self.cfg.ingest;
        let dataset = dataset
            .or_else(|| s.dataset.clone())
            .ok_or_else(|| Error::config("no dataset: pass --dataset or set ingest.dataset"))?;
        let rules = match rules.or_else(|| s.parse_rules.clone()) {
            Some(p) => ParseRuleSet::from_file(&p)?,
            None => ParseRuleSet::default_rules(),
        };
        let opts = IngestOptions {
            default_target_rate: default_rate.or(s.default_target_rate),
        };
        let out = ingest_dataset(&dataset, &rules, &opts)?;
        report::write_csv(&self.out.join("ingest_issues.csv"), &out.issues)?;
        if out.records.is_empty() {
            return Err(Error::data(format!("{}: no test could be parsed", dataset.display())));
        }
        let stats = append_jsonl(&self.out.join(TESTS_FILE), &out.records)?;
        println!(
            "ingested {} tests ({} new, {} unchanged, {} conflicting); {} issues",
            out.records.len(),
            stats.appended,
            stats.unchanged,
            stats.conflicting,
            out.issues.len()
        );
        Ok(0)
    }

    pub fn categorize(&self, commits: &Path, rules: Option<PathBuf>, refine: Option<String>) -> Result<u8> {
        let rules = self.keyword_rules(rules)?;
        let c = &self.cfg.categorize;
        let refine = refine.unwrap_or_else(|| c.refine.clone());
        let transport: Option<Box<dyn RefinementTransport>> = match refine.as_str() {
            "none" => None,
            "stub" => Some(Box::new(LexiconStub::new(rules.clone()))),
            url if url.starts_with("http://") || url.starts_with("https://") => {
                Some(Box::new(HttpTransport::new(url, Duration::from_secs_f64(c.timeout_s))))
            }
            other => return Err(Error::config(format!("--refine `{other}` must be stub, none or an http(s) URL"))),
        };
        let policy = RefinementPolicy {
            max_retries: c.max_retries,
            concurrency: c.concurrency,
        };
        let texts = JsonLinesCommits { path: commits }.commits()?;
        if texts.is_empty() {
            return Err(Error::data(format!("{}: no commits", commits.display())));
        }
        let records = categorize_commits(&texts, &rules, transport.as_deref(), &policy);
        let degraded = records.iter().filter(|r| r.degraded_mode).count();
        if degraded > 0 {
            log::warn!("refinement unavailable for {degraded} commits; keyword drafts kept (degraded mode)");
        }
        let stats = append_jsonl(&self.out.join(COMMIT_FEATURES_FILE), &records)?;
        println!(
            "categorized {} commits ({} new, {} unchanged); {} in degraded mode",
            records.len(),
            stats.appended,
            stats.unchanged,
            degraded
        );
        Ok(0)
    }

    pub fn assemble(&self, tests: Option<PathBuf>, features: Option<PathBuf>) -> Result<u8> {
        let tests: Vec<TestRecord> = read_jsonl(&self.path(tests, TESTS_FILE))?;
        let commits = read_jsonl(&self.path(features, COMMIT_FEATURES_FILE))?;
        let a = assemble(&tests, &commits);
        for id in &a.unmatched {
            log::warn!("test {id}: no categorized commit for its revision");
        }
        if a.rows.is_empty() {
            return Err(Error::data("no test matched a categorized commit"));
        }
        write_jsonl(&self.out.join(ANALYSIS_FILE), &a.rows)?;
        println!(
            "assembled {} rows; {} tests unmatched; {} commits unused",
            a.rows.len(),
            a.unmatched.len(),
            a.unused_commits.len()
        );
        Ok(0)
    }

    pub fn decompose(&self, analysis: Option<PathBuf>) -> Result<u8> {
        let rows = self.rows(analysis)?;
        let reports = pipeline::decompose(&rows, &self.cfg.decompose)?;
        report::write_variance(&self.out.join("variance.csv"), &reports)?;
        for r in &reports {
            let on = if r.conditioning.is_empty() {
                String::new()
            } else {
                format!(" | {}", r.conditioning.join(", "))
            };
            println!("{} ~ {}{on}: {:.4}", r.target, r.factor, r.score);
        }
        Ok(0)
    }

    pub fn train_baseline(&self, analysis: Option<PathBuf>, seed: Option<u64>) -> Result<u8> {
        let seed = self.cfg.seed(seed)?;
        let rows = self.rows(analysis)?;
        let mut config = self.cfg.baseline.clone();
        config.forest.seed = seed;
        let run = pipeline::run_baseline(&rows, &config)?;
        run.model.write(&self.out.join(BASELINE_MODEL_FILE))?;
        report::write_baseline_metrics(&self.out.join("baseline_metrics.csv"), &run)?;
        report::write_expected(&self.out.join(EXPECTED_FILE), &run.expected)?;
        let e = run.evaluation.efficiency;
        println!(
            "baseline: held-out R2 {:.4}, MAE {:.4}, RMSE {:.4} on {} tests; {} expected values written",
            e.r2,
            e.mae,
            e.rmse,
            run.evaluation.n_test,
            run.expected.len()
        );
        Ok(0)
    }

    pub fn analyze(
        &self,
        analysis: Option<PathBuf>,
        expected: Option<PathBuf>,
        tau_rho: Option<f64>,
        tau_exp: Option<f64>,
        min_degraded: Option<usize>,
    ) -> Result<u8> {
        let mut config = self.cfg.analyze.clone();
        if let Some(t) = tau_rho {
            config.thresholds.tau_rho = t;
        }
        if let Some(t) = tau_exp {
            config.thresholds.tau_exp = t;
        }
        if let Some(m) = min_degraded {
            config.min_degraded = m;
        }
        config.thresholds.validate()?;
        let rows = self.rows(analysis)?;
        let expected = report::read_expected(&self.path(expected, EXPECTED_FILE))?;
        let a = pipeline::analyze(&rows, &expected, &config)?;
        report::write_analysis(&self.out, &a)?;
        let degraded = a.degraded_commits();
        println!(
            "analyzed {} tests: {} degraded, {:.1}% below tau_rho; {} of {} commits degraded",
            a.labels.len(),
            a.labels.iter().filter(|l| l.degraded).count(),
            100.0 * a.summary.fraction_below,
            degraded.len(),
            a.rollup.len()
        );
        for hash in &degraded {
            println!("degraded commit {hash}");
        }
        Ok(if degraded.is_empty() { 0 } else { EXIT_DEGRADED })
    }

    pub fn train_risk(&self, analysis: Option<PathBuf>, labels: Option<PathBuf>, seed: Option<u64>) -> Result<u8> {
        let seed = self.cfg.seed(seed)?;
        let rows = self.rows(analysis)?;
        let labels: Vec<DegradationLabel> = read_jsonl(&self.path(labels, "labels.jsonl"))?;
        let mut config = self.cfg.risk.clone();
        config.model.seed = seed;
        config.smote.seed = seed;
        let run = pipeline::run_risk(&rows, &labels, &config)?;
        run.model.write(&self.out.join(RISK_MODEL_FILE))?;
        report::write_risk_metrics(&self.out, &run)?;
        let p = run.metrics.positive;
        let show = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.3}"));
        println!(
            "risk model: degraded-class precision {}, recall {}, F1 {} on {} held-out tests ({} degraded)",
            show(p.precision),
            show(p.recall),
            show(p.f1),
            run.n_test,
            p.support
        );
        Ok(0)
    }

    pub fn score(&self, analysis: Option<PathBuf>, model: Option<PathBuf>, threshold: Option<f64>) -> Result<u8> {
        let threshold = threshold.unwrap_or(self.cfg.risk.threshold);
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::config("--threshold must be in (0, 1)"));
        }
        let model = RiskModel::read(&self.path(model, RISK_MODEL_FILE))?;
        let rows = self.rows(analysis)?;
        let scores = pipeline::score(&model, &rows, threshold)?;
        report::write_scores(&self.out.join("risk_scores.csv"), &scores)?;
        println!(
            "scored {} tests; {} at or above {threshold}",
            scores.len(),
            scores.iter().filter(|s| s.high_risk).count()
        );
        Ok(0)
    }

    pub fn synth(&self, scenario: Option<PathBuf>, seed: Option<u64>) -> Result<u8> {
        let (mut spec, file_seed) = match scenario {
            Some(p) => {
                let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                let has_seed = text
                    .parse::<toml::Table>()
                    .map_err(|e| Error::config(format!("{}: {e}", p.display())))?
                    .contains_key("seed");
                let spec = ScenarioSpec::from_toml_str(&text)?;
                let seed = has_seed.then_some(spec.seed);
                (spec, seed)
            }
            None => (ScenarioSpec::default(), None),
        };
        spec.seed = seed
            .or(file_seed)
            .or(self.cfg.seed)
            .ok_or_else(|| Error::config("a seed is required: pass --seed or set `seed` in the scenario or config"))?;
        let rules = self.keyword_rules(None)?;
        let dir = self.out.join("synth");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let (truth, paths) = generate(&spec, &rules, &dir)?;
        println!(
            "generated {} tests over {} commits ({} degraded tests) under {}",
            truth.tests.len(),
            truth.commits.len(),
            truth.tests.iter().filter(|t| t.degraded).count(),
            paths.dataset.display()
        );
        Ok(0)
    }

    pub fn report(&self) -> Result<u8> {
        let sections = [
            ("Baseline model (held-out)", "baseline_metrics.csv"),
            ("Variance decomposition", "variance.csv"),
            ("Residual distribution", "residual_summary.csv"),
            ("Impact by modified layer", "layer_impact.csv"),
            ("Commit verdicts", "commit_rollup.csv"),
            ("Temporal-correlation baseline", "temporal_baseline.csv"),
            ("Risk classifier", "risk_metrics.csv"),
            ("Risk classifier counts", "risk_summary.csv"),
        ];
        let mut text = String::from("# ranperf report\n");
        let mut found = 0;
        for (title, file) in sections {
            let path = self.out.join(file);
            if !path.exists() {
                continue;
            }
            found += 1;
            text.push_str(&format!("\n## {title}\n\nSource: `{file}`\n\n"));
            text.push_str(&markdown_table(&path)?);
        }
        if found == 0 {
            return Err(Error::data(format!("{}: no reports to summarize", self.out.display())));
        }
        let path = self.out.join("report.md");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        println!("wrote {} ({found} sections)", path.display());
        Ok(0)
    }
}

fn markdown_table(path: &Path) -> Result<String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut out = format!("| {} |\n|{}\n", header.join(" | "), " --- |".repeat(header.len()));
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        out.push_str(&format!("| {} |\n", rec.iter().collect::<Vec<_>>().join(" | ")));
        rows += 1;
    }
    if rows == 0 {
        out.push_str("\n(no rows)\n");
    }
    Ok(out)
}
