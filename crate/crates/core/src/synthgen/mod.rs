//! Synthetic campaigns with a known environment law and planted code
//! regressions, written in the same on-disk layout ingest reads.

mod emit;
mod message;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use message::synthesize_message;

use crate::commitcat::{Category, CommitText, RuleSet};
use crate::error::{Error, Result};
use crate::ingest::TestId;

/// Efficiency law and KPM generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentLaw {
    pub rsrp_range_dbm: [f64; 2],
    pub sinr_mean_db: f64,
    pub sinr_std_db: f64,
    pub sinr_range_db: [f64; 2],
    /// Logistic slope and offset: efficiency = sigmoid(a * SINR + b).
    pub a: f64,
    pub b: f64,
    pub link_capacity_mbps: f64,
    pub loads_mbps: Vec<f64>,
    /// BLER = bler_max * sigmoid(-(SINR - bler_midpoint_db) / bler_width_db).
    pub bler_max: f64,
    pub bler_midpoint_db: f64,
    pub bler_width_db: f64,
}

impl Default for EnvironmentLaw {
    fn default() -> Self {
        // a and b map SINR 0 dB to 0.3 and 30 dB to 0.99
        let b = (0.3f64 / 0.7).ln();
        let a = ((0.99f64 / 0.01).ln() - b) / 30.0;
        EnvironmentLaw {
            rsrp_range_dbm: [-110.0, -70.0],
            sinr_mean_db: 18.0,
            sinr_std_db: 7.0,
            sinr_range_db: [0.0, 30.0],
            a,
            b,
            link_capacity_mbps: 90.0,
            loads_mbps: vec![10.0, 20.0, 30.0, 50.0, 80.0, 100.0, 120.0],
            bler_max: 0.3,
            bler_midpoint_db: 5.0,
            bler_width_db: 2.0,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl EnvironmentLaw {
    pub fn capacity(&self, load: f64) -> f64 {
        (self.link_capacity_mbps / load).min(1.0)
    }

    /// Expected efficiency without any code effect.
    pub fn efficiency(&self, sinr: f64, load: f64) -> f64 {
        (sigmoid(self.a * sinr + self.b) * self.capacity(load)).clamp(0.0, 1.0)
    }

    pub fn bler(&self, sinr: f64) -> f64 {
        self.bler_max * sigmoid(-(sinr - self.bler_midpoint_db) / self.bler_width_db)
    }
}

/// A regression planted on one commit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Injection {
    pub commit: usize,
    pub layers: Vec<Category>,
    /// Multiplicative efficiency drop in (0, 1).
    pub drop: f64,
    /// Number of the commit's tests that run before the drop appears.
    #[serde(default)]
    pub onset: usize,
}

/// A regression planted on every commit touching `category`, active on
/// tests whose load is at least `min_load_mbps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantRule {
    pub category: Category,
    pub drop: f64,
    #[serde(default)]
    pub min_load_mbps: f64,
    /// Extra chance that a commit without an injection touches `category`.
    #[serde(default)]
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub n_commits: usize,
    pub tests_per_commit: usize,
    pub start: NaiveDateTime,
    pub commit_spacing_hours: i64,
    pub test_spacing_hours: i64,
    /// Delay between deployment and the first test.
    pub first_test_delay_hours: i64,
    pub environment: EnvironmentLaw,
    /// Standard deviation of additive efficiency noise.
    pub noise_std: f64,
    pub injections: Vec<Injection>,
    pub plant_rules: Vec<PlantRule>,
    /// Number of iperf intervals per test.
    pub intervals: usize,
    /// Measurement lines per KPM in each gNB log.
    pub kpm_lines: usize,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            seed: 0,
            n_commits: 40,
            tests_per_commit: 10,
            start: NaiveDate::from_ymd_opt(2024, 1, 1)
                .expect("valid date")
                .and_hms_opt(0, 0, 0)
                .expect("valid time"),
            commit_spacing_hours: 240,
            test_spacing_hours: 24,
            first_test_delay_hours: 2,
            environment: EnvironmentLaw::default(),
            noise_std: 0.03,
            injections: Vec::new(),
            plant_rules: Vec::new(),
            intervals: 10,
            kpm_lines: 6,
        }
    }
}

impl ScenarioSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: ScenarioSpec =
            toml::from_str(text).map_err(|e| Error::config(format!("scenario: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::config(m));
        if self.n_commits == 0 || self.tests_per_commit == 0 {
            return cfg("n_commits and tests_per_commit must be positive".into());
        }
        if self.environment.loads_mbps.is_empty() || self.environment.loads_mbps.iter().any(|l| !(*l > 0.0)) {
            return cfg("load set must be non-empty and positive".into());
        }
        if !(self.noise_std >= 0.0) {
            return cfg("noise_std must be >= 0".into());
        }
        if self.intervals < 2 || self.kpm_lines < 2 {
            return cfg("intervals and kpm_lines must be >= 2".into());
        }
        let last = self.first_test_delay_hours + (self.tests_per_commit as i64 - 1) * self.test_spacing_hours;
        if self.test_spacing_hours <= 0 || last >= self.commit_spacing_hours {
            return cfg("tests of one commit must finish before the next deployment".into());
        }
        for inj in &self.injections {
            if inj.commit >= self.n_commits {
                return Err(Error::data(format!(
                    "injection commit index {} out of range (n_commits = {})",
                    inj.commit, self.n_commits
                )));
            }
            if !(inj.drop > 0.0 && inj.drop < 1.0) {
                return cfg(format!("injection drop {} must be in (0, 1)", inj.drop));
            }
            if inj.layers.is_empty() || inj.layers.iter().any(|c| !c.is_layer()) {
                return cfg("injection layers must be a non-empty set of protocol layers".into());
            }
        }
        for r in &self.plant_rules {
            if !(r.drop > 0.0 && r.drop < 1.0) {
                return cfg(format!("plant rule drop {} must be in (0, 1)", r.drop));
            }
            if !(0.0..=1.0).contains(&r.share) {
                return cfg(format!("plant rule share {} must be in [0, 1]", r.share));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestTruth {
    pub test: TestId,
    pub commit_index: usize,
    pub commit_hash: String,
    pub test_index: usize,
    pub sinr: f64,
    pub rsrp: f64,
    pub cqi: f64,
    pub dl_bler: f64,
    pub ul_bler: f64,
    pub load_mbps: f64,
    /// Environment-only efficiency before noise and code effects.
    pub eta_true: f64,
    /// Product of all active drops (1 when none applies).
    pub multiplier: f64,
    /// Efficiency as written to the iperf file.
    pub eta_measured: f64,
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitTruth {
    pub index: usize,
    pub hash: String,
    pub categories: Vec<Category>,
    pub deployed_at: NaiveDateTime,
    pub injected: bool,
    pub drop: f64,
    pub onset: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub tests: Vec<TestTruth>,
    pub commits: Vec<CommitTruth>,
}

impl GroundTruth {
    /// Hashes of commits with at least one degraded test.
    pub fn degraded_commits(&self) -> BTreeSet<String> {
        self.tests.iter().filter(|t| t.degraded).map(|t| t.commit_hash.clone()).collect()
    }
}

/// Paths written by [`generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedPaths {
    pub dataset: PathBuf,
    pub commits: PathBuf,
    pub truth_tests: PathBuf,
    pub truth_commits: PathBuf,
}

pub fn commit_hash(seed: u64, index: usize) -> String {
    let digest = Sha256::digest(format!("synthetic-commit:{seed}:{index}").as_bytes());
    hex::encode(digest)[..40].to_string()
}

/// Everything `generate` writes, computed in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub truth: GroundTruth,
    pub commits: Vec<CommitText>,
    pub tests: Vec<emit::TestArtifacts>,
}

/// Draws the whole campaign from the scenario seed.
pub fn simulate(spec: &ScenarioSpec, rules: &RuleSet) -> Result<Campaign> {
    spec.validate()?;
    let env = &spec.environment;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut truth = GroundTruth::default();
    let mut commits = Vec::new();
    let mut tests = Vec::new();

    for ci in 0..spec.n_commits {
        let hash = commit_hash(spec.seed, ci);
        let deployed_at = spec.start + Duration::hours(spec.commit_spacing_hours * ci as i64);
        let injection = spec.injections.iter().find(|inj| inj.commit == ci);
        let categories: BTreeSet<Category> = match injection {
            Some(inj) => inj.layers.iter().copied().collect(),
            None => {
                let n = rng.random_range(1..=2);
                let mut set = BTreeSet::new();
                while set.len() < n {
                    set.insert(Category::ALL[rng.random_range(0..Category::ALL.len())]);
                }
                for r in &spec.plant_rules {
                    if r.share > 0.0 && rng.random_bool(r.share) {
                        set.insert(r.category);
                    }
                }
                set
            }
        };
        let message = synthesize_message(&categories, rules, &mut rng)?;
        let files_changed = rng.random_range(1..=20u64);
        commits.push(CommitText {
            hash: hash.clone(),
            message,
            files_changed,
            lines_added: rng.random_range(5..=600),
            lines_deleted: rng.random_range(0..=300),
            deployed_at: Some(deployed_at),
        });
        let rules_hit: Vec<&PlantRule> = spec.plant_rules.iter().filter(|r| categories.contains(&r.category)).collect();
        truth.commits.push(CommitTruth {
            index: ci,
            hash: hash.clone(),
            categories: categories.iter().copied().collect(),
            deployed_at,
            injected: injection.is_some() || !rules_hit.is_empty(),
            drop: injection.map_or(0.0, |i| i.drop),
            onset: injection.map_or(0, |i| i.onset),
        });

        for ti in 0..spec.tests_per_commit {
            let when = deployed_at
                + Duration::hours(spec.first_test_delay_hours + ti as i64 * spec.test_spacing_hours);
            let test = TestId::from_datetime(when);

            let round1 = |v: f64| (v * 10.0).round() / 10.0;
            let round4 = |v: f64| (v * 1e4).round() / 1e4;
            let [s_lo, s_hi] = env.sinr_range_db;
            let sinr = round1((env.sinr_mean_db + env.sinr_std_db * std_normal.sample(&mut rng)).clamp(s_lo, s_hi));
            let [r_lo, r_hi] = env.rsrp_range_dbm;
            let frac = (sinr - s_lo) / (s_hi - s_lo);
            let rsrp = round1((r_lo + frac * (r_hi - r_lo) + 3.0 * std_normal.sample(&mut rng)).clamp(r_lo, r_hi));
            let cqi = round1((sinr / 2.0 + 0.5 * std_normal.sample(&mut rng)).clamp(0.0, 15.0));
            let dl_bler = round4((env.bler(sinr) * (1.0 + 0.1 * std_normal.sample(&mut rng))).clamp(0.0, 1.0));
            let ul_bler = round4((0.6 * env.bler(sinr) * (1.0 + 0.1 * std_normal.sample(&mut rng))).clamp(0.0, 1.0));
            let load = env.loads_mbps[rng.random_range(0..env.loads_mbps.len())];

            let eta_true = env.efficiency(sinr, load);
            let mut multiplier = 1.0;
            if let Some(inj) = injection {
                if ti >= inj.onset {
                    multiplier *= 1.0 - inj.drop;
                }
            }
            for r in &rules_hit {
                if load >= r.min_load_mbps {
                    multiplier *= 1.0 - r.drop;
                }
            }
            let noisy = eta_true * multiplier + spec.noise_std * std_normal.sample(&mut rng);
            // whole bits per second so the written mean is exact
            let mean_bps = (noisy.max(0.001) * load * 1e6).round();
            let eta_measured = mean_bps / 1e6 / load;

            let artifacts = emit::TestArtifacts::draw(
                &mut rng,
                spec,
                emit::Planted {
                    test,
                    hash: hash.clone(),
                    load,
                    mean_bps,
                    sinr,
                    rsrp,
                    cqi,
                    dl_bler,
                    ul_bler,
                },
            );
            tests.push(artifacts);
            truth.tests.push(TestTruth {
                test,
                commit_index: ci,
                commit_hash: hash.clone(),
                test_index: ti,
                sinr,
                rsrp,
                cqi,
                dl_bler,
                ul_bler,
                load_mbps: load,
                eta_true,
                multiplier,
                eta_measured,
                degraded: multiplier < 1.0,
            });
        }
    }
    Ok(Campaign { truth, commits, tests })
}

/// Writes the campaign under `out`: `dataset/`, `commits.jsonl`,
/// `ground_truth_tests.csv` and `ground_truth_commits.csv`.
pub fn generate(spec: &ScenarioSpec, rules: &RuleSet, out: &Path) -> Result<(GroundTruth, GeneratedPaths)> {
    let campaign = simulate(spec, rules)?;
    let paths = GeneratedPaths {
        dataset: out.join("dataset"),
        commits: out.join("commits.jsonl"),
        truth_tests: out.join("ground_truth_tests.csv"),
        truth_commits: out.join("ground_truth_commits.csv"),
    };
    if paths.dataset.exists() {
        std::fs::remove_dir_all(&paths.dataset).map_err(|e| Error::io(&paths.dataset, e))?;
    }
    for t in &campaign.tests {
        t.write(&paths.dataset)?;
    }
    crate::store::write_jsonl(&paths.commits, &campaign.commits)?;
    emit::write_truth(&campaign.truth, &paths.truth_tests, &paths.truth_commits)?;
    Ok((campaign.truth, paths))
}
