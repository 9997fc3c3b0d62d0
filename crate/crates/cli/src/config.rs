//! Pipeline configuration file. Every table is optional; flags override
//! file values, which override built-in defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use ranperf_core::pipeline::{AnalyzeConfig, BaselineConfig, DecomposeConfig, RiskConfig};
use ranperf_core::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed for every randomized step.
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub ingest: IngestSection,
    pub categorize: CategorizeSection,
    pub decompose: DecomposeConfig,
    pub baseline: BaselineConfig,
    pub analyze: AnalyzeConfig,
    pub risk: RiskConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub dataset: Option<PathBuf>,
    pub parse_rules: Option<PathBuf>,
    pub default_target_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CategorizeSection {
    pub keyword_rules: Option<PathBuf>,
    /// `stub`, `none`, or an http(s) endpoint.
    pub refine: String,
    pub max_retries: usize,
    pub concurrency: usize,
    pub timeout_s: f64,
}

impl Default for CategorizeSection {
    fn default() -> Self {
        CategorizeSection {
            keyword_rules: None,
            refine: "stub".into(),
            max_retries: 2,
            concurrency: 4,
            timeout_s: 10.0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(PipelineConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.analyze.thresholds.validate()?;
        if self.analyze.min_degraded == 0 {
            return Err(Error::config("analyze.min_degraded must be >= 1"));
        }
        if !(self.analyze.histogram_width > 0.0) {
            return Err(Error::config("analyze.histogram_width must be > 0"));
        }
        if self.decompose.n_bins < 2 {
            return Err(Error::config("decompose.n_bins must be >= 2"));
        }
        if self.baseline.k_folds < 2 {
            return Err(Error::config("baseline.k_folds must be >= 2"));
        }
        for (name, f) in [
            ("baseline.train_fraction", self.baseline.train_fraction),
            ("risk.train_fraction", self.risk.train_fraction),
            ("risk.threshold", self.risk.threshold),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::config(format!("{name} must be in (0, 1)")));
            }
        }
        let r = &self.categorize.refine;
        if !(r == "stub" || r == "none" || r.starts_with("http://") || r.starts_with("https://")) {
            return Err(Error::config(format!("categorize.refine `{r}` must be stub, none or an http(s) URL")));
        }
        if !(self.categorize.timeout_s > 0.0) || self.categorize.concurrency == 0 {
            return Err(Error::config("categorize.timeout_s and concurrency must be positive"));
        }
        Ok(())
    }

    /// The seed from the flag, else the file. Randomized steps require one.
    pub fn seed(&self, flag: Option<u64>) -> Result<u64> {
        flag.or(self.seed)
            .ok_or_else(|| Error::config("a seed is required: pass --seed or set `seed` in the config file"))
    }

    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("ranperf-out"))
    }
}
