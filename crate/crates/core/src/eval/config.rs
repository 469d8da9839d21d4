//! Experiment configuration, read from TOML.
//!
//! ```toml
//! output_dir = "results/piecewise"
//! seeds = [0, 1, 2]
//! n_test = 100
//! methods = ["csvae", "sbl", "lasso"]
//!
//! [dataset]
//! family = "piecewise"     # piecewise | spikes | idx
//! n = 256
//! per_sample = true        # one measurement matrix per sample
//!
//! [dictionary]
//! kind = "db4-1d"          # identity | pixel | db4-1d | db4-2d
//!
//! [sweep]
//! m = [80, 100, 140]
//! n_train = [1000]
//! snr_db = [10.0]          # inf means noiseless
//! ```
//!
//! Method tables (`[csvae]`, `[csgmm]`, `[sbl]`, `[lasso]`, `[timing]`) are
//! optional and default to the values in this module.

use super::EvalError;
use crate::csvae::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const METHODS: [&str; 4] = ["csvae", "csgmm", "sbl", "lasso"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: String,
    pub seeds: Vec<u64>,
    pub n_test: usize,
    pub methods: Vec<String>,
    pub dataset: DatasetSpec,
    pub dictionary: DictionarySpec,
    pub sweep: SweepAxes,
    #[serde(default)]
    pub csvae: CsvaeSettings,
    #[serde(default)]
    pub csgmm: CsgmmSettings,
    #[serde(default)]
    pub sbl: SblSettings,
    #[serde(default)]
    pub lasso: LassoSettings,
    #[serde(default)]
    pub timing: TimingSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub family: String,
    /// Signal length for synthetic families.
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub per_sample: bool,
    /// Spikes per signal (`spikes` family).
    #[serde(default = "default_spikes")]
    pub spikes: usize,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// IDX image file (`idx` family).
    #[serde(default)]
    pub path: Option<String>,
}

fn default_n() -> usize {
    256
}

fn default_spikes() -> usize {
    4
}

fn default_amplitude() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionarySpec {
    pub kind: String,
    #[serde(default)]
    pub level: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    pub m: Vec<usize>,
    pub n_train: Vec<usize>,
    pub snr_db: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvaeSettings {
    #[serde(flatten)]
    pub train: TrainConfig,
    /// Latent draws averaged by the conditional mean estimator.
    pub n_samples: usize,
    /// `cme` or `map`.
    pub estimator: String,
}

impl Default for CsvaeSettings {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            n_samples: 64,
            estimator: "cme".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsgmmSettings {
    pub k: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub estimator: String,
}

impl Default for CsgmmSettings {
    fn default() -> Self {
        Self {
            k: 32,
            tol: 1e-3,
            max_iters: 200,
            estimator: "cme".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SblSettings {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for SblSettings {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoSettings {
    /// Candidate shrinkage values; a single value skips tuning.
    pub lambdas: Vec<f64>,
    /// Ground-truth validation samples used for tuning.
    pub n_tune: usize,
    pub domain: String,
    pub max_sweeps: usize,
    pub tol: f64,
}

impl Default for LassoSettings {
    fn default() -> Self {
        Self {
            lambdas: (0..9).map(|k| 10f64.powf(-4.0 + 0.5 * k as f64)).collect(),
            n_tune: 100,
            domain: "dictionary".into(),
            max_sweeps: 1000,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingSettings {
    pub warmup: usize,
    /// Timed reconstructions per method and cell; 0 disables timing.
    pub reps: usize,
}

impl Default for TimingSettings {
    fn default() -> Self {
        Self { warmup: 10, reps: 100 }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output_dir: "results".into(),
            seeds: vec![0],
            n_test: 100,
            methods: METHODS.iter().map(|m| m.to_string()).collect(),
            dataset: DatasetSpec {
                family: "piecewise".into(),
                n: default_n(),
                per_sample: false,
                spikes: default_spikes(),
                amplitude: default_amplitude(),
                path: None,
            },
            dictionary: DictionarySpec {
                kind: "db4-1d".into(),
                level: None,
            },
            sweep: SweepAxes {
                m: vec![100],
                n_train: vec![1000],
                snr_db: vec![10.0],
            },
            csvae: CsvaeSettings::default(),
            csgmm: CsgmmSettings::default(),
            sbl: SblSettings::default(),
            lasso: LassoSettings::default(),
            timing: TimingSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, EvalError> {
        let cfg: Self = toml::from_str(text).map_err(|e| EvalError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::Config(m));
        if self.seeds.is_empty() {
            return bad("seeds must be listed explicitly".into());
        }
        if self.sweep.m.is_empty() || self.sweep.n_train.is_empty() || self.sweep.snr_db.is_empty() {
            return bad("every sweep axis needs at least one value".into());
        }
        if self.methods.is_empty() {
            return bad("no methods listed".into());
        }
        if let Some(m) = self.methods.iter().find(|m| !METHODS.contains(&m.as_str())) {
            return bad(format!("unknown method {m}"));
        }
        if !["piecewise", "spikes", "idx"].contains(&self.dataset.family.as_str()) {
            return bad(format!("unknown dataset family {}", self.dataset.family));
        }
        if self.dataset.family == "idx" && self.dataset.path.is_none() {
            return bad("the idx family needs a path".into());
        }
        if self.n_test == 0 {
            return bad("n_test must be positive".into());
        }
        if !["cme", "map"].contains(&self.csvae.estimator.as_str())
            || !["cme", "map"].contains(&self.csgmm.estimator.as_str())
        {
            return bad("estimators must be cme or map".into());
        }
        if self.lasso.lambdas.is_empty() || self.lasso.lambdas.iter().any(|l| !(*l >= 0.0)) {
            return bad("lasso needs non-negative shrinkage candidates".into());
        }
        self.csvae.train.validate().map_err(|e| EvalError::Config(e.to_string()))?;
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form,
    /// ignoring `output_dir`.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir.clear();
        config_hash(&c)
    }
}

pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    let digest = Sha256::digest(&json);
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
