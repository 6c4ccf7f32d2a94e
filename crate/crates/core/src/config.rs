//! JSON run configuration for the `search` and `sweep` commands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictor::PredictorConfig;
use crate::search::{SamplingMode, SearchConfig, SearchSpace};

/// Every field is optional; unknown keys are rejected. Files loaded with
/// [`RunConfig::load`] must name a `bench`.
///
/// ```json
/// {"bench": "space.jsonl", "dataset": "synthetic", "out_dir": "out",
///  "n_pool": 100, "top_k": 20, "runs": 10, "seed": 7, "hidden_dim": 32}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub bench: PathBuf,
    #[serde(default = "default_dataset")]
    pub dataset: String,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,

    #[serde(default = "d::n_pool")]
    pub n_pool: usize,
    #[serde(default = "d::top_k")]
    pub top_k: usize,
    #[serde(default = "d::c_bts")]
    pub c_bts: usize,
    #[serde(default = "d::c_eval")]
    pub c_eval: usize,
    #[serde(default = "d::update_freq")]
    pub update_freq: usize,
    #[serde(default = "d::lambda")]
    pub lambda: f64,
    #[serde(default = "d::alpha")]
    pub alpha: f64,
    #[serde(default = "d::max_iters")]
    pub max_iters: usize,
    #[serde(default = "d::batch_size")]
    pub batch_size: usize,
    #[serde(default = "d::runs")]
    pub runs: usize,
    #[serde(default)]
    pub sampling: SamplingMode,

    #[serde(default = "d::hidden_dim")]
    pub hidden_dim: usize,
    #[serde(default = "d::trunk_layers")]
    pub trunk_layers: usize,
    #[serde(default = "d::use_nsam")]
    pub use_nsam: bool,
    #[serde(default = "d::learning_rate")]
    pub learning_rate: f64,
}

fn default_dataset() -> String {
    crate::bench::SYNTHETIC_DATASET.to_string()
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

mod d {
    use crate::search::SearchConfig;

    fn s() -> SearchConfig {
        SearchConfig::default()
    }
    pub fn n_pool() -> usize {
        s().n_pool
    }
    pub fn top_k() -> usize {
        s().top_k
    }
    pub fn c_bts() -> usize {
        s().c_bts
    }
    pub fn c_eval() -> usize {
        s().c_eval
    }
    pub fn update_freq() -> usize {
        s().update_freq
    }
    pub fn lambda() -> f64 {
        s().lambda
    }
    pub fn alpha() -> f64 {
        s().alpha
    }
    pub fn max_iters() -> usize {
        s().max_iters
    }
    pub fn batch_size() -> usize {
        s().batch_size
    }
    pub fn runs() -> usize {
        s().runs
    }
    pub fn hidden_dim() -> usize {
        64
    }
    pub fn trunk_layers() -> usize {
        3
    }
    pub fn use_nsam() -> bool {
        true
    }
    pub fn learning_rate() -> f64 {
        1e-3
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.search().validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if cfg.bench.as_os_str().is_empty() {
            return Err(Error::Config(format!("{}: missing `bench`", path.display())));
        }
        if cfg.bench.is_relative() {
            if let Some(dir) = path.parent() {
                let candidate = dir.join(&cfg.bench);
                if !cfg.bench.exists() && candidate.exists() {
                    cfg.bench = candidate;
                }
            }
        }
        Ok(cfg)
    }

    pub fn search(&self) -> SearchConfig {
        SearchConfig {
            n_pool: self.n_pool,
            top_k: self.top_k,
            c_bts: self.c_bts,
            c_eval: self.c_eval,
            update_freq: self.update_freq,
            lambda: self.lambda,
            alpha: self.alpha,
            max_iters: self.max_iters,
            batch_size: self.batch_size,
            runs: self.runs,
            seed: self.seed,
            sampling: self.sampling,
        }
    }

    pub fn predictor(&self, space: &SearchSpace) -> Result<PredictorConfig> {
        let mut p = space.predictor_config();
        p.hidden_dim = self.hidden_dim;
        p.trunk_layers = self.trunk_layers;
        p.use_nsam = self.use_nsam;
        p.learning_rate = self.learning_rate;
        p.validate()?;
        Ok(p)
    }
}
