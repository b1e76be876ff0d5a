//! Experiment configuration, read from TOML.
//!
//! ```toml
//! output = "runs/yeast"
//!
//! [dataset]
//! path = "../data/yeast.ml"   # relative to this file
//! format = "sparse_ml"        # or "dense_csv"
//! scale = true                # min-max scale with training-split ranges
//!
//! [split]
//! train_frac = 0.8
//! val_frac = 0.1
//! test_frac = 0.1
//! seed = 0
//!
//! [privacy]
//! count = 2                   # PLUs per instance
//! seed = 1                    # draws privacy labels and partners
//! mode = "dataset_fixed"      # or "per_instance"
//! # indices = [3, 7]          # explicit privacy labels instead of count
//!
//! [grid]
//! lr = [0.1, 0.01, 0.001]
//! batch_size = [8, 16, 32, 64, 256]
//! weight_decay = [1e-3, 1e-4]
//! epochs = 120
//! lr_decay_epochs = [40, 60, 100]
//! lr_decay_factor = 0.1
//! seeds = [0]
//! ```

use std::path::{Path, PathBuf};

use clplu::io::Format;
use clplu::{LossMode, PairingMode, ScenarioPreference, SplitSpec, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    #[serde(default)]
    pub split: SplitSpec,
    pub privacy: PrivacySection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub path: PathBuf,
    #[serde(default)]
    pub format: Format,
    #[serde(default = "yes")]
    pub scale: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PrivacySection {
    /// PLUs per instance. Required unless `indices` is given.
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub indices: Option<Vec<usize>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: PairingMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub lr: Vec<f64>,
    pub batch_size: Vec<usize>,
    pub weight_decay: Vec<f64>,
    pub epochs: usize,
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay_factor: f64,
    pub seeds: Vec<u64>,
    pub threshold: f64,
    pub scenario_preference: ScenarioPreference,
}

impl Default for GridSection {
    fn default() -> Self {
        let base = TrainConfig::default();
        Self {
            lr: vec![1e-1, 1e-2, 1e-3],
            batch_size: vec![8, 16, 32, 64, 256],
            weight_decay: vec![1e-3, 1e-4],
            epochs: base.epochs,
            lr_decay_epochs: base.lr_decay_epochs,
            lr_decay_factor: base.lr_decay_factor,
            seeds: vec![0],
            threshold: base.threshold,
            scenario_preference: base.scenario_preference,
        }
    }
}

impl GridSection {
    pub fn len(&self) -> usize {
        self.lr.len() * self.batch_size.len() * self.weight_decay.len() * self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every grid cell for `loss`, ordered by `(lr, batch_size,
    /// weight_decay, seed)` as listed in the config.
    pub fn configs(&self, loss: LossMode) -> Vec<TrainConfig> {
        let mut out = Vec::with_capacity(self.len());
        for &lr in &self.lr {
            for &batch_size in &self.batch_size {
                for &weight_decay in &self.weight_decay {
                    for &seed in &self.seeds {
                        out.push(TrainConfig {
                            epochs: self.epochs,
                            batch_size,
                            lr,
                            lr_decay_epochs: self.lr_decay_epochs.clone(),
                            lr_decay_factor: self.lr_decay_factor,
                            weight_decay,
                            loss_mode: loss,
                            seed,
                            threshold: self.threshold,
                            bias: true,
                            scenario_preference: self.scenario_preference,
                        });
                    }
                }
            }
        }
        out
    }
}

impl ExperimentConfig {
    /// Reads and validates a config file. Relative `dataset.path` and
    /// `output` are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| HarnessError::Config {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.dataset.path = base.join(&cfg.dataset.path);
        cfg.output = base.join(&cfg.output);
        cfg.validate().map_err(|msg| HarnessError::Config {
            path: path.to_path_buf(),
            msg,
        })?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Usage(e.to_string()))?;
        cfg.validate().map_err(HarnessError::Usage)?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Checks that do not need the dataset. [`Self::check_label_count`]
    /// finishes the job once `L` is known.
    pub fn validate(&self) -> std::result::Result<(), String> {
        self.split.validate().map_err(|e| e.to_string())?;
        let g = &self.grid;
        if g.is_empty() {
            return Err("grid is empty: lr, batch_size, weight_decay and seeds need values".into());
        }
        for cfg in g.configs(LossMode::Plul) {
            cfg.validate().map_err(|e| format!("grid: {e}"))?;
        }
        let p = &self.privacy;
        match (&p.count, &p.indices) {
            (None, None) => return Err("privacy needs `count` or `indices`".into()),
            (Some(0), _) => return Err("privacy.count must be >= 1".into()),
            (Some(c), Some(idx)) if *c != idx.len() => {
                return Err(format!(
                    "privacy.count = {c} disagrees with {} listed indices",
                    idx.len()
                ))
            }
            (_, Some(idx)) if idx.is_empty() => {
                return Err("privacy.indices must not be empty".into())
            }
            _ => {}
        }
        Ok(())
    }

    /// PLUs per instance.
    pub fn plu_count(&self) -> usize {
        self.privacy
            .count
            .or_else(|| self.privacy.indices.as_ref().map(Vec::len))
            .expect("validated")
    }

    pub fn check_label_count(&self, num_labels: usize) -> Result<()> {
        let m = self.plu_count();
        if 2 * m > num_labels {
            return Err(HarnessError::Usage(format!(
                "PLU count {m} violates 2 * count <= L ({num_labels} labels)"
            )));
        }
        Ok(())
    }

    /// Uses `seed` for the split, the privacy draw and the only grid seed.
    pub fn apply_seed(&mut self, seed: u64) {
        self.split.seed = seed;
        self.privacy.seed = seed;
        self.grid.seeds = vec![seed];
    }
}
