//! Building blocks shared by the commands: splitting, concealment, grid
//! training and the on-disk layout of an experiment directory.

use std::path::{Path, PathBuf};

use clplu::conceal::{audit_no_leak, build_scheme, conceal, sample_privacy_indices};
use clplu::data::split_dataset;
use clplu::io::{load_dataset, write_text};
use clplu::metrics::evaluate;
use clplu::model::CheckpointMeta;
use clplu::{
    model_select, train, AuditReport, Candidate, Checkpoint, Concealed, Dataset, LossMode,
    MetricsReport, Model, PluScheme, TrainConfig, TrainHistory,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

pub const SPLITS: [&str; 3] = ["train", "val", "test"];

/// Paths inside an experiment output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn split_data(&self, split: &str) -> PathBuf {
        self.root.join("concealed").join(format!("{split}.ml"))
    }

    pub fn split_truth(&self, split: &str) -> PathBuf {
        self.root.join("concealed").join(format!("{split}.truth"))
    }

    pub fn scheme(&self) -> PathBuf {
        self.root.join("concealed").join("scheme.json")
    }

    pub fn audit(&self) -> PathBuf {
        self.root.join("concealed").join("audit.json")
    }

    pub fn runs(&self, loss: LossMode) -> PathBuf {
        self.root.join("runs").join(loss.name())
    }

    pub fn best_checkpoint(&self, loss: LossMode) -> PathBuf {
        self.runs(loss).join("best.json")
    }

    pub fn selection(&self, loss: LossMode) -> PathBuf {
        self.runs(loss).join("selection.json")
    }

    pub fn metrics(&self, loss: LossMode) -> PathBuf {
        self.root.join("metrics").join(format!("{}.json", loss.name()))
    }

    pub fn sweep_csv(&self) -> PathBuf {
        self.root.join("sweep").join("ablation.csv")
    }

    pub fn sweep_json(&self) -> PathBuf {
        self.root.join("sweep").join("ablation.json")
    }
}

/// Directory name of one grid cell. Rates use the shorter of plain and
/// exponent notation so extreme values still give a valid file name.
pub fn run_name(index: usize, cfg: &TrainConfig) -> String {
    format!(
        "{index:03}_lr{}_bs{}_wd{}_seed{}",
        short_float(cfg.lr),
        cfg.batch_size,
        short_float(cfg.weight_decay),
        cfg.seed
    )
}

fn short_float(x: f64) -> String {
    let plain = format!("{x}");
    let sci = format!("{x:e}");
    if sci.len() < plain.len() {
        sci
    } else {
        plain
    }
}

/// Fully labelled train/val/test splits.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Loads the configured dataset, splits it and, if enabled, min-max scales
/// all three parts with the training split's ranges.
pub fn load_splits(cfg: &ExperimentConfig) -> Result<Splits> {
    let path = &cfg.dataset.path;
    let ds: Dataset = load_dataset(path, cfg.dataset.format).map_err(HarnessError::in_file(path))?;
    cfg.check_label_count(ds.num_labels())?;
    let (train, val, test) = split_dataset(&ds, &cfg.split).map_err(HarnessError::in_file(path))?;
    if !cfg.dataset.scale {
        return Ok(Splits { train, val, test });
    }
    let (train, ranges) = train.minmax_scaled();
    Ok(Splits {
        val: val.apply_minmax(&ranges),
        test: test.apply_minmax(&ranges),
        train,
    })
}

/// Scheme with `count` PLUs (the config's count when `None`). Explicit
/// indices are used only when no other count is requested.
pub fn resolve_scheme(cfg: &ExperimentConfig, num_labels: usize, count: Option<usize>) -> Result<PluScheme> {
    let p = &cfg.privacy;
    let privacy = match (&p.indices, count) {
        (Some(idx), None) => idx.clone(),
        (_, count) => {
            let m = count.unwrap_or_else(|| cfg.plu_count());
            if m == 0 || 2 * m > num_labels {
                return Err(HarnessError::Usage(format!(
                    "PLU count {m} violates 1 <= count and 2 * count <= L ({num_labels} labels)"
                )));
            }
            sample_privacy_indices(num_labels, m, p.seed)?
        }
    };
    Ok(build_scheme(num_labels, &privacy, p.mode, p.seed)?)
}

#[derive(Debug, Clone)]
pub struct ConcealedSplits {
    pub scheme: PluScheme,
    pub train: Concealed,
    pub val: Concealed,
    pub test: Concealed,
}

impl ConcealedSplits {
    pub fn get(&self, split: &str) -> &Concealed {
        match split {
            "train" => &self.train,
            "val" => &self.val,
            "test" => &self.test,
            other => panic!("unknown split {other}"),
        }
    }

    /// Leak audit of every split; fails if any split fails.
    pub fn audit(&self) -> Vec<(String, AuditReport)> {
        SPLITS
            .iter()
            .map(|s| (s.to_string(), audit_no_leak(self.get(s))))
            .collect()
    }
}

pub fn conceal_splits(splits: &Splits, scheme: &PluScheme) -> Result<ConcealedSplits> {
    Ok(ConcealedSplits {
        scheme: scheme.clone(),
        train: conceal(&splits.train, scheme)?,
        val: conceal(&splits.val, scheme)?,
        test: conceal(&splits.test, scheme)?,
    })
}

/// One finished or failed grid cell.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config: TrainConfig,
    pub result: std::result::Result<(Model, TrainHistory), String>,
    numerical: bool,
}

/// Summary of a grid cell as written to `selection.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub config: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val: Option<MetricsReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub loss: LossMode,
    pub winner: String,
    pub winner_config: TrainConfig,
    pub winner_val: MetricsReport,
    pub runs: Vec<RunSummary>,
}

pub struct GridResult {
    pub outcomes: Vec<RunOutcome>,
    pub selection: Selection,
    pub winner: usize,
}

impl GridResult {
    pub fn best_model(&self) -> &Model {
        &self.outcomes[self.winner].result.as_ref().expect("winner finished").0
    }
}

/// Trains every config in parallel. Each run is deterministic and results
/// keep the order of `configs`, so the outcome does not depend on thread
/// scheduling.
pub fn run_grid(train_set: &Concealed, val: &Concealed, configs: &[TrainConfig]) -> Vec<RunOutcome> {
    configs
        .par_iter()
        .map(|cfg| {
            let result = train(train_set, Some(val), cfg);
            let numerical = matches!(result, Err(clplu::Error::NonFiniteLoss { .. }));
            RunOutcome {
                config: cfg.clone(),
                result: result.map_err(|e| e.to_string()),
                numerical,
            }
        })
        .collect()
}

/// Picks the winner on validation metrics.
pub fn select(loss: LossMode, outcomes: Vec<RunOutcome>) -> Result<GridResult> {
    let mut candidates = Vec::new();
    let mut finished = Vec::new();
    let mut runs = Vec::new();
    for (k, o) in outcomes.iter().enumerate() {
        let name = run_name(k, &o.config);
        match &o.result {
            Ok((_, hist)) => {
                let val = hist.final_val_metrics().cloned().expect("validation set given");
                candidates.push(Candidate {
                    config: o.config.clone(),
                    val: val.clone(),
                });
                finished.push(k);
                runs.push(RunSummary {
                    name,
                    config: o.config.clone(),
                    val: Some(val),
                    error: None,
                });
            }
            Err(e) => runs.push(RunSummary {
                name,
                config: o.config.clone(),
                val: None,
                error: Some(e.clone()),
            }),
        }
    }
    if candidates.is_empty() {
        let first = outcomes
            .first()
            .and_then(|o| o.result.as_ref().err().cloned())
            .unwrap_or_else(|| "empty grid".into());
        return Err(HarnessError::AllRunsFailed {
            numerical: !outcomes.is_empty() && outcomes.iter().all(|o| o.numerical),
            first,
        });
    }
    let pick = model_select(&candidates)?;
    let winner = finished[pick];
    let selection = Selection {
        loss,
        winner: runs[winner].name.clone(),
        winner_config: candidates[pick].config.clone(),
        winner_val: candidates[pick].val.clone(),
        runs,
    };
    Ok(GridResult {
        outcomes,
        selection,
        winner,
    })
}

/// Training data for `loss`: full BCE trains on the fully observed splits,
/// every other loss on the concealed ones.
pub fn training_pair(loss: LossMode, splits: &Splits, concealed: &ConcealedSplits) -> (Concealed, Concealed) {
    if loss == LossMode::FullBce {
        (
            Concealed::fully_observed(&splits.train),
            Concealed::fully_observed(&splits.val),
        )
    } else {
        (
            concealed.train.without_truth(),
            concealed.val.without_truth(),
        )
    }
}

/// Grid-searches `loss` and evaluates the winner on the concealed test
/// split (whose sealed truth supplies the full labels).
pub fn train_and_test(
    cfg: &ExperimentConfig,
    loss: LossMode,
    splits: &Splits,
    concealed: &ConcealedSplits,
) -> Result<(GridResult, MetricsReport)> {
    let (train_set, val) = training_pair(loss, splits, concealed);
    let outcomes = run_grid(&train_set, &val, &cfg.grid.configs(loss));
    let grid = select(loss, outcomes)?;
    let report = evaluate(grid.best_model(), &concealed.test, cfg.grid.threshold)?;
    Ok((grid, report))
}

pub fn checkpoint(model: &Model, cfg: &TrainConfig) -> Checkpoint {
    Checkpoint::from_model(
        model,
        CheckpointMeta {
            seed: cfg.seed,
            loss_mode: cfg.loss_mode.name().to_string(),
            epoch: cfg.epochs,
            config: Some(serde_json::to_value(cfg).expect("config serialises")),
        },
    )
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(clplu::Error::from)?;
    text.push('\n');
    write_text(path, &text).map_err(HarnessError::from)
}

pub fn read_json<S: for<'de> Deserialize<'de>>(path: &Path) -> Result<S> {
    let text = clplu::io::read_text(path).map_err(HarnessError::in_file(path))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::File {
        path: path.to_path_buf(),
        source: e.into(),
    })
}
