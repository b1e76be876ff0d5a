//! The CLI subcommands as library functions. Each writes its artifacts
//! under the configured output directory and returns a summary for the
//! caller to print.

use std::fmt::Write as _;
use std::path::Path;

use clplu::io::{load_concealed, write_concealed, write_text};
use clplu::metrics::evaluate;
use clplu::{Checkpoint, Concealed, LossMode, MetricsReport, Model};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::pipeline::{
    checkpoint, conceal_splits, load_splits, read_json, resolve_scheme, run_grid, run_name, select,
    train_and_test, write_json, Layout, Selection, SPLITS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAudit {
    pub split: String,
    pub n: usize,
    pub passed: bool,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcealSummary {
    pub num_labels: usize,
    pub m: usize,
    pub c: usize,
    pub privacy_indices: Vec<usize>,
    pub partner_indices: Vec<usize>,
    pub audit: Vec<SplitAudit>,
}

impl ConcealSummary {
    pub fn passed(&self) -> bool {
        self.audit.iter().all(|a| a.passed)
    }
}

/// Splits, conceals and writes `concealed/{train,val,test}.{ml,truth}`,
/// `scheme.json` and `audit.json`.
pub fn cmd_conceal(cfg: &ExperimentConfig) -> Result<ConcealSummary> {
    let layout = Layout::new(&cfg.output);
    let splits = load_splits(cfg)?;
    let scheme = resolve_scheme(cfg, splits.train.num_labels(), None)?;
    let concealed = conceal_splits(&splits, &scheme)?;
    for split in SPLITS {
        let data = layout.split_data(split);
        write_concealed(concealed.get(split), &data, Some(&layout.split_truth(split)))
            .map_err(HarnessError::in_file(&data))?;
    }
    write_text(&layout.scheme(), &(scheme.to_json()? + "\n"))?;
    let summary = ConcealSummary {
        num_labels: scheme.num_labels,
        m: scheme.m(),
        c: scheme.c(),
        privacy_indices: scheme.privacy_indices(),
        partner_indices: scheme.partner_indices(),
        audit: concealed
            .audit()
            .into_iter()
            .map(|(split, report)| SplitAudit {
                n: concealed.get(&split).n(),
                split,
                passed: report.passed,
                violations: report.violations.len(),
            })
            .collect(),
    };
    write_json(&layout.audit(), &summary)?;
    if !summary.passed() {
        return Err(HarnessError::Usage(format!(
            "leak audit failed, see {}",
            layout.audit().display()
        )));
    }
    Ok(summary)
}

fn load_visible(path: &Path) -> Result<Concealed> {
    load_concealed(path, None).map_err(HarnessError::in_file(path))
}

/// Grid-searches `loss`. Every finished run leaves
/// `runs/<loss>/<run>/{checkpoint.json,log.ndjson}`; the validation winner is
/// copied to `runs/<loss>/best.json` and described in `selection.json`.
///
/// Concealed losses read the files written by [`cmd_conceal`] without their
/// `.truth` companions. Full BCE re-derives the fully labelled splits from
/// the dataset.
pub fn cmd_train(cfg: &ExperimentConfig, loss: LossMode) -> Result<Selection> {
    let layout = Layout::new(&cfg.output);
    let (train_set, val) = if loss == LossMode::FullBce {
        let splits = load_splits(cfg)?;
        (
            Concealed::fully_observed(&splits.train),
            Concealed::fully_observed(&splits.val),
        )
    } else {
        (
            load_visible(&layout.split_data("train"))?,
            load_visible(&layout.split_data("val"))?,
        )
    };
    let outcomes = run_grid(&train_set, &val, &cfg.grid.configs(loss));
    let runs = layout.runs(loss);
    for (k, o) in outcomes.iter().enumerate() {
        let dir = runs.join(run_name(k, &o.config));
        match &o.result {
            Ok((model, hist)) => {
                write_json(&dir.join("checkpoint.json"), &checkpoint(model, &o.config))?;
                write_text(&dir.join("log.ndjson"), &hist.to_ndjson()?)?;
            }
            Err(e) => write_text(&dir.join("error.txt"), &format!("{e}\n"))?,
        }
    }
    let grid = select(loss, outcomes)?;
    write_json(
        &layout.best_checkpoint(loss),
        &checkpoint(grid.best_model(), &grid.selection.winner_config),
    )?;
    write_json(&layout.selection(loss), &grid.selection)?;
    Ok(grid.selection)
}

/// Metrics of a checkpoint on a concealed split. The truth file is used
/// when it exists; without it the report covers the training-visible
/// targets only and has no `plu_label_accuracy`.
pub fn cmd_evaluate(
    checkpoint_path: &Path,
    data: &Path,
    truth: Option<&Path>,
    threshold: f64,
) -> Result<MetricsReport> {
    let ckpt: Checkpoint = read_json(checkpoint_path)?;
    let model: Model = ckpt.to_model().map_err(HarnessError::in_file(checkpoint_path))?;
    let cd: Concealed = load_concealed(data, truth).map_err(HarnessError::in_file(data))?;
    if (model.d(), model.num_labels()) != (cd.d(), cd.num_labels()) {
        let (context, expected, actual) = if model.d() != cd.d() {
            ("feature dimension", model.d(), cd.d())
        } else {
            ("label count", model.num_labels(), cd.num_labels())
        };
        return Err(HarnessError::File {
            path: data.to_path_buf(),
            source: clplu::Error::DimensionMismatch {
                context,
                expected,
                actual,
            },
        });
    }
    Ok(evaluate(&model, &cd, threshold)?)
}

/// [`cmd_evaluate`] on the experiment's own best checkpoint and test split;
/// the report is also written to `metrics/<loss>.json`.
pub fn cmd_evaluate_experiment(cfg: &ExperimentConfig, loss: LossMode) -> Result<MetricsReport> {
    let layout = Layout::new(&cfg.output);
    let truth = layout.split_truth("test");
    let report = cmd_evaluate(
        &layout.best_checkpoint(loss),
        &layout.split_data("test"),
        Some(&truth),
        cfg.grid.threshold,
    )?;
    write_json(&layout.metrics(loss), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub plu_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub average_precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub loss: LossMode,
    pub cells: Vec<SweepCell>,
}

/// Test average precision of the AN baseline and PLUL per PLU count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub plu_counts: Vec<usize>,
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_LOSSES: [LossMode; 2] = [LossMode::An, LossMode::Plul];

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("loss");
        for m in &self.plu_counts {
            let _ = write!(out, ",plu_{m}");
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(row.loss.name());
            for cell in &row.cells {
                match cell.average_precision {
                    Some(ap) => {
                        let _ = write!(out, ",{ap:.6}");
                    }
                    None => out.push_str(",FAILED"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn row(&self, loss: LossMode) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.loss == loss)
    }
}

/// Trains AN and PLUL for every PLU count. A failing cell is recorded and
/// the sweep carries on.
pub fn cmd_sweep(cfg: &ExperimentConfig, plu_counts: &[usize]) -> Result<SweepTable> {
    if plu_counts.is_empty() {
        return Err(HarnessError::Usage("--plu-counts needs at least one value".into()));
    }
    let layout = Layout::new(&cfg.output);
    let splits = load_splits(cfg)?;
    let num_labels = splits.train.num_labels();
    if let Some(&m) = plu_counts.iter().find(|&&m| m == 0 || 2 * m > num_labels) {
        return Err(HarnessError::Usage(format!(
            "PLU count {m} violates 1 <= count and 2 * count <= L ({num_labels} labels)"
        )));
    }
    let cells: Vec<(LossMode, usize)> = SWEEP_LOSSES
        .iter()
        .flat_map(|&loss| plu_counts.iter().map(move |&m| (loss, m)))
        .collect();
    let results: Vec<SweepCell> = cells
        .par_iter()
        .map(|&(loss, m)| {
            let outcome = resolve_scheme(cfg, num_labels, Some(m))
                .and_then(|scheme| conceal_splits(&splits, &scheme))
                .and_then(|concealed| train_and_test(cfg, loss, &splits, &concealed));
            match outcome {
                Ok((_, report)) => SweepCell {
                    plu_count: m,
                    average_precision: Some(report.average_precision),
                    error: None,
                },
                Err(e) => SweepCell {
                    plu_count: m,
                    average_precision: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let mut chunks = results.chunks(plu_counts.len());
    let table = SweepTable {
        plu_counts: plu_counts.to_vec(),
        rows: SWEEP_LOSSES
            .iter()
            .map(|&loss| SweepRow {
                loss,
                cells: chunks.next().expect("one chunk per loss").to_vec(),
            })
            .collect(),
    };
    write_text(&layout.sweep_csv(), &table.to_csv())?;
    write_json(&layout.sweep_json(), &table)?;
    Ok(table)
}
