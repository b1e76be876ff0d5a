//! The workflows as library calls on small synthetic data.

use std::path::Path;

use clplu::data::{synthetic, SyntheticSpec};
use clplu::io::write_dataset;
use clplu::{Dataset, Format, LossMode};
use clplu_harness::pipeline::Layout;
use clplu_harness::{
    cmd_conceal, cmd_evaluate, cmd_evaluate_experiment, cmd_sweep, cmd_train, ExperimentConfig,
    HarnessError,
};

fn write_synthetic(dir: &Path, num_labels: usize) -> std::path::PathBuf {
    let ds: Dataset = synthetic(&SyntheticSpec {
        n: 160,
        d: 6,
        num_labels,
        cardinality: 2.0,
        label_noise: 0.02,
        seed: 11,
    })
    .unwrap();
    let path = dir.join("data.ml");
    write_dataset(&ds, &path, Format::SparseMl).unwrap();
    path
}

fn config(dir: &Path, extra_grid: &str) -> ExperimentConfig {
    let data = write_synthetic(dir, 6);
    let text = format!(
        "output = {out:?}\n[dataset]\npath = {data:?}\n[privacy]\ncount = 2\nseed = 3\n\
         [grid]\nlr = [0.1]\nbatch_size = [16, 32]\nweight_decay = [1e-4]\nepochs = 8\n\
         lr_decay_epochs = [4, 6]\n{extra_grid}",
        out = dir.join("out"),
    );
    ExperimentConfig::from_toml(&text).unwrap()
}

fn read_tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn conceal_writes_audited_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let summary = cmd_conceal(&cfg).unwrap();
    assert_eq!((summary.m, summary.c, summary.num_labels), (2, 2, 6));
    assert!(summary.passed());
    assert_eq!(summary.audit.iter().map(|a| a.n).sum::<usize>(), 160);
    let layout = Layout::new(&cfg.output);
    for split in ["train", "val", "test"] {
        assert!(layout.split_data(split).exists());
        assert!(layout.split_truth(split).exists());
    }
    let scheme = std::fs::read_to_string(layout.scheme()).unwrap();
    assert!(scheme.contains("\"mode\""), "{scheme}");
}

#[test]
fn whole_pipeline_is_byte_identical_on_rerun() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let cfg = config(dir, "");
        cmd_conceal(&cfg).unwrap();
        for loss in [LossMode::Plul, LossMode::FullBce] {
            cmd_train(&cfg, loss).unwrap();
            cmd_evaluate_experiment(&cfg, loss).unwrap();
        }
        cmd_sweep(&cfg, &[1, 2]).unwrap();
    }
    let (ta, tb) = (read_tree(&a.path().join("out")), read_tree(&b.path().join("out")));
    assert!(ta.len() > 10);
    assert_eq!(ta, tb);
}

#[test]
fn single_cell_grid_selects_that_cell() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), "");
    cfg.grid.batch_size = vec![32];
    cmd_conceal(&cfg).unwrap();
    let sel = cmd_train(&cfg, LossMode::An).unwrap();
    assert_eq!(sel.runs.len(), 1);
    assert_eq!(sel.winner, sel.runs[0].name);
    assert_eq!(sel.winner_config.batch_size, 32);
    let layout = Layout::new(&cfg.output);
    let run_dir = layout.runs(LossMode::An).join(&sel.winner);
    let log = std::fs::read_to_string(run_dir.join("log.ndjson")).unwrap();
    assert_eq!(log.lines().count(), cfg.grid.epochs);
    assert!(log.lines().all(|l| l.contains("\"scenario_counts\"")));
}

#[test]
fn concealed_training_needs_conceal_first() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let err = cmd_train(&cfg, LossMode::Plul).unwrap_err();
    assert!(err.to_string().contains("train.ml"), "{err}");
    assert_eq!(err.exit_code(), 1);
    // Full BCE reads the dataset itself.
    cmd_train(&cfg, LossMode::FullBce).unwrap();
}

#[test]
fn evaluation_without_truth_omits_member_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    cmd_conceal(&cfg).unwrap();
    cmd_train(&cfg, LossMode::Plul).unwrap();
    let layout = Layout::new(&cfg.output);
    let ckpt = layout.best_checkpoint(LossMode::Plul);
    let data = layout.split_data("test");
    let with = cmd_evaluate(&ckpt, &data, Some(&layout.split_truth("test")), 0.5).unwrap();
    assert!(with.plu_label_accuracy.is_some());
    let without = cmd_evaluate(&ckpt, &data, None, 0.5).unwrap();
    assert!(without.plu_label_accuracy.is_none());
    let json = serde_json::to_string(&without).unwrap();
    assert!(!json.contains("plu_label_accuracy"), "{json}");
}

#[test]
fn evaluation_rejects_mismatched_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    cmd_conceal(&cfg).unwrap();
    cmd_train(&cfg, LossMode::Plul).unwrap();
    let other = tempfile::tempdir().unwrap();
    let mut cfg8 = config(other.path(), "");
    let ds: Dataset = synthetic(&SyntheticSpec {
        n: 100,
        d: 9,
        num_labels: 6,
        cardinality: 2.0,
        label_noise: 0.0,
        seed: 1,
    })
    .unwrap();
    write_dataset(&ds, &cfg8.dataset.path, Format::SparseMl).unwrap();
    cfg8.output = other.path().join("out9");
    cmd_conceal(&cfg8).unwrap();
    let layout = Layout::new(&cfg.output);
    let err = cmd_evaluate(
        &layout.best_checkpoint(LossMode::Plul),
        &Layout::new(&cfg8.output).split_data("test"),
        None,
        0.5,
    )
    .unwrap_err();
    assert!(
        matches!(&err, HarnessError::File { source: clplu::Error::DimensionMismatch { .. }, .. }),
        "{err}"
    );
}

#[test]
fn sweep_table_has_one_row_per_loss_and_column_per_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let table = cmd_sweep(&cfg, &[2]).unwrap();
    assert_eq!(table.rows.len(), 2);
    assert!(table.rows.iter().all(|r| r.cells.len() == 1));
    let csv = table.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "loss,plu_2");
    assert!(lines[1].starts_with("an,") && lines[2].starts_with("plul,"));
    assert!(!csv.contains("FAILED"));

    let err = cmd_sweep(&cfg, &[1, 4]).unwrap_err();
    assert!(err.to_string().contains("2 * count <= L"), "{err}");
}

#[test]
fn diverging_cells_are_marked_failed() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), "");
    cfg.grid.lr = vec![1e300];
    let table = cmd_sweep(&cfg, &[1, 2]).unwrap();
    let csv = table.to_csv();
    assert_eq!(csv.matches("FAILED").count(), 4, "{csv}");
    assert!(table.rows.iter().flat_map(|r| &r.cells).all(|c| c.error.is_some()));

    cmd_conceal(&cfg).unwrap();
    let err = cmd_train(&cfg, LossMode::Plul).unwrap_err();
    assert!(err.is_numerical(), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn invalid_plu_count_names_the_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), "");
    cfg.privacy.count = Some(4);
    let err = cmd_conceal(&cfg).unwrap_err();
    assert!(err.to_string().contains("2 * count <= L"), "{err}");
    assert_eq!(err.exit_code(), 1);
}
