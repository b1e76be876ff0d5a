use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use clplu::convert::{parse_arff, parse_libsvm, ArffLabels};
use clplu::data::{synthetic, SyntheticSpec};
use clplu::io::write_dataset;
use clplu::{Dataset, Format, LossMode};
use clplu_harness::{
    cmd_conceal, cmd_evaluate, cmd_evaluate_experiment, cmd_reproduce, cmd_sweep, cmd_train,
    reproduce_config, ExperimentConfig, HarnessError, Result, EXIT_USAGE,
};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "clplu", version, about = "Conceal privacy labels and train on privacy-label units")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the split, privacy and training seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.apply_seed(seed);
        }
        if let Some(out) = &self.out {
            cfg.output = out.clone();
        }
        Ok(cfg)
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Loss {
    FullBce,
    An,
    Ap,
    Plul,
}

impl From<Loss> for LossMode {
    fn from(l: Loss) -> Self {
        match l {
            Loss::FullBce => LossMode::FullBce,
            Loss::An => LossMode::An,
            Loss::Ap => LossMode::Ap,
            Loss::Plul => LossMode::Plul,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum SourceFormat {
    Arff,
    Libsvm,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split the dataset and write concealed files, truth files and the scheme.
    Conceal {
        #[command(flatten)]
        common: Common,
    },
    /// Grid-search one loss and keep the validation winner.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        loss: Loss,
    },
    /// Print test metrics as JSON, either for an experiment's winner
    /// (`--config --loss`) or for an explicit checkpoint and data file.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        loss: Option<Loss>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, conflicts_with_all = ["config", "loss"])]
        checkpoint: Option<PathBuf>,
        #[arg(long, requires = "checkpoint")]
        data: Option<PathBuf>,
        #[arg(long, requires = "checkpoint")]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// AN vs PLUL test average precision across PLU counts (CSV).
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true)]
        plu_counts: Vec<usize>,
    },
    /// Rerun a published dataset and compare with the published numbers.
    Reproduce {
        /// yeast or scene
        name: String,
        /// Directory holding `<name>.ml`.
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Takes split, privacy seed, pairing mode and grid from this config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        plu_counts: Vec<usize>,
    },
    /// Convert ARFF or LIBSVM multi-label files to SPARSE_ML.
    Convert {
        #[arg(long, value_enum)]
        from: SourceFormat,
        /// ARFF label layout: `meka`, `first:<L>` or `last:<L>`.
        #[arg(long, default_value = "meka")]
        labels: String,
        /// LIBSVM feature indices start at 0 instead of 1.
        #[arg(long)]
        zero_based: bool,
        input: PathBuf,
        output: PathBuf,
    },
    /// Write a seeded synthetic dataset.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        labels: usize,
        #[arg(long)]
        cardinality: f64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "sparse_ml")]
        format: String,
        output: PathBuf,
    },
}

fn print_json<S: Serialize>(value: &S) {
    println!("{}", serde_json::to_string_pretty(value).expect("serialisable"));
}

fn parse_arff_labels(spec: &str) -> Result<ArffLabels> {
    let bad = || HarnessError::Usage(format!("--labels '{spec}' is not meka, first:<L> or last:<L>"));
    if spec == "meka" {
        return Ok(ArffLabels::Meka);
    }
    let (side, count) = spec.split_once(':').ok_or_else(bad)?;
    let count: usize = count.parse().map_err(|_| bad())?;
    match side {
        "first" => Ok(ArffLabels::First(count)),
        "last" => Ok(ArffLabels::Last(count)),
        _ => Err(bad()),
    }
}

fn convert(from: SourceFormat, labels: &str, zero_based: bool, input: &Path, output: &Path) -> Result<Dataset> {
    let text = clplu::io::read_text(input)?;
    let ds = match from {
        SourceFormat::Arff => parse_arff(&text, parse_arff_labels(labels)?),
        SourceFormat::Libsvm => parse_libsvm(&text, !zero_based, None, None),
    }
    .map_err(HarnessError::in_file(input))?;
    write_dataset(&ds, output, Format::SparseMl)?;
    Ok(ds)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Conceal { common } => {
            let summary = cmd_conceal(&common.load()?)?;
            print_json(&summary);
        }
        Command::Train { common, loss } => {
            let sel = cmd_train(&common.load()?, loss.into())?;
            eprintln!(
                "winner {} with validation average precision {:.4}",
                sel.winner, sel.winner_val.average_precision
            );
            print_json(&sel.winner_config);
        }
        Command::Evaluate {
            config,
            loss,
            out,
            checkpoint,
            data,
            truth,
            threshold,
        } => {
            let report = match (config, loss, checkpoint) {
                (Some(config), Some(loss), None) => {
                    let mut cfg = ExperimentConfig::load(&config)?;
                    if let Some(out) = out {
                        cfg.output = out;
                    }
                    cmd_evaluate_experiment(&cfg, loss.into())?
                }
                (None, None, Some(ckpt)) => {
                    let data = data.ok_or_else(|| HarnessError::Usage("--checkpoint needs --data".into()))?;
                    cmd_evaluate(&ckpt, &data, truth.as_deref(), threshold)?
                }
                _ => {
                    return Err(HarnessError::Usage(
                        "evaluate needs either --config with --loss, or --checkpoint with --data".into(),
                    ))
                }
            };
            print_json(&report);
        }
        Command::Sweep { common, plu_counts } => {
            let table = cmd_sweep(&common.load()?, &plu_counts)?;
            print!("{}", table.to_csv());
        }
        Command::Reproduce {
            name,
            data_dir,
            out,
            config,
            plu_counts,
        } => {
            clplu_harness::reproduce::check_known(&name)?;
            let base = config.as_deref().map(ExperimentConfig::load).transpose()?;
            let cfg = reproduce_config(&name, &data_dir, &out, base.as_ref());
            let report = cmd_reproduce(&name, &cfg, &plu_counts)?;
            print!("{}", clplu_harness::reproduce::to_markdown(&report));
        }
        Command::Convert {
            from,
            labels,
            zero_based,
            input,
            output,
        } => {
            let ds = convert(from, &labels, zero_based, &input, &output)?;
            eprintln!("wrote {} instances, d = {}, L = {}", ds.n(), ds.d(), ds.num_labels());
        }
        Command::Synth {
            n,
            d,
            labels,
            cardinality,
            noise,
            seed,
            format,
            output,
        } => {
            let ds: Dataset = synthetic(&SyntheticSpec {
                n,
                d,
                num_labels: labels,
                cardinality,
                label_noise: noise,
                seed,
            })?;
            write_dataset(&ds, &output, format.parse()?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("clplu: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
