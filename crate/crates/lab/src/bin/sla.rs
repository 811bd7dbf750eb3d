use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sla_core::checkpoint;
use sla_lab::config::TrainConfig;
use sla_lab::data::{self, data_dir};
use sla_lab::ensemble::{run_ensemble, seeded_configs};
use sla_lab::eval::{evaluate, InferenceMode};
use sla_lab::reduce::reduction_check;
use sla_lab::toy::{toy_experiment, ToyMode, ToySettings, TOY_CSV_HEADER};
use sla_lab::train::{run_training, TrainOptions};
use sla_lab::{LabError, Result};

/// Self-supervised label augmentation experiments.
#[derive(Parser)]
#[command(name = "sla", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes metrics.csv and model.ckpt.
    Train {
        config: PathBuf,
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// Record wall-clock seconds in the metrics (breaks byte-identical reruns).
        #[arg(long)]
        timing: bool,
    },
    /// Evaluate a checkpoint on the test split named by a config.
    Eval {
        checkpoint: PathBuf,
        config: PathBuf,
        /// Comma-separated subset of si, ag, sd; defaults to all the model supports.
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<String>>,
    },
    /// Linear classifier on two digits, upright or rotated.
    Toy {
        #[arg(long, value_delimiter = ',', default_values_t = [6, 9])]
        pair: Vec<usize>,
        #[arg(long, default_value = "rotated_sla")]
        mode: String,
        #[arg(long, default_value_t = 5000)]
        iterations: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Data directory; defaults to $SLA_DATA_DIR or data/mnist.
        #[arg(long)]
        data: Option<PathBuf>,
        /// CSV file the result row is appended to.
        #[arg(long, default_value = "toy.csv")]
        csv: PathBuf,
    },
    /// Train k seeds of a config and score their logit average.
    Ensemble {
        config: PathBuf,
        #[arg(long, default_value_t = 4)]
        k: usize,
    },
    /// Check the joint-loss reductions on random tiny models.
    ReduceCheck {
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train { config, out, timing } => {
            let cfg = TrainConfig::load(&config)?;
            let outcome = run_training(&cfg, &TrainOptions { timing })?;
            outcome.save(&out)?;
            let last = outcome.final_metrics();
            let modes: Vec<String> = [InferenceMode::Si, InferenceMode::Ag, InferenceMode::Sd]
                .into_iter()
                .filter_map(|m| last.accuracy(m).map(|a| format!("{m}={a:.4}")))
                .collect();
            println!(
                "iteration {} loss {:.4} {} -> {}",
                last.iteration,
                last.loss_total,
                modes.join(" "),
                out.display()
            );
        }
        Command::Eval {
            checkpoint: ckpt,
            config,
            modes,
        } => {
            let cfg = TrainConfig::load(&config)?;
            let bytes = std::fs::read(&ckpt).map_err(|e| LabError::Io { path: ckpt.clone(), source: e })?;
            let model = checkpoint::decode(&bytes)?;
            let modes = match modes {
                Some(m) => m.iter().map(|s| s.parse()).collect::<Result<Vec<InferenceMode>>>()?,
                None => InferenceMode::supported(&model),
            };
            let set = cfg.transformation_set()?;
            let test = cfg.load_test()?;
            for (mode, acc) in evaluate(&model, &test, &set, &modes)? {
                println!("{mode} {acc:.4}");
            }
        }
        Command::Toy {
            pair,
            mode,
            iterations,
            batch_size,
            seed,
            data,
            csv,
        } => {
            let mode: ToyMode = mode.parse()?;
            if pair.len() != 2 {
                return Err(LabError::Config(format!("--pair takes two digits, got {pair:?}")));
            }
            let dir = data.unwrap_or_else(data_dir);
            let train = data::load_mnist_split(&dir, true)?;
            let test = data::load_mnist_split(&dir, false)?;
            let settings = ToySettings {
                iterations,
                batch_size,
                seed,
                ..ToySettings::default()
            };
            let r = toy_experiment(&train, &test, (pair[0], pair[1]), mode, &settings)?;
            append_row(&csv, TOY_CSV_HEADER, &r.to_csv())?;
            println!(
                "{} vs {} {}: test error {:.2}% over {} examples",
                pair[0],
                pair[1],
                mode,
                100.0 * r.test_error,
                r.test_examples
            );
        }
        Command::Ensemble { config, k } => {
            if k == 0 {
                return Err(LabError::Config("k must be at least 1".into()));
            }
            let cfg = TrainConfig::load(&config)?;
            let train = cfg.load_train()?;
            let test = cfg.load_test()?;
            let report = run_ensemble(&seeded_configs(&cfg, k), &train, &test)?;
            for (seed, acc) in report.seeds.iter().zip(&report.member_accuracies) {
                println!("seed {seed} {acc:.4}");
            }
            println!("mean {:.4}", report.mean_member_accuracy());
            println!("ensemble {:.4}", report.ensemble_accuracy);
        }
        Command::ReduceCheck { count, seed } => {
            let r = reduction_check(count, seed)?;
            let mt = r.max_mt_gap();
            let da = r.max_da_gap_after_offset();
            println!("cases {}", r.cases.len());
            println!("max |sla(w=u+v) - mt| {mt:.3e}");
            println!("max |sla(w=u) - da - ln M| {da:.3e}");
            println!("max |sla(w=u) - da| {:.3e}", r.max_da_gap());
            let pass = mt < 1e-9 && da < 1e-9;
            println!("{}", if pass { "pass" } else { "fail" });
            if !pass {
                return Err(LabError::Consistency("reduction identities violated".into()));
            }
        }
    }
    Ok(())
}

fn append_row(path: &Path, header: &str, row: &str) -> Result<()> {
    let fresh = !path.exists();
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| LabError::Io { path: path.into(), source: e })?;
    let io = |e| LabError::Io { path: path.into(), source: e };
    if fresh {
        writeln!(f, "{header}").map_err(io)?;
    }
    writeln!(f, "{row}").map_err(io)
}
