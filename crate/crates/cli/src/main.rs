mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dfdetect_core::fixture::FixtureCounts;
use dfdetect_core::gradcheck::{GradcheckConfig, DEFAULT_INSTANCES};
use dfdetect_core::{ConfusionMatrix, Label, Split};

use crate::commands::{EvalArgs, TrainArgs};
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "dfdetect", version, about = "Train and evaluate real/deepfake face-image classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint plus a JSON training report.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset directory or manifest CSV.
        #[arg(long)]
        data: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `<out>.report.json`.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        model: Option<String>,
        /// Any config key, as `key=value`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Classify one split and write a metrics report.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        report: PathBuf,
        /// Also write the ROC curve as `fpr,tpr` CSV.
        #[arg(long)]
        roc: Option<PathBuf>,
        #[arg(long, default_value = "deepfake")]
        positive_class: Label,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
    },
    /// Print `label score` for one image.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Metrics for a confusion matrix given as counts.
    Metrics {
        #[arg(long)]
        tp: u64,
        #[arg(long)]
        fp: u64,
        #[arg(long = "fn")]
        fn_: u64,
        #[arg(long)]
        tn: u64,
        #[arg(long, default_value = "deepfake")]
        positive_class: Label,
        /// Print the full JSON report instead of the summary.
        #[arg(long)]
        json: bool,
    },
    /// Finite-difference check of every backward pass.
    Gradcheck {
        /// A layer, loss or model name, or `all`.
        #[arg(long, default_value = "all")]
        layer: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_INSTANCES)]
        instances: usize,
        /// Corrupt the analytic gradients to prove the check can fail.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Write the seeded synthetic dataset as a directory of PPM files.
    MakeFixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 32)]
        train: usize,
        #[arg(long, default_value_t = 16)]
        valid: usize,
        #[arg(long, default_value_t = 16)]
        test: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train {
            config,
            data,
            out,
            report,
            seed,
            epochs,
            model,
            mut overrides,
        } => {
            if let Some(d) = data {
                overrides.push(format!("data={}", toml::Value::String(d)));
            }
            if let Some(s) = seed {
                overrides.push(format!("seed={s}"));
            }
            if let Some(e) = epochs {
                overrides.push(format!("epochs={e}"));
            }
            if let Some(m) = model {
                overrides.push(format!("model={}", toml::Value::String(m)));
            }
            let config = RunConfig::load(config.as_deref(), &overrides)?;
            commands::cmd_train(TrainArgs { config, out, report })
        }
        Command::Eval {
            model,
            data,
            split,
            report,
            roc,
            positive_class,
            threshold,
            batch_size,
        } => commands::cmd_eval(EvalArgs {
            model,
            data,
            split,
            report,
            roc,
            positive_class,
            threshold,
            batch_size,
        }),
        Command::Predict { model, image, threshold } => commands::cmd_predict(&model, &image, threshold),
        Command::Metrics {
            tp,
            fp,
            fn_,
            tn,
            positive_class,
            json,
        } => commands::cmd_metrics(ConfusionMatrix::new(tp, fp, fn_, tn, positive_class), json),
        Command::Gradcheck {
            layer,
            seed,
            instances,
            inject_fault,
        } => commands::cmd_gradcheck(
            &layer,
            GradcheckConfig {
                seed,
                instances,
                inject_fault,
            },
        ),
        Command::MakeFixture {
            out,
            train,
            valid,
            test,
            size,
            seed,
        } => commands::cmd_make_fixture(&out, FixtureCounts { train, valid, test }, size, seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(error::EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
