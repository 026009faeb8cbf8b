use std::path::PathBuf;

use alice_core::{ErrorFunction, GaussianConfig};
use alice_harness::commands::{self, DeltaSource, EvalArgs, FitArgs, ScoreArgs};
use alice_harness::{suites, ExperimentConfig, HarnessError, Scenario};
use anyhow::Context;
use clap::{Parser, Subcommand};

/// Competence estimation for classifiers.
#[derive(Debug, Parser)]
#[command(name = "alice", version)]
struct Cli {
    /// Experiment configuration file (`key = value` lines). Flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// δ grid size [default: 100]
    #[arg(long, global = true)]
    deltas: Option<usize>,
    /// Trials per experiment setting [default: 10]
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// zero-one, xent, mse, top-k, top-<k> or distributional; repeatable or
    /// comma-separated.
    #[arg(long = "error-fn", global = true, value_delimiter = ',')]
    error_fn: Vec<ErrorFunction>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit an ALICE estimator and save it as JSON.
    FitAlice {
        /// Export directory, or a CSV with a `label` column.
        #[arg(long)]
        train: PathBuf,
        /// Prediction CSV when `--train` is a plain CSV.
        #[arg(long)]
        train_predictions: Option<PathBuf>,
        /// Labelled validation data for the transfer classifier's λ search.
        #[arg(long)]
        val: PathBuf,
        /// Output file [default: <out-dir>/alice.json]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score points and write `point_id,delta,estimator,score` rows.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Explicit δ values. Without them a grid of `--deltas` values is
        /// spanned over the errors on `--val`.
        #[arg(long, value_delimiter = ',')]
        delta: Vec<f64>,
        #[arg(long, required_unless_present = "delta")]
        val: Option<PathBuf>,
        #[arg(long)]
        val_predictions: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "alice")]
        estimators: Vec<String>,
        /// Output file [default: <out-dir>/scores.csv]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean AP and calibration on a labelled test set.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        test_predictions: Option<PathBuf>,
        #[arg(long)]
        val: PathBuf,
        #[arg(long)]
        val_predictions: Option<PathBuf>,
        /// Labelled training data; adds the trust-score baseline.
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long, default_value_t = 0.2)]
        calibration_delta: f64,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Run an experiment suite.
    Experiment { scenario: Scenario },
}

fn single_error_fn(cli: &Cli) -> anyhow::Result<Option<ErrorFunction>> {
    match cli.error_fn.as_slice() {
        [] => Ok(None),
        [e] => Ok(Some(*e)),
        _ => Err(HarnessError::Usage("this command takes a single --error-fn".into()).into()),
    }
}

fn config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.trials {
        cfg.trials = t;
    }
    if let Some(d) = cli.deltas {
        cfg.deltas = d;
    }
    if !cli.error_fn.is_empty() {
        cfg.error_fns = Some(cli.error_fn.clone());
    }
    if let Some(o) = &cli.out_dir {
        cfg.out_dir = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let cfg = config(&cli)?;
    let out_dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("results"));
    match &cli.command {
        Command::FitAlice {
            train,
            train_predictions,
            val,
            out,
        } => {
            let out = out.clone().unwrap_or_else(|| out_dir.join("alice.json"));
            let args = FitArgs {
                train: train.clone(),
                train_predictions: train_predictions.clone(),
                val: val.clone(),
                error_fn: single_error_fn(&cli)?.unwrap_or_else(ErrorFunction::zero_one),
                gaussian: GaussianConfig::default(),
                out: out.clone(),
            };
            let est = commands::fit_alice(&args).context("fit-alice")?;
            println!(
                "fitted {} classes, transfer λ = {}, wrote {}",
                est.label_space().len(),
                est.transfer().reg_strength(),
                out.display()
            );
        }
        Command::Score {
            model,
            data,
            predictions,
            delta,
            val,
            val_predictions,
            estimators,
            out,
        } => {
            let deltas = match val {
                Some(v) if delta.is_empty() => DeltaSource::Grid {
                    data: v.clone(),
                    predictions: val_predictions.clone(),
                    count: cfg.deltas,
                },
                _ => DeltaSource::Values(delta.clone()),
            };
            let out = out.clone().unwrap_or_else(|| out_dir.join("scores.csv"));
            let args = ScoreArgs {
                model: model.clone(),
                data: data.clone(),
                predictions: predictions.clone(),
                deltas,
                error_fn: single_error_fn(&cli)?,
                estimators: estimators.clone(),
                out: out.clone(),
            };
            let rows = commands::score_points(&args).context("score")?;
            println!("wrote {} rows to {}", rows.len(), out.display());
        }
        Command::Eval {
            model,
            test,
            test_predictions,
            val,
            val_predictions,
            train,
            calibration_delta,
            epsilon,
        } => {
            let args = EvalArgs {
                model: model.clone(),
                test: test.clone(),
                test_predictions: test_predictions.clone(),
                val: val.clone(),
                val_predictions: val_predictions.clone(),
                train: train.clone(),
                deltas: cfg.deltas,
                error_fn: single_error_fn(&cli)?,
                calibration_delta: *calibration_delta,
                epsilon: *epsilon,
                seed: cfg.seed,
                out_dir: out_dir.clone(),
            };
            let out = commands::evaluate(&args).context("eval")?;
            for e in &out.evaluation.estimators {
                println!("{:<20} mean AP {:.4}", e.name, e.mean_ap);
            }
            if let Some(d) = &out.decision {
                println!("ε = {}: {} flagged, {} of them competent", d.epsilon, d.flagged, d.flagged_competent);
            }
            println!("wrote {}", out_dir.display());
        }
        Command::Experiment { scenario } => {
            let report = suites::run(*scenario, &cfg)?;
            print!("{}", report.render());
            for p in report.write(&out_dir)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}
