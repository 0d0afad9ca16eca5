//! Command-line front end. Every experiment subcommand reads a flat
//! `key = value` config file (`--config`) and accepts `--set key=value`
//! overrides.
//!
//! Exit codes: 0 on success, 1 for configuration or input errors, 2 when
//! training diverges.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use selfadapt::adversarial::AttackSpec;
use selfadapt::data::{load_snapshot, save_snapshot};
use selfadapt::harness::{
    evaluate, prepare_dataset, run, sweep, ExperimentConfig, RunSummary, SweepSpec, OUTPUT_ROOT_ENV,
};
use selfadapt::metrics::recovery_report;
use selfadapt::selective::risk_coverage_csv;
use selfadapt::{Error, Mlp, Result, TargetStore, TrainMode};

#[derive(Parser)]
#[command(name = "selfadapt", version, about = "Self-adaptive training experiments")]
struct Cli {
    /// Root for relative output directories.
    #[arg(long, global = true, env = OUTPUT_ROOT_ENV)]
    output_root: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config file.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override one config key, e.g. `--set corruption.rate=0.4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Build and corrupt the configured dataset, writing a snapshot.
    Corrupt {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Snapshot path; defaults to `<output.dir>/dataset.satd`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train all trials of the configured experiment.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Evaluate a saved model on a dataset snapshot.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Also run a PGD attack with this radius.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = AttackSpec::default().steps)]
        steps: usize,
        #[arg(long, default_value_t = AttackSpec::default().step_size)]
        step_size: f64,
        #[arg(long, default_value_t = AttackSpec::default().lo, allow_hyphen_values = true)]
        lo: f64,
        #[arg(long, default_value_t = AttackSpec::default().hi, allow_hyphen_values = true)]
        hi: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// One run per value of a config axis plus a combined CSV.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// noise_rate, noise_scheme, width, alpha or start_epoch.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
    },
    /// Train with an abstention head and print the risk-coverage table.
    Selective {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Adversarial training with robust-accuracy tracking.
    Adversarial {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Label-recovery statistics of a saved target checkpoint.
    RecoverReport {
        #[arg(long)]
        targets: PathBuf,
        /// Snapshot of the training set the targets belong to.
        #[arg(long)]
        data: PathBuf,
        /// Directory for `confusion.csv`, `weights.csv` and `recovery.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(args: &ConfigArgs, root: Option<&Path>) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    for kv in &args.overrides {
        cfg.set_pair(kv)?;
    }
    if let Some(root) = root {
        if cfg.output_dir.is_relative() {
            cfg.output_dir = root.join(&cfg.output_dir);
        }
    }
    Ok(cfg)
}

fn print_summary(s: &RunSummary) {
    let m = &s.mean;
    println!(
        "config {}  trials {}  clean-val acc {:.4} ± {:.4}  noisy-train acc {:.4}  recovered {:.4}",
        &s.config_hash[..12],
        s.trials.len(),
        m.acc_clean_val,
        s.std.acc_clean_val,
        m.acc_noisy_train,
        m.recovered_accuracy
    );
}

fn execute(cli: Cli) -> Result<()> {
    let root = cli.output_root.as_deref();
    match cli.command {
        Command::Corrupt { cfg, out } => {
            let cfg = load_config(&cfg, root)?;
            cfg.validate()?;
            let ds = prepare_dataset(&cfg)?;
            let path = out.unwrap_or_else(|| cfg.output_dir.join("dataset.satd"));
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            save_snapshot(&ds, &path)?;
            println!(
                "{} samples, {} selected, label agreement {:.4} -> {}",
                ds.len(),
                ds.corrupted_mask().iter().filter(|&&m| m).count(),
                ds.label_agreement(),
                path.display()
            );
        }
        Command::Train { cfg } => print_summary(&run(&load_config(&cfg, root)?)?),
        Command::Eval { model, data, epsilon, steps, step_size, lo, hi, seed } => {
            let model = Mlp::read_from(std::fs::File::open(model)?)?;
            let ds = load_snapshot(data)?;
            let attack = epsilon.map(|epsilon| AttackSpec { epsilon, step_size, steps, lo, hi });
            let report = evaluate(&model, &ds, attack.as_ref(), seed)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Sweep { cfg, axis, values } => {
            let cfg = load_config(&cfg, root)?;
            let spec = SweepSpec { axis: axis.parse()?, values };
            spec.validate(&cfg)?;
            let points = sweep(&cfg, &spec)?;
            print!("{}", selfadapt::harness::sweep_csv(spec.axis, &points));
        }
        Command::Selective { cfg } => {
            let mut cfg = load_config(&cfg, root)?;
            cfg.mode = TrainMode::Selective;
            let summary = run(&cfg)?;
            print_summary(&summary);
            if let Some(points) = &summary.trials[0].risk_coverage {
                print!("{}", risk_coverage_csv(points));
            }
        }
        Command::Adversarial { cfg } => {
            let mut cfg = load_config(&cfg, root)?;
            if !cfg.mode.is_adversarial() {
                cfg.mode = TrainMode::TradesSat;
            }
            cfg.robust_eval_every.get_or_insert(cfg.epochs);
            let summary = run(&cfg)?;
            print_summary(&summary);
            print!("{}", std::fs::read_to_string(cfg.output_dir.join("trial_0/robust.csv"))?);
        }
        Command::RecoverReport { targets, data, out } => {
            let store = TargetStore::read_from(std::io::BufReader::new(std::fs::File::open(targets)?))?;
            let ds = load_snapshot(data)?;
            let report = recovery_report(&store, ds.clean_labels())?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("confusion.csv"), report.confusion_csv())?;
                std::fs::write(dir.join("weights.csv"), report.weight_csv())?;
                std::fs::write(dir.join("recovery.json"), serde_json::to_string_pretty(&report)?)?;
            }
            println!("recovered accuracy {:.4}", report.recovered_accuracy);
            print!("{}", report.confusion_csv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Diverged { .. } | Error::NonFinite { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
