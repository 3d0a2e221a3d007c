mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use soh_core::ssa::HyperparameterSpace;

use commands::{ExtractArgs, FleetArgs, PredictArgs, Session, SynthKind, TrainArgs, UsageError};

/// Battery state-of-health experiments: IC-curve health indicators, a
/// dual-module BiGRU and sparrow-search hyperparameter tuning.
///
/// Each run writes into OUT/<manifest-hash>/ and prints that directory.
#[derive(Debug, Parser)]
#[command(name = "soh", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output root; one directory per manifest hash is created below it.
    #[arg(long, global = true, value_name = "DIR", env = "SOH_OUT_ROOT", default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: one per core).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic lab-cycle and fleet datasets with known SOH.
    Synth {
        #[arg(long, value_enum, default_value_t = SynthKind::Both)]
        kind: SynthKind,
    },
    /// Build IC curves, health indicators and the correlation ranking.
    Extract(ExtractArgs),
    /// Train with the fixed network and predict past the starting point.
    Train(TrainArgs),
    /// Tune hyperparameters with sparrow search, then train and predict.
    Hpo(TrainArgs),
    /// Predict with saved models.
    Predict(PredictArgs),
    /// Train on one vehicle's monthly SOH and predict the others.
    Fleet(FleetArgs),
}

fn bounds_help() -> String {
    let s = HyperparameterSpace::default();
    format!(
        "Hyperparameter bounds (configurable under [tuning.space]; fixed values for `train` must lie inside):
  g1..g4         GRU units per block     [{}, {}]
  max_epochs     training epochs         [{}, {}]
  learning_rate  initial Adam rate       [{}, {}]
  batch_size     mini-batch size         [{}, {}]
  d1..d4         dropout rates           [{}, {}]
  The learning rate drops by a factor of {} every round({} * max_epochs) epochs.",
        s.units[0],
        s.units[1],
        s.max_epochs[0],
        s.max_epochs[1],
        s.learning_rate[0],
        s.learning_rate[1],
        s.batch_size[0],
        s.batch_size[1],
        s.dropout[0],
        s.dropout[1],
        s.lr_drop_factor,
        s.drop_period_fraction,
    )
}

fn run(cli: Cli) -> Result<PathBuf> {
    if let Some(n) = cli.global.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    let ctx = Session {
        config: commands::load_config(cli.global.config.as_deref(), cli.global.seed)?,
        out_root: cli.global.out,
    };
    let dir = match &cli.command {
        Command::Synth { kind } => commands::synth(&ctx, *kind)?,
        Command::Extract(a) => commands::cmd_extract(&ctx, a)?,
        Command::Train(a) => commands::cmd_train(&ctx, a, false)?,
        Command::Hpo(a) => commands::cmd_train(&ctx, a, true)?,
        Command::Predict(a) => commands::cmd_predict(&ctx, a)?,
        Command::Fleet(a) => commands::cmd_fleet(&ctx, a)?,
    };
    Ok(dir.path)
}

fn main() -> ExitCode {
    let help = bounds_help();
    let cmd = Cli::command()
        .after_help(help.clone())
        .mut_subcommand("train", |c| c.after_help(help.clone()))
        .mut_subcommand("hpo", |c| c.after_help(help.clone()));
    let cli = match Cli::from_arg_matches(&cmd.get_matches()) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
