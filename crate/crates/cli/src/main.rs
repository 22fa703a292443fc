//! Command-line front end for the experiment runners.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use gp_bounds::experiments::{self, Command, ExperimentConfig, RunOptions};

/// Gaussian process regression with certified uniform error bounds.
#[derive(Debug, Parser)]
#[command(name = "gp-bounds", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed; overrides the seed in the configuration.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Output directory [default: results/<command>].
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Skip SVG plots (CSV and TOML are always written).
    #[arg(long, global = true)]
    no_plots: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Cmd {
    /// Fit kernel hyperparameters to a dataset ([fit] section).
    Fit,
    /// Uniform error certificate for a dataset on a box ([certify] section).
    Certify,
    /// Probabilistic Lipschitz constant of GP samples ([lipschitz] section).
    Lipschitz,
    /// Closed-loop tracking ([synthetic] and/or [robot] sections).
    Simulate,
    /// Error bound for growing training sets ([asymptotics] section).
    Asymptotics,
    /// Synthetic tracking experiment with built-in constants.
    #[command(name = "repro-5.1")]
    ReproSynthetic,
    /// Two-link arm experiment with built-in constants.
    #[command(name = "repro-5.2")]
    ReproRobot,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Fit => Command::Fit,
            Cmd::Certify => Command::Certify,
            Cmd::Lipschitz => Command::Lipschitz,
            Cmd::Simulate => Command::Simulate,
            Cmd::Asymptotics => Command::Asymptotics,
            Cmd::ReproSynthetic => Command::ReproSynthetic,
            Cmd::ReproRobot => Command::ReproRobot,
        }
    }
}

fn load_config(cli: &Cli, command: Command) -> Result<ExperimentConfig, String> {
    let mut config = match command {
        Command::ReproSynthetic | Command::ReproRobot => {
            if cli.config.is_some() {
                return Err(format!("{} accepts only --seed, --out and --no-plots", command.name()));
            }
            experiments::repro_config(command, 0).map_err(|e| e.to_string())?
        }
        _ => match &cli.config {
            Some(path) => ExperimentConfig::load(path).map_err(|e| format!("config: {e}"))?,
            None if command == Command::Asymptotics => ExperimentConfig::default(),
            None => return Err(format!("{} needs --config", command.name())),
        },
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = Command::from(cli.command);
    let config = match load_config(&cli, command) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    let mut opts = RunOptions::new(
        cli.out
            .clone()
            .unwrap_or_else(|| PathBuf::from("results").join(command.name())),
    );
    opts.plots = !cli.no_plots;
    opts.base_dir = cli.config.as_ref().and_then(|p| p.parent()).map(PathBuf::from);

    let start = Instant::now();
    let summary = match experiments::run(command, &config, &opts) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    for f in &summary.files {
        println!("wrote {}", f.display());
    }
    for c in &summary.checks {
        println!("[{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
    }
    println!("{} finished in {:.1} s", command.name(), start.elapsed().as_secs_f64());
    match summary.first_failure() {
        None => ExitCode::SUCCESS,
        Some(c) => {
            eprintln!("error: check failed: {}", c.name);
            ExitCode::from(2)
        }
    }
}
