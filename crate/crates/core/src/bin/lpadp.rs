use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lpadp::harness::{self, ExperimentConfig, ExperimentKind, Variant};

/// Multi-step Q-learning value iteration by linear programming.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment config; defaults reproduce the benchmark setup.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true, action = clap::ArgAction::Set)]
    constrained: Option<bool>,
    /// Horizon gain K in H_i = 1 + round(K sqrt(i)).
    #[arg(long, global = true)]
    k_gain: Option<f64>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
}

#[derive(Subcommand, Debug, Clone)]
enum Command {
    /// Run all five algorithm variants on one buffer.
    Compare,
    /// Iterations to converge as a function of the horizon gain.
    SweepK,
    /// Closed-loop tracking under a learned or supplied controller.
    Track,
    /// A single algorithm variant.
    Run {
        /// e.g. `msq-vi-lp[A]`, `q-pi-lp`, `q-vi-lp-s`.
        #[arg(long)]
        variant: Option<String>,
    },
}

fn load(cli: &Cli) -> lpadp::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.kind = match cli.command {
        Command::Compare => ExperimentKind::Compare,
        Command::SweepK => ExperimentKind::SweepK,
        Command::Track => ExperimentKind::Track,
        Command::Run { .. } => ExperimentKind::Run,
    };
    if let Command::Run { variant: Some(v) } = &cli.command {
        cfg.run_variant = Variant::parse(v)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    if let Some(c) = cli.constrained {
        cfg.constrained = c;
    }
    if let Some(k) = cli.k_gain {
        cfg.algorithm.horizon_gain = k;
    }
    if let Some(eps) = cli.epsilon {
        cfg.algorithm.epsilon = eps;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = load(&cli).and_then(|cfg| {
        let ok = harness::execute(&cfg)?;
        log::info!("outputs written to {}", cfg.out_dir.display());
        Ok(ok)
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            log::warn!("an arm did not converge or the closed loop diverged; see summary.json");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
