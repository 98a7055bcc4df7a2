use std::path::PathBuf;
use std::process::ExitCode;

use adp_cli::config::{ExperimentConfig, Kind, Scale};
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adpbound", version, about = "Performance bounds for approximate dynamic programming")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the bound against exact solutions of random finite MDPs.
    OracleValidate {
        #[command(flatten)]
        common: Common,
        /// Validate this MDP instance file instead of random instances.
        #[arg(long)]
        mdp: Option<PathBuf>,
    },
    /// Learned-scheme bounds for the stochastic double integrator.
    LqgBounds {
        #[command(flatten)]
        common: Common,
    },
    /// Greedy coverage bounds over a λ₀ grid.
    CoverageSweep {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    scale: Option<Scale>,
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::parse(&text, common.scale).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ExperimentConfig::for_scale(common.scale.unwrap_or(Scale::Desk)),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out.clone_from(out);
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| -> Result<bool> {
        let (kind, mut cfg) = match &cli.command {
            Command::OracleValidate { common, .. } => (Kind::OracleValidate, load(common)?),
            Command::LqgBounds { common } => (Kind::LqgBounds, load(common)?),
            Command::CoverageSweep { common } => (Kind::CoverageSweep, load(common)?),
        };
        if let Command::OracleValidate { mdp: Some(path), .. } = &cli.command {
            cfg.oracle.mdp_file = Some(path.clone());
        }
        let out = cfg.out.clone();
        let outcome = adp_cli::run(kind, &cfg, &out)?;
        print!("{}", outcome.summary);
        for f in &outcome.files {
            println!("wrote {}", f.display());
        }
        println!("{}", if outcome.passed { "PASS" } else { "FAIL" });
        Ok(outcome.passed)
    })();
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
