//! Command-line front end for discounted optimal control analysis on grids.
//!
//! Exit codes: 0 success, 1 computation failure, 2 configuration error.

mod commands;
mod config;
mod error;
mod svg;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{CommonOpts, RunConfig};
use error::CliResult;

#[derive(Parser)]
#[command(
    name = "turnpike",
    version,
    about = "Discounted optimal control on grids: Bellman solving, dissipativity certificates, turnpike diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Bellman equation; write V.csv, policy.csv and a convergence log
    Solve {
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Roll the optimal closed loop out from the given start values
    Rollout {
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Find equilibria and synthesize linear storage functions
    Equilibria {
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Verify a discounted strict dissipativity certificate on a grid
    Dissipativity {
        #[command(flatten)]
        opts: CommonOpts,
        /// Inequality variant: lower-bound the state deviation only, or the
        /// state and control deviation
        #[arg(long, value_parser = parse_variant, default_value = "x-u")]
        variant: turnpike_core::DissipativityVariant,
        /// Equilibrium index in the cost-sorted list (default: the local one)
        #[arg(long)]
        eq_index: Option<usize>,
    },
    /// Rotated value function, C/kappa bound, Q-sets and Lyapunov residuals
    Turnpike {
        #[command(flatten)]
        opts: CommonOpts,
        /// Q-set radius
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        /// Annulus inner radius for the C estimate (default: two grid cells)
        #[arg(long)]
        theta_lo: Option<f64>,
        /// Annulus outer radius for the C estimate (default: region radius)
        #[arg(long)]
        theta_hi: Option<f64>,
        #[arg(long)]
        eq_index: Option<usize>,
    },
    /// Full threshold pipeline: equilibria, storage, dissipativity, eta,
    /// delta, beta*, sigma/eps/theta
    Thresholds {
        #[command(flatten)]
        opts: CommonOpts,
        #[arg(long)]
        eq_index: Option<usize>,
    },
    /// Classify long-run behaviour over a discount-factor grid
    Scan {
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Re-run the preset pipelines behind a builtin example's figures
    Reproduce {
        /// Example id (1, 2 or 3)
        #[arg(value_name = "EXAMPLE", value_parser = clap::value_parser!(u8).range(1..=3))]
        example_id: u8,
        #[command(flatten)]
        opts: CommonOpts,
    },
}

fn parse_variant(s: &str) -> Result<turnpike_core::DissipativityVariant, String> {
    match s {
        "x-only" => Ok(turnpike_core::DissipativityVariant::XOnly),
        "x-u" | "xu" => Ok(turnpike_core::DissipativityVariant::XU),
        other => Err(format!(
            "unknown variant {other:?} (expected x-only or x-u)"
        )),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Solve { opts } => {
            let cfg = RunConfig::resolve("solve", &opts)?;
            commands::solve::cmd_solve(&cfg)
        }
        Command::Rollout { opts } => {
            let cfg = RunConfig::resolve("rollout", &opts)?;
            commands::solve::cmd_rollout(&cfg)
        }
        Command::Equilibria { opts } => {
            let cfg = RunConfig::resolve("equilibria", &opts)?;
            commands::certify::cmd_equilibria(&cfg)
        }
        Command::Dissipativity {
            opts,
            variant,
            eq_index,
        } => {
            let cfg = RunConfig::resolve("dissipativity", &opts)?;
            commands::certify::cmd_dissipativity(&cfg, variant, eq_index)
        }
        Command::Turnpike {
            opts,
            eps,
            theta_lo,
            theta_hi,
            eq_index,
        } => {
            let cfg = RunConfig::resolve("turnpike", &opts)?;
            commands::turnpike_cmd::cmd_turnpike(
                &cfg,
                &commands::turnpike_cmd::TurnpikeOpts {
                    eps,
                    theta_lo,
                    theta_hi,
                    eq_index,
                },
            )
        }
        Command::Thresholds { opts, eq_index } => {
            let cfg = RunConfig::resolve("thresholds", &opts)?;
            commands::thresholds::cmd_thresholds(&cfg, eq_index)
        }
        Command::Scan { opts } => {
            let cfg = RunConfig::resolve("scan", &opts)?;
            commands::scan::cmd_scan(&cfg)
        }
        Command::Reproduce {
            example_id,
            mut opts,
        } => {
            opts.example.get_or_insert(example_id);
            let cfg = RunConfig::resolve(&format!("reproduce-{example_id}"), &opts)?;
            commands::reproduce::cmd_reproduce(&cfg, example_id)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
