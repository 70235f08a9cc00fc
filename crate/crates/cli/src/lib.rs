//! Command-line experiment runner: training, sweeps, exhaustive
//! order-preservation checks, sparsity profiling and metric aggregation.

pub mod config;
pub mod metrics;
pub mod output;
pub mod sparsity;
pub mod sweep;
pub mod train;
pub mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "sprb",
    version,
    about = "Deep Q-learning with self-punishment and reward backfill"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// TOML config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Replace the config's seed (base seed for sweeps).
    #[arg(long)]
    pub seed_override: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one agent.
    Train(CommonArgs),
    /// Run a grid of envs, variants, shapings and seeds.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Worker threads (defaults to the config's `jobs`, then all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Check policy-order preservation by enumerating every policy.
    Verify(CommonArgs),
    /// Measure gaps between nonzero rewards under a policy.
    Sparsity(CommonArgs),
    /// Recompute sweep aggregates from an existing runs manifest.
    Metrics {
        /// Path to `runs.csv` written by `sweep`.
        #[arg(long)]
        config: PathBuf,
        /// Directory for the recomputed tables.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

/// Exit status when an asserted verification claim fails.
pub const EXIT_VERIFY_FAILED: u8 = 2;

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train(args) => {
            let mut cfg: config::TrainConfig = config::load(&args.config)?;
            if let Some(seed) = args.seed_override {
                cfg.agent.seed = seed;
            }
            train::run_train(&cfg, &args.out)?;
            println!("wrote {}", args.out.join(train::HISTORY_FILE).display());
        }
        Command::Sweep { common, jobs } => {
            let mut cfg: config::SweepConfig = config::load(&common.config)?;
            if let Some(seed) = common.seed_override {
                cfg.base_seed = seed;
            }
            let records = sweep::run_sweep(&cfg, &common.out, jobs)?;
            let failed = records.iter().filter(|r| !r.ok()).count();
            println!(
                "{} runs, {failed} failed; tables in {}",
                records.len(),
                common.out.display()
            );
            for r in records.iter().filter(|r| !r.ok()) {
                eprintln!("warning: {} {} seed {}: {}", r.env, r.method(), r.seed, r.status);
            }
        }
        Command::Verify(args) => {
            let cfg: config::VerifyConfig = config::load(&args.config)?;
            let reports = verify::run_verify(&cfg, &args.out)?;
            let mut failed = false;
            for r in &reports {
                println!(
                    "{} {} gamma={}: {} policies, {} inversions, claim {:?}",
                    r.env, r.shaping, r.gamma, r.policy_count, r.inversion_count, r.claim
                );
                for w in r.warnings() {
                    eprintln!("warning: {w}");
                }
                for v in &r.violations {
                    eprintln!("error: {v}");
                    failed = true;
                }
                if r.failed() {
                    if let Some(inv) = r.inversions.first() {
                        eprintln!(
                            "witness: {:?} (v={}, v_hat={}) vs {:?} (v={}, v_hat={})",
                            inv.lower.0, inv.v.0, inv.v_hat.0, inv.higher.0, inv.v.1, inv.v_hat.1
                        );
                    }
                }
            }
            if failed {
                return Ok(ExitCode::from(EXIT_VERIFY_FAILED));
            }
        }
        Command::Sparsity(args) => {
            let mut cfg: config::SparsityConfig = config::load(&args.config)?;
            if let Some(seed) = args.seed_override {
                cfg.seed = seed;
            }
            let res = sparsity::run_sparsity(&cfg, &args.out)?;
            println!(
                "{}: mean sparsity length {}",
                res.env,
                output::opt_f64(res.mean_sparsity_length)
            );
        }
        Command::Metrics { config, out } => {
            let records = metrics::run_metrics(&config, &out)?;
            println!("recomputed {} runs into {}", records.len(), out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}
