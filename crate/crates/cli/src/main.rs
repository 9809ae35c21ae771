use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use varbpr::Result;
use varbpr_cli::commands::{cmd_ablate, cmd_evaluate, cmd_robustness, cmd_scale, cmd_sweep, cmd_train};
use varbpr_cli::{exit_code, ExperimentConfig};

#[derive(Parser)]
#[command(name = "varbpr", version, about = "Variational BPR experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides output.directory)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Model seed (overrides model.seed)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model
    Train(Common),
    /// Evaluate a saved checkpoint
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Checkpoint path (default <out>/model.ckpt)
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Direction–strength sweep of the prior
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Cross rarity and quality levels instead of moving them in lockstep
        #[arg(long)]
        grid: bool,
    },
    /// Full model and its three ablations
    Ablate(Common),
    /// Likelihood trajectories under injected noise
    Robustness {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1")]
        rates: Vec<f64>,
    },
    /// Epoch time as a function of M+N
    Scale {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
        bag_sizes: Vec<usize>,
    },
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.model.seed = seed;
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.output.directory.clone());
    cfg.output.directory = out.clone();
    Ok((cfg, out))
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(c) => {
            let (cfg, out) = load(&c)?;
            let r = cmd_train(&cfg, &out)?;
            let m = &r.final_metrics;
            println!(
                "recall@{k} {:.4}  ndcg@{k} {:.4}  aplt@{k} {:.4}",
                m.recall_k,
                m.ndcg_k,
                m.aplt_k,
                k = cfg.eval.k
            );
        }
        Command::Evaluate { common, checkpoint } => {
            let (cfg, out) = load(&common)?;
            let m = cmd_evaluate(&cfg, &out, checkpoint.as_deref())?;
            println!(
                "recall@{k} {:.4}  ndcg@{k} {:.4}  aplt@{k} {:.4}",
                m.recall_k,
                m.ndcg_k,
                m.aplt_k,
                k = cfg.eval.k
            );
        }
        Command::Sweep { common, grid } => {
            let (cfg, out) = load(&common)?;
            let rows = cmd_sweep(&cfg, &out, grid)?;
            let failed = rows.iter().filter(|r| !r.ok).count();
            println!(
                "{} cells, {failed} failed, {} on the front",
                rows.len(),
                rows.iter().filter(|r| r.on_front).count()
            );
        }
        Command::Ablate(c) => {
            let (cfg, out) = load(&c)?;
            for r in cmd_ablate(&cfg, &out)? {
                println!("{:<10} recall {:.4}  ndcg {:.4}", r.variant, r.recall_k, r.ndcg_k);
            }
        }
        Command::Robustness { common, rates } => {
            let (cfg, out) = load(&common)?;
            let rows = cmd_robustness(&cfg, &out, &rates)?;
            println!("{} likelihood rows", rows.len());
        }
        Command::Scale { common, bag_sizes } => {
            let (cfg, out) = load(&common)?;
            for r in cmd_scale(&cfg, &out, &bag_sizes)? {
                println!("M+N={:<3} {:.3}s/epoch", r.m + r.n, r.seconds_per_epoch);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
