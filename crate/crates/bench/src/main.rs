use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use cmdp_bench::campaign::{prepare, run_campaign, WORKERS_ENV};
use cmdp_bench::config::{Algorithm, ExperimentConfig};
use cmdp_bench::summary::summarize_dir;

#[derive(Parser)]
#[command(name = "cmdp-bench", version, about = "Seeded CMDP learner benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured instance as CMDP JSON, plus its oracle solution.
    Generate(Overrides),
    /// Run the configured campaign.
    Run(Overrides),
    /// Recompute summary.json from the ledger CSVs in a directory.
    Summarize {
        #[arg(long)]
        out: PathBuf,
    },
}

/// Flags take precedence over the config file, which takes precedence over
/// built-in defaults.
#[derive(Args)]
struct Overrides {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    algo: Option<Algorithm>,
    /// Comma-separated list, e.g. `0,1,2`.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long = "K")]
    episodes: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    kprime: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// Worker threads for concurrent runs.
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.algo {
            cfg.algorithm = v;
        }
        if let Some(v) = &self.seeds {
            cfg.seeds = v.clone();
        }
        if let Some(v) = self.episodes {
            cfg.episodes = v;
        }
        if let Some(v) = self.delta {
            cfg.delta = v;
        }
        if let Some(v) = self.nu {
            cfg.nu = v;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = self.kprime {
            cfg.kprime = Some(v);
        }
        if let Some(v) = self.sigma {
            cfg.sigma = Some(v);
        }
        if let Some(v) = self.rho {
            cfg.rho = Some(v);
        }
        if let Some(n) = self.workers {
            std::env::set_var(WORKERS_ENV, n.to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Generate(overrides) => {
            let cfg = overrides.resolve()?;
            let prepared = prepare(&cfg)?;
            std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
            let instance = cfg.out.join("instance.json");
            std::fs::write(&instance, prepared.cmdp.to_json_string()? + "\n")?;
            let oracle = serde_json::json!({
                "optimal_value": prepared.exact.value,
                "duals": prepared.exact.duals,
                "baseline_gamma": prepared.baseline.gamma,
                "kprime": prepared.kprime,
                "sigma": prepared.sigma,
                "rho": prepared.rho,
            });
            std::fs::write(cfg.out.join("oracle.json"), serde_json::to_string_pretty(&oracle)? + "\n")?;
            println!("{}", instance.display());
        }
        Command::Run(overrides) => {
            let cfg = overrides.resolve()?;
            let summary = run_campaign(&cfg)?;
            for agg in &summary.aggregates {
                println!(
                    "{}: runs={} strong_c={:.3} strong_d={:.3} weak_c={:.3} weak_d={:.3} slope_d={}",
                    agg.algo,
                    agg.runs,
                    agg.mean_strong_c,
                    agg.mean_strong_d,
                    agg.mean_weak_c,
                    agg.mean_weak_d,
                    agg.mean_slope_strong_d.map_or("n/a".into(), |s| format!("{s:.3}"))
                );
            }
        }
        Command::Summarize { out } => {
            let summary = summarize_dir(&out)?;
            summary.write(&out.join("summary.json"))?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
    }
    Ok(())
}
