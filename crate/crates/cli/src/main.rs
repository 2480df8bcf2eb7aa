use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ddpgd::bench::{cmd_compare, cmd_offline, cmd_online, cmd_report, BenchmarkConfig, Scale};
use log::info;

#[derive(Parser)]
#[command(name = "pgdschwarz", version, about = "Offline PGD surrogates and online surrogate-based Schwarz solves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the local surrogate models of every reference subdomain.
    Offline(Common),
    /// Solve the interface problem with the stored surrogates.
    Online(Common),
    /// Compare DD-PGD with DD-FEM and monolithic FEM.
    Compare(Common),
    /// Merge the online runs of one or more output directories.
    Report {
        /// Directory receiving report.csv and residuals.csv.
        #[arg(long)]
        out: PathBuf,
        /// Output directories to scan; defaults to `--out`.
        runs: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Paper,
    Desk,
}

impl From<ScaleArg> for Scale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Paper => Scale::Paper,
            ScaleArg::Desk => Scale::Desk,
        }
    }
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Parameter point as comma-separated values or a named case; repeatable.
    #[arg(long)]
    mu: Vec<String>,
    /// Seed of the random parameter draw in `compare`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the offline phase (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, value_enum, default_value_t = ScaleArg::Desk)]
    scale: ScaleArg,
}

impl Common {
    fn points(&self) -> Result<Vec<Vec<f64>>> {
        if self.mu.is_empty() {
            return Ok(Vec::new());
        }
        let cfg = BenchmarkConfig::load(&self.config).with_context(|| format!("loading {}", self.config.display()))?;
        self.mu
            .iter()
            .map(|m| cfg.parse_point(m).with_context(|| format!("parsing --mu {m}")))
            .collect()
    }

    fn workers(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        }
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Offline(c) => {
            std::fs::create_dir_all(&c.out)?;
            let s = cmd_offline(&c.config, c.scale.into(), &c.out, c.workers()).context("offline phase")?;
            for m in &s.models {
                info!(
                    "{}: {} subproblems, {} modes ({} after compression)",
                    m.id, m.subproblems, m.raw_modes, m.compressed_modes
                );
            }
        }
        Command::Online(c) => {
            let points = c.points()?;
            for s in cmd_online(&c.config, c.scale.into(), &c.out, &points).context("online phase")? {
                println!(
                    "mu={:?} iterations={} converged={} error={:.3e} overlap_mismatch={:.3e}",
                    s.mu, s.iterations, s.converged, s.error, s.overlap_mismatch
                );
            }
        }
        Command::Compare(c) => {
            let points = c.points()?;
            let rows = cmd_compare(&c.config, c.scale.into(), &c.out, &points, c.seed).context("comparison")?;
            info!("wrote {} rows to {}", rows.len(), c.out.join("compare.csv").display());
        }
        Command::Report { out, runs } => {
            let runs = if runs.is_empty() { vec![out.clone()] } else { runs };
            let n = cmd_report(&runs, &out).context("report")?;
            info!("merged {n} runs into {}", out.join("report.csv").display());
        }
    }
    Ok(())
}
