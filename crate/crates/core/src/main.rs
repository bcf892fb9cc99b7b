use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use fedmorph::cli::{parse_config, run_experiment, summarize};
use fedmorph::nn::ArchitectureSpec;

/// Worker threads used for client training; defaults to available parallelism.
const WORKERS_ENV: &str = "FEDMORPH_WORKERS";

#[derive(Parser)]
#[command(version, about = "Federated learning across heterogeneous client architectures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write per-round metrics as CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate final global accuracy (mean ± std over runs) from metrics CSVs.
    Summarize {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv_out: Option<PathBuf>,
    },
    /// Parse an architecture string and print its layers and parameter count.
    PrintArch {
        #[arg(long)]
        spec: String,
    },
}

fn init_workers() -> Result<()> {
    let Ok(value) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("{WORKERS_ENV} must be a positive integer, got `{value}`"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<()> {
    let cli = Cli::parse();
    init_workers()?;
    match cli.command {
        Command::Run { config, seed, out } => {
            let mut cfg = parse_config(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(seed) = seed {
                cfg.seed = seed;
                cfg.training.global_seed = seed;
            }
            let Some(out) = out.or_else(|| cfg.output.clone()) else {
                bail!("no output path: pass --out or set `output` in the config");
            };
            let s = run_experiment(&cfg, &out)?;
            println!(
                "{} seed {}: {} rounds, best global accuracy {:.4} (round {}), final {:.4} -> {}",
                cfg.strategy,
                cfg.seed,
                s.rounds,
                s.best_accuracy,
                s.best_round,
                s.final_accuracy,
                out.display()
            );
        }
        Command::Summarize { csv, csv_out } => {
            let summary = summarize(&csv)?;
            print!("{}", summary.render_table());
            if let Some(path) = csv_out {
                summary.write_csv(&path)?;
            }
        }
        Command::PrintArch { spec } => {
            let arch: ArchitectureSpec = spec.parse()?;
            println!("{arch}");
            let shapes = arch.feature_shapes();
            for (i, layer) in arch.layers().iter().enumerate() {
                println!("{i:>3}  {:<22} {} -> {}", layer.to_string(), shapes[i], shapes[i + 1]);
            }
            println!("parameters: {}", arch.param_count());
        }
    }
    Ok(())
}
