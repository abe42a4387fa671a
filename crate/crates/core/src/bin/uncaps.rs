use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use uncaps::experiment::{run_and_export, ExperimentConfig, Method};
use uncaps::Error;

#[derive(Parser)]
#[command(
    name = "uncaps",
    version,
    about = "Uncertainty-aware sim2real policy search experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (method, seed) cell of a config and write the result files.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated trial seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Comma-separated methods: StandardBO, UncAPS-EP, UncAPS+GA, UncAPS, DR.
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<String>>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn config_error(msg: impl std::fmt::Display) -> ExitCode {
    let msg = msg.to_string();
    eprintln!("config error: {}", msg.strip_prefix("config error: ").unwrap_or(&msg));
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let Command::Run {
        config,
        out,
        seeds,
        variants,
        jobs,
    } = Cli::parse().command;

    let mut cfg = match ExperimentConfig::load(&config) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    if let Some(s) = seeds {
        cfg.seeds = s;
    }
    if let Some(v) = variants {
        match v.iter().map(|s| s.parse()).collect::<Result<Vec<Method>, Error>>() {
            Ok(m) => cfg.variants = m,
            Err(e) => return config_error(e),
        }
    }
    if let Some(j) = jobs {
        cfg.jobs = j;
    }
    if let Some(o) = out {
        cfg.output_dir = Some(o);
    }
    if let Err(e) = cfg.validate() {
        return config_error(e);
    }
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("uncaps-out"));
    if let Err(e) = std::fs::create_dir_all(&dir) {
        return config_error(format!("output directory {}: {e}", dir.display()));
    }

    match run_and_export(&cfg, &dir) {
        Ok(results) => {
            for a in results.table.aggregates() {
                println!(
                    "{:<11} jumpstart {:>12.4} ± {:.4}  ({} seeds)",
                    a.method.name(),
                    a.mean,
                    a.pooled_stderr,
                    a.trials
                );
            }
            println!("results written to {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("runtime failure: {e}");
            ExitCode::from(2)
        }
    }
}
