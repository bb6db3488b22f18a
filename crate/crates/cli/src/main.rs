//! Command-line front end for range-based relative pose estimation:
//! pose solving, CRLB analysis, Monte-Carlo sweeps and deployment planning.
//!
//! All units are meters and radians; all randomness flows from the config
//! seed, so repeated runs with the same config produce byte-identical
//! output files.
//!
//! Exit codes: 0 ok, 2 input error, 3 non-convergence, 4 degenerate
//! geometry, 5 infeasible target / invalid linear model.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use config::RunConfig;

#[derive(Debug)]
pub struct CliError {
    pub exit_code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(exit_code: i32, message: String) -> Self {
        Self { exit_code, message }
    }

    pub fn input(message: String) -> Self {
        Self::new(2, message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Parser)]
#[command(
    name = "uwbpose",
    about = "Relative 6-DOF pose estimation from inter-robot UWB ranges",
    version
)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the primary output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format for sweep tables.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: OutputFormat,
    /// Suppress human summary lines on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the pose from a ranges CSV (tag_index,anchor_index,distance_m).
    Solve {
        /// Measured ranges CSV.
        #[arg(long)]
        ranges: PathBuf,
    },
    /// Singular values, CRLB and analytical floors for a pose + layout.
    Crlb,
    /// Monte-Carlo sweep along one parameter axis; emits a table.
    Sweep,
    /// Two-step deployment plan meeting error targets.
    Plan,
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(run(cli));
}

fn run(cli: Cli) -> i32 {
    if let Err(e) = init_thread_pool() {
        eprintln!("error: {e}");
        return 2;
    }

    let Some(config_path) = &cli.config else {
        eprintln!("error: --config is required");
        return 2;
    };
    let mut cfg = match RunConfig::load(config_path) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {}", e.message);
            return e.exit_code;
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }

    let result = match &cli.command {
        Command::Solve { ranges } => commands::cmd_solve(&cfg, ranges),
        Command::Crlb => commands::cmd_crlb(&cfg),
        Command::Sweep => commands::cmd_sweep(&cfg, cli.format),
        Command::Plan => commands::cmd_plan(&cfg),
    };

    match result {
        Ok(output) => {
            if !cli.quiet {
                for line in &output.summary {
                    eprintln!("{line}");
                }
            }
            if let Some(path) = &cli.out {
                if let Err(e) = std::fs::write(path, &output.primary) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return 2;
                }
            } else {
                let mut stdout = std::io::stdout().lock();
                if stdout.write_all(output.primary.as_bytes()).is_err() {
                    return 2;
                }
                if !output.primary.ends_with('\n') {
                    let _ = stdout.write_all(b"\n");
                }
            }
            output.exit_code
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.exit_code
        }
    }
}

/// Cap the worker count from UWBPOSE_THREADS when set.
fn init_thread_pool() -> Result<(), String> {
    let Ok(raw) = std::env::var("UWBPOSE_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .parse()
        .map_err(|e| format!("UWBPOSE_THREADS must be a positive integer: {e}"))?;
    if threads == 0 {
        return Err("UWBPOSE_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| format!("thread pool: {e}"))
}
