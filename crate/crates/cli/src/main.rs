use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fblf_cli::commands::{self, SimulateOptions};

#[derive(Parser)]
#[command(
    name = "fblf",
    version,
    about = "Barrier-constrained iterative learning simulations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more TOML configs and write trace/summary/memory CSVs.
    Simulate {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Output directory (overrides `output_dir` from the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write convergence.svg and constraint.svg.
        #[arg(long)]
        svg: bool,
        /// Number of configs to run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Check the barrier orderings and IBP limits at each bound.
    CompareBlf {
        #[arg(required = true)]
        bounds: Vec<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check r_k <= r_{k-1} - s_k (+ d_k) on a CSV with columns r,s[,d].
    CheckLemmas {
        csv: PathBuf,
        /// Asymptotic bound on d to test limsup s against.
        #[arg(long)]
        d_bar: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = match cli.command {
        Command::Simulate {
            configs,
            out,
            svg,
            jobs,
        } => commands::cmd_simulate(&configs, &SimulateOptions { out, svg, jobs }),
        Command::CompareBlf { bounds, out } => commands::cmd_compare_blf(&bounds, &out),
        Command::CheckLemmas { csv, d_bar } => commands::cmd_check_lemmas(&csv, d_bar),
    };
    ExitCode::from(status.code() as u8)
}
