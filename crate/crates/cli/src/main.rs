use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ermf_cli::commands::{self, Invocation};

#[derive(Parser)]
#[command(
    name = "ermf",
    about = "Interacting diffusions on Erdős–Rényi graphs: coupled simulation, PDE limit and diagnostics"
)]
struct Cli {
    /// Experiment configuration (TOML)
    #[arg(short, long, global = true, default_value = "ermf.toml")]
    config: PathBuf,

    /// Override every seed in the config with a single one
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// One coupled quenched/annealed run with full diagnostics
    Simulate,
    /// Convergence sweep over the configured sizes and seeds
    Sweep,
    /// Degree-discrepancy statistics and concentration bounds
    GraphCheck,
    /// Solve the limiting PDE and export density snapshots
    Pde,
    /// Monte Carlo probe of the exponential-moment condition
    LdpCheck,
    /// Aggregate sweep rows into the convergence table
    Compare {
        /// Sweep rows CSV (defaults to `<out>/sweep_rows.csv`)
        #[arg(long)]
        rows: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // ignore the error if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let inv = Invocation {
        config_path: cli.config,
        seed_override: cli.seed,
        out_override: cli.out,
    };
    let result = match cli.cmd {
        Cmd::Simulate => commands::simulate(&inv),
        Cmd::Sweep => commands::sweep(&inv),
        Cmd::GraphCheck => commands::graph_check(&inv),
        Cmd::Pde => commands::pde(&inv),
        Cmd::LdpCheck => commands::ldp_check(&inv),
        Cmd::Compare { rows } => commands::compare(&inv, rows.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(ermf_cli::exit_code_for(&err))
        }
    }
}
