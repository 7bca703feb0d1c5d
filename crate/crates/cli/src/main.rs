//! `qpot`: command-line front end for the reaction-network toolkit.
//!
//! Subcommands: `parse` (canonical network dump), `simulate` (ODE / SSA /
//! Hamiltonian trajectories as CSV), `analyze` (steady states, complex
//! balance, HJB residuals, quasipotentials, stationary distributions, level
//! sets). Reports are JSON, anything trajectory- or grid-shaped is CSV, and
//! every output starts with a header block recording the tool version, the
//! network hash, and the full parameter set so runs are reproducible.
//!
//! Exit codes: 0 success, 1 input error, 2 numerical failure.

mod commands;
mod output;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "qpot", version, about = "Reaction-network Hamiltonians, dynamics, and quasipotentials")]
struct Cli {
    /// Cap on worker threads for parallel sections.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct NetArg {
    /// Network file in the reaction DSL.
    #[arg(long)]
    net: PathBuf,
}

#[derive(Args, Clone)]
struct OutArg {
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a network file and dump its canonical form as JSON.
    Parse {
        /// Network file in the reaction DSL.
        file: PathBuf,
        /// Also report whether the network is weakly reversible.
        #[arg(long)]
        check_weak_reversibility: bool,
        #[command(flatten)]
        out: OutArg,
    },
    /// Integrate dynamics and emit a CSV trajectory.
    Simulate {
        #[command(flatten)]
        net: NetArg,
        /// ode | ssa | hamilton
        #[arg(long)]
        mode: String,
        /// Initial state, comma-separated concentrations.
        #[arg(long, value_delimiter = ',')]
        x0: Vec<f64>,
        /// Initial momentum for hamilton mode, comma-separated.
        #[arg(long, value_delimiter = ',')]
        p0: Option<Vec<f64>>,
        /// Horizon.
        #[arg(long, default_value_t = 5.0)]
        t: f64,
        /// Integrator tolerance (ode and hamilton).
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Volume scale for ssa mode.
        #[arg(long)]
        n: Option<u64>,
        /// RNG seed for ssa mode.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Structural and variational analyses; one report per subflag.
    Analyze {
        #[command(flatten)]
        net: NetArg,
        /// Locate the steady state in the class of --x0 and classify it.
        #[arg(long)]
        steady_state: bool,
        /// Complex-balance verdict with per-complex residual certificate.
        #[arg(long)]
        complex_balance: bool,
        /// Max |H(x, DV(c,x))| over a grid (Horn-Jackson gradient).
        #[arg(long)]
        hjb_residual: bool,
        /// 1D zero-level quasipotential table (x, p, Q) or minimum-action
        /// summary in higher dimensions.
        #[arg(long)]
        quasipotential: bool,
        /// Truncated stationary distribution of the scale-n chain.
        #[arg(long)]
        stationary: bool,
        /// Hamiltonian level-set samples (1D networks).
        #[arg(long)]
        levelset: bool,
        /// Anchor state, comma-separated.
        #[arg(long, value_delimiter = ',')]
        x0: Option<Vec<f64>>,
        /// Target state for --quasipotential in higher dimensions.
        #[arg(long, value_delimiter = ',')]
        target: Option<Vec<f64>>,
        /// Volume scale for --stationary.
        #[arg(long)]
        n: Option<u64>,
        /// Per-species truncation caps for --stationary.
        #[arg(long, value_delimiter = ',')]
        caps: Option<Vec<u64>>,
        /// x range for grids, as lo,hi.
        #[arg(long, value_delimiter = ',')]
        x_range: Option<Vec<f64>>,
        /// Grid size.
        #[arg(long, default_value_t = 101)]
        grid: usize,
        /// Energies for --levelset.
        #[arg(long, value_delimiter = ',')]
        energies: Option<Vec<f64>>,
        /// Horizon ladder for the minimum-action estimate.
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<f64>>,
        #[command(flatten)]
        out: OutArg,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        // A second build attempt in the same process is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
