mod commands;
mod parse;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spongedim::Error;

#[derive(Parser, Debug)]
#[command(name = "spongedim", version, about = "Dimensions of Mandelbrot measures and fractal percolation on diagonal sponges")]
pub struct Cli {
    /// Directory receiving result files and the run manifest.
    #[arg(long, global = true, default_value = "spongedim-out")]
    pub out: PathBuf,
    /// Print the versioned JSON result document on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct IfsArg {
    /// IFS file: {"dimension": d, "maps": [{"a": [...], "t": [...]}, ...]}.
    #[arg(long)]
    pub ifs: PathBuf,
}

/// A weight law, from a file or inline.
#[derive(Args, Debug, Clone)]
pub struct WeightsArg {
    /// Weight-model file (deterministic, percolation or atoms).
    #[arg(long, conflicts_with = "p")]
    pub weights: Option<PathBuf>,
    /// Inline probability vector, comma separated.
    #[arg(long)]
    pub p: Option<String>,
    /// Survival probabilities: one value for every letter or a comma-separated list.
    #[arg(long)]
    pub alpha: Option<String>,
}

/// A level-dependent sequence, from a file or a constant law repeated.
#[derive(Args, Debug, Clone)]
pub struct SequenceArg {
    /// Block sequence file ({"blocks": [{"len", "model"}]}) or type-ℓ file ({"blocks": [{"len", "p"}], "alpha"}).
    #[arg(long)]
    pub sequence: Option<PathBuf>,
    #[command(flatten)]
    pub weights: WeightsArg,
    /// Length of the constant sequence built from --weights/--p.
    #[arg(long)]
    pub len: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Checks the structural conditions on an IFS.
    Validate(IfsArg),
    /// Sponge class and feasible direction sets.
    Classify(IfsArg),
    /// Projection coding along a chain of direction sets.
    Coding {
        #[command(flatten)]
        ifs: IfsArg,
        /// Chain of axis sets, e.g. "0,1;1" (0-based, strictly decreasing).
        #[arg(long)]
        chain: String,
    },
    /// Scale decomposition of a sequence at scale N.
    Decompose {
        #[command(flatten)]
        ifs: IfsArg,
        #[command(flatten)]
        seq: SequenceArg,
        #[arg(long)]
        n: f64,
    },
    /// Dimension of a Mandelbrot measure.
    DimMm {
        #[command(flatten)]
        ifs: IfsArg,
        #[command(flatten)]
        weights: WeightsArg,
    },
    /// Finite-horizon liminf/limsup of d_N for an inhomogeneous sequence.
    DimImm {
        #[command(flatten)]
        ifs: IfsArg,
        #[command(flatten)]
        seq: SequenceArg,
        /// Scales: "a,b,c" or "geom:LO:HI:COUNT".
        #[arg(long)]
        n_grid: String,
        /// Generations searched for tail minima (default: sequence length).
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// (dim_H, dim_P) of an exponentially periodic sequence.
    DimPeriodic {
        #[command(flatten)]
        ifs: IfsArg,
        /// Periodic spec file: {"lambda", "knots": [{"t", "p"}], "alpha"}.
        #[arg(long)]
        spec: PathBuf,
        /// Quadrature intervals per period.
        #[arg(long, default_value_t = 256)]
        quad_steps: usize,
        /// Number of T values in [1, λ).
        #[arg(long, default_value_t = 64)]
        t_points: usize,
    },
    /// Maximises the Hausdorff dimension over type-ℓ sequences.
    OptimizeHausdorff {
        #[command(flatten)]
        ifs: IfsArg,
        #[arg(long)]
        alpha: Option<String>,
        /// Block lengths: "A..B" (inclusive) or a comma list.
        #[arg(long)]
        schedule: String,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        horizon: usize,
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
    },
    /// Maximises the packing dimension over type-ℓ sequences.
    OptimizePacking {
        #[command(flatten)]
        ifs: IfsArg,
        #[arg(long)]
        alpha: Option<String>,
        #[arg(long)]
        schedule: String,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        n_grid: String,
        #[arg(long, default_value_t = 8)]
        starts: usize,
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
    },
    /// Almost-sure dimension of a percolation set (equal linear parts).
    DimAttractor {
        #[command(flatten)]
        ifs: IfsArg,
        #[arg(long)]
        alpha: String,
    },
    /// Samples a fractal percolation tree and dumps it.
    Simulate {
        #[command(flatten)]
        ifs: IfsArg,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Box-counting estimate for a sampled percolation set.
    Boxcount {
        #[command(flatten)]
        ifs: IfsArg,
        #[command(flatten)]
        sim: SimArgs,
        /// Scales N (grid side e^-N): "a,b,c" or "geom:LO:HI:COUNT".
        #[arg(long)]
        n_list: String,
    },
    /// Samples a finite-depth Mandelbrot cascade.
    Cascade {
        #[command(flatten)]
        seq: SequenceArg,
        #[arg(long)]
        depth: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Empirical local dimensions of cascade-sampled points.
    LocalDim {
        #[command(flatten)]
        ifs: IfsArg,
        #[command(flatten)]
        seq: SequenceArg,
        #[arg(long)]
        depth: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        n_list: String,
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long, default_value_t = 4)]
        lookahead: usize,
    },
    /// Periodic percolation example showing a Hausdorff/packing gap that no single Mandelbrot measure has.
    GapDemo {
        /// IFS file (default: the 3×2 grid without cells (1,1) and (2,1)).
        #[arg(long)]
        ifs: Option<PathBuf>,
        #[arg(long, default_value = "0.9")]
        alpha: String,
        #[arg(long, default_value_t = 2.0)]
        lambda: f64,
    },
    /// Reruns the command recorded in a manifest and checks its outputs.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
pub struct SimArgs {
    #[arg(long)]
    pub alpha: Option<String>,
    /// Per-generation survival vectors: JSON array of arrays.
    #[arg(long, conflicts_with = "alpha")]
    pub alpha_levels: Option<PathBuf>,
    #[arg(long)]
    pub depth: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Resample with derived seeds until the tree survives to the full depth.
    #[arg(long)]
    pub condition: bool,
    #[arg(long, default_value_t = 1e8)]
    pub max_nodes: f64,
}

/// Failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = error.downcast_ref::<Error>().map_or_else(|| if error.is::<parse::InputError>() { 2 } else { 1 }, exit_code);
        Self { code, error }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self { code: exit_code(&e), error: e.into() }
    }
}

/// 2: unusable input, 3: numerically infeasible, 4: resource cap.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse(_)
        | Error::InvalidModel(_)
        | Error::UnknownLetter { .. }
        | Error::DimensionMismatch { .. }
        | Error::ChainNotDecreasing(_)
        | Error::OverlapViolation { .. }
        | Error::NotGoodSponge(_)
        | Error::UnequalLinearParts(..)
        | Error::OutOfRange(_) => 2,
        Error::HorizonExhausted { .. }
        | Error::LevelOutOfRange { .. }
        | Error::Degenerate(_)
        | Error::Subcritical(_)
        | Error::Infeasible(_)
        | Error::EmptySet(_) => 3,
        Error::ResourceCap(_) => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    match commands::execute(cli, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
