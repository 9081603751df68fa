//! Pipeline driver: turns point clouds into simulation-ready tet systems,
//! runs the solver against a skinned driver, transfers deformation to dense
//! Gaussian clouds, fits physical parameters and rig poses, and scores
//! rendered images.
//!
//! Exit codes: 0 ok, 2 invalid input, 3 numerical divergence, 4 i/o failure.

mod commands;

use clap::{Parser, Subcommand};
use pbdsim_core::Error;

#[derive(Parser)]
#[command(name = "pbdsim", version, about = "Point-cloud XPBD simulation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a subset of a cloud, tetrahedralize it, and filter by locality.
    Tetra(commands::tetra::Args),
    /// Run the solver over a driver sequence; write sparse/dense trajectories.
    Simulate(commands::simulate::Args),
    /// Recover per-point mass and per-edge compliance from a reference
    /// trajectory.
    FitParams(commands::fit_params::Args),
    /// Refine rig poses (and first-frame shape) against tracked data.
    FitPose(commands::fit_pose::Args),
    /// Embed the dense cloud relative to the sampled tet mesh.
    Embed(commands::embed::Args),
    /// Score prediction images against ground truth (PSNR/SSIM + HF variants).
    Evaluate(commands::evaluate::Args),
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => 4,
        Error::Divergence(_) => 3,
        _ => 2,
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Tetra(args) => commands::tetra::run(args),
        Command::Simulate(args) => commands::simulate::run(args),
        Command::FitParams(args) => commands::fit_params::run(args),
        Command::FitPose(args) => commands::fit_pose::run(args),
        Command::Embed(args) => commands::embed::run(args),
        Command::Evaluate(args) => commands::evaluate::run(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        let mut source = std::error::Error::source(&err);
        while let Some(s) = source {
            eprintln!("  caused by: {s}");
            source = s.source();
        }
        std::process::exit(exit_code(&err));
    }
}
