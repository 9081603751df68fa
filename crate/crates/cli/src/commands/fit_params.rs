use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use nalgebra::Vector3;
use pbdsim_core::io::{load_scene, read_trajectory, write_params};
use pbdsim_core::seeding::substream_seed;
use pbdsim_core::sysid::{
    kmeans_groups, optimize, GradMode, GroupedParam, OptimizeConfig, ReferenceTrajectory,
    RigidDriver,
};
use pbdsim_core::{Error, Result};
use serde::Serialize;

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Grad {
    /// Central finite differences over grouped log-parameters.
    Fd,
    /// Forward-mode differentiation through the substep loop.
    Forward,
}

#[derive(Parser, Serialize)]
pub struct Args {
    /// Scene file describing the simulated system.
    #[arg(long)]
    config: PathBuf,
    /// Reference trajectory of all subset points.
    #[arg(long)]
    reference: PathBuf,
    /// Output parameter file (JSON).
    #[arg(long, short)]
    out: PathBuf,
    /// Per-epoch loss history (CSV).
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Shared-parameter groups via k-means over rest positions
    /// (0 keeps one parameter per element).
    #[arg(long, default_value_t = 8)]
    groups: usize,
    #[arg(long, value_enum, default_value = "fd")]
    grad_mode: Grad,
    /// Sampled steps per epoch (0 evaluates every step).
    #[arg(long, default_value_t = 8)]
    samples: usize,
    /// Log-space finite-difference step.
    #[arg(long, default_value_t = 0.05)]
    grad_step: f64,
    /// Hold masses fixed.
    #[arg(long, default_value_t = false)]
    freeze_masses: bool,
    /// Hold compliances fixed.
    #[arg(long, default_value_t = false)]
    freeze_compliances: bool,
}

/// Regroups per-element parameters into k-means groups, initializing each
/// group at the geometric mean of its members.
fn regroup(initial: &GroupedParam, groups: &[usize], k: usize) -> Result<GroupedParam> {
    let per_element = initial.materialize();
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (e, &g) in groups.iter().enumerate() {
        sums[g] += per_element[e].ln();
        counts[g] += 1;
    }
    let values: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { (s / c as f64).exp() } else { 1.0 })
        .collect();
    GroupedParam::grouped(&values, groups.to_vec())
}

pub fn run(args: Args) -> Result<()> {
    let loaded = load_scene(&args.config)?;
    let seed = args.seed.unwrap_or(loaded.seed);
    let scene = &loaded.scene;
    let traj = read_trajectory(&args.reference)?;
    if traj.points() != loaded.subset_positions.len() {
        return Err(Error::InvalidInput(format!(
            "reference has {} points, scene subset has {}",
            traj.points(),
            loaded.subset_positions.len()
        )));
    }
    let reference = ReferenceTrajectory {
        positions: traj.positions.clone(),
        frame_dt: traj.frame_dt,
    };
    reference.validate()?;

    let mut initial = loaded.params.clone();
    if args.groups > 0 {
        let flex_rest: Vec<Vector3<f64>> = scene
            .partition
            .flex
            .iter()
            .map(|&i| loaded.subset_positions[i])
            .collect();
        let k_mass = args.groups.min(flex_rest.len().max(1));
        let mass_groups = kmeans_groups(&flex_rest, k_mass, substream_seed(seed, "fit.groups.mass"));
        initial.mass = regroup(&initial.mass, &mass_groups, k_mass)?;

        let midpoints: Vec<Vector3<f64>> = scene
            .constraints
            .distance
            .iter()
            .map(|c| {
                (loaded.subset_positions[c.endpoints.0] + loaded.subset_positions[c.endpoints.1])
                    * 0.5
            })
            .collect();
        let k_comp = args.groups.min(midpoints.len().max(1));
        let comp_groups =
            kmeans_groups(&midpoints, k_comp, substream_seed(seed, "fit.groups.compliance"));
        initial.compliance = regroup(&initial.compliance, &comp_groups, k_comp)?;
    }

    let config = OptimizeConfig {
        epochs: args.epochs,
        samples_per_epoch: if args.samples == 0 {
            None
        } else {
            Some(args.samples)
        },
        seed,
        grad_mode: match args.grad_mode {
            Grad::Fd => GradMode::CentralDifference { h: args.grad_step },
            Grad::Forward => GradMode::Forward,
        },
        optimize_masses: !args.freeze_masses,
        optimize_compliances: !args.freeze_compliances,
        ..OptimizeConfig::default()
    };
    let result = optimize(
        scene,
        &reference,
        &RigidDriver::FromReference,
        &initial,
        &config,
    )?;

    let n_flex = scene.partition.flex.len().max(1);
    println!(
        "best loss {:.6e} (mean per flex point {:.6e}) after {} epochs; {} diverged samples",
        result.best_loss,
        result.best_loss / n_flex as f64,
        result.loss_history.len(),
        result.diverged_samples
    );
    let meta = super::metadata(Some(seed), &args)?;
    write_params(&args.out, &result.params, Some(meta))?;
    if let Some(path) = &args.loss_csv {
        let mut csv = format!(
            "# tool: pbdsim {}\n# seed: {seed}\n# loss: sum of squared flex errors (mean over sampled steps)\nepoch,loss,mean_loss_per_point\n",
            env!("CARGO_PKG_VERSION")
        );
        for (e, l) in result.loss_history.iter().enumerate() {
            csv.push_str(&format!("{e},{:.12e},{:.12e}\n", l, l / n_flex as f64));
        }
        std::fs::write(path, csv).map_err(|e| Error::io(path.display().to_string(), e))?;
    }

    Ok(())
}
