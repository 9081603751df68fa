use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use nalgebra::Vector3;
use pbdsim_core::io::{
    load_scene, read_params, read_sim_state, write_gaussian_cloud, write_sim_state,
    write_trajectory_binary, write_trajectory_json, LoadedDriver, Trajectory,
};
use pbdsim_core::skinning::{bind_gaussians, lbs};
use pbdsim_core::transfer::{apply_embedding, build_frames, embed, update_rotations, FrameParams};
use pbdsim_core::xpbd::{step, SimState};
use pbdsim_core::{Error, Result};
use serde::Serialize;

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Binary,
    Json,
}

#[derive(Parser, Serialize)]
pub struct Args {
    /// Scene file (cloud, tetmesh, partition, constraints, sim, driver).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Sparse trajectory output (simulated subset).
    #[arg(long, short)]
    out: PathBuf,
    /// Dense trajectory output (full cloud through the embedding).
    #[arg(long)]
    dense_out: Option<PathBuf>,
    /// Final-frame Gaussian cloud (positions + updated rotations).
    #[arg(long)]
    out_cloud: Option<PathBuf>,
    /// Fitted parameter file overriding the scene's masses/compliances.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Resume from stored positions and velocities.
    #[arg(long)]
    state_in: Option<PathBuf>,
    /// Store the final positions and velocities.
    #[arg(long)]
    state_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "binary")]
    format: Format,
}

fn write_traj(
    path: &std::path::Path,
    traj: &Trajectory,
    format: Format,
    meta: pbdsim_core::io::Metadata,
) -> Result<()> {
    match format {
        Format::Binary => write_trajectory_binary(path, traj, Some(meta)),
        Format::Json => write_trajectory_json(path, traj, Some(meta)),
    }
}

pub fn run(args: Args) -> Result<()> {
    let loaded = load_scene(&args.config)?;
    let seed = args.seed.unwrap_or(loaded.seed);
    let mut params = loaded.params.clone();
    if let Some(p) = &args.params {
        params = read_params(p)?;
    }
    let scene = &loaded.scene;
    let n_sub = loaded.subset_positions.len();
    if params.mass.groups.len() != scene.partition.flex.len()
        || params.compliance.groups.len() != scene.constraints.distance.len()
    {
        return Err(Error::InvalidInput(
            "parameter file does not match the scene's flex points / edges".into(),
        ));
    }

    // Frame-end targets for the rigid points, one list per simulated frame.
    let rigid_rest: Vec<Vector3<f64>> = scene
        .partition
        .rigid
        .iter()
        .map(|&i| loaded.subset_positions[i])
        .collect();
    let (driver_frames, targets): (usize, Vec<Vec<Vector3<f64>>>) = match &loaded.driver {
        None => {
            return Err(Error::InvalidInput(
                "scene has no driver; simulate needs one".into(),
            ))
        }
        Some(LoadedDriver::Trajectory(t)) => (
            t.frames(),
            (1..t.frames())
                .map(|f| {
                    scene
                        .partition
                        .rigid
                        .iter()
                        .enumerate()
                        .map(|(r, _)| t.positions[f][r])
                        .collect()
                })
                .collect(),
        ),
        Some(LoadedDriver::Rig { rig, poses }) => {
            let weights = bind_gaussians(rig, &rigid_rest)?;
            (
                poses.len(),
                poses
                    .iter()
                    .skip(1)
                    .map(|pose| lbs(rig, pose, &rigid_rest, &weights))
                    .collect::<Result<Vec<_>>>()?,
            )
        }
    };

    let meta = super::metadata(Some(seed), &args)?;
    if driver_frames == 0 {
        let empty = Trajectory {
            frame_dt: scene.config.frame_dt,
            positions: Vec::new(),
        };
        write_traj(&args.out, &empty, args.format, meta)?;
        println!("driver supplies no frames; wrote an empty trajectory");
        return Ok(());
    }

    let (positions0, velocities0) = match &args.state_in {
        Some(p) => {
            let (pos, vel) = read_sim_state(p)?;
            if pos.len() != n_sub {
                return Err(Error::InvalidInput(format!(
                    "resume state has {} points, subset has {n_sub}",
                    pos.len()
                )));
            }
            (pos, vel)
        }
        None => (loaded.subset_positions.clone(), vec![Vector3::zeros(); n_sub]),
    };
    let masses = params.mass.materialize();
    let mut inv_mass = vec![0.0; n_sub];
    for (k, &i) in scene.partition.flex.iter().enumerate() {
        inv_mass[i] = 1.0 / masses[k];
    }
    let mut constraints = scene.constraints.clone();
    for (c, a) in constraints
        .distance
        .iter_mut()
        .zip(params.compliance.materialize())
    {
        c.compliance = a;
    }
    let mut state = SimState::new(positions0, velocities0, inv_mass)?;

    // Dense transfer setup (only when requested).
    let dense = match (&args.dense_out, &args.out_cloud) {
        (None, None) => None,
        _ => {
            let sampled_set: std::collections::HashSet<usize> =
                loaded.subset_indices.iter().copied().collect();
            let unsampled: Vec<usize> = (0..loaded.cloud.positions.len())
                .filter(|i| !sampled_set.contains(i))
                .collect();
            let unsampled_rest: Vec<Vector3<f64>> =
                unsampled.iter().map(|&i| loaded.cloud.positions[i]).collect();
            let embedding = embed(&unsampled_rest, &loaded.subset_positions, &loaded.mesh);
            let frames = match &loaded.cloud.rotations {
                Some(_) => Some(build_frames(&loaded.cloud.positions, &FrameParams::default())?),
                None => None,
            };
            Some((unsampled, embedding, frames))
        }
    };

    let mut sparse_frames = vec![state.positions.clone()];
    let mut dense_frames: Vec<Vec<Vector3<f64>>> = Vec::new();
    let mut rotations = loaded.cloud.rotations.clone();
    let mut skipped = 0u64;
    let mut unresolved = 0u64;

    let full_positions = |sub: &[Vector3<f64>],
                          unsampled: &[usize],
                          embedded: &[Vector3<f64>]|
     -> Vec<Vector3<f64>> {
        let mut all = loaded.cloud.positions.clone();
        for (k, &i) in loaded.subset_indices.iter().enumerate() {
            all[i] = sub[k];
        }
        for (k, &i) in unsampled.iter().enumerate() {
            all[i] = embedded[k];
        }
        all
    };

    if let Some((unsampled, embedding, _)) = &dense {
        let embedded = apply_embedding(embedding, &state.positions, &loaded.mesh)?;
        dense_frames.push(full_positions(&state.positions, unsampled, &embedded));
    }

    let mut failure: Option<Error> = None;
    for (f, frame_targets) in targets.iter().enumerate() {
        match step(&state, &constraints, &scene.partition, frame_targets, &scene.config) {
            Ok((next, diag)) => {
                state = next;
                skipped += diag.skipped_projections;
                unresolved += diag.unresolved_inversions;
                sparse_frames.push(state.positions.clone());
                if let Some((unsampled, embedding, frames)) = &dense {
                    let embedded = apply_embedding(embedding, &state.positions, &loaded.mesh)?;
                    let all = full_positions(&state.positions, unsampled, &embedded);
                    // Rotation updates compose against the frame-1
                    // orientations, not incrementally.
                    if let (Some(fr), Some(initial)) = (frames, &loaded.cloud.rotations) {
                        rotations = Some(update_rotations(fr, &all, initial));
                    }
                    dense_frames.push(all);
                }
            }
            Err(e) => {
                eprintln!("frame {}: {e}; writing the partial trajectory", f + 1);
                failure = Some(e);
                break;
            }
        }
    }

    let sparse = Trajectory {
        frame_dt: scene.config.frame_dt,
        positions: sparse_frames,
    };
    write_traj(&args.out, &sparse, args.format, meta.clone())?;
    if let Some(path) = &args.dense_out {
        let dense_traj = Trajectory {
            frame_dt: scene.config.frame_dt,
            positions: dense_frames.clone(),
        };
        write_traj(path, &dense_traj, args.format, meta.clone())?;
    }
    if let Some(path) = &args.out_cloud {
        let gauss = loaded.cloud.gaussian_cloud(&args.config)?;
        let mut out = gauss.clone();
        if let Some(last) = dense_frames.last() {
            out.positions = last.clone();
        }
        if let Some(rot) = &rotations {
            out.rotations = rot.clone();
        }
        write_gaussian_cloud(path, &out)?;
    }
    if let Some(path) = &args.state_out {
        write_sim_state(path, &state.positions, &state.velocities)?;
    }
    println!(
        "simulated {} frames ({} skipped projections, {} unresolved inversions)",
        sparse.frames() - 1,
        skipped,
        unresolved
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
