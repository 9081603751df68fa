use std::path::PathBuf;

use clap::Parser;
use pbdsim_core::io::{
    read_cameras, read_keypoint_frames, read_mask, read_pose_sequence, read_rig, read_trajectory,
    write_pose_sequence,
};
use pbdsim_core::posefit::{
    fit_initial, fit_sequence, FitConfig, FitWeights, FrameObservation,
};
use pbdsim_core::skinning::{bind_gaussians, Pose};
use pbdsim_core::{Error, Result};
use serde::Serialize;

#[derive(Parser, Serialize)]
pub struct Args {
    /// Rig file (JSON).
    #[arg(long)]
    rig: PathBuf,
    /// Tracked body-point trajectory; frame 1 anchors the initial fit.
    #[arg(long)]
    tracked: PathBuf,
    /// Camera list (JSON), paired with --mask in order.
    #[arg(long)]
    cameras: Option<PathBuf>,
    /// Frame-1 silhouette mask (PGM), one per camera.
    #[arg(long = "mask")]
    masks: Vec<PathBuf>,
    /// Per-frame keypoint targets for the rig markers (JSON).
    #[arg(long)]
    keypoints: Option<PathBuf>,
    /// Pose sequence output (JSON).
    #[arg(long, short)]
    out: PathBuf,
    /// Pose sequence file whose first entry seeds the initial fit.
    #[arg(long)]
    init_pose: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    w_align: f64,
    #[arg(long, default_value_t = 1e-2)]
    w_verts: f64,
    #[arg(long, default_value_t = 1e-3)]
    w_preg: f64,
    #[arg(long, default_value_t = 1e-3)]
    w_sreg: f64,
    #[arg(long, default_value_t = 1.0)]
    w_track: f64,
    #[arg(long, default_value_t = 1e-1)]
    w_keypoint: f64,
    #[arg(long, default_value_t = 600)]
    max_iterations: usize,
}

pub fn run(args: Args) -> Result<()> {
    let rig = read_rig(&args.rig)?;
    let tracked = read_trajectory(&args.tracked)?;
    if tracked.frames() == 0 {
        return Err(Error::InvalidInput("tracked trajectory is empty".into()));
    }
    let cameras = match &args.cameras {
        Some(p) => read_cameras(p)?,
        None => Vec::new(),
    };
    if cameras.len() != args.masks.len() {
        return Err(Error::InvalidInput(format!(
            "{} cameras but {} masks",
            cameras.len(),
            args.masks.len()
        )));
    }
    let masks = args
        .masks
        .iter()
        .map(|p| read_mask(p))
        .collect::<Result<Vec<_>>>()?;
    let keypoint_frames = match &args.keypoints {
        Some(p) => {
            let frames = read_keypoint_frames(p)?;
            if frames.len() != tracked.frames() {
                return Err(Error::InvalidInput(format!(
                    "{} keypoint frames for {} tracked frames",
                    frames.len(),
                    tracked.frames()
                )));
            }
            Some(frames)
        }
        None => None,
    };

    let weights = FitWeights {
        align: args.w_align,
        verts: args.w_verts,
        preg: args.w_preg,
        sreg: args.w_sreg,
        track: args.w_track,
        keypoint: args.w_keypoint,
    };
    let config = FitConfig {
        max_iterations: args.max_iterations,
        ..FitConfig::default()
    };
    let init = match &args.init_pose {
        Some(p) => read_pose_sequence(p)?
            .into_iter()
            .next()
            .ok_or_else(|| Error::InvalidInput("initial pose file is empty".into()))?,
        None => Pose::identity(rig.joints.len()),
    };

    let frame1_points = &tracked.positions[0];
    let fit1 = fit_initial(
        &rig,
        &init,
        frame1_points,
        &cameras,
        &masks,
        &weights,
        &config,
    )?;
    println!(
        "frame 1: loss {:.6e} (align {:.3e}, verts {}, preg {:.3e}, sreg {:.3e}) in {} iterations",
        fit1.loss,
        fit1.breakdown.0,
        fit1.breakdown.1,
        fit1.breakdown.2,
        fit1.breakdown.3,
        fit1.iterations
    );

    let shaped = rig.with_beta(&fit1.shape);
    let bound = bind_gaussians(&shaped, frame1_points)?;
    let observations: Vec<FrameObservation> = tracked.positions[1..]
        .iter()
        .enumerate()
        .map(|(i, frame)| FrameObservation {
            tracked: frame.clone(),
            keypoints: keypoint_frames.as_ref().map(|k| k[i + 1].clone()),
        })
        .collect();
    let seq = fit_sequence(
        &rig,
        &fit1,
        frame1_points,
        &bound,
        &observations,
        &weights,
        &config,
    )?;
    if !seq.flagged_frames.is_empty() {
        eprintln!(
            "warning: {} frames carried the previous pose: {:?}",
            seq.flagged_frames.len(),
            seq.flagged_frames
        );
    }
    let canonical: Vec<Pose> = seq.poses.iter().map(|p| p.canonicalized()).collect();
    write_pose_sequence(&args.out, &canonical)?;
    println!("fitted {} poses", canonical.len());
    Ok(())
}
