//! Pose (and first-frame shape) refinement against tracked point clouds,
//! keypoints, and silhouette masks.
//!
//! The initial-frame objective combines point-to-surface alignment, a
//! projected-vertex silhouette term, and pose/shape regularizers; subsequent
//! frames minimize tracking and keypoint terms with the shape held fixed.
//! All losses are differentiated numerically (pose space is small); the
//! silhouette term, which is a count and therefore piecewise constant, uses
//! a distance-transform surrogate for its gradient while the raw count is
//! what gets reported and compared.

use nalgebra::{Rotation3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geom::KdTree;
use crate::skinning::{lbs, pose_rig_vertices, Pose, Rig, SkinWeights};

/// Pinhole camera: intrinsics in pixels, world→camera extrinsics.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidInput(
                "camera focal lengths must be positive".into(),
            ));
        }
        let r = self.rotation.matrix();
        let err = (r.transpose() * r - nalgebra::Matrix3::identity()).norm();
        if err > 1e-6 {
            return Err(Error::InvalidInput(format!(
                "camera rotation not orthonormal (error {err:.2e})"
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidInput("camera image size must be nonzero".into()));
        }
        Ok(())
    }

    /// Pixel coordinates of a world point, or None when it lies at or behind
    /// the camera plane.
    pub fn project(&self, p: &Vector3<f64>) -> Option<Vector2<f64>> {
        let c = self.rotation * p + self.translation;
        if c.z <= 0.0 {
            return None;
        }
        Some(Vector2::new(
            self.fx * c.x / c.z + self.cx,
            self.fy * c.y / c.z + self.cy,
        ))
    }
}

/// Binary person mask for one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct SilhouetteMask {
    pub width: usize,
    pub height: usize,
    /// Row-major; nonzero = person.
    pub data: Vec<u8>,
}

impl SilhouetteMask {
    pub fn validate_for(&self, camera: &Camera) -> Result<()> {
        if self.width != camera.width || self.height != camera.height {
            return Err(Error::InvalidInput(format!(
                "mask is {}x{}, camera expects {}x{}",
                self.width, self.height, camera.width, camera.height
            )));
        }
        if self.data.len() != self.width * self.height {
            return Err(Error::InvalidInput("mask data length mismatch".into()));
        }
        Ok(())
    }

    /// Nearest-pixel lookup; positions outside the raster count as outside
    /// the person.
    pub fn sample(&self, px: &Vector2<f64>) -> bool {
        let x = px.x.round();
        let y = px.y.round();
        if x < 0.0 || y < 0.0 || x >= self.width as f64 || y >= self.height as f64 {
            return false;
        }
        self.data[y as usize * self.width + x as usize] != 0
    }

    /// Unsigned distance (pixels) from each pixel to the nearest person
    /// pixel; zero inside the mask. Exact Euclidean transform.
    pub fn distance_field(&self) -> DistanceField {
        let inf = f64::INFINITY;
        let mut d2: Vec<f64> = self
            .data
            .iter()
            .map(|&m| if m != 0 { 0.0 } else { inf })
            .collect();
        // Two-pass exact squared EDT (columns then rows).
        let mut col = vec![0.0; self.height];
        let mut out_col = vec![0.0; self.height];
        for x in 0..self.width {
            for y in 0..self.height {
                col[y] = d2[y * self.width + x];
            }
            edt_1d(&col, &mut out_col);
            for y in 0..self.height {
                d2[y * self.width + x] = out_col[y];
            }
        }
        let mut row = vec![0.0; self.width];
        let mut out_row = vec![0.0; self.width];
        for y in 0..self.height {
            row.copy_from_slice(&d2[y * self.width..(y + 1) * self.width]);
            edt_1d(&row, &mut out_row);
            for x in 0..self.width {
                d2[y * self.width + x] = out_row[x].sqrt();
            }
        }
        DistanceField {
            width: self.width,
            height: self.height,
            data: d2,
        }
    }
}

/// One-dimensional squared distance transform (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        if f[q].is_infinite() {
            continue;
        }
        loop {
            let p = v[k];
            if f[p].is_infinite() {
                // First finite site.
                if k == 0 {
                    v[0] = q;
                    z[0] = f64::NEG_INFINITY;
                    z[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
                continue;
            }
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64))
                / (2.0 * q as f64 - 2.0 * p as f64);
            if s <= z[k] {
                if k == 0 {
                    v[0] = q;
                    z[0] = f64::NEG_INFINITY;
                    z[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    let mut k = 0usize;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        out[q] = if f[p].is_infinite() {
            f64::INFINITY
        } else {
            let d = q as f64 - p as f64;
            f[p] + d * d
        };
    }
}

/// Pixel distances to the mask, sampled bilinearly (smooth almost
/// everywhere, which the numeric gradients need).
#[derive(Debug, Clone)]
pub struct DistanceField {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DistanceField {
    pub fn sample(&self, px: &Vector2<f64>) -> f64 {
        // Out-of-image positions: distance at the clamped border plus the
        // travel back to the raster, so the gradient points at the image.
        let cx = px.x.clamp(0.0, (self.width - 1) as f64);
        let cy = px.y.clamp(0.0, (self.height - 1) as f64);
        let escape = (px.x - cx).hypot(px.y - cy);
        let x0 = cx.floor() as usize;
        let y0 = cy.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let tx = cx - x0 as f64;
        let ty = cy - y0 as f64;
        let at = |x: usize, y: usize| self.data[y * self.width + x];
        let a = at(x0, y0) * (1.0 - tx) + at(x1, y0) * tx;
        let b = at(x0, y1) * (1.0 - tx) + at(x1, y1) * tx;
        a * (1.0 - ty) + b * ty + escape
    }
}

/// World-space targets for the rig's marker vertices; None = invalid marker.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSet {
    pub targets: Vec<Option<Vector3<f64>>>,
}

impl KeypointSet {
    pub fn validate(&self, marker_count: usize) -> Result<()> {
        if self.targets.len() != marker_count {
            return Err(Error::InvalidInput(format!(
                "{} keypoint targets for {} markers",
                self.targets.len(),
                marker_count
            )));
        }
        for t in self.targets.iter().flatten() {
            if !t.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidInput("non-finite keypoint target".into()));
            }
        }
        Ok(())
    }
}

/// Squared distances between posed marker vertices and their valid targets.
pub fn loss_keypoints(rig: &Rig, pose: &Pose, markers: &KeypointSet) -> Result<f64> {
    markers.validate(rig.marker_vertices.len())?;
    let posed = pose_rig_vertices(rig, pose)?;
    Ok(rig
        .marker_vertices
        .iter()
        .zip(&markers.targets)
        .filter_map(|(&v, t)| t.map(|t| (posed[v] - t).norm_squared()))
        .sum())
}

/// Squared distance from every body point to its nearest posed rig vertex.
/// An empty body set contributes zero (callers may warn).
pub fn loss_align(body_points: &[Vector3<f64>], posed_vertices: &[Vector3<f64>]) -> f64 {
    if body_points.is_empty() || posed_vertices.is_empty() {
        return 0.0;
    }
    let tree = KdTree::build(posed_vertices);
    body_points
        .iter()
        .map(|p| {
            let nearest = tree.knn(p, 1, usize::MAX)[0];
            (p - posed_vertices[nearest]).norm_squared()
        })
        .sum()
}

/// Count of (camera, vertex) pairs whose projection lands outside the mask;
/// off-image projections count as outside.
pub fn loss_verts(
    rig: &Rig,
    pose: &Pose,
    cameras: &[Camera],
    masks: &[SilhouetteMask],
) -> Result<f64> {
    if cameras.len() != masks.len() {
        return Err(Error::InvalidInput(format!(
            "{} cameras but {} masks",
            cameras.len(),
            masks.len()
        )));
    }
    let posed = pose_rig_vertices(rig, pose)?;
    let mut total = 0.0;
    for (cam, mask) in cameras.iter().zip(masks) {
        mask.validate_for(cam)?;
        for v in &posed {
            let inside = cam.project(v).map(|px| mask.sample(&px)).unwrap_or(false);
            if !inside {
                total += 1.0;
            }
        }
    }
    Ok(total)
}

/// Smooth surrogate of [`loss_verts`]: summed mask distances of the
/// projected vertices. Used only to obtain gradients.
fn loss_verts_surrogate(
    rig: &Rig,
    pose: &Pose,
    cameras: &[Camera],
    fields: &[DistanceField],
) -> Result<f64> {
    let posed = pose_rig_vertices(rig, pose)?;
    let mut total = 0.0;
    for (cam, field) in cameras.iter().zip(fields) {
        for v in &posed {
            total += match cam.project(v) {
                Some(px) => field.sample(&px),
                // Behind the camera: strong, position-dependent penalty.
                None => (cam.width + cam.height) as f64,
            };
        }
    }
    Ok(total)
}

/// (Σ‖θ‖², Σ‖β‖²).
pub fn loss_reg(pose: &Pose, shape: &[f64]) -> (f64, f64) {
    let preg = pose.rotations.iter().map(|r| r.norm_squared()).sum();
    let sreg = shape.iter().map(|b| b * b).sum();
    (preg, sreg)
}

/// Tracking loss: skinned frame-1 points against their tracked positions.
pub fn loss_track(
    rig: &Rig,
    pose: &Pose,
    bound_points: &[Vector3<f64>],
    bound_weights: &SkinWeights,
    tracked: &[Vector3<f64>],
) -> Result<f64> {
    if tracked.len() != bound_points.len() {
        return Err(Error::InvalidInput(format!(
            "{} tracked targets for {} bound points",
            tracked.len(),
            bound_points.len()
        )));
    }
    let posed = lbs(rig, pose, bound_points, bound_weights)?;
    Ok(posed
        .iter()
        .zip(tracked)
        .map(|(a, b)| (a - b).norm_squared())
        .sum())
}

/// Loss weights; the defaults are recorded in every fit report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitWeights {
    pub align: f64,
    pub verts: f64,
    pub preg: f64,
    pub sreg: f64,
    pub track: f64,
    pub keypoint: f64,
}

impl Default for FitWeights {
    fn default() -> Self {
        FitWeights {
            align: 1.0,
            verts: 1e-2,
            preg: 1e-3,
            sreg: 1e-3,
            track: 1.0,
            keypoint: 1e-1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Finite-difference step for pose/shape gradients.
    pub grad_step: f64,
    /// Initial backtracking step along the normalized descent direction.
    pub step_init: f64,
    pub loss_tolerance: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iterations: 600,
            grad_step: 1e-5,
            step_init: 0.25,
            loss_tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InitialFit {
    pub pose: Pose,
    pub shape: Vec<f64>,
    /// (align, verts, preg, sreg) at the returned iterate, unweighted.
    pub breakdown: (f64, f64, f64, f64),
    pub loss: f64,
    pub iterations: usize,
}

/// Minimizes the initial-frame objective
/// λ_align·L_align + λ_verts·L_verts + λ_preg·L_preg + λ_sreg·L_sreg
/// over pose and shape by backtracking gradient descent from the guess.
/// Never returns an iterate with a higher objective than the initialization.
pub fn fit_initial(
    rig: &Rig,
    initial_pose: &Pose,
    body_points: &[Vector3<f64>],
    cameras: &[Camera],
    masks: &[SilhouetteMask],
    weights: &FitWeights,
    config: &FitConfig,
) -> Result<InitialFit> {
    rig.validate()?;
    for cam in cameras {
        cam.validate()?;
    }
    let fields: Vec<DistanceField> = masks.iter().map(|m| m.distance_field()).collect();
    let n_joints = rig.joints.len();
    let n_beta = rig.shape.basis.len();

    let raw = |theta: &[f64]| -> Result<(f64, (f64, f64, f64, f64))> {
        let (pose, beta) = split_theta(theta, n_joints, n_beta);
        let shaped = rig.with_beta(&beta);
        let posed = pose_rig_vertices(&shaped, &pose)?;
        let align = loss_align(body_points, &posed);
        let verts = loss_verts(&shaped, &pose, cameras, masks)?;
        let (preg, sreg) = loss_reg(&pose, &beta);
        let total =
            weights.align * align + weights.verts * verts + weights.preg * preg + weights.sreg * sreg;
        Ok((total, (align, verts, preg, sreg)))
    };
    let surrogate = |theta: &[f64]| -> Result<f64> {
        let (pose, beta) = split_theta(theta, n_joints, n_beta);
        let shaped = rig.with_beta(&beta);
        let posed = pose_rig_vertices(&shaped, &pose)?;
        let align = loss_align(body_points, &posed);
        let verts = loss_verts_surrogate(&shaped, &pose, cameras, &fields)?;
        let (preg, sreg) = loss_reg(&pose, &beta);
        Ok(weights.align * align
            + weights.verts * verts
            + weights.preg * preg
            + weights.sreg * sreg)
    };

    let mut theta = initial_pose.to_flat();
    theta.extend_from_slice(&rig.shape.beta);
    let outcome = descend(&mut theta, &surrogate, &raw, config)?;
    let (pose, beta) = split_theta(&theta, n_joints, n_beta);
    let (loss, breakdown) = raw(&theta)?;
    Ok(InitialFit {
        pose,
        shape: beta,
        breakdown,
        loss,
        iterations: outcome,
    })
}

fn split_theta(theta: &[f64], n_joints: usize, n_beta: usize) -> (Pose, Vec<f64>) {
    let pose_len = n_joints * 3 + 3;
    let pose = Pose::from_flat(&theta[..pose_len], n_joints);
    (pose, theta[pose_len..pose_len + n_beta].to_vec())
}

/// Backtracking gradient descent on the surrogate objective, tracking the
/// best iterate under the raw objective. Step sizes follow the spectral
/// (Barzilai–Borwein) rule, safeguarded by Armijo backtracking, which copes
/// with the stiff valleys that pose/shape couplings create. Writes the best
/// iterate back into `theta` and returns the number of iterations taken.
fn descend(
    theta: &mut Vec<f64>,
    surrogate: &dyn Fn(&[f64]) -> Result<f64>,
    raw: &dyn Fn(&[f64]) -> Result<(f64, (f64, f64, f64, f64))>,
    config: &FitConfig,
) -> Result<usize> {
    let dim = theta.len();
    let mut best_theta = theta.clone();
    let mut best_raw = raw(theta)?.0;
    let mut cur = surrogate(theta)?;
    if !cur.is_finite() {
        return Err(Error::Divergence("non-finite loss at initialization".into()));
    }
    let gradient = |at: &[f64]| -> Result<Vec<f64>> {
        let mut grad = vec![0.0; dim];
        let mut probe = at.to_vec();
        for i in 0..dim {
            probe[i] = at[i] + config.grad_step;
            let plus = surrogate(&probe)?;
            probe[i] = at[i] - config.grad_step;
            let minus = surrogate(&probe)?;
            probe[i] = at[i];
            grad[i] = (plus - minus) / (2.0 * config.grad_step);
        }
        Ok(grad)
    };

    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None; // (theta, grad)
    let mut iterations = 0;
    for _ in 0..config.max_iterations {
        iterations += 1;
        let grad = gradient(theta)?;
        let gnorm_sq: f64 = grad.iter().map(|g| g * g).sum();
        if gnorm_sq.sqrt() < 1e-12 {
            break;
        }
        // Spectral step from the last two iterates; first iteration falls
        // back to a normalized step.
        let mut t = match &prev {
            Some((p_theta, p_grad)) => {
                let mut sy = 0.0;
                let mut ss = 0.0;
                for i in 0..dim {
                    let s = theta[i] - p_theta[i];
                    let y = grad[i] - p_grad[i];
                    sy += s * y;
                    ss += s * s;
                }
                if sy > 0.0 {
                    (ss / sy).clamp(1e-12, 1e8)
                } else {
                    config.step_init / gnorm_sq.sqrt()
                }
            }
            None => config.step_init / gnorm_sq.sqrt(),
        };
        prev = Some((theta.clone(), grad.clone()));
        let mut accepted = false;
        for _ in 0..60 {
            let probe: Vec<f64> = theta.iter().zip(&grad).map(|(x, g)| x - t * g).collect();
            let val = surrogate(&probe)?;
            if val.is_finite() && val < cur - 1e-4 * t * gnorm_sq {
                *theta = probe;
                cur = val;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        let r = raw(theta)?.0;
        if r < best_raw {
            best_raw = r;
            best_theta = theta.clone();
        }
        if cur < config.loss_tolerance {
            break;
        }
    }
    *theta = best_theta;
    Ok(iterations)
}

#[derive(Debug, Clone)]
pub struct SequenceFit {
    pub poses: Vec<Pose>,
    /// Frames whose refinement diverged and carried the previous pose.
    pub flagged_frames: Vec<usize>,
    pub losses: Vec<f64>,
}

/// Per-frame tracked observations driving the sequence fit.
#[derive(Debug, Clone)]
pub struct FrameObservation {
    pub tracked: Vec<Vector3<f64>>,
    pub keypoints: Option<KeypointSet>,
}

/// Refines poses for frames 2..=T with the shape held fixed at the frame-1
/// fit; each frame starts from the previous frame's pose and minimizes
/// λ_track·L_track + λ_keypoint·L_keypoints.
pub fn fit_sequence(
    rig: &Rig,
    frame1: &InitialFit,
    bound_points: &[Vector3<f64>],
    bound_weights: &SkinWeights,
    observations: &[FrameObservation],
    weights: &FitWeights,
    config: &FitConfig,
) -> Result<SequenceFit> {
    let shaped = rig.with_beta(&frame1.shape);
    let n_joints = rig.joints.len();
    let mut poses = vec![frame1.pose.clone()];
    let mut flagged = Vec::new();
    let mut losses = vec![frame1.loss];

    for (f, obs) in observations.iter().enumerate() {
        let objective = |theta: &[f64]| -> Result<f64> {
            let pose = Pose::from_flat(theta, n_joints);
            let track = loss_track(&shaped, &pose, bound_points, bound_weights, &obs.tracked)?;
            let kp = match &obs.keypoints {
                Some(k) => loss_keypoints(&shaped, &pose, k)?,
                None => 0.0,
            };
            Ok(weights.track * track + weights.keypoint * kp)
        };
        let raw = |theta: &[f64]| -> Result<(f64, (f64, f64, f64, f64))> {
            Ok((objective(theta)?, (0.0, 0.0, 0.0, 0.0)))
        };
        let mut theta = poses.last().unwrap().to_flat();
        match descend(&mut theta, &objective, &raw, config) {
            Ok(_) => {
                poses.push(Pose::from_flat(&theta, n_joints));
                losses.push(objective(&theta)?);
            }
            Err(Error::Divergence(_)) => {
                flagged.push(f + 2); // 1-based frame number of this observation
                poses.push(poses.last().unwrap().clone());
                losses.push(f64::NAN);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(SequenceFit {
        poses,
        flagged_frames: flagged,
        losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skinning::{bind_gaussians, Joint, ShapeModel};
    use approx::assert_relative_eq;
    use nalgebra::{Isometry3, Translation3, UnitQuaternion};

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    /// Two-joint arm with a ring of vertices around each bone.
    fn arm_rig() -> Rig {
        let mut rest_vertices = Vec::new();
        let mut skin_weights = Vec::new();
        for i in 0..8 {
            let x = i as f64 / 7.0;
            for a in 0..4 {
                let ang = a as f64 * std::f64::consts::FRAC_PI_2;
                rest_vertices.push(v(x, 0.08 * ang.cos(), 0.08 * ang.sin()));
                let w_upper = (1.0 - x).clamp(0.0, 1.0);
                skin_weights.push(vec![(0, w_upper), (1, 1.0 - w_upper)]);
            }
        }
        Rig {
            joints: vec![
                Joint {
                    parent: None,
                    rest: Isometry3::identity(),
                },
                Joint {
                    parent: Some(0),
                    rest: Isometry3::from_parts(
                        Translation3::new(0.5, 0.0, 0.0),
                        UnitQuaternion::identity(),
                    ),
                },
            ],
            rest_vertices,
            skin_weights,
            shape: ShapeModel::default(),
            marker_vertices: vec![0, 5, 31],
        }
    }

    fn look_at_camera(width: usize, height: usize) -> Camera {
        // Camera 3 m in front of the arm (which spans x ∈ [0, 1]), aimed at
        // its middle so every rest vertex projects inside the raster.
        Camera {
            fx: 100.0,
            fy: 100.0,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            rotation: Rotation3::from_axis_angle(&Vector3::y_axis(), std::f64::consts::PI),
            translation: v(0.5, 0.0, 3.0),
            width,
            height,
        }
    }

    fn render_mask(rig: &Rig, pose: &Pose, cam: &Camera, radius: f64) -> SilhouetteMask {
        let posed = pose_rig_vertices(rig, pose).unwrap();
        let mut data = vec![0u8; cam.width * cam.height];
        for p in &posed {
            if let Some(px) = cam.project(p) {
                let r = radius.ceil() as i64;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let x = px.x.round() as i64 + dx;
                        let y = px.y.round() as i64 + dy;
                        if x >= 0
                            && y >= 0
                            && (x as usize) < cam.width
                            && (y as usize) < cam.height
                            && ((dx * dx + dy * dy) as f64) <= radius * radius
                        {
                            data[y as usize * cam.width + x as usize] = 1;
                        }
                    }
                }
            }
        }
        SilhouetteMask {
            width: cam.width,
            height: cam.height,
            data,
        }
    }

    #[test]
    fn keypoint_loss_cases() {
        let rig = arm_rig();
        let pose = Pose::identity(2);
        let posed = pose_rig_vertices(&rig, &pose).unwrap();
        let exact = KeypointSet {
            targets: rig.marker_vertices.iter().map(|&m| Some(posed[m])).collect(),
        };
        assert_relative_eq!(loss_keypoints(&rig, &pose, &exact).unwrap(), 0.0);

        let mut off = exact.clone();
        off.targets[0] = Some(posed[rig.marker_vertices[0]] + v(2.0, 0.0, 0.0));
        assert_relative_eq!(loss_keypoints(&rig, &pose, &off).unwrap(), 4.0, epsilon = 1e-12);

        // Invalid markers are skipped.
        let mut partial = exact.clone();
        partial.targets[1] = None;
        partial.targets[2] = Some(posed[rig.marker_vertices[2]] + v(0.0, 0.5, 0.0));
        assert_relative_eq!(
            loss_keypoints(&rig, &pose, &partial).unwrap(),
            0.25,
            epsilon = 1e-12
        );
    }

    #[test]
    fn align_loss_cases() {
        let verts = vec![v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0)];
        assert_eq!(loss_align(&verts, &verts), 0.0);
        assert_relative_eq!(
            loss_align(&[v(1.0, 0.5, 0.0)], &verts),
            0.25,
            epsilon = 1e-12
        );
        assert_eq!(loss_align(&[], &verts), 0.0);

        let mut rng = crate::seeding::substream_rng(9, "posefit.align");
        let points: Vec<Vector3<f64>> = (0..100)
            .map(|_| {
                v(
                    crate::seeding::uniform_unit(&mut rng) * 2.0,
                    crate::seeding::uniform_unit(&mut rng),
                    crate::seeding::uniform_unit(&mut rng),
                )
            })
            .collect();
        let direct: f64 = points
            .iter()
            .map(|p| {
                verts
                    .iter()
                    .map(|q| (p - q).norm_squared())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        assert_relative_eq!(loss_align(&points, &verts), direct, epsilon = 1e-10);
    }

    #[test]
    fn verts_loss_cases() {
        let rig = arm_rig();
        let pose = Pose::identity(2);
        let cam = look_at_camera(64, 64);
        let ones = SilhouetteMask {
            width: 64,
            height: 64,
            data: vec![1; 64 * 64],
        };
        assert_eq!(
            loss_verts(&rig, &pose, &[cam.clone()], &[ones]).unwrap(),
            0.0
        );
        let zeros = SilhouetteMask {
            width: 64,
            height: 64,
            data: vec![0; 64 * 64],
        };
        assert_eq!(
            loss_verts(&rig, &pose, &[cam.clone()], &[zeros]).unwrap(),
            rig.rest_vertices.len() as f64
        );
        // Half-plane mask: count vertices projecting into the empty half.
        let mut half = vec![0u8; 64 * 64];
        for y in 0..64 {
            for x in 0..32 {
                half[y * 64 + x] = 1;
            }
        }
        let mask = SilhouetteMask {
            width: 64,
            height: 64,
            data: half,
        };
        let posed = pose_rig_vertices(&rig, &pose).unwrap();
        let outside = posed
            .iter()
            .filter(|p| {
                cam.project(p)
                    .map(|px| {
                        let (x, y) = (px.x.round(), px.y.round());
                        !(x >= 0.0 && x < 32.0 && y >= 0.0 && y < 64.0)
                    })
                    .unwrap_or(true)
            })
            .count() as f64;
        assert_eq!(
            loss_verts(&rig, &pose, &[cam], &[mask]).unwrap(),
            outside
        );
    }

    #[test]
    fn reg_loss_cases() {
        let pose = Pose {
            rotations: vec![v(0.3, 0.0, 0.0), Vector3::zeros()],
            root_translation: v(5.0, 5.0, 5.0), // translation is not regularized
        };
        let (p, s) = loss_reg(&pose, &[0.1, -0.2]);
        assert_relative_eq!(p, 0.09, epsilon = 1e-15);
        assert_relative_eq!(s, 0.05, epsilon = 1e-15);
        assert_eq!(loss_reg(&Pose::identity(2), &[]), (0.0, 0.0));
    }

    #[test]
    fn track_loss_cases() {
        let rig = arm_rig();
        let pose = Pose {
            rotations: vec![v(0.1, 0.2, -0.1), v(0.0, 0.0, 0.5)],
            root_translation: v(0.2, 0.0, 0.1),
        };
        let points: Vec<Vector3<f64>> = vec![v(0.2, 0.05, 0.0), v(0.8, -0.03, 0.04)];
        let weights = bind_gaussians(&rig, &points).unwrap();
        let tracked = lbs(&rig, &pose, &points, &weights).unwrap();
        assert!(loss_track(&rig, &pose, &points, &weights, &tracked).unwrap() < 1e-18);

        // Rigid consistency: rotating targets and pose together stays zero.
        let rot = v(0.0, 0.4, 0.0);
        let rot_pose = Pose {
            rotations: vec![rot, Vector3::zeros()],
            root_translation: Vector3::zeros(),
        };
        let q = UnitQuaternion::from_scaled_axis(rot);
        let rotated: Vec<Vector3<f64>> = points.iter().map(|p| q * p).collect();
        let loss = loss_track(&rig, &rot_pose, &points, &weights, &rotated).unwrap();
        assert!(loss < 1e-18, "loss {loss}");
    }

    fn synthetic_scene(
        truth: &Pose,
    ) -> (Rig, Vec<Vector3<f64>>, Vec<Camera>, Vec<SilhouetteMask>) {
        let rig = arm_rig();
        let body = pose_rig_vertices(&rig, truth).unwrap();
        let cams = vec![look_at_camera(96, 96)];
        let masks = vec![render_mask(&rig, truth, &cams[0], 6.0)];
        (rig, body, cams, masks)
    }

    #[test]
    fn fit_initial_is_fixed_point_at_truth() {
        let truth = Pose {
            rotations: vec![v(0.0, 0.0, 0.2), v(0.0, 0.0, -0.3)],
            root_translation: v(0.05, 0.0, 0.0),
        };
        let (rig, body, cams, masks) = synthetic_scene(&truth);
        // Zero regularizers: the truth is the exact argmin (loss 0).
        let weights = FitWeights {
            preg: 0.0,
            sreg: 0.0,
            ..FitWeights::default()
        };
        let fit = fit_initial(&rig, &truth, &body, &cams, &masks, &weights, &FitConfig::default())
            .unwrap();
        assert!(fit.loss < 1e-8, "loss {}", fit.loss);
        for (a, b) in fit.pose.rotations.iter().zip(&truth.rotations) {
            assert!((a - b).norm() < 1e-6);
        }
    }

    #[test]
    fn fit_initial_recovers_perturbed_pose() {
        let truth = Pose {
            rotations: vec![v(0.0, 0.0, 0.25), v(0.0, 0.0, -0.35)],
            root_translation: v(0.0, 0.0, 0.0),
        };
        let (rig, body, cams, masks) = synthetic_scene(&truth);
        let init = Pose {
            rotations: vec![v(0.0, 0.05, 0.18), v(0.03, 0.0, -0.27)],
            root_translation: v(0.02, -0.02, 0.01),
        };
        let fit = fit_initial(
            &rig,
            &init,
            &body,
            &cams,
            &masks,
            &FitWeights::default(),
            &FitConfig::default(),
        )
        .unwrap();
        for (a, b) in fit.pose.rotations.iter().zip(&truth.rotations) {
            assert!((a - b).norm() < 0.02, "joint error {}", (a - b).norm());
        }
        // Never worse than the initialization.
        let posed_init = pose_rig_vertices(&rig, &init).unwrap();
        let init_loss = loss_align(&body, &posed_init)
            + 1e-2 * loss_verts(&rig, &init, &cams, &masks).unwrap()
            + 1e-3 * loss_reg(&init, &[]).0;
        assert!(fit.loss <= init_loss + 1e-12);
    }

    #[test]
    fn zero_data_weights_shrink_to_regularizer_minimum() {
        let rig = arm_rig();
        let init = Pose {
            rotations: vec![v(0.3, -0.2, 0.1), v(0.0, 0.4, 0.0)],
            root_translation: v(0.1, 0.0, 0.0),
        };
        let weights = FitWeights {
            align: 0.0,
            verts: 0.0,
            ..FitWeights::default()
        };
        let fit = fit_initial(&rig, &init, &[], &[], &[], &weights, &FitConfig::default())
            .unwrap();
        let init_norm: f64 = init.rotations.iter().map(|r| r.norm_squared()).sum();
        let fit_norm: f64 = fit.pose.rotations.iter().map(|r| r.norm_squared()).sum();
        assert!(fit_norm < 0.05 * init_norm, "{fit_norm} vs {init_norm}");
    }

    #[test]
    fn fit_sequence_recovers_joint_ramp() {
        let rig = arm_rig();
        let points: Vec<Vector3<f64>> = vec![
            v(0.2, 0.06, 0.0),
            v(0.45, -0.05, 0.03),
            v(0.7, 0.04, -0.02),
            v(0.95, 0.0, 0.05),
        ];
        let weights = bind_gaussians(&rig, &points).unwrap();
        let frame1 = InitialFit {
            pose: Pose::identity(2),
            shape: vec![],
            breakdown: (0.0, 0.0, 0.0, 0.0),
            loss: 0.0,
            iterations: 0,
        };
        // Scripted elbow ramp: 0.1 rad per frame around z.
        let mut observations = Vec::new();
        let mut truth_poses = Vec::new();
        for f in 1..=6 {
            let pose = Pose {
                rotations: vec![Vector3::zeros(), v(0.0, 0.0, 0.1 * f as f64)],
                root_translation: Vector3::zeros(),
            };
            let tracked = lbs(&rig, &pose, &points, &weights).unwrap();
            observations.push(FrameObservation {
                tracked,
                keypoints: None,
            });
            truth_poses.push(pose);
        }
        let fit = fit_sequence(
            &rig,
            &frame1,
            &points,
            &weights,
            &observations,
            &FitWeights::default(),
            &FitConfig::default(),
        )
        .unwrap();
        assert!(fit.flagged_frames.is_empty());
        for (got, want) in fit.poses[1..].iter().zip(&truth_poses) {
            for (a, b) in got.rotations.iter().zip(&want.rotations) {
                assert!((a - b).norm() < 0.02, "error {}", (a - b).norm());
            }
        }
        // Exact tracking targets are realizable: near-zero final losses.
        for l in &fit.losses[1..] {
            assert!(*l < 1e-8, "frame loss {l}");
        }
    }

    #[test]
    fn fit_sequence_static_targets_keep_pose() {
        let rig = arm_rig();
        let points: Vec<Vector3<f64>> = vec![v(0.3, 0.05, 0.0), v(0.9, -0.04, 0.01)];
        let weights = bind_gaussians(&rig, &points).unwrap();
        let start = Pose {
            rotations: vec![v(0.0, 0.0, 0.1), v(0.0, 0.0, 0.2)],
            root_translation: Vector3::zeros(),
        };
        let tracked = lbs(&rig, &start, &points, &weights).unwrap();
        let frame1 = InitialFit {
            pose: start.clone(),
            shape: vec![],
            breakdown: (0.0, 0.0, 0.0, 0.0),
            loss: 0.0,
            iterations: 0,
        };
        let observations = vec![
            FrameObservation {
                tracked: tracked.clone(),
                keypoints: None,
            };
            3
        ];
        let fit = fit_sequence(
            &rig,
            &frame1,
            &points,
            &weights,
            &observations,
            &FitWeights::default(),
            &FitConfig::default(),
        )
        .unwrap();
        for pose in &fit.poses {
            for (a, b) in pose.rotations.iter().zip(&start.rotations) {
                assert!((a - b).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn argmin_is_translation_equivariant() {
        let truth = Pose {
            rotations: vec![v(0.0, 0.0, 0.2), v(0.0, 0.0, -0.25)],
            root_translation: v(0.0, 0.0, 0.0),
        };
        let (rig, body, cams, masks) = synthetic_scene(&truth);
        let weights = FitWeights {
            preg: 0.0,
            sreg: 0.0,
            ..FitWeights::default()
        };
        let config = FitConfig::default();
        let base = fit_initial(&rig, &truth, &body, &cams, &masks, &weights, &config).unwrap();

        let offset = v(0.15, -0.1, 0.05);
        let moved_body: Vec<Vector3<f64>> = body.iter().map(|p| p + offset).collect();
        let moved_cams: Vec<Camera> = cams
            .iter()
            .map(|c| Camera {
                // world→camera with the world shifted: fold the offset in.
                translation: c.translation - c.rotation * offset,
                ..c.clone()
            })
            .collect();
        let mut init = truth.clone();
        init.root_translation += offset;
        let moved = fit_initial(
            &rig,
            &init,
            &moved_body,
            &moved_cams,
            &masks,
            &weights,
            &config,
        )
        .unwrap();
        assert!(
            (moved.pose.root_translation - base.pose.root_translation - offset).norm() < 1e-6
        );
        for (a, b) in moved.pose.rotations.iter().zip(&base.pose.rotations) {
            assert!((a - b).norm() < 1e-6);
        }
    }

    #[test]
    fn distance_field_is_zero_inside_and_grows_outside() {
        let mut data = vec![0u8; 16 * 16];
        data[8 * 16 + 8] = 1;
        let mask = SilhouetteMask {
            width: 16,
            height: 16,
            data,
        };
        let field = mask.distance_field();
        assert_eq!(field.sample(&Vector2::new(8.0, 8.0)), 0.0);
        assert_relative_eq!(field.sample(&Vector2::new(11.0, 8.0)), 3.0, epsilon = 1e-12);
        assert_relative_eq!(
            field.sample(&Vector2::new(11.0, 12.0)),
            5.0,
            epsilon = 1e-12
        );
        // Outside the raster the distance keeps growing.
        assert!(field.sample(&Vector2::new(-4.0, 8.0)) > field.sample(&Vector2::new(0.0, 8.0)));
    }
}
