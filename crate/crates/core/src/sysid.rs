//! System identification: recovering per-point mass and per-edge compliance
//! from reference trajectories by minimizing the one-step prediction loss.
//!
//! Parameters are optimized in log space (masses and compliances stay
//! strictly positive by construction) and may be tied into groups. Gradients
//! come from central finite differences over the grouped parameters by
//! default; an alternative forward-mode path differentiates through the
//! substep loop with dual numbers. Updates use a sign-based adaptive step
//! (resilient propagation without momentum).

use nalgebra::Vector3;
use num_dual::{Dual64, DualNum};

use crate::error::{Error, Result};
use crate::math::{v3_from, v3_re, V3};
use crate::seeding::{substream_rng, uniform_below};
use crate::skinning::{lbs, Pose, Rig, SkinWeights};
use crate::xpbd::{
    step_generic, ConstraintSet, GenericConstraints, GenericState, Partition, SimConfig,
    SimState, StepDiagnostics, StepParams,
};

/// Log-space parameter vector with an element → group map.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedParam {
    pub log_values: Vec<f64>,
    /// `groups[element]` indexes into `log_values`.
    pub groups: Vec<usize>,
}

impl GroupedParam {
    /// One independent parameter per element.
    pub fn per_element(values: &[f64]) -> Result<Self> {
        let log_values = values
            .iter()
            .map(|&v| {
                if v > 0.0 && v.is_finite() {
                    Ok(v.ln())
                } else {
                    Err(Error::InvalidInput(format!(
                        "parameter value {v} must be strictly positive"
                    )))
                }
            })
            .collect::<Result<_>>()?;
        Ok(GroupedParam {
            log_values,
            groups: (0..values.len()).collect(),
        })
    }

    /// A single shared value for every element.
    pub fn uniform(value: f64, count: usize) -> Result<Self> {
        Self::grouped(&[value], vec![0; count])
    }

    pub fn grouped(values: &[f64], groups: Vec<usize>) -> Result<Self> {
        if let Some(&g) = groups.iter().find(|&&g| g >= values.len()) {
            return Err(Error::InvalidInput(format!(
                "group id {g} out of range for {} values",
                values.len()
            )));
        }
        let log_values = values
            .iter()
            .map(|&v| {
                if v > 0.0 && v.is_finite() {
                    Ok(v.ln())
                } else {
                    Err(Error::InvalidInput(format!(
                        "parameter value {v} must be strictly positive"
                    )))
                }
            })
            .collect::<Result<_>>()?;
        Ok(GroupedParam { log_values, groups })
    }

    pub fn group_count(&self) -> usize {
        self.log_values.len()
    }

    /// Per-element values (exponentiated; strictly positive).
    pub fn materialize(&self) -> Vec<f64> {
        self.groups.iter().map(|&g| self.log_values[g].exp()).collect()
    }

    pub fn group_values(&self) -> Vec<f64> {
        self.log_values.iter().map(|l| l.exp()).collect()
    }
}

/// Optimization target: mass per flex point (in `partition.flex` order) and
/// compliance per distance constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysParams {
    pub mass: GroupedParam,
    pub compliance: GroupedParam,
}

/// Mass initialization when nothing better is known (kg per point).
pub const DEFAULT_MASS: f64 = 0.01;
/// Compliance initialization (m/N per edge).
pub const DEFAULT_COMPLIANCE: f64 = 1e-4;

impl PhysParams {
    pub fn defaults(n_flex: usize, n_edges: usize) -> Self {
        PhysParams {
            mass: GroupedParam::uniform(DEFAULT_MASS, n_flex).expect("positive default"),
            compliance: GroupedParam::uniform(DEFAULT_COMPLIANCE, n_edges)
                .expect("positive default"),
        }
    }
}

/// Static description of the simulated system (connectivity, partition,
/// solver settings). Compliance values inside `constraints` act as
/// placeholders; `PhysParams` overrides them.
#[derive(Debug, Clone, PartialEq)]
pub struct SimScene {
    pub constraints: ConstraintSet,
    pub partition: Partition,
    pub config: SimConfig,
}

impl SimScene {
    pub fn validate(&self, n_points: usize) -> Result<()> {
        self.config.validate()?;
        if self.partition.rigid.len() + self.partition.flex.len() != n_points {
            return Err(Error::InvalidInput(format!(
                "scene partition covers {} points, state has {}",
                self.partition.rigid.len() + self.partition.flex.len(),
                n_points
            )));
        }
        Ok(())
    }
}

/// Tracked positions of all simulated points over time.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    /// `positions[frame][point]`
    pub positions: Vec<Vec<Vector3<f64>>>,
    pub frame_dt: f64,
}

impl ReferenceTrajectory {
    pub fn validate(&self) -> Result<()> {
        if self.positions.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "reference trajectory needs at least 2 frames, got {}",
                self.positions.len()
            )));
        }
        let n = self.positions[0].len();
        for (f, frame) in self.positions.iter().enumerate() {
            if frame.len() != n {
                return Err(Error::InvalidInput(format!(
                    "frame {f} has {} points, frame 0 has {n}",
                    frame.len()
                )));
            }
            if !frame.iter().all(|p| p.iter().all(|c| c.is_finite())) {
                return Err(Error::InvalidInput(format!(
                    "frame {f} contains non-finite positions"
                )));
            }
        }
        if !(self.frame_dt > 0.0) {
            return Err(Error::InvalidInput("frame_dt must be positive".into()));
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.positions.len()
    }

    /// Velocity at frame t reconstructed by backward differences
    /// (zero at the first frame).
    pub fn velocity_at(&self, t: usize) -> Vec<Vector3<f64>> {
        if t == 0 {
            return vec![Vector3::zeros(); self.positions[0].len()];
        }
        self.positions[t]
            .iter()
            .zip(&self.positions[t - 1])
            .map(|(a, b)| (a - b) / self.frame_dt)
            .collect()
    }
}

/// Where the rigid frame-end targets for a sampled step come from.
pub enum RigidDriver<'a> {
    /// Take the rigid points of the reference trajectory at t+1.
    FromReference,
    /// Skin the frame-1 rigid rest positions with the pose at the sampled
    /// time.
    Rig {
        rig: &'a Rig,
        poses: &'a [Pose],
        rest: Vec<Vector3<f64>>,
        weights: SkinWeights,
    },
}

/// Next-step rigid positions by linear blend skinning of the frame-1 rigid
/// rest positions.
pub fn rigid_prediction(
    rig: &Rig,
    pose: &Pose,
    rigid_rest: &[Vector3<f64>],
    weights: &SkinWeights,
) -> Result<Vec<Vector3<f64>>> {
    lbs(rig, pose, rigid_rest, weights)
}

/// One forward step of the solver with the given parameters; returns the
/// flex-point positions at t+1 (in `partition.flex` order).
pub fn pbd_forward(
    scene: &SimScene,
    positions: &[Vector3<f64>],
    velocities: &[Vector3<f64>],
    rigid_targets: &[Vector3<f64>],
    params: &PhysParams,
) -> Result<Vec<Vector3<f64>>> {
    let mut state = materialize_state::<f64>(scene, positions, velocities, params)?;
    let cons = materialize_constraints::<f64>(scene, params)?;
    let targets: Vec<V3<f64>> = rigid_targets.iter().map(v3_from).collect();
    let mut diag = StepDiagnostics::default();
    step_generic(
        &mut state,
        &cons,
        &scene.partition.rigid,
        &targets,
        &StepParams::from_config(&scene.config),
        &mut diag,
    )?;
    Ok(scene
        .partition
        .flex
        .iter()
        .map(|&i| v3_re(&state.pos[i]))
        .collect())
}

fn materialize_state<T: num_dual::DualNum<f64> + Copy>(
    scene: &SimScene,
    positions: &[Vector3<f64>],
    velocities: &[Vector3<f64>],
    params: &PhysParams,
) -> Result<GenericState<T>> {
    let n = positions.len();
    scene.validate(n)?;
    if params.mass.groups.len() != scene.partition.flex.len() {
        return Err(Error::InvalidInput(format!(
            "mass parameters cover {} flex points, scene has {}",
            params.mass.groups.len(),
            scene.partition.flex.len()
        )));
    }
    let mut inv_mass = vec![T::from(0.0); n];
    for (k, &i) in scene.partition.flex.iter().enumerate() {
        let log_m = params.mass.log_values[params.mass.groups[k]];
        inv_mass[i] = T::from((-log_m).exp());
    }
    Ok(GenericState {
        pos: positions.iter().map(v3_from).collect(),
        vel: velocities.iter().map(v3_from).collect(),
        inv_mass,
    })
}

fn materialize_constraints<T: num_dual::DualNum<f64> + Copy>(
    scene: &SimScene,
    params: &PhysParams,
) -> Result<GenericConstraints<T>> {
    if params.compliance.groups.len() != scene.constraints.distance.len() {
        return Err(Error::InvalidInput(format!(
            "compliance parameters cover {} edges, scene has {}",
            params.compliance.groups.len(),
            scene.constraints.distance.len()
        )));
    }
    let mut cons = GenericConstraints::<T>::lift(&scene.constraints);
    for (j, c) in cons.distance.iter_mut().enumerate() {
        c.compliance = T::from(params.compliance.log_values[params.compliance.groups[j]].exp());
    }
    Ok(cons)
}

/// Sum of squared distances between predicted and reference flex positions.
pub fn loss_pbd(predicted: &[Vector3<f64>], reference: &[Vector3<f64>]) -> f64 {
    assert_eq!(predicted.len(), reference.len());
    predicted
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).norm_squared())
        .sum()
}

/// Gradient scheme for the optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradMode {
    /// Central finite differences over the grouped log-parameters.
    CentralDifference { h: f64 },
    /// Forward-mode (dual-number) differentiation through the substep loop.
    Forward,
}

impl Default for GradMode {
    fn default() -> Self {
        GradMode::CentralDifference { h: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeConfig {
    pub epochs: usize,
    /// Uniformly drawn sample times per epoch; None evaluates every step.
    pub samples_per_epoch: Option<usize>,
    pub seed: u64,
    pub grad_mode: GradMode,
    pub optimize_masses: bool,
    pub optimize_compliances: bool,
    /// Initial / minimum / maximum log-space step of the adaptive update.
    pub step_init: f64,
    pub step_min: f64,
    pub step_max: f64,
    /// Loss contributed by a diverging forward simulation.
    pub penalty_cap: f64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            epochs: 200,
            samples_per_epoch: Some(8),
            seed: 0,
            grad_mode: GradMode::default(),
            optimize_masses: true,
            optimize_compliances: true,
            step_init: 0.1,
            step_min: 1e-4,
            step_max: 0.5,
            penalty_cap: 1e6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub params: PhysParams,
    /// Mean loss per epoch (over that epoch's sampled steps).
    pub loss_history: Vec<f64>,
    pub best_loss: f64,
    pub diverged_samples: usize,
}

struct ActiveParams {
    mass_count: usize,
    compliance_count: usize,
}

impl ActiveParams {
    fn pack(&self, params: &PhysParams) -> Vec<f64> {
        let mut theta = Vec::new();
        theta.extend_from_slice(&params.mass.log_values[..self.mass_count]);
        theta.extend_from_slice(&params.compliance.log_values[..self.compliance_count]);
        theta
    }

    fn unpack(&self, theta: &[f64], params: &mut PhysParams) {
        params.mass.log_values[..self.mass_count].copy_from_slice(&theta[..self.mass_count]);
        params.compliance.log_values[..self.compliance_count]
            .copy_from_slice(&theta[self.mass_count..self.mass_count + self.compliance_count]);
    }
}

/// Mean one-step prediction loss over the given sample times.
fn mean_loss(
    scene: &SimScene,
    reference: &ReferenceTrajectory,
    driver: &RigidDriver,
    params: &PhysParams,
    times: &[usize],
    penalty_cap: f64,
    diverged: &mut usize,
) -> Result<f64> {
    let mut total = 0.0;
    for &t in times {
        let targets = rigid_targets_at(scene, reference, driver, t)?;
        let velocities = reference.velocity_at(t);
        match pbd_forward(scene, &reference.positions[t], &velocities, &targets, params) {
            Ok(flex) => {
                let ref_flex: Vec<Vector3<f64>> = scene
                    .partition
                    .flex
                    .iter()
                    .map(|&i| reference.positions[t + 1][i])
                    .collect();
                total += loss_pbd(&flex, &ref_flex);
            }
            Err(Error::Divergence(_)) => {
                *diverged += 1;
                total += penalty_cap;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(total / times.len() as f64)
}

fn rigid_targets_at(
    scene: &SimScene,
    reference: &ReferenceTrajectory,
    driver: &RigidDriver,
    t: usize,
) -> Result<Vec<Vector3<f64>>> {
    match driver {
        RigidDriver::FromReference => Ok(scene
            .partition
            .rigid
            .iter()
            .map(|&i| reference.positions[t + 1][i])
            .collect()),
        RigidDriver::Rig {
            rig,
            poses,
            rest,
            weights,
        } => rigid_prediction(rig, &poses[t], rest, weights),
    }
}

/// Forward-mode loss derivative w.r.t. one active coordinate.
fn forward_loss_derivative(
    scene: &SimScene,
    reference: &ReferenceTrajectory,
    driver: &RigidDriver,
    params: &PhysParams,
    active: &ActiveParams,
    coord: usize,
    times: &[usize],
    penalty_cap: f64,
    diverged: &mut usize,
) -> Result<(f64, f64)> {
    let seed_mass = |g: usize| coord < active.mass_count && g == coord;
    let seed_comp =
        |g: usize| coord >= active.mass_count && g == coord - active.mass_count;

    let mut value = 0.0;
    let mut deriv = 0.0;
    for &t in times {
        let targets = rigid_targets_at(scene, reference, driver, t)?;
        let velocities = reference.velocity_at(t);

        // Dual state: the seeded log-parameter carries tangent 1.
        let n = reference.positions[t].len();
        let mut inv_mass = vec![Dual64::from(0.0); n];
        for (k, &i) in scene.partition.flex.iter().enumerate() {
            let g = params.mass.groups[k];
            let log_m = Dual64::new(
                params.mass.log_values[g],
                if seed_mass(g) { 1.0 } else { 0.0 },
            );
            inv_mass[i] = (-log_m).exp();
        }
        let mut cons = GenericConstraints::<Dual64>::lift(&scene.constraints);
        for (j, c) in cons.distance.iter_mut().enumerate() {
            let g = params.compliance.groups[j];
            let log_a = Dual64::new(
                params.compliance.log_values[g],
                if seed_comp(g) { 1.0 } else { 0.0 },
            );
            c.compliance = log_a.exp();
        }
        let mut state = GenericState::<Dual64> {
            pos: reference.positions[t].iter().map(v3_from).collect(),
            vel: velocities.iter().map(v3_from).collect(),
            inv_mass,
        };
        let dual_targets: Vec<V3<Dual64>> = targets.iter().map(v3_from).collect();
        let mut diag = StepDiagnostics::default();
        let stepped = step_generic(
            &mut state,
            &cons,
            &scene.partition.rigid,
            &dual_targets,
            &StepParams::from_config(&scene.config),
            &mut diag,
        );
        match stepped {
            Ok(()) => {
                let mut sample_loss = Dual64::from(0.0);
                for &i in &scene.partition.flex {
                    let r = reference.positions[t + 1][i];
                    let p = state.pos[i];
                    let dx = p[0] - r.x;
                    let dy = p[1] - r.y;
                    let dz = p[2] - r.z;
                    sample_loss += dx * dx + dy * dy + dz * dz;
                }
                value += sample_loss.re;
                deriv += sample_loss.eps;
            }
            Err(Error::Divergence(_)) => {
                *diverged += 1;
                value += penalty_cap;
            }
            Err(e) => return Err(e),
        }
    }
    let m = times.len() as f64;
    Ok((value / m, deriv / m))
}

#[derive(Debug, Clone)]
pub struct LossGradient {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub diverged_samples: usize,
}

/// Loss and gradient w.r.t. the active grouped log-parameters at the given
/// sample times. Exposed so the two gradient routes can be compared directly.
pub fn loss_and_gradient(
    scene: &SimScene,
    reference: &ReferenceTrajectory,
    driver: &RigidDriver,
    params: &PhysParams,
    config: &OptimizeConfig,
    times: &[usize],
) -> Result<LossGradient> {
    let active = ActiveParams {
        mass_count: if config.optimize_masses {
            params.mass.group_count()
        } else {
            0
        },
        compliance_count: if config.optimize_compliances {
            params.compliance.group_count()
        } else {
            0
        },
    };
    let mut diverged = 0;
    let value = mean_loss(
        scene,
        reference,
        driver,
        params,
        times,
        config.penalty_cap,
        &mut diverged,
    )?;
    let dim = active.mass_count + active.compliance_count;
    let steps = match config.grad_mode {
        GradMode::CentralDifference { h } => vec![h; dim],
        GradMode::Forward => Vec::new(),
    };
    let grad = gradient_with_steps(
        scene,
        reference,
        driver,
        params,
        &active,
        config,
        times,
        &steps,
        &mut diverged,
    )?;
    Ok(LossGradient {
        value,
        gradient: grad,
        diverged_samples: diverged,
    })
}

/// Gradient of the mean loss; `fd_steps` holds the per-coordinate probe
/// width for the central-difference mode (ignored in forward mode).
#[allow(clippy::too_many_arguments)]
fn gradient_with_steps(
    scene: &SimScene,
    reference: &ReferenceTrajectory,
    driver: &RigidDriver,
    params: &PhysParams,
    active: &ActiveParams,
    config: &OptimizeConfig,
    times: &[usize],
    fd_steps: &[f64],
    diverged: &mut usize,
) -> Result<Vec<f64>> {
    let dim = active.mass_count + active.compliance_count;
    let mut grad = vec![0.0; dim];
    match config.grad_mode {
        GradMode::CentralDifference { .. } => {
            let theta0 = active.pack(params);
            for i in 0..dim {
                let h = fd_steps[i];
                let mut probe = params.clone();
                let mut theta = theta0.clone();
                theta[i] = theta0[i] + h;
                active.unpack(&theta, &mut probe);
                let plus = mean_loss(
                    scene,
                    reference,
                    driver,
                    &probe,
                    times,
                    config.penalty_cap,
                    diverged,
                )?;
                theta[i] = theta0[i] - h;
                active.unpack(&theta, &mut probe);
                let minus = mean_loss(
                    scene,
                    reference,
                    driver,
                    &probe,
                    times,
                    config.penalty_cap,
                    diverged,
                )?;
                grad[i] = (plus - minus) / (2.0 * h);
            }
        }
        GradMode::Forward => {
            for i in 0..dim {
                let (_, d) = forward_loss_derivative(
                    scene,
                    reference,
                    driver,
                    params,
                    active,
                    i,
                    times,
                    config.penalty_cap,
                    diverged,
                )?;
                grad[i] = d;
            }
        }
    }
    Ok(grad)
}

/// Minimizes the one-step prediction loss over the reference trajectory.
/// Sample times are drawn from a seeded schedule fixed per epoch; the
/// returned parameters are the best iterate seen.
pub fn optimize(
    scene: &SimScene,
    reference: &ReferenceTrajectory,
    driver: &RigidDriver,
    initial: &PhysParams,
    config: &OptimizeConfig,
) -> Result<OptimizeResult> {
    reference.validate()?;
    scene.validate(reference.positions[0].len())?;
    if let RigidDriver::Rig { poses, .. } = driver {
        if poses.len() + 1 < reference.frames() {
            return Err(Error::InvalidInput(format!(
                "driver supplies {} poses for {} reference frames",
                poses.len(),
                reference.frames()
            )));
        }
    }
    let steps = reference.frames() - 1;
    let mut rng = substream_rng(config.seed, "sysid.schedule");
    let mut params = initial.clone();
    let active = ActiveParams {
        mass_count: if config.optimize_masses {
            params.mass.group_count()
        } else {
            0
        },
        compliance_count: if config.optimize_compliances {
            params.compliance.group_count()
        } else {
            0
        },
    };
    let dim = active.mass_count + active.compliance_count;
    let mut step = vec![config.step_init; dim];
    let mut prev_grad = vec![0.0; dim];
    let mut history = Vec::with_capacity(config.epochs);
    let mut best = (f64::INFINITY, params.clone());
    let mut diverged_total = 0;

    for _epoch in 0..config.epochs {
        let times: Vec<usize> = match config.samples_per_epoch {
            Some(k) => (0..k.max(1))
                .map(|_| uniform_below(&mut rng, steps as u64) as usize)
                .collect(),
            None => (0..steps).collect(),
        };
        let mut diverged = 0;
        let value = mean_loss(
            scene,
            reference,
            driver,
            &params,
            &times,
            config.penalty_cap,
            &mut diverged,
        )?;
        // Probe widths track the update steps so the secant stays
        // informative at the scale the parameters actually move.
        let fd_steps: Vec<f64> = match config.grad_mode {
            GradMode::CentralDifference { h } => {
                step.iter().map(|s| s.clamp(1e-3_f64.min(h), h)).collect()
            }
            GradMode::Forward => Vec::new(),
        };
        let grad = gradient_with_steps(
            scene,
            reference,
            driver,
            &params,
            &active,
            config,
            &times,
            &fd_steps,
            &mut diverged,
        )?;
        diverged_total += diverged;
        history.push(value);
        if value < best.0 {
            best = (value, params.clone());
        }
        // Resilient propagation: per-coordinate step adaptation on the
        // gradient sign, no momentum.
        let mut theta = active.pack(&params);
        for i in 0..dim {
            let s = grad[i] * prev_grad[i];
            if s > 0.0 {
                step[i] = (step[i] * 1.2).min(config.step_max);
            } else if s < 0.0 {
                step[i] = (step[i] * 0.5).max(config.step_min);
            }
            if grad[i] > 0.0 {
                theta[i] -= step[i];
            } else if grad[i] < 0.0 {
                theta[i] += step[i];
            }
            prev_grad[i] = grad[i];
        }
        active.unpack(&theta, &mut params);
    }
    // Final evaluation so the deterministic best includes the last iterate.
    let times: Vec<usize> = (0..steps).collect();
    let mut diverged = 0;
    let final_loss = mean_loss(
        scene,
        reference,
        driver,
        &params,
        &times,
        config.penalty_cap,
        &mut diverged,
    )?;
    diverged_total += diverged;
    if final_loss < best.0 {
        best = (final_loss, params);
    }
    Ok(OptimizeResult {
        params: best.1,
        loss_history: history,
        best_loss: best.0,
        diverged_samples: diverged_total,
    })
}

/// How the generator carries velocity between frames when rolling a
/// reference trajectory forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocityPolicy {
    /// Keep the solver's substep velocities (physical rollout).
    CarryInternal,
    /// Restart each frame from backward-difference velocities, matching the
    /// optimizer's reconstruction exactly (the trajectory becomes a fixed
    /// point of the one-step prediction map at the true parameters).
    FiniteDifference,
}

/// Rolls the solver forward to synthesize a reference trajectory.
/// `rigid_targets[f]` drives frame f+1 from frame f.
pub fn rollout(
    scene: &SimScene,
    initial: &SimState,
    rigid_targets: &[Vec<Vector3<f64>>],
    params: &PhysParams,
    policy: VelocityPolicy,
) -> Result<ReferenceTrajectory> {
    let masses = params.mass.materialize();
    let mut inv = vec![0.0; initial.len()];
    for (k, &i) in scene.partition.flex.iter().enumerate() {
        inv[i] = 1.0 / masses[k];
    }
    let compliances = params.compliance.materialize();
    let mut constraints = scene.constraints.clone();
    for (c, a) in constraints.distance.iter_mut().zip(&compliances) {
        c.compliance = *a;
    }
    let mut state = SimState::new(initial.positions.clone(), initial.velocities.clone(), inv)?;
    let mut frames = vec![state.positions.clone()];
    for targets in rigid_targets {
        if let VelocityPolicy::FiniteDifference = policy {
            let prev = if frames.len() >= 2 {
                frames[frames.len() - 2].clone()
            } else {
                frames[0].clone()
            };
            state.velocities = if frames.len() >= 2 {
                state
                    .positions
                    .iter()
                    .zip(&prev)
                    .map(|(a, b)| (a - b) / scene.config.frame_dt)
                    .collect()
            } else {
                vec![Vector3::zeros(); state.len()]
            };
        }
        let (next, _) = crate::xpbd::step(
            &state,
            &constraints,
            &scene.partition,
            targets,
            &scene.config,
        )?;
        state = next;
        frames.push(state.positions.clone());
    }
    Ok(ReferenceTrajectory {
        positions: frames,
        frame_dt: scene.config.frame_dt,
    })
}

/// Seeded Lloyd's algorithm over 3D points; returns one group id per point.
/// Deterministic for a fixed seed; empty clusters are reseeded to the point
/// farthest from its center.
pub fn kmeans_groups(points: &[Vector3<f64>], k: usize, seed: u64) -> Vec<usize> {
    let k = k.clamp(1, points.len().max(1));
    if points.is_empty() {
        return Vec::new();
    }
    let mut rng = substream_rng(seed, "sysid.kmeans");
    let mut order: Vec<usize> = (0..points.len()).collect();
    for i in 0..k {
        let j = i + uniform_below(&mut rng, (points.len() - i) as u64) as usize;
        order.swap(i, j);
    }
    let mut centers: Vec<Vector3<f64>> = order[..k].iter().map(|&i| points[i]).collect();
    let mut assign = vec![0usize; points.len()];
    for _ in 0..50 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = centers
                .iter()
                .enumerate()
                .min_by(|(ai, a), (bi, b)| {
                    ((*a - p).norm_squared(), *ai)
                        .partial_cmp(&((*b - p).norm_squared(), *bi))
                        .unwrap()
                })
                .unwrap()
                .0;
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![Vector3::zeros(); k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            sums[assign[i]] += p;
            counts[assign[i]] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c] / counts[c] as f64;
            } else {
                // Reseed to the point farthest from its current center.
                let far = points
                    .iter()
                    .enumerate()
                    .max_by(|(ai, a), (bi, b)| {
                        ((*a - centers[assign[*ai]]).norm_squared(), *ai)
                            .partial_cmp(&((*b - centers[assign[*bi]]).norm_squared(), *bi))
                            .unwrap()
                    })
                    .unwrap()
                    .0;
                centers[c] = points[far];
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    assign
}
