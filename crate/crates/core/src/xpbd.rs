//! Compliant position-based dynamics (XPBD).
//!
//! The frame loop divides each frame into substeps. Within a substep,
//! kinematically driven points are placed on the line between their
//! frame-start and frame-end positions, free points are predicted with a
//! symplectic Euler step, constraints are projected with Gauss–Seidel sweeps
//! (per-constraint Lagrange multipliers reset at substep start, accumulated
//! across iterations), and velocities are rebuilt from the position change.
//!
//! Distance constraints carry a compliance α (m/N); α = 0 is rigid. The
//! tetrahedron-volume constraint is unilateral: it acts only when a tet's
//! signed volume falls below a threshold fraction of its rest volume, and is
//! a bit-exact no-op otherwise.
//!
//! The solver core is generic over the scalar type ([`num_dual::DualNum`]),
//! which is how forward-mode parameter derivatives are obtained without a
//! second implementation of the stepping loop.

use nalgebra::Vector3;
use num_dual::DualNum;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{add, cross, dot, norm, scale, signed_volume, sub, v3_from, v3_re, V3};

/// Endpoint separations below this are treated as a singular gradient.
pub const COINCIDENT_EPS: f64 = 1e-9;

/// Positions, velocities and inverse masses at one instant. Inverse mass 0
/// encodes a rigid (kinematically driven) point.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub positions: Vec<Vector3<f64>>,
    pub velocities: Vec<Vector3<f64>>,
    pub inverse_masses: Vec<f64>,
}

impl SimState {
    pub fn new(
        positions: Vec<Vector3<f64>>,
        velocities: Vec<Vector3<f64>>,
        inverse_masses: Vec<f64>,
    ) -> Result<Self> {
        let state = SimState {
            positions,
            velocities,
            inverse_masses,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.velocities.len() != self.positions.len()
            || self.inverse_masses.len() != self.positions.len()
        {
            return Err(Error::InvalidInput(format!(
                "state arrays disagree: {} positions, {} velocities, {} inverse masses",
                self.positions.len(),
                self.velocities.len(),
                self.inverse_masses.len()
            )));
        }
        let finite_v3 = |v: &Vector3<f64>| v.iter().all(|c| c.is_finite());
        if !self.positions.iter().all(finite_v3)
            || !self.velocities.iter().all(finite_v3)
            || !self.inverse_masses.iter().all(|w| w.is_finite() && *w >= 0.0)
        {
            return Err(Error::InvalidInput(
                "state contains non-finite values or negative inverse masses".into(),
            ));
        }
        Ok(())
    }
}

/// Distance constraint between two points with rest length (m) and
/// compliance α (m/N, ≥ 0; 0 = rigid).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceConstraint {
    pub endpoints: (usize, usize),
    pub rest_length: f64,
    pub compliance: f64,
}

/// Unilateral tetrahedron-volume constraint; acts only when the tet flips
/// below `threshold · rest_signed_volume`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AirMeshConstraint {
    pub tet: [usize; 4],
    pub rest_signed_volume: f64,
}

/// Fraction of the rest volume below which the volume constraint activates.
pub const DEFAULT_AIRMESH_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub distance: Vec<DistanceConstraint>,
    pub airmesh: Vec<AirMeshConstraint>,
    #[serde(default = "default_threshold")]
    pub airmesh_threshold: f64,
}

fn default_threshold() -> f64 {
    DEFAULT_AIRMESH_THRESHOLD
}

impl ConstraintSet {
    pub fn distance_only(distance: Vec<DistanceConstraint>) -> Self {
        ConstraintSet {
            distance,
            airmesh: Vec::new(),
            airmesh_threshold: DEFAULT_AIRMESH_THRESHOLD,
        }
    }
}

/// Constraint projection scheme. Gauss–Seidel applies each correction
/// immediately and is the deterministic default; Jacobi gathers all
/// corrections of a sweep and applies them averaged by the number of
/// constraints touching each point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    #[default]
    GaussSeidel,
    Jacobi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub frame_dt: f64,
    pub substeps: u32,
    pub solver_iterations: u32,
    #[serde(default = "default_gravity")]
    pub gravity: [f64; 3],
    #[serde(default)]
    pub mode: SolverMode,
}

fn default_gravity() -> [f64; 3] {
    [0.0, -9.81, 0.0]
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_dt > 0.0) || self.substeps < 1 || self.solver_iterations < 1 {
            return Err(Error::InvalidInput(format!(
                "sim config must satisfy frame_dt > 0, substeps >= 1, iterations >= 1 \
                 (got {}, {}, {})",
                self.frame_dt, self.substeps, self.solver_iterations
            )));
        }
        Ok(())
    }

    pub fn gravity_vec(&self) -> Vector3<f64> {
        Vector3::from(self.gravity)
    }
}

/// Rigid (driven) vs flex (simulated) point split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub rigid: Vec<usize>,
    pub flex: Vec<usize>,
}

impl Partition {
    /// Validates disjointness and that the union covers `0..n`.
    pub fn new(mut rigid: Vec<usize>, mut flex: Vec<usize>, n: usize) -> Result<Self> {
        rigid.sort_unstable();
        flex.sort_unstable();
        let mut seen = vec![0u8; n];
        for &i in rigid.iter().chain(flex.iter()) {
            if i >= n {
                return Err(Error::InvalidInput(format!(
                    "partition index {i} out of range for {n} points"
                )));
            }
            seen[i] += 1;
        }
        if seen.iter().any(|&c| c != 1) {
            return Err(Error::InvalidInput(
                "partition must cover every point exactly once".into(),
            ));
        }
        Ok(Partition { rigid, flex })
    }
}

/// Counters accumulated over one frame step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepDiagnostics {
    /// Projections skipped because of a singular gradient or zero effective
    /// mass.
    pub skipped_projections: u64,
    /// Volume constraints that were active but immovable (all four points
    /// pinned).
    pub unresolved_inversions: u64,
}

// ---------------------------------------------------------------------------
// Public operations (f64 wrappers over the generic core)
// ---------------------------------------------------------------------------

/// Symplectic Euler predictor. Points with inverse mass 0 are returned
/// unchanged; their targets come from the driver during stepping.
pub fn predict_positions(state: &SimState, dt: f64, gravity: &Vector3<f64>) -> Vec<Vector3<f64>> {
    state
        .positions
        .iter()
        .zip(&state.velocities)
        .zip(&state.inverse_masses)
        .map(|((x, v), &w)| {
            if w > 0.0 {
                x + (v + gravity * dt) * dt
            } else {
                *x
            }
        })
        .collect()
}

/// Single XPBD projection of a distance constraint. Returns the position
/// deltas for both endpoints and the updated Lagrange multiplier; the deltas
/// are not applied.
pub fn project_distance(
    positions: &[Vector3<f64>],
    constraint: &DistanceConstraint,
    inverse_masses: &[f64],
    accumulated_lambda: f64,
    dt: f64,
) -> Result<(Vector3<f64>, Vector3<f64>, f64)> {
    let (a, b) = constraint.endpoints;
    let d = positions[a] - positions[b];
    let len = d.norm();
    if len < COINCIDENT_EPS {
        return Err(Error::SingularGradient(format!(
            "distance constraint ({a}, {b}) has coincident endpoints"
        )));
    }
    let n = d / len;
    let c = len - constraint.rest_length;
    let alpha_tilde = constraint.compliance / (dt * dt);
    let (wa, wb) = (inverse_masses[a], inverse_masses[b]);
    let denom = wa + wb + alpha_tilde;
    if denom == 0.0 {
        return Ok((Vector3::zeros(), Vector3::zeros(), accumulated_lambda));
    }
    let dl = (-c - alpha_tilde * accumulated_lambda) / denom;
    Ok((n * (wa * dl), -n * (wb * dl), accumulated_lambda + dl))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AirMeshOutcome {
    /// Volume above threshold; deltas are exactly zero.
    Inactive,
    Projected,
    /// Active but all four points pinned; no movement possible.
    Unresolvable,
}

/// Projects the unilateral volume constraint back to
/// `V = threshold · V_rest` along the analytic volume gradient, weighted by
/// inverse masses. Inactive tets produce a bit-exact no-op.
pub fn project_airmesh(
    positions: &[Vector3<f64>],
    constraint: &AirMeshConstraint,
    inverse_masses: &[f64],
    threshold: f64,
) -> ([Vector3<f64>; 4], AirMeshOutcome) {
    let p: [V3<f64>; 4] = std::array::from_fn(|i| {
        let v = positions[constraint.tet[i]];
        [v.x, v.y, v.z]
    });
    let w: [f64; 4] = std::array::from_fn(|i| inverse_masses[constraint.tet[i]]);
    let (deltas, outcome) = airmesh_deltas(
        &p,
        &w,
        constraint.rest_signed_volume,
        threshold * constraint.rest_signed_volume,
    );
    (std::array::from_fn(|i| v3_re(&deltas[i])), outcome)
}

/// v = (x_new − x_old) / dt, elementwise.
pub fn update_velocities(
    old_positions: &[Vector3<f64>],
    new_positions: &[Vector3<f64>],
    dt: f64,
) -> Vec<Vector3<f64>> {
    old_positions
        .iter()
        .zip(new_positions)
        .map(|(o, n)| (n - o) / dt)
        .collect()
}

/// Advances the state by one frame. `driver_targets` holds the frame-end
/// positions of the rigid points, in `partition.rigid` order; during each
/// substep the rigid points are placed on the linear interpolation between
/// their frame-start and frame-end positions.
pub fn step(
    state: &SimState,
    constraints: &ConstraintSet,
    partition: &Partition,
    driver_targets: &[Vector3<f64>],
    config: &SimConfig,
) -> Result<(SimState, StepDiagnostics)> {
    state.validate()?;
    config.validate()?;
    if driver_targets.len() != partition.rigid.len() {
        return Err(Error::InvalidInput(format!(
            "driver supplies {} targets for {} rigid points",
            driver_targets.len(),
            partition.rigid.len()
        )));
    }
    if partition.rigid.len() + partition.flex.len() != state.len() {
        return Err(Error::InvalidInput(
            "partition does not cover the state".into(),
        ));
    }
    for &i in &partition.rigid {
        if state.inverse_masses[i] != 0.0 {
            return Err(Error::InvalidInput(format!(
                "rigid point {i} has nonzero inverse mass"
            )));
        }
    }
    for &i in &partition.flex {
        if state.inverse_masses[i] == 0.0 {
            return Err(Error::InvalidInput(format!(
                "flex point {i} has zero inverse mass"
            )));
        }
    }

    let mut gen = GenericState::<f64> {
        pos: state.positions.iter().map(v3_from).collect(),
        vel: state.velocities.iter().map(v3_from).collect(),
        inv_mass: state.inverse_masses.clone(),
    };
    let cons = GenericConstraints::<f64>::lift(constraints);
    let targets: Vec<V3<f64>> = driver_targets.iter().map(v3_from).collect();
    let mut diag = StepDiagnostics::default();
    step_generic(
        &mut gen,
        &cons,
        &partition.rigid,
        &targets,
        &StepParams::from_config(config),
        &mut diag,
    )?;
    Ok((
        SimState {
            positions: gen.pos.iter().map(v3_re).collect(),
            velocities: gen.vel.iter().map(v3_re).collect(),
            inverse_masses: state.inverse_masses.clone(),
        },
        diag,
    ))
}

// ---------------------------------------------------------------------------
// Generic solver core
// ---------------------------------------------------------------------------

pub(crate) struct GenericState<T> {
    pub pos: Vec<V3<T>>,
    pub vel: Vec<V3<T>>,
    pub inv_mass: Vec<T>,
}

pub(crate) struct GenDistance<T> {
    pub a: usize,
    pub b: usize,
    pub rest: T,
    pub compliance: T,
}

pub(crate) struct GenAirMesh<T> {
    pub tet: [usize; 4],
    pub rest_volume: T,
}

pub(crate) struct GenericConstraints<T> {
    pub distance: Vec<GenDistance<T>>,
    pub airmesh: Vec<GenAirMesh<T>>,
    pub threshold: f64,
}

impl<T: DualNum<f64> + Copy> GenericConstraints<T> {
    pub fn lift(set: &ConstraintSet) -> Self {
        GenericConstraints {
            distance: set
                .distance
                .iter()
                .map(|c| GenDistance {
                    a: c.endpoints.0,
                    b: c.endpoints.1,
                    rest: T::from(c.rest_length),
                    compliance: T::from(c.compliance),
                })
                .collect(),
            airmesh: set
                .airmesh
                .iter()
                .map(|c| GenAirMesh {
                    tet: c.tet,
                    rest_volume: T::from(c.rest_signed_volume),
                })
                .collect(),
            threshold: set.airmesh_threshold,
        }
    }
}

pub(crate) struct StepParams {
    pub frame_dt: f64,
    pub substeps: u32,
    pub iterations: u32,
    pub gravity: [f64; 3],
    pub mode: SolverMode,
}

impl StepParams {
    pub fn from_config(c: &SimConfig) -> Self {
        StepParams {
            frame_dt: c.frame_dt,
            substeps: c.substeps,
            iterations: c.solver_iterations,
            gravity: c.gravity,
            mode: c.mode,
        }
    }
}

pub(crate) fn step_generic<T: DualNum<f64> + Copy>(
    state: &mut GenericState<T>,
    cons: &GenericConstraints<T>,
    rigid: &[usize],
    driver_end: &[V3<T>],
    params: &StepParams,
    diag: &mut StepDiagnostics,
) -> Result<()> {
    let n = state.pos.len();
    let dt = params.frame_dt / params.substeps as f64;
    let gravity: V3<T> = [
        T::from(params.gravity[0]),
        T::from(params.gravity[1]),
        T::from(params.gravity[2]),
    ];
    let rigid_start: Vec<V3<T>> = rigid.iter().map(|&i| state.pos[i]).collect();
    let mut lambdas: Vec<T> = vec![T::from(0.0); cons.distance.len()];
    let mut old_pos: Vec<V3<T>> = Vec::with_capacity(n);

    for substep in 1..=params.substeps {
        let s = substep as f64 / params.substeps as f64;
        old_pos.clear();
        old_pos.extend_from_slice(&state.pos);

        // Driven points go to the interpolated target for this substep's end.
        for (r, &i) in rigid.iter().enumerate() {
            state.pos[i] = add(scale(rigid_start[r], T::from(1.0 - s)), scale(driver_end[r], T::from(s)));
        }
        // Predictor for free points.
        for i in 0..n {
            if state.inv_mass[i].re() > 0.0 {
                let v = add(state.vel[i], scale(gravity, T::from(dt)));
                state.pos[i] = add(state.pos[i], scale(v, T::from(dt)));
            }
        }

        for l in lambdas.iter_mut() {
            *l = T::from(0.0);
        }
        for _ in 0..params.iterations {
            match params.mode {
                SolverMode::GaussSeidel => {
                    solve_sweep_gauss_seidel(state, cons, &mut lambdas, dt, diag)
                }
                SolverMode::Jacobi => solve_sweep_jacobi(state, cons, &mut lambdas, dt, diag),
            }
        }

        let inv_dt = T::from(1.0 / dt);
        for i in 0..n {
            state.vel[i] = scale(sub(state.pos[i], old_pos[i]), inv_dt);
        }
        for p in &state.pos {
            if !p.iter().all(|c| c.re().is_finite()) {
                return Err(Error::Divergence(format!(
                    "non-finite position at substep {substep}/{}",
                    params.substeps
                )));
            }
        }
    }
    Ok(())
}

fn distance_correction<T: DualNum<f64> + Copy>(
    pos: &[V3<T>],
    inv_mass: &[T],
    c: &GenDistance<T>,
    lambda: T,
    dt: f64,
) -> Option<(V3<T>, V3<T>, T)> {
    let d = sub(pos[c.a], pos[c.b]);
    let len = norm(d);
    if len.re() < COINCIDENT_EPS {
        return None;
    }
    let n = scale(d, len.recip());
    let cval = len - c.rest;
    let alpha_tilde = c.compliance / (dt * dt);
    let (wa, wb) = (inv_mass[c.a], inv_mass[c.b]);
    let denom = wa + wb + alpha_tilde;
    if denom.re() == 0.0 {
        return None;
    }
    let dl = (-cval - alpha_tilde * lambda) / denom;
    Some((scale(n, wa * dl), scale(n, -(wb * dl)), dl))
}

fn solve_sweep_gauss_seidel<T: DualNum<f64> + Copy>(
    state: &mut GenericState<T>,
    cons: &GenericConstraints<T>,
    lambdas: &mut [T],
    dt: f64,
    diag: &mut StepDiagnostics,
) {
    for (ci, c) in cons.distance.iter().enumerate() {
        match distance_correction(&state.pos, &state.inv_mass, c, lambdas[ci], dt) {
            Some((da, db, dl)) => {
                if state.inv_mass[c.a].re() > 0.0 {
                    state.pos[c.a] = add(state.pos[c.a], da);
                }
                if state.inv_mass[c.b].re() > 0.0 {
                    state.pos[c.b] = add(state.pos[c.b], db);
                }
                lambdas[ci] += dl;
            }
            None => diag.skipped_projections += 1,
        }
    }
    for c in &cons.airmesh {
        let p: [V3<T>; 4] = std::array::from_fn(|i| state.pos[c.tet[i]]);
        let w: [T; 4] = std::array::from_fn(|i| state.inv_mass[c.tet[i]]);
        let vmin = c.rest_volume * cons.threshold;
        let (deltas, outcome) = airmesh_deltas_generic(&p, &w, vmin);
        if outcome == AirMeshOutcome::Unresolvable {
            diag.unresolved_inversions += 1;
        }
        if outcome == AirMeshOutcome::Projected {
            for i in 0..4 {
                if w[i].re() > 0.0 {
                    state.pos[c.tet[i]] = add(state.pos[c.tet[i]], deltas[i]);
                }
            }
        }
    }
}

fn solve_sweep_jacobi<T: DualNum<f64> + Copy>(
    state: &mut GenericState<T>,
    cons: &GenericConstraints<T>,
    lambdas: &mut [T],
    dt: f64,
    diag: &mut StepDiagnostics,
) {
    let n = state.pos.len();
    let zero: V3<T> = [T::from(0.0); 3];
    let mut acc: Vec<V3<T>> = vec![zero; n];
    let mut count = vec![0u32; n];
    for (ci, c) in cons.distance.iter().enumerate() {
        match distance_correction(&state.pos, &state.inv_mass, c, lambdas[ci], dt) {
            Some((da, db, dl)) => {
                acc[c.a] = add(acc[c.a], da);
                acc[c.b] = add(acc[c.b], db);
                count[c.a] += 1;
                count[c.b] += 1;
                lambdas[ci] += dl;
            }
            None => diag.skipped_projections += 1,
        }
    }
    apply_averaged(state, &mut acc, &mut count);
    for c in &cons.airmesh {
        let p: [V3<T>; 4] = std::array::from_fn(|i| state.pos[c.tet[i]]);
        let w: [T; 4] = std::array::from_fn(|i| state.inv_mass[c.tet[i]]);
        let vmin = c.rest_volume * cons.threshold;
        let (deltas, outcome) = airmesh_deltas_generic(&p, &w, vmin);
        if outcome == AirMeshOutcome::Unresolvable {
            diag.unresolved_inversions += 1;
        }
        if outcome == AirMeshOutcome::Projected {
            for i in 0..4 {
                acc[c.tet[i]] = add(acc[c.tet[i]], deltas[i]);
                count[c.tet[i]] += 1;
            }
        }
    }
    apply_averaged(state, &mut acc, &mut count);
}

fn apply_averaged<T: DualNum<f64> + Copy>(
    state: &mut GenericState<T>,
    acc: &mut [V3<T>],
    count: &mut [u32],
) {
    for i in 0..state.pos.len() {
        if count[i] > 0 && state.inv_mass[i].re() > 0.0 {
            state.pos[i] = add(state.pos[i], scale(acc[i], T::from(1.0 / count[i] as f64)));
        }
        acc[i] = [T::from(0.0); 3];
        count[i] = 0;
    }
}

/// Volume gradient of the tetrahedron (p0, p1, p2, p3) w.r.t. each vertex.
fn volume_gradients<T: DualNum<f64> + Copy>(p: &[V3<T>; 4]) -> [V3<T>; 4] {
    let sixth = T::from(1.0 / 6.0);
    let g1 = scale(cross(sub(p[2], p[0]), sub(p[3], p[0])), sixth);
    let g2 = scale(cross(sub(p[3], p[0]), sub(p[1], p[0])), sixth);
    let g3 = scale(cross(sub(p[1], p[0]), sub(p[2], p[0])), sixth);
    let g0 = [
        -(g1[0] + g2[0] + g3[0]),
        -(g1[1] + g2[1] + g3[1]),
        -(g1[2] + g2[2] + g3[2]),
    ];
    [g0, g1, g2, g3]
}

fn airmesh_deltas(
    p: &[V3<f64>; 4],
    w: &[f64; 4],
    rest_volume: f64,
    vmin: f64,
) -> ([V3<f64>; 4], AirMeshOutcome) {
    let _ = rest_volume;
    airmesh_deltas_generic(p, w, vmin)
}

/// Computes the per-vertex deltas restoring `V = vmin` along the
/// inverse-mass-weighted volume gradient evaluated at the current positions.
/// The step magnitude solves the (cubic) volume equation along that fixed
/// direction with a safeguarded Newton iteration, so a single projection pass
/// restores the target volume to solver precision.
fn airmesh_deltas_generic<T: DualNum<f64> + Copy>(
    p: &[V3<T>; 4],
    w: &[T; 4],
    vmin: T,
) -> ([V3<T>; 4], AirMeshOutcome) {
    let zero: V3<T> = [T::from(0.0); 3];
    let v0 = signed_volume(p[0], p[1], p[2], p[3]);
    if v0.re() >= vmin.re() {
        return ([zero; 4], AirMeshOutcome::Inactive);
    }
    let g = volume_gradients(p);
    let dir: [V3<T>; 4] = std::array::from_fn(|i| scale(g[i], w[i]));
    let denom: T = (0..4).map(|i| dot(g[i], dir[i])).fold(T::from(0.0), |a, b| a + b);
    if denom.re() <= 0.0 {
        return ([zero; 4], AirMeshOutcome::Unresolvable);
    }

    let at = |s: T| -> [V3<T>; 4] { std::array::from_fn(|i| add(p[i], scale(dir[i], s))) };
    let vol_at = |s: T| -> T {
        let q = at(s);
        signed_volume(q[0], q[1], q[2], q[3])
    };

    // First-order (XPBD) step, then Newton on the cubic V(s) − vmin = 0.
    let mut s = (vmin - v0) / denom;
    let tol = 1e-14 * vmin.re().abs().max(1.0);
    let mut best = (s, vol_at(s));
    for _ in 0..24 {
        let v = vol_at(s);
        if (v.re() - vmin.re()).abs() <= tol {
            best = (s, v);
            break;
        }
        if v.re() > best.1.re() {
            best = (s, v);
        }
        let q = at(s);
        let gq = volume_gradients(&q);
        let dv: T = (0..4).map(|i| dot(gq[i], dir[i])).fold(T::from(0.0), |a, b| a + b);
        if dv.re() <= 0.0 {
            break;
        }
        s -= (v - vmin) / dv;
        if !(s.re().is_finite()) {
            break;
        }
    }
    let mut s_final = best.0;
    if (best.1.re() - vmin.re()).abs() > tol {
        // Newton stalled (can happen when the cubic has a barrier along the
        // direction). Bracket by doubling, then bisect on the real part; two
        // Newton polish steps restore derivative consistency for duals.
        let mut lo = T::from(0.0);
        let mut hi = (vmin - v0) / denom;
        let mut bracketed = false;
        for _ in 0..80 {
            if vol_at(hi).re() >= vmin.re() {
                bracketed = true;
                break;
            }
            lo = hi;
            hi *= 2.0;
        }
        if bracketed {
            for _ in 0..120 {
                let mid = (lo + hi) * 0.5;
                if vol_at(mid).re() >= vmin.re() {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            s_final = hi;
            for _ in 0..2 {
                let q = at(s_final);
                let gq = volume_gradients(&q);
                let dv: T =
                    (0..4).map(|i| dot(gq[i], dir[i])).fold(T::from(0.0), |a, b| a + b);
                if dv.re() > 0.0 {
                    s_final -= (vol_at(s_final) - vmin) / dv;
                }
            }
        } else {
            // Best effort: the largest volume seen along the direction.
            s_final = best.0;
        }
    }
    let deltas: [V3<T>; 4] = std::array::from_fn(|i| scale(dir[i], s_final));
    (deltas, AirMeshOutcome::Projected)
}
