//! Acceptance suite: one test per release criterion, each printing a
//! PASS line (run with `--nocapture` to see them; the per-test ok/FAILED
//! line carries the same information).
//!
//! The criteria are property-based and synthetic-quantitative: closed-form
//! solver checks, stiffness/iteration decoupling, the substep ablation
//! direction, volume-constraint restoration, parameter recovery on a
//! two-material cloth, Delaunay/filter oracles, embedding exactness and
//! rigid equivariance, pose recovery, metric identities, and the
//! forward-mode gradient check.

use nalgebra::{Rotation3, UnitQuaternion, Vector3};
use pbdsim_core::geom::{build_knn, delaunay_tetrahedralize, filter_tets, PointCloud};
use pbdsim_core::metrics;
use pbdsim_core::posefit;
use pbdsim_core::seeding::{substream_rng, uniform_unit};
use pbdsim_core::skinning::{bind_gaussians, lbs, Joint, Pose, Rig, ShapeModel};
use pbdsim_core::sysid::{
    self, GradMode, GroupedParam, OptimizeConfig, PhysParams, RigidDriver, SimScene,
    VelocityPolicy,
};
use pbdsim_core::transfer::{
    apply_embedding, build_frames, embed, update_rotations, FrameParams,
};
use pbdsim_core::xpbd::{
    project_airmesh, project_distance, step, AirMeshConstraint, AirMeshOutcome, ConstraintSet,
    DistanceConstraint, Partition, SimConfig, SimState, SolverMode,
};

fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
    Vector3::new(x, y, z)
}

// ---------------------------------------------------------------------------
// Shared scenes
// ---------------------------------------------------------------------------

struct Grid {
    state: SimState,
    constraints: ConstraintSet,
    partition: Partition,
    targets: Vec<Vector3<f64>>,
    rest_lengths: Vec<f64>,
}

/// cols × rows grid in the xy plane, top row pinned, hanging under gravity.
fn hanging_grid(cols: usize, rows: usize, spacing: f64, alpha: f64, mass: f64) -> Grid {
    let n = cols * rows;
    let mut positions = Vec::with_capacity(n);
    for r in 0..rows {
        for c in 0..cols {
            positions.push(v(c as f64 * spacing, -(r as f64) * spacing, 0.0));
        }
    }
    let mut distance = Vec::new();
    let idx = |r: usize, c: usize| r * cols + c;
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                distance.push((idx(r, c), idx(r, c + 1)));
            }
            if r + 1 < rows {
                distance.push((idx(r, c), idx(r + 1, c)));
            }
        }
    }
    let rest_lengths: Vec<f64> = distance
        .iter()
        .map(|&(a, b)| (positions[a] - positions[b]).norm())
        .collect();
    let constraints = ConstraintSet::distance_only(
        distance
            .iter()
            .zip(&rest_lengths)
            .map(|(&(a, b), &rest)| DistanceConstraint {
                endpoints: (a, b),
                rest_length: rest,
                compliance: alpha,
            })
            .collect(),
    );
    let mut inv_mass = vec![1.0 / mass; n];
    for c in 0..cols {
        inv_mass[idx(0, c)] = 0.0;
    }
    let rigid: Vec<usize> = (0..cols).collect();
    let flex: Vec<usize> = (cols..n).collect();
    let targets: Vec<Vector3<f64>> = rigid.iter().map(|&i| positions[i]).collect();
    Grid {
        state: SimState::new(positions, vec![Vector3::zeros(); n], inv_mass).unwrap(),
        constraints,
        partition: Partition::new(rigid, flex, n).unwrap(),
        targets,
        rest_lengths,
    }
}

fn config(substeps: u32, iterations: u32) -> SimConfig {
    SimConfig {
        frame_dt: 1.0 / 30.0,
        substeps,
        solver_iterations: iterations,
        gravity: [0.0, -9.81, 0.0],
        mode: SolverMode::GaussSeidel,
    }
}

fn mean_stretch(grid: &Grid, state: &SimState) -> f64 {
    grid.constraints
        .distance
        .iter()
        .zip(&grid.rest_lengths)
        .map(|(c, rest)| {
            ((state.positions[c.endpoints.0] - state.positions[c.endpoints.1]).norm() - rest)
                / rest
        })
        .sum::<f64>()
        / grid.rest_lengths.len() as f64
}

fn run_frames(grid: &Grid, cfg: &SimConfig, frames: usize) -> Vec<SimState> {
    let mut states = vec![grid.state.clone()];
    for _ in 0..frames {
        let (next, _) = step(
            states.last().unwrap(),
            &grid.constraints,
            &grid.partition,
            &grid.targets,
            cfg,
        )
        .unwrap();
        states.push(next);
    }
    states
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

#[test]
fn c01_xpbd_closed_form_check() {
    let positions = vec![v(0.0, 0.0, 0.0), v(2.0, 0.0, 0.0)];
    let masses = [1.0, 1.0];

    let rigid = DistanceConstraint {
        endpoints: (0, 1),
        rest_length: 1.0,
        compliance: 0.0,
    };
    let (da, db, _) = project_distance(&positions, &rigid, &masses, 0.0, 1.0).unwrap();
    let sep = ((positions[1] + db) - (positions[0] + da)).norm();
    assert!((sep - 1.0).abs() <= 1e-9, "rigid separation {sep}");

    let compliant = DistanceConstraint {
        endpoints: (0, 1),
        rest_length: 1.0,
        compliance: 2.0, // α̃ = 2 at dt = 1
    };
    let (da, db, lambda) = project_distance(&positions, &compliant, &masses, 0.0, 1.0).unwrap();
    let sep = ((positions[1] + db) - (positions[0] + da)).norm();
    assert!((sep - 1.5).abs() <= 1e-9, "compliant separation {sep}");
    assert!((lambda + 0.25).abs() <= 1e-9, "multiplier {lambda}");
    println!("[c01] XPBD closed-form check: PASS (1.0 and 1.5 within 1e-9)");
}

#[test]
fn c02_stiffness_iteration_decoupling() {
    let grid = hanging_grid(10, 10, 0.1, 1e-3, 0.01);
    let measure = |iterations: u32| {
        let cfg = config(10, iterations);
        let states = run_frames(&grid, &cfg, 420);
        // Equilibrium stretch: time-average over the trailing window.
        let tail = &states[states.len() - 120..];
        tail.iter().map(|s| mean_stretch(&grid, s)).sum::<f64>() / tail.len() as f64
    };
    let s20 = measure(20);
    let s40 = measure(40);
    let change = (s40 - s20).abs() / s20.abs();
    assert!(
        change < 0.05,
        "mean stretch moved {:.2}% between 20 and 40 iterations ({s20:.6e} vs {s40:.6e})",
        change * 100.0
    );
    println!(
        "[c02] stiffness-iteration decoupling: PASS (stretch change {:.2}% < 5%)",
        change * 100.0
    );
}

#[test]
fn c03_substep_ablation_direction() {
    let grid = hanging_grid(10, 10, 0.1, 1e-5, 0.01);
    let sag = |substeps: u32| {
        let cfg = config(substeps, 20);
        let states = run_frames(&grid, &cfg, 150);
        // Max vertical drop below the rest pose, averaged over the tail to
        // smooth oscillation.
        let tail = &states[states.len() - 40..];
        tail.iter()
            .map(|s| {
                s.positions
                    .iter()
                    .zip(&grid.state.positions)
                    .map(|(p, p0)| p0.y - p.y)
                    .fold(0.0, f64::max)
            })
            .sum::<f64>()
            / tail.len() as f64
    };
    let s1 = sag(1);
    let s10 = sag(10);
    let s100 = sag(100);
    assert!(
        (s10 - s100).abs() < (s1 - s100).abs(),
        "sag: substeps=1 {s1:.5}, =10 {s10:.5}, =100 {s100:.5}"
    );
    println!(
        "[c03] substep ablation: PASS (|{s10:.5} - {s100:.5}| < |{s1:.5} - {s100:.5}|)"
    );
}

#[test]
fn c04_airmesh_restoration_and_noop() {
    let base = vec![
        v(0.0, 0.0, 0.0),
        v(1.0, 0.0, 0.0),
        v(0.0, 1.0, 0.0),
        v(0.0, 0.0, 1.0),
    ];
    let rest = 1.0 / 6.0;
    let threshold = 0.1;
    let constraint = AirMeshConstraint {
        tet: [0, 1, 2, 3],
        rest_signed_volume: rest,
    };

    // Inverted: apex reflected through the base plane.
    let mut inverted = base.clone();
    inverted[3] = v(0.0, 0.0, -1.0);
    let (deltas, outcome) = project_airmesh(&inverted, &constraint, &[1.0; 4], threshold);
    assert_eq!(outcome, AirMeshOutcome::Projected);
    let moved: Vec<Vector3<f64>> = inverted.iter().zip(&deltas).map(|(p, d)| p + d).collect();
    let volume = (moved[1] - moved[0])
        .cross(&(moved[2] - moved[0]))
        .dot(&(moved[3] - moved[0]))
        / 6.0;
    assert!(
        volume >= threshold * rest - 1e-9,
        "restored volume {volume} vs target {}",
        threshold * rest
    );

    // Non-inverted: bit-exact no-op.
    let (deltas, outcome) = project_airmesh(&base, &constraint, &[1.0; 4], threshold);
    assert_eq!(outcome, AirMeshOutcome::Inactive);
    assert!(deltas.iter().all(|d| *d == Vector3::zeros()));
    println!("[c04] airmesh restoration + unilateral no-op: PASS (volume {volume:.6})");
}

#[test]
fn c05_parameter_recovery_two_material_cloth() {
    // 10 × 20 grid (200 points): pinned top row, stiff upper half
    // (α = 1e-6), soft lower half (α = 1e-2).
    let (cols, rows, spacing) = (10usize, 20usize, 0.05);
    let grid = hanging_grid(cols, rows, spacing, 0.0, 0.01);
    let n = cols * rows;
    let mid_y = -(rows as f64 - 1.0) * spacing / 2.0;
    let comp_groups: Vec<usize> = grid
        .constraints
        .distance
        .iter()
        .map(|c| {
            let mid = (grid.state.positions[c.endpoints.0] + grid.state.positions[c.endpoints.1])
                * 0.5;
            usize::from(mid.y < mid_y) // 0 = stiff top half, 1 = soft bottom
        })
        .collect();
    let truth = PhysParams {
        mass: GroupedParam::uniform(0.01, n - cols).unwrap(),
        compliance: GroupedParam::grouped(&[1e-6, 1e-2], comp_groups.clone()).unwrap(),
    };
    let scene = SimScene {
        constraints: grid.constraints.clone(),
        partition: grid.partition.clone(),
        config: config(10, 20),
    };
    // 60-frame reference from the forward solver with the true parameters.
    let reference = sysid::rollout(
        &scene,
        &grid.state,
        &vec![grid.targets.clone(); 59],
        &truth,
        VelocityPolicy::FiniteDifference,
    )
    .unwrap();
    assert_eq!(reference.frames(), 60);

    // Perturbed start: stiff group ×10, soft group ÷10. Masses stay at
    // their known values: the one-step objective is invariant under
    // (M, α) → (kM, α/k), so the absolute scale must be pinned for the
    // compliances to be identifiable.
    let mut start = truth.clone();
    start.compliance = GroupedParam::grouped(&[1e-5, 1e-3], comp_groups).unwrap();
    let opt = OptimizeConfig {
        epochs: 250,
        samples_per_epoch: Some(16),
        seed: 2,
        grad_mode: GradMode::CentralDifference { h: 0.05 },
        optimize_masses: false,
        optimize_compliances: true,
        ..OptimizeConfig::default()
    };
    let result = sysid::optimize(&scene, &reference, &RigidDriver::FromReference, &start, &opt)
        .unwrap();

    let recovered = result.params.compliance.group_values();
    let errors: Vec<f64> = recovered
        .iter()
        .zip([1e-6, 1e-2])
        .map(|(got, want)| (got - want).abs() / want)
        .collect();
    assert!(
        errors.iter().all(|e| *e < 0.2),
        "recovered {recovered:?}, relative errors {errors:?}"
    );
    let initial_loss = result.loss_history[0];
    assert!(
        result.best_loss < 0.01 * initial_loss,
        "loss fell from {initial_loss:.3e} only to {:.3e}",
        result.best_loss
    );
    println!(
        "[c05] parameter recovery: PASS (compliances {recovered:?}, rel errors {:.1}%/{:.1}%, loss {:.2e} -> {:.2e})",
        errors[0] * 100.0,
        errors[1] * 100.0,
        initial_loss,
        result.best_loss
    );
}

#[test]
fn c06_delaunay_and_filter_oracles() {
    let mut rng = substream_rng(100, "acceptance.delaunay");
    let sizes = [
        24, 40, 60, 80, 100, 120, 150, 180, 210, 240, 60, 90, 130, 170, 200, 260, 320, 400, 450,
        500,
    ];
    for (ci, &size) in sizes.iter().enumerate() {
        let positions: Vec<Vector3<f64>> = (0..size)
            .map(|_| {
                v(
                    uniform_unit(&mut rng),
                    uniform_unit(&mut rng) * 1.5,
                    uniform_unit(&mut rng) * 0.75,
                )
            })
            .collect();
        let cloud = PointCloud::new(positions.clone()).unwrap();
        let mesh = delaunay_tetrahedralize(&cloud).unwrap();

        // Empty-circumsphere oracle at tolerance 1e-9.
        for tet in &mesh.tets {
            let a = positions[tet[0]];
            let m = nalgebra::Matrix3::from_rows(&[
                (positions[tet[1]] - a).transpose(),
                (positions[tet[2]] - a).transpose(),
                (positions[tet[3]] - a).transpose(),
            ]);
            let rhs = Vector3::new(
                0.5 * (positions[tet[1]] - a).norm_squared(),
                0.5 * (positions[tet[2]] - a).norm_squared(),
                0.5 * (positions[tet[3]] - a).norm_squared(),
            );
            let x = m.lu().solve(&rhs).expect("non-degenerate tet");
            let center = a + x;
            let r2 = x.norm_squared();
            for (i, p) in positions.iter().enumerate() {
                if tet.contains(&i) {
                    continue;
                }
                let d2 = (p - center).norm_squared();
                assert!(
                    (r2 - d2) / r2 <= 1e-9,
                    "cloud {ci}: point {i} inside circumsphere of {tet:?}"
                );
            }
        }

        // Filtering equals the exhaustive membership rule (k = 30 where the
        // cloud is large enough for that neighborhood size).
        let k = 30.min(size / 2);
        let index = build_knn(&cloud, k).unwrap();
        let filtered = filter_tets(&mesh, &index);
        let expected: Vec<[usize; 4]> = mesh
            .tets
            .iter()
            .filter(|tet| {
                let r = *tet.iter().min().unwrap();
                let mut dist: Vec<(f64, usize)> = positions
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != r)
                    .map(|(j, q)| ((q - positions[r]).norm_squared(), j))
                    .collect();
                dist.sort_by(|x, y| x.partial_cmp(y).unwrap());
                let nn: Vec<usize> = dist.iter().take(k).map(|&(_, j)| j).collect();
                tet.iter().filter(|&&w| w != r).all(|w| nn.contains(w))
            })
            .copied()
            .collect();
        assert_eq!(filtered.tets, expected, "cloud {ci}");
    }
    println!("[c06] tetrahedralization + filter oracles: PASS (20 clouds up to 500 points)");
}

#[test]
fn c07_embedding_exactness_and_rigid_equivariance() {
    let mut rng = substream_rng(200, "acceptance.embed");
    let sampled: Vec<Vector3<f64>> = (0..40)
        .map(|_| {
            v(
                uniform_unit(&mut rng),
                uniform_unit(&mut rng),
                uniform_unit(&mut rng),
            )
        })
        .collect();
    let mesh = delaunay_tetrahedralize(&PointCloud::new(sampled.clone()).unwrap()).unwrap();

    // Dense points: interior barycentric mixtures plus offsets from face
    // interiors (where the anchor reproduces the point exactly).
    let mut dense = Vec::new();
    for tet in mesh.tets.iter().take(30) {
        let b = [0.4, 0.3, 0.2, 0.1];
        dense.push(
            sampled[tet[0]] * b[0] + sampled[tet[1]] * b[1] + sampled[tet[2]] * b[2]
                + sampled[tet[3]] * b[3],
        );
    }
    let hull_offsets = {
        // Probe points straight off tet faces; keep the exterior ones.
        let mut out = Vec::new();
        for tet in mesh.tets.iter().take(60) {
            let (a, b, c) = (sampled[tet[0]], sampled[tet[1]], sampled[tet[2]]);
            let center = (a + b + c) / 3.0;
            let n = (b - a).cross(&(c - a)).normalize();
            for dir in [1.0, -1.0] {
                out.push(center + n * (0.3 * dir));
            }
        }
        out
    };
    dense.extend(hull_offsets);
    let embedding = embed(&dense, &sampled, &mesh);

    // Identity reproduction; keep only the points the anchor represents
    // exactly (interior and face-interior offsets).
    let identity = apply_embedding(&embedding, &sampled, &mesh).unwrap();
    let exact: Vec<usize> = dense
        .iter()
        .zip(&identity)
        .enumerate()
        .filter(|(_, (p, q))| (*p - *q).norm() < 1e-9)
        .map(|(i, _)| i)
        .collect();
    assert!(
        exact.len() >= 30,
        "want a healthy population of exactly-represented points, got {}",
        exact.len()
    );

    // Interior affine exactness.
    let a_map = nalgebra::Matrix3::new(1.2, 0.1, -0.2, 0.05, 0.9, 0.15, -0.1, 0.2, 1.1);
    let t_map = v(0.4, -0.7, 0.9);
    let deformed: Vec<Vector3<f64>> = sampled.iter().map(|p| a_map * p + t_map).collect();
    let out = apply_embedding(&embedding, &deformed, &mesh).unwrap();
    for (i, entry) in embedding.entries.iter().enumerate() {
        if matches!(entry, pbdsim_core::transfer::PointEmbedding::Interior { .. }) {
            let want = a_map * dense[i] + t_map;
            assert!(
                (out[i] - want).norm() <= 1e-9,
                "interior point {i} affine error {}",
                (out[i] - want).norm()
            );
        }
    }

    // Full-pipeline rigid equivariance: positions within 1e-9 and rotation
    // updates within 1e-6 of the rigid motion.
    let rot = Rotation3::from_euler_angles(0.7, -0.4, 1.2);
    let trans = v(-0.3, 0.8, 0.1);
    let moved_sampled: Vec<Vector3<f64>> = sampled.iter().map(|p| rot * p + trans).collect();
    let moved = apply_embedding(&embedding, &moved_sampled, &mesh).unwrap();
    for &i in &exact {
        let want = rot * dense[i] + trans;
        assert!(
            (moved[i] - want).norm() <= 1e-9,
            "rigid position error {} at point {i}",
            (moved[i] - want).norm()
        );
    }

    let full_rest: Vec<Vector3<f64>> =
        sampled.iter().chain(dense.iter()).copied().collect();
    let full_moved: Vec<Vector3<f64>> = full_rest.iter().map(|p| rot * p + trans).collect();
    let frames = build_frames(&full_rest, &FrameParams::default()).unwrap();
    let initial: Vec<UnitQuaternion<f64>> = (0..full_rest.len())
        .map(|i| UnitQuaternion::from_scaled_axis(v(0.1 * (i % 5) as f64, 0.2, -0.15)))
        .collect();
    let rotated = update_rotations(&frames, &full_moved, &initial);
    let rot_q = UnitQuaternion::from_rotation_matrix(&rot);
    for (got, init) in rotated.iter().zip(&initial) {
        assert!(
            got.angle_to(&(rot_q * init)) <= 1e-6,
            "rotation error {}",
            got.angle_to(&(rot_q * init))
        );
    }
    println!(
        "[c07] embedding exactness + rigid equivariance: PASS ({} interior, {} exact anchors)",
        embedding
            .entries
            .iter()
            .filter(|e| matches!(e, pbdsim_core::transfer::PointEmbedding::Interior { .. }))
            .count(),
        exact.len()
    );
}

/// Two-joint arm with rings of vertices, as the pose-fit scene.
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
                rest: nalgebra::Isometry3::identity(),
            },
            Joint {
                parent: Some(0),
                rest: nalgebra::Isometry3::from_parts(
                    nalgebra::Translation3::new(0.5, 0.0, 0.0),
                    UnitQuaternion::identity(),
                ),
            },
        ],
        rest_vertices,
        skin_weights,
        shape: ShapeModel::default(),
        marker_vertices: vec![0, 9, 31],
    }
}

#[test]
fn c08_pose_fitting_ramp_and_fixed_point() {
    let rig = arm_rig();
    let points: Vec<Vector3<f64>> = vec![
        v(0.15, 0.05, 0.01),
        v(0.4, -0.06, 0.02),
        v(0.65, 0.03, -0.04),
        v(0.9, 0.0, 0.05),
        v(0.3, 0.0, -0.06),
        v(0.8, -0.04, 0.0),
    ];
    let weights = bind_gaussians(&rig, &points).unwrap();
    let fit_cfg = posefit::FitConfig::default();

    // fit_initial is a fixed point at the ground truth.
    let truth1 = Pose {
        rotations: vec![v(0.0, 0.0, 0.15), v(0.0, 0.0, -0.2)],
        root_translation: v(0.02, 0.0, 0.0),
    };
    let body = pbdsim_core::skinning::pose_rig_vertices(&rig, &truth1).unwrap();
    let weights_fit = posefit::FitWeights {
        preg: 0.0,
        sreg: 0.0,
        ..posefit::FitWeights::default()
    };
    let fit1 = posefit::fit_initial(&rig, &truth1, &body, &[], &[], &weights_fit, &fit_cfg)
        .unwrap();
    assert!(fit1.loss < 1e-8, "fixed-point loss {}", fit1.loss);
    for (a, b) in fit1.pose.rotations.iter().zip(&truth1.rotations) {
        assert!((a - b).norm() < 1e-6);
    }

    // Scripted single-joint ramp recovered within 0.02 rad per joint/frame.
    let frame1 = posefit::InitialFit {
        pose: Pose::identity(2),
        shape: vec![],
        breakdown: (0.0, 0.0, 0.0, 0.0),
        loss: 0.0,
        iterations: 0,
    };
    let mut observations = Vec::new();
    let mut truth_poses = Vec::new();
    for f in 1..=8 {
        let pose = Pose {
            rotations: vec![Vector3::zeros(), v(0.0, 0.0, 0.09 * f as f64)],
            root_translation: Vector3::zeros(),
        };
        observations.push(posefit::FrameObservation {
            tracked: lbs(&rig, &pose, &points, &weights).unwrap(),
            keypoints: None,
        });
        truth_poses.push(pose);
    }
    let seq = posefit::fit_sequence(
        &rig,
        &frame1,
        &points,
        &weights,
        &observations,
        &posefit::FitWeights::default(),
        &fit_cfg,
    )
    .unwrap();
    let mut max_err: f64 = 0.0;
    for (got, want) in seq.poses[1..].iter().zip(&truth_poses) {
        for (a, b) in got.rotations.iter().zip(&want.rotations) {
            max_err = max_err.max((a - b).norm());
        }
    }
    assert!(max_err < 0.02, "max joint error {max_err}");
    println!(
        "[c08] pose fitting: PASS (fixed point loss {:.1e}, ramp max error {:.4} rad)",
        fit1.loss, max_err
    );
}

#[test]
fn c09_metric_identities_and_orderings() {
    let mut rng = substream_rng(300, "acceptance.metrics");
    // Identities on 10 random images.
    for _ in 0..10 {
        let img = metrics::Image::new(
            24,
            24,
            1,
            (0..576).map(|_| uniform_unit(&mut rng)).collect(),
        )
        .unwrap();
        assert_eq!(metrics::hf_ssim(&img, &img, 5.0).unwrap(), 1.0);
        assert_eq!(metrics::hf_psnr(&img, &img, 5.0).unwrap(), f64::INFINITY);
    }

    // Uniform 0.1 difference: 20.00 ± 0.01 dB.
    let lo = metrics::Image::new(16, 16, 1, vec![0.45; 256]).unwrap();
    let hi = metrics::Image::new(16, 16, 1, vec![0.55; 256]).unwrap();
    let p = metrics::psnr(&lo, &hi).unwrap();
    assert!((p - 20.0).abs() <= 0.01, "psnr {p}");

    // A constant offset is pure low frequency: the HF residuals match.
    let base: Vec<f64> = (0..576).map(|_| 0.1 + 0.7 * uniform_unit(&mut rng)).collect();
    let a = metrics::Image::new(24, 24, 1, base.clone()).unwrap();
    let b = metrics::Image::new(24, 24, 1, base.iter().map(|v| v + 0.1).collect()).unwrap();
    assert_eq!(metrics::hf_psnr(&a, &b, 5.0).unwrap(), f64::INFINITY);

    // Blurred checkerboard scores strictly lower on hf_ssim than ssim.
    let size = 64;
    let tex: Vec<f64> = (0..size * size)
        .map(|i| {
            let (x, y) = (i % size, i / size);
            let shade = 0.15 + 0.5 * (x as f64 / size as f64) * (y as f64 / size as f64 + 0.3);
            let check = if (x / 2 + y / 2) % 2 == 0 { 0.15 } else { 0.0 };
            (shade + check).clamp(0.0, 1.0)
        })
        .collect();
    let gt = metrics::Image::new(size, size, 1, tex).unwrap();
    let residual = metrics::highpass(&gt, 1.2);
    let blurred: Vec<f64> = gt
        .data()
        .iter()
        .zip(&residual.data)
        .map(|(v, h)| (v - h).clamp(0.0, 1.0))
        .collect();
    let pred = metrics::Image::new(size, size, 1, blurred).unwrap();
    let plain = metrics::ssim(&gt, &pred).unwrap();
    let hf = metrics::hf_ssim(&gt, &pred, 5.0).unwrap();
    assert!(hf < plain, "hf_ssim {hf} vs ssim {plain}");
    println!(
        "[c09] metric identities: PASS (psnr {p:.3} dB, hf {hf:.4} < ssim {plain:.4})"
    );
}

#[test]
fn c10_gradient_check_forward_vs_central() {
    // 4 × 5 grid: 20 points, within the ≤ 50-point budget.
    let grid = hanging_grid(4, 5, 0.08, 0.0, 0.01);
    let scene = SimScene {
        constraints: grid.constraints.clone(),
        partition: grid.partition.clone(),
        config: config(5, 15),
    };
    let n_flex = grid.partition.flex.len();
    let truth = PhysParams {
        mass: GroupedParam::grouped(&[0.01, 0.02], (0..n_flex).map(|i| i % 2).collect())
            .unwrap(),
        compliance: GroupedParam::grouped(
            &[1e-4, 1e-3],
            (0..grid.constraints.distance.len()).map(|i| i % 2).collect(),
        )
        .unwrap(),
    };
    let reference = sysid::rollout(
        &scene,
        &grid.state,
        &vec![grid.targets.clone(); 12],
        &truth,
        VelocityPolicy::FiniteDifference,
    )
    .unwrap();
    // Probe away from the optimum.
    let mut probe = truth.clone();
    probe.mass.log_values[0] += 0.4;
    probe.compliance.log_values[0] += 0.8;
    probe.compliance.log_values[1] -= 0.5;
    let times: Vec<usize> = (0..reference.frames() - 1).collect();
    let driver = RigidDriver::FromReference;
    let fd = sysid::loss_and_gradient(
        &scene,
        &reference,
        &driver,
        &probe,
        &OptimizeConfig {
            grad_mode: GradMode::CentralDifference { h: 1e-4 },
            ..OptimizeConfig::default()
        },
        &times,
    )
    .unwrap();
    let fw = sysid::loss_and_gradient(
        &scene,
        &reference,
        &driver,
        &probe,
        &OptimizeConfig {
            grad_mode: GradMode::Forward,
            ..OptimizeConfig::default()
        },
        &times,
    )
    .unwrap();
    let mut worst: f64 = 0.0;
    for (a, b) in fd.gradient.iter().zip(&fw.gradient) {
        let rel = (a - b).abs() / b.abs().max(1e-12);
        worst = worst.max(rel);
        assert!(rel < 1e-3, "gradient mismatch: fd {a:.6e} vs forward {b:.6e}");
    }
    println!(
        "[c10] gradient check: PASS (worst relative difference {:.2e} < 1e-3)",
        worst
    );
}
