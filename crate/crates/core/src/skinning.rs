//! Generic linear-blend-skinning driver.
//!
//! A [`Rig`] is a joint tree with local rest transforms, a set of rest-pose
//! vertices with sparse skin weights, an optional per-vertex shape basis with
//! coefficients β, and a list of marker vertices. Posing applies each joint's
//! pose rotation in its local rest frame; the root additionally receives the
//! pose's translation, also expressed in the root's rest frame (for rigs
//! whose root rest rotation is the identity this coincides with a world-space
//! translation). With that convention, posing commutes with a global rigid
//! transform of the rig root.

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::geom::KdTree;

/// Sparse per-point skin weights: each entry lists (joint index, weight).
pub type SkinWeights = Vec<Vec<(usize, f64)>>;

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub parent: Option<usize>,
    /// Rest transform relative to the parent joint (world transform for the
    /// root).
    pub rest: Isometry3<f64>,
}

/// Optional linear shape model: vertex offsets are `Σ_k β_k · basis[k][v]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ShapeModel {
    /// One offset direction per (coefficient, vertex).
    pub basis: Vec<Vec<Vector3<f64>>>,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rig {
    pub joints: Vec<Joint>,
    pub rest_vertices: Vec<Vector3<f64>>,
    pub skin_weights: SkinWeights,
    pub shape: ShapeModel,
    /// Vertices with keypoint annotations (face-marker analog).
    pub marker_vertices: Vec<usize>,
}

impl Rig {
    pub fn validate(&self) -> Result<()> {
        if self.joints.is_empty() {
            return Err(Error::InvalidRig("rig has no joints".into()));
        }
        let roots = self.joints.iter().filter(|j| j.parent.is_none()).count();
        if roots != 1 {
            return Err(Error::InvalidRig(format!(
                "rig must have exactly one root joint, found {roots}"
            )));
        }
        for (i, j) in self.joints.iter().enumerate() {
            // Walk to the root; a cycle would exceed the joint count.
            let mut cur = j.parent;
            let mut hops = 0;
            while let Some(p) = cur {
                if p >= self.joints.len() {
                    return Err(Error::InvalidRig(format!(
                        "joint {i} has out-of-range parent {p}"
                    )));
                }
                hops += 1;
                if hops > self.joints.len() {
                    return Err(Error::InvalidRig(format!("joint {i} sits on a cycle")));
                }
                cur = self.joints[p].parent;
            }
        }
        if self.skin_weights.len() != self.rest_vertices.len() {
            return Err(Error::InvalidRig(format!(
                "{} vertices but {} weight lists",
                self.rest_vertices.len(),
                self.skin_weights.len()
            )));
        }
        validate_weights(&self.skin_weights, self.joints.len())?;
        for basis in &self.shape.basis {
            if basis.len() != self.rest_vertices.len() {
                return Err(Error::InvalidRig(
                    "shape basis rows must match the vertex count".into(),
                ));
            }
        }
        if self.shape.beta.len() != self.shape.basis.len() {
            return Err(Error::InvalidRig(format!(
                "{} shape coefficients for {} basis directions",
                self.shape.beta.len(),
                self.shape.basis.len()
            )));
        }
        if let Some(&m) = self.marker_vertices.iter().find(|&&m| m >= self.rest_vertices.len()) {
            return Err(Error::InvalidRig(format!("marker vertex {m} out of range")));
        }
        Ok(())
    }

    /// Rest vertices with the shape offsets applied.
    pub fn shaped_vertices(&self) -> Vec<Vector3<f64>> {
        let mut out = self.rest_vertices.clone();
        for (basis, &beta) in self.shape.basis.iter().zip(&self.shape.beta) {
            for (v, off) in out.iter_mut().zip(basis) {
                *v += off * beta;
            }
        }
        out
    }

    /// Copy of the rig with the given shape coefficients.
    pub fn with_beta(&self, beta: &[f64]) -> Rig {
        let mut rig = self.clone();
        rig.shape.beta = beta.to_vec();
        rig
    }
}

pub fn validate_weights(weights: &SkinWeights, joint_count: usize) -> Result<()> {
    for (i, list) in weights.iter().enumerate() {
        let mut sum = 0.0;
        for &(j, w) in list {
            if j >= joint_count {
                return Err(Error::InvalidRig(format!(
                    "weight on point {i} references missing joint {j}"
                )));
            }
            if !(w >= 0.0) {
                return Err(Error::InvalidRig(format!(
                    "negative weight {w} on point {i}"
                )));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidRig(format!(
                "weights on point {i} sum to {sum}, expected 1"
            )));
        }
    }
    Ok(())
}

/// Per-joint rotations (axis-angle, radians) and a root translation (m).
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub rotations: Vec<Vector3<f64>>,
    pub root_translation: Vector3<f64>,
}

impl Pose {
    pub fn identity(joint_count: usize) -> Self {
        Pose {
            rotations: vec![Vector3::zeros(); joint_count],
            root_translation: Vector3::zeros(),
        }
    }

    pub fn validate(&self, joint_count: usize) -> Result<()> {
        if self.rotations.len() != joint_count {
            return Err(Error::InvalidRig(format!(
                "pose has {} rotations for {} joints",
                self.rotations.len(),
                joint_count
            )));
        }
        let finite = self
            .rotations
            .iter()
            .chain(std::iter::once(&self.root_translation))
            .all(|v| v.iter().all(|c| c.is_finite()));
        if !finite {
            return Err(Error::InvalidInput("pose contains non-finite values".into()));
        }
        Ok(())
    }

    /// Wraps every axis-angle magnitude into [0, π], flipping the axis when
    /// needed, so magnitudes stay below 2π.
    pub fn canonicalized(&self) -> Pose {
        let rotations = self
            .rotations
            .iter()
            .map(|r| {
                let angle = r.norm();
                if angle == 0.0 {
                    return *r;
                }
                let tau = std::f64::consts::TAU;
                let mut wrapped = angle % tau;
                if wrapped > std::f64::consts::PI {
                    wrapped -= tau; // equivalent negative rotation
                }
                r * (wrapped / angle)
            })
            .collect();
        Pose {
            rotations,
            root_translation: self.root_translation,
        }
    }

    /// Flat view [rot0.xyz, rot1.xyz, ..., root_translation.xyz] used by the
    /// numeric optimizers.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rotations.len() * 3 + 3);
        for r in &self.rotations {
            out.extend_from_slice(&[r.x, r.y, r.z]);
        }
        out.extend_from_slice(&[
            self.root_translation.x,
            self.root_translation.y,
            self.root_translation.z,
        ]);
        out
    }

    pub fn from_flat(flat: &[f64], joint_count: usize) -> Pose {
        assert_eq!(flat.len(), joint_count * 3 + 3);
        let rotations = (0..joint_count)
            .map(|j| Vector3::new(flat[3 * j], flat[3 * j + 1], flat[3 * j + 2]))
            .collect();
        let t = &flat[joint_count * 3..];
        Pose {
            rotations,
            root_translation: Vector3::new(t[0], t[1], t[2]),
        }
    }
}

fn axis_angle_to_quat(r: &Vector3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_scaled_axis(*r)
}

/// World transforms of all joints at the given pose.
fn posed_world_transforms(rig: &Rig, pose: &Pose) -> Result<Vec<Isometry3<f64>>> {
    pose.validate(rig.joints.len())?;
    let mut world: Vec<Option<Isometry3<f64>>> = vec![None; rig.joints.len()];
    // Joints may appear in any order; resolve parents recursively.
    fn resolve(
        rig: &Rig,
        pose: &Pose,
        world: &mut Vec<Option<Isometry3<f64>>>,
        j: usize,
    ) -> Isometry3<f64> {
        if let Some(w) = world[j] {
            return w;
        }
        let local_pose = match rig.joints[j].parent {
            None => Isometry3::from_parts(
                Translation3::from(pose.root_translation),
                axis_angle_to_quat(&pose.rotations[j]),
            ),
            Some(_) => Isometry3::from_parts(
                Translation3::identity(),
                axis_angle_to_quat(&pose.rotations[j]),
            ),
        };
        let w = match rig.joints[j].parent {
            None => rig.joints[j].rest * local_pose,
            Some(p) => resolve(rig, pose, world, p) * rig.joints[j].rest * local_pose,
        };
        world[j] = Some(w);
        w
    }
    for j in 0..rig.joints.len() {
        resolve(rig, pose, &mut world, j);
    }
    Ok(world.into_iter().map(|w| w.unwrap()).collect())
}

fn rest_world_transforms(rig: &Rig) -> Vec<Isometry3<f64>> {
    let mut world: Vec<Option<Isometry3<f64>>> = vec![None; rig.joints.len()];
    fn resolve(rig: &Rig, world: &mut Vec<Option<Isometry3<f64>>>, j: usize) -> Isometry3<f64> {
        if let Some(w) = world[j] {
            return w;
        }
        let w = match rig.joints[j].parent {
            None => rig.joints[j].rest,
            Some(p) => resolve(rig, world, p) * rig.joints[j].rest,
        };
        world[j] = Some(w);
        w
    }
    for j in 0..rig.joints.len() {
        resolve(rig, &mut world, j);
    }
    world.into_iter().map(|w| w.unwrap()).collect()
}

/// Per-joint skinning transforms (posed world × inverse rest world).
pub fn skinning_transforms(rig: &Rig, pose: &Pose) -> Result<Vec<Isometry3<f64>>> {
    let posed = posed_world_transforms(rig, pose)?;
    let rest = rest_world_transforms(rig);
    Ok(posed
        .into_iter()
        .zip(rest)
        .map(|(p, r)| p * r.inverse())
        .collect())
}

/// Linear blend skinning of rest-space points: each point maps to the
/// weight-blended image under the joint skinning transforms.
pub fn lbs(
    rig: &Rig,
    pose: &Pose,
    points: &[Vector3<f64>],
    weights: &SkinWeights,
) -> Result<Vec<Vector3<f64>>> {
    if weights.len() != points.len() {
        return Err(Error::InvalidRig(format!(
            "{} weight lists for {} points",
            weights.len(),
            points.len()
        )));
    }
    validate_weights(weights, rig.joints.len())?;
    let skins = skinning_transforms(rig, pose)?;
    Ok(points
        .iter()
        .zip(weights)
        .map(|(p, list)| {
            let mut out = Vector3::zeros();
            for &(j, w) in list {
                out += (skins[j] * nalgebra::Point3::from(*p)).coords * w;
            }
            out
        })
        .collect())
}

/// The rig's own vertices at the given pose: shape offsets (β) are applied in
/// rest pose, then the vertices are skinned with the rig's weights.
pub fn pose_rig_vertices(rig: &Rig, pose: &Pose) -> Result<Vec<Vector3<f64>>> {
    lbs(rig, pose, &rig.shaped_vertices(), &rig.skin_weights)
}

/// Each cloud point inherits the skin weights of its nearest shaped rest
/// vertex (ties broken by the lowest vertex index).
pub fn bind_gaussians(rig: &Rig, points: &[Vector3<f64>]) -> Result<SkinWeights> {
    if rig.rest_vertices.is_empty() {
        return Err(Error::InvalidRig("cannot bind against an empty rig".into()));
    }
    let verts = rig.shaped_vertices();
    let tree = KdTree::build(&verts);
    Ok(points
        .iter()
        .map(|p| {
            let nearest = tree.knn(p, 1, usize::MAX)[0];
            rig.skin_weights[nearest].clone()
        })
        .collect())
}

/// (1−s)·start + s·end, per point.
pub fn interpolate_driver(
    frame_start: &[Vector3<f64>],
    frame_end: &[Vector3<f64>],
    s: f64,
) -> Vec<Vector3<f64>> {
    assert_eq!(frame_start.len(), frame_end.len());
    frame_start
        .iter()
        .zip(frame_end)
        .map(|(a, b)| a * (1.0 - s) + b * s)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Matrix4;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    fn iso(t: Vector3<f64>, axis_angle: Vector3<f64>) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::from(t),
            UnitQuaternion::from_scaled_axis(axis_angle),
        )
    }

    /// Two-joint chain along +x with four vertices, equal-blend weights in
    /// the middle.
    fn two_joint_rig() -> Rig {
        Rig {
            joints: vec![
                Joint {
                    parent: None,
                    rest: iso(v(0.0, 0.0, 0.0), Vector3::zeros()),
                },
                Joint {
                    parent: Some(0),
                    rest: iso(v(1.0, 0.0, 0.0), Vector3::zeros()),
                },
            ],
            rest_vertices: vec![v(0.0, 0.0, 0.0), v(0.5, 0.0, 0.0), v(1.0, 0.0, 0.0), v(1.5, 0.0, 0.0)],
            skin_weights: vec![
                vec![(0, 1.0)],
                vec![(0, 1.0)],
                vec![(0, 0.5), (1, 0.5)],
                vec![(1, 1.0)],
            ],
            shape: ShapeModel::default(),
            marker_vertices: vec![0],
        }
    }

    #[test]
    fn identity_pose_is_identity_map() {
        let rig = two_joint_rig();
        rig.validate().unwrap();
        let pose = Pose::identity(2);
        let out = pose_rig_vertices(&rig, &pose).unwrap();
        for (a, b) in out.iter().zip(&rig.rest_vertices) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn single_joint_rigid_transform() {
        // p ↦ R(p − j_rest) + j_rest + t for a single joint at j_rest.
        let j_rest = v(0.3, -0.2, 0.5);
        let rig = Rig {
            joints: vec![Joint {
                parent: None,
                rest: iso(j_rest, Vector3::zeros()),
            }],
            rest_vertices: vec![v(1.0, 2.0, 3.0)],
            skin_weights: vec![vec![(0, 1.0)]],
            shape: ShapeModel::default(),
            marker_vertices: vec![],
        };
        let aa = v(0.0, 0.0, std::f64::consts::FRAC_PI_2);
        let t = v(0.1, 0.2, 0.3);
        let pose = Pose {
            rotations: vec![aa],
            root_translation: t,
        };
        let p = v(2.0, 0.0, 0.0);
        let out = lbs(&rig, &pose, &[p], &vec![vec![(0, 1.0)]]).unwrap();
        let r = UnitQuaternion::from_scaled_axis(aa);
        let expect = r * (p - j_rest) + j_rest + t;
        assert_relative_eq!(out[0], expect, epsilon = 1e-12);
    }

    #[test]
    fn half_half_blend_matches_matrix_oracle() {
        let rig = two_joint_rig();
        let pose = Pose {
            rotations: vec![Vector3::zeros(), v(0.0, 0.0, std::f64::consts::FRAC_PI_2)],
            root_translation: Vector3::zeros(),
        };
        let p = v(1.2, 0.1, 0.0);
        let out = lbs(&rig, &pose, &[p], &vec![vec![(0, 0.5), (1, 0.5)]]).unwrap();

        // Explicit homogeneous 4×4 blend.
        let skins = skinning_transforms(&rig, &pose).unwrap();
        let m: Matrix4<f64> =
            skins[0].to_homogeneous() * 0.5 + skins[1].to_homogeneous() * 0.5;
        let hom = m * nalgebra::Vector4::new(p.x, p.y, p.z, 1.0);
        let expect = v(hom.x, hom.y, hom.z);
        assert_relative_eq!(out[0], expect, epsilon = 1e-12);
    }

    #[test]
    fn posing_commutes_with_global_rigid_transform() {
        let rig = two_joint_rig();
        let pose = Pose {
            rotations: vec![v(0.2, -0.1, 0.4), v(0.0, 0.7, 0.0)],
            root_translation: v(0.3, 0.1, -0.2),
        };
        let g = iso(v(1.0, -2.0, 0.5), v(0.4, 0.2, -0.9));

        let mut moved = rig.clone();
        moved.joints[0].rest = g * rig.joints[0].rest;
        moved.rest_vertices = rig
            .rest_vertices
            .iter()
            .map(|p| (g * nalgebra::Point3::from(*p)).coords)
            .collect();

        let posed_then_moved: Vec<Vector3<f64>> = pose_rig_vertices(&rig, &pose)
            .unwrap()
            .iter()
            .map(|p| (g * nalgebra::Point3::from(*p)).coords)
            .collect();
        let moved_then_posed = pose_rig_vertices(&moved, &pose).unwrap();
        for (a, b) in posed_then_moved.iter().zip(&moved_then_posed) {
            assert!((a - b).norm() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn shape_offsets_apply_in_rest_pose() {
        let mut rig = two_joint_rig();
        rig.shape = ShapeModel {
            basis: vec![vec![v(0.0, 1.0, 0.0); 4]],
            beta: vec![0.25],
        };
        rig.validate().unwrap();
        let out = pose_rig_vertices(&rig, &Pose::identity(2)).unwrap();
        for (a, b) in out.iter().zip(&rig.rest_vertices) {
            assert_relative_eq!(a - v(0.0, 0.25, 0.0), *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn bind_gaussians_tie_breaks_and_matches_scan() {
        let rig = two_joint_rig();
        // Coincident with vertex 2 → inherits its weights.
        let w = bind_gaussians(&rig, &[v(1.0, 0.0, 0.0)]).unwrap();
        assert_eq!(w[0], rig.skin_weights[2]);
        // Equidistant between vertices 0 and 1 → lowest index wins.
        let w = bind_gaussians(&rig, &[v(0.25, 0.7, 0.0)]).unwrap();
        assert_eq!(w[0], rig.skin_weights[0]);

        let mut rng = crate::seeding::substream_rng(3, "skinning.bind");
        let pts: Vec<Vector3<f64>> = (0..50)
            .map(|_| {
                v(
                    crate::seeding::uniform_unit(&mut rng) * 2.0,
                    crate::seeding::uniform_unit(&mut rng) - 0.5,
                    crate::seeding::uniform_unit(&mut rng) - 0.5,
                )
            })
            .collect();
        let bound = bind_gaussians(&rig, &pts).unwrap();
        for (p, w) in pts.iter().zip(&bound) {
            let nearest = rig
                .rest_vertices
                .iter()
                .enumerate()
                .min_by(|(i, a), (j, b)| {
                    ((*a - p).norm_squared(), *i)
                        .partial_cmp(&((*b - p).norm_squared(), *j))
                        .unwrap()
                })
                .unwrap()
                .0;
            assert_eq!(w, &rig.skin_weights[nearest]);
        }
        validate_weights(&bound, rig.joints.len()).unwrap();
    }

    #[test]
    fn bind_rejects_empty_rig() {
        let rig = Rig {
            joints: vec![Joint {
                parent: None,
                rest: Isometry3::identity(),
            }],
            rest_vertices: vec![],
            skin_weights: vec![],
            shape: ShapeModel::default(),
            marker_vertices: vec![],
        };
        assert!(matches!(
            bind_gaussians(&rig, &[v(0.0, 0.0, 0.0)]),
            Err(Error::InvalidRig(_))
        ));
    }

    #[test]
    fn driver_interpolation_endpoints() {
        let a = vec![v(0.0, 0.0, 0.0)];
        let b = vec![v(2.0, 4.0, 6.0)];
        assert_eq!(interpolate_driver(&a, &b, 0.0), a);
        assert_eq!(interpolate_driver(&a, &b, 1.0), b);
        assert_eq!(interpolate_driver(&a, &b, 0.5), vec![v(1.0, 2.0, 3.0)]);
    }

    #[test]
    fn pose_canonicalization_wraps_below_two_pi() {
        let pose = Pose {
            rotations: vec![v(0.0, 0.0, 3.0 * std::f64::consts::PI)],
            root_translation: Vector3::zeros(),
        };
        let canon = pose.canonicalized();
        let angle = canon.rotations[0].norm();
        assert!(angle <= std::f64::consts::PI + 1e-12);
        // Same rotation.
        let q1 = UnitQuaternion::from_scaled_axis(pose.rotations[0]);
        let q2 = UnitQuaternion::from_scaled_axis(canon.rotations[0]);
        assert!(q1.angle_to(&q2) < 1e-12);
    }

    #[test]
    fn invalid_rigs_are_rejected() {
        let mut rig = two_joint_rig();
        rig.skin_weights[1] = vec![(0, 0.7)]; // sums to 0.7
        assert!(rig.validate().is_err());

        let mut rig = two_joint_rig();
        rig.skin_weights[1] = vec![(5, 1.0)]; // missing joint
        assert!(matches!(
            lbs(
                &rig,
                &Pose::identity(2),
                &rig.rest_vertices.clone(),
                &rig.skin_weights.clone()
            ),
            Err(Error::InvalidRig(_))
        ));

        let mut rig = two_joint_rig();
        rig.joints[0].parent = Some(1); // cycle
        assert!(rig.validate().is_err());
    }
}
