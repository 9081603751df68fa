//! Propagates the simulated subset's deformation to the full Gaussian cloud:
//! tetrahedral embedding with a closest-face fallback for points outside the
//! mesh, and local-frame rotation updates that keep each Gaussian's
//! anisotropy aligned with its neighborhood.

mod bvh;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{KdTree, TetMesh};
use crate::math::polar_rotation;

pub use bvh::{Aabb, Bvh};

/// Barycentric coordinates down to this value still count as inside, so
/// points exactly on faces embed as interior.
pub const INTERIOR_TOLERANCE: f64 = 1e-9;

/// Per-point label deciding the rigid/flex split downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointLabel {
    Body,
    Cloth,
}

/// Dense anisotropic point set that appearance lives on.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCloud {
    pub positions: Vec<Vector3<f64>>,
    pub rotations: Vec<UnitQuaternion<f64>>,
    pub scales: Vec<Vector3<f64>>,
    pub labels: Vec<PointLabel>,
}

impl GaussianCloud {
    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if self.rotations.len() != n || self.scales.len() != n || self.labels.len() != n {
            return Err(Error::InvalidInput(
                "gaussian cloud arrays disagree in length".into(),
            ));
        }
        if !self
            .positions
            .iter()
            .chain(self.scales.iter())
            .all(|v| v.iter().all(|c| c.is_finite()))
        {
            return Err(Error::InvalidInput(
                "gaussian cloud contains non-finite values".into(),
            ));
        }
        if self.scales.iter().any(|s| s.iter().any(|&c| c <= 0.0)) {
            return Err(Error::InvalidInput(
                "gaussian scales must be strictly positive".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// How one point rides on the simulated mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PointEmbedding {
    /// Inside a tet: a barycentric combination of its four vertices.
    Interior { tet: usize, bary: [f64; 4] },
    /// Outside every tet: barycentrics of the closest point on the closest
    /// face plus a normal offset. `side` fixes the normal orientation chosen
    /// at embed time so the point stays on its original side.
    Exterior {
        tet: usize,
        face: [usize; 3],
        bary: [f64; 3],
        offset: f64,
        side: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub entries: Vec<PointEmbedding>,
}

/// Faces of a tet, each as global vertex indices; face `k` omits corner `k`.
fn tet_faces(tet: &[usize; 4]) -> [[usize; 3]; 4] {
    [
        [tet[1], tet[2], tet[3]],
        [tet[0], tet[2], tet[3]],
        [tet[0], tet[1], tet[3]],
        [tet[0], tet[1], tet[2]],
    ]
}

/// Barycentric coordinates of p in the tet, or None when the tet is flat.
fn tet_barycentric(
    p: &Vector3<f64>,
    v0: &Vector3<f64>,
    v1: &Vector3<f64>,
    v2: &Vector3<f64>,
    v3: &Vector3<f64>,
) -> Option<[f64; 4]> {
    let m = Matrix3::from_columns(&[v1 - v0, v2 - v0, v3 - v0]);
    let b = m.lu().solve(&(p - v0))?;
    Some([1.0 - b.x - b.y - b.z, b.x, b.y, b.z])
}

/// Closest point on triangle (a, b, c) as barycentric coordinates.
/// Ericson's region decomposition; the result is always within the triangle.
fn closest_point_triangle_bary(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> [f64; 3] {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return [1.0, 0.0, 0.0];
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return [0.0, 1.0, 0.0];
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return [1.0 - v, v, 0.0];
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return [0.0, 0.0, 1.0];
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return [1.0 - w, 0.0, w];
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return [0.0, 1.0 - w, w];
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    [1.0 - v - w, v, w]
}

fn face_point(positions: &[Vector3<f64>], face: &[usize; 3], bary: &[f64; 3]) -> Vector3<f64> {
    positions[face[0]] * bary[0] + positions[face[1]] * bary[1] + positions[face[2]] * bary[2]
}

fn embed_one(
    p: &Vector3<f64>,
    sampled: &[Vector3<f64>],
    mesh: &TetMesh,
    bvh: &Bvh,
) -> PointEmbedding {
    // Interior pass: lowest containing tet index wins.
    for t in bvh.candidates_containing(p) {
        let [a, b, c, d] = mesh.tets[t];
        if let Some(bary) =
            tet_barycentric(p, &sampled[a], &sampled[b], &sampled[c], &sampled[d])
        {
            if bary.iter().all(|&x| x >= -INTERIOR_TOLERANCE) {
                return PointEmbedding::Interior { tet: t, bary };
            }
        }
    }
    // Exterior pass: closest face of the closest tet, ties toward low indices.
    let (tet, _) = bvh
        .nearest(p, |t| {
            tet_faces(&mesh.tets[t])
                .iter()
                .map(|f| {
                    let bary =
                        closest_point_triangle_bary(p, &sampled[f[0]], &sampled[f[1]], &sampled[f[2]]);
                    (p - face_point(sampled, f, &bary)).norm_squared()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .expect("mesh is nonempty");
    let faces = tet_faces(&mesh.tets[tet]);
    let mut best: Option<(f64, usize)> = None;
    for (k, f) in faces.iter().enumerate() {
        let bary = closest_point_triangle_bary(p, &sampled[f[0]], &sampled[f[1]], &sampled[f[2]]);
        let d2 = (p - face_point(sampled, f, &bary)).norm_squared();
        if best.map_or(true, |(bd, _)| d2 < bd) {
            best = Some((d2, k));
        }
    }
    let face = faces[best.unwrap().1];
    let bary = closest_point_triangle_bary(p, &sampled[face[0]], &sampled[face[1]], &sampled[face[2]]);
    let n = (sampled[face[1]] - sampled[face[0]]).cross(&(sampled[face[2]] - sampled[face[0]]));
    let n_len = n.norm();
    debug_assert!(n_len > 0.0, "mesh face must not be degenerate");
    let signed = (p - sampled[face[0]]).dot(&n) / n_len;
    PointEmbedding::Exterior {
        tet,
        face,
        bary,
        offset: signed.abs(),
        side: if signed >= 0.0 { 1.0 } else { -1.0 },
    }
}

/// Embeds each point relative to the sampled mesh: interior points get
/// barycentric coordinates, exterior points a closest-face anchor with a
/// normal offset. Accelerated by a BVH; results equal a brute-force scan.
pub fn embed(points: &[Vector3<f64>], sampled: &[Vector3<f64>], mesh: &TetMesh) -> Embedding {
    assert!(!mesh.tets.is_empty(), "embedding needs a nonempty mesh");
    let boxes: Vec<Aabb> = mesh
        .tets
        .iter()
        .map(|t| Aabb::of_points(t.iter().map(|&i| &sampled[i])))
        .collect();
    let bvh = Bvh::build(&boxes);
    Embedding {
        entries: points
            .iter()
            .map(|p| embed_one(p, sampled, mesh, &bvh))
            .collect(),
    }
}

/// Positions of the embedded points for the given deformed sample positions.
pub fn apply_embedding(
    embedding: &Embedding,
    deformed: &[Vector3<f64>],
    mesh: &TetMesh,
) -> Result<Vec<Vector3<f64>>> {
    embedding
        .entries
        .iter()
        .map(|e| match e {
            PointEmbedding::Interior { tet, bary } => {
                let t = mesh.tets[*tet];
                Ok(deformed[t[0]] * bary[0]
                    + deformed[t[1]] * bary[1]
                    + deformed[t[2]] * bary[2]
                    + deformed[t[3]] * bary[3])
            }
            PointEmbedding::Exterior {
                tet,
                face,
                bary,
                offset,
                side,
            } => {
                let anchor = face_point(deformed, face, bary);
                let n = (deformed[face[1]] - deformed[face[0]])
                    .cross(&(deformed[face[2]] - deformed[face[0]]));
                let len = n.norm();
                if len <= 1e-300 {
                    return Err(Error::DegenerateGeometry(format!(
                        "deformed face ({}, {}, {}) of tet {tet} has zero area",
                        face[0], face[1], face[2]
                    )));
                }
                Ok(anchor + n * (side * offset / len))
            }
        })
        .collect()
}

/// Local rotation frame of one point: three neighbors and the inverse of the
/// rest relative-vector matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum FrameBasis {
    Active {
        neighbors: [usize; 3],
        inv_rest: Matrix3<f64>,
    },
    /// No well-conditioned neighbor triple exists; the point keeps its
    /// initial rotation.
    Frozen,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FrameDiagnostics {
    /// Points whose nearest-three triple was ill-conditioned and a
    /// next-nearest substitution was used instead.
    pub fallback_count: usize,
    pub frozen_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotationFrames {
    pub frames: Vec<FrameBasis>,
    pub diagnostics: FrameDiagnostics,
}

#[derive(Debug, Clone, Copy)]
pub struct FrameParams {
    /// Maximum accepted condition number of the rest matrix.
    pub condition_cap: f64,
    /// Nearest-neighbor pool searched for a well-conditioned triple.
    pub candidate_pool: usize,
}

impl Default for FrameParams {
    fn default() -> Self {
        FrameParams {
            condition_cap: 1e8,
            candidate_pool: 10,
        }
    }
}

/// Builds per-point rotation frames from the frame-1 positions: the three
/// nearest neighbors and the rest matrix R = [r₁ r₂ r₃], r_j = p − p_j.
/// Ill-conditioned triples fall back to next-nearest substitutions.
pub fn build_frames(points: &[Vector3<f64>], params: &FrameParams) -> Result<RotationFrames> {
    if points.len() < 4 {
        return Err(Error::InvalidInput(format!(
            "rotation frames need at least 4 points, got {}",
            points.len()
        )));
    }
    let tree = KdTree::build(points);
    let pool = params.candidate_pool.min(points.len() - 1).max(3);
    let mut diagnostics = FrameDiagnostics::default();
    let frames = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let candidates = tree.knn(p, pool, i);
            for (attempt, combo) in combinations_by_rank(candidates.len()).enumerate() {
                let neighbors = [
                    candidates[combo[0]],
                    candidates[combo[1]],
                    candidates[combo[2]],
                ];
                let rest = Matrix3::from_columns(&[
                    p - points[neighbors[0]],
                    p - points[neighbors[1]],
                    p - points[neighbors[2]],
                ]);
                if condition_number(&rest) <= params.condition_cap {
                    if let Some(inv_rest) = rest.try_inverse() {
                        if attempt > 0 {
                            diagnostics.fallback_count += 1;
                        }
                        return FrameBasis::Active { neighbors, inv_rest };
                    }
                }
            }
            diagnostics.frozen_count += 1;
            FrameBasis::Frozen
        })
        .collect();
    Ok(RotationFrames {
        frames,
        diagnostics,
    })
}

/// Index triples (i < j < k) ordered by (k, j, i): nearest three first, then
/// next-nearest substitutions.
fn combinations_by_rank(n: usize) -> impl Iterator<Item = [usize; 3]> {
    (2..n).flat_map(move |k| (1..k).flat_map(move |j| (0..j).map(move |i| [i, j, k])))
}

fn condition_number(m: &Matrix3<f64>) -> f64 {
    let sv = m.svd(false, false).singular_values;
    let (max, min) = (sv.max(), sv.min());
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Updates Gaussian rotations: the relative-vector matrix at time t against
/// the rest matrix gives X = R(t)·R⁻¹, which is projected to the nearest
/// rotation (polar factor) and composed with the initial orientation.
/// Frozen points keep their initial rotation.
pub fn update_rotations(
    frames: &RotationFrames,
    positions: &[Vector3<f64>],
    initial_rotations: &[UnitQuaternion<f64>],
) -> Vec<UnitQuaternion<f64>> {
    assert_eq!(frames.frames.len(), positions.len());
    assert_eq!(initial_rotations.len(), positions.len());
    frames
        .frames
        .iter()
        .enumerate()
        .map(|(i, frame)| match frame {
            FrameBasis::Frozen => initial_rotations[i],
            FrameBasis::Active { neighbors, inv_rest } => {
                let current = Matrix3::from_columns(&[
                    positions[i] - positions[neighbors[0]],
                    positions[i] - positions[neighbors[1]],
                    positions[i] - positions[neighbors[2]],
                ]);
                let x = current * inv_rest;
                match polar_rotation(&x) {
                    Some(r) => {
                        let rot = Rotation3::from_matrix_unchecked(r);
                        UnitQuaternion::from_rotation_matrix(&rot) * initial_rotations[i]
                    }
                    // Degenerate current configuration: hold the rotation.
                    None => initial_rotations[i],
                }
            }
        })
        .collect()
}
