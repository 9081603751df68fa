//! Rig and pose-sequence files (JSON).

use std::path::Path;

use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{from_json_str, parse_err, read_to_string, to_json_pretty};
use crate::error::Result;
use crate::skinning::{Joint, Pose, Rig, ShapeModel};

#[derive(Debug, Serialize, Deserialize)]
struct JointJson {
    parent: Option<usize>,
    /// wxyz
    rest_rotation: [f64; 4],
    rest_translation: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RigJson {
    joints: Vec<JointJson>,
    vertices: Vec<[f64; 3]>,
    /// Per vertex: list of (joint, weight) pairs.
    weights: Vec<Vec<(usize, f64)>>,
    #[serde(default)]
    shape_basis: Vec<Vec<[f64; 3]>>,
    #[serde(default)]
    beta: Vec<f64>,
    #[serde(default)]
    markers: Vec<usize>,
}

pub fn read_rig(path: &Path) -> Result<Rig> {
    let text = read_to_string(path)?;
    let json: RigJson = from_json_str(path, &text)?;
    let joints = json
        .joints
        .into_iter()
        .map(|j| {
            let q = Quaternion::new(
                j.rest_rotation[0],
                j.rest_rotation[1],
                j.rest_rotation[2],
                j.rest_rotation[3],
            );
            let n = q.norm();
            if !((n - 1.0).abs() <= 1e-6) {
                return Err(parse_err(path, format!("rest rotation norm {n} not unit")));
            }
            Ok(Joint {
                parent: j.parent,
                rest: Isometry3::from_parts(
                    Translation3::from(Vector3::from(j.rest_translation)),
                    UnitQuaternion::from_quaternion(q),
                ),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut beta = json.beta;
    if beta.is_empty() {
        beta = vec![0.0; json.shape_basis.len()];
    }
    let rig = Rig {
        joints,
        rest_vertices: json.vertices.into_iter().map(Vector3::from).collect(),
        skin_weights: json.weights,
        shape: ShapeModel {
            basis: json
                .shape_basis
                .into_iter()
                .map(|b| b.into_iter().map(Vector3::from).collect())
                .collect(),
            beta,
        },
        marker_vertices: json.markers,
    };
    rig.validate()?;
    Ok(rig)
}

pub fn write_rig(path: &Path, rig: &Rig) -> Result<()> {
    rig.validate()?;
    let json = RigJson {
        joints: rig
            .joints
            .iter()
            .map(|j| {
                let q = j.rest.rotation.quaternion();
                JointJson {
                    parent: j.parent,
                    rest_rotation: [q.w, q.i, q.j, q.k],
                    rest_translation: [
                        j.rest.translation.x,
                        j.rest.translation.y,
                        j.rest.translation.z,
                    ],
                }
            })
            .collect(),
        vertices: rig.rest_vertices.iter().map(|v| [v.x, v.y, v.z]).collect(),
        weights: rig.skin_weights.clone(),
        shape_basis: rig
            .shape
            .basis
            .iter()
            .map(|b| b.iter().map(|v| [v.x, v.y, v.z]).collect())
            .collect(),
        beta: rig.shape.beta.clone(),
        markers: rig.marker_vertices.clone(),
    };
    to_json_pretty(path, &json)
}

#[derive(Debug, Serialize, Deserialize)]
struct PoseJson {
    rotations: Vec<[f64; 3]>,
    root_translation: [f64; 3],
}

/// Pose sequence: a JSON array, one pose per frame.
pub fn read_pose_sequence(path: &Path) -> Result<Vec<Pose>> {
    let text = read_to_string(path)?;
    let json: Vec<PoseJson> = from_json_str(path, &text)?;
    Ok(json
        .into_iter()
        .map(|p| Pose {
            rotations: p.rotations.into_iter().map(Vector3::from).collect(),
            root_translation: Vector3::from(p.root_translation),
        })
        .collect())
}

pub fn write_pose_sequence(path: &Path, poses: &[Pose]) -> Result<()> {
    let json: Vec<PoseJson> = poses
        .iter()
        .map(|p| PoseJson {
            rotations: p.rotations.iter().map(|r| [r.x, r.y, r.z]).collect(),
            root_translation: [
                p.root_translation.x,
                p.root_translation.y,
                p.root_translation.z,
            ],
        })
        .collect();
    to_json_pretty(path, &json)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rig_and_poses_round_trip() {
        let dir = std::env::temp_dir().join("pbdsim-io-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let rig = Rig {
            joints: vec![
                Joint {
                    parent: None,
                    rest: Isometry3::identity(),
                },
                Joint {
                    parent: Some(0),
                    rest: Isometry3::from_parts(
                        Translation3::new(0.5, 0.0, 0.0),
                        UnitQuaternion::from_scaled_axis(Vector3::new(0.0, 0.3, 0.0)),
                    ),
                },
            ],
            rest_vertices: vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0)],
            skin_weights: vec![vec![(0, 1.0)], vec![(0, 0.25), (1, 0.75)]],
            shape: ShapeModel {
                basis: vec![vec![Vector3::new(0.0, 1.0, 0.0); 2]],
                beta: vec![0.1],
            },
            marker_vertices: vec![1],
        };
        let rig_path = dir.join("rig.json");
        write_rig(&rig_path, &rig).unwrap();
        let back = read_rig(&rig_path).unwrap();
        assert_eq!(back.rest_vertices, rig.rest_vertices);
        assert_eq!(back.skin_weights, rig.skin_weights);
        assert_eq!(back.shape.beta, rig.shape.beta);
        assert_eq!(back.marker_vertices, rig.marker_vertices);

        let poses = vec![
            Pose::identity(2),
            Pose {
                rotations: vec![Vector3::new(0.1, 0.0, 0.0), Vector3::new(0.0, 0.0, -0.5)],
                root_translation: Vector3::new(1.0, 2.0, 3.0),
            },
        ];
        let pose_path = dir.join("poses.json");
        write_pose_sequence(&pose_path, &poses).unwrap();
        let back = read_pose_sequence(&pose_path).unwrap();
        assert_eq!(back, poses);
    }

    #[test]
    fn invalid_rig_file_is_rejected() {
        let dir = std::env::temp_dir().join("pbdsim-io-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rig_bad.json");
        // Weights do not sum to one.
        std::fs::write(
            &path,
            r#"{"joints":[{"parent":null,"rest_rotation":[1,0,0,0],"rest_translation":[0,0,0]}],
                "vertices":[[0,0,0]],"weights":[[[0,0.5]]]}"#,
        )
        .unwrap();
        assert!(read_rig(&path).is_err());
    }
}
