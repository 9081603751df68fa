//! Scene description: the JSON file tying a cloud, a tet mesh, the
//! rigid/flex partition, constraints, solver settings, and the driver
//! together. Unknown keys are rejected. Relative paths resolve against the
//! scene file's directory.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::cloud::read_cloud;
use super::{
    from_json_str, parse_err, read_pose_sequence, read_rig, read_tetmesh, read_to_string,
    read_trajectory, to_json_pretty, CloudData, Trajectory,
};
use crate::error::{Error, Result};
use crate::geom::TetMesh;
use crate::skinning::{Pose, Rig};
use crate::sysid::{GroupedParam, PhysParams, SimScene};
use crate::transfer::{Embedding, PointLabel};
use crate::xpbd::{
    AirMeshConstraint, ConstraintSet, DistanceConstraint, Partition, SimConfig,
    DEFAULT_AIRMESH_THRESHOLD,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionSpec {
    /// body-labeled points are rigid, cloth-labeled points flex.
    Labels,
    /// Explicit index lists into the sampled subset.
    Explicit { rigid: Vec<usize>, flex: Vec<usize> },
}

impl Default for PartitionSpec {
    fn default() -> Self {
        PartitionSpec::Labels
    }
}

fn default_compliance_value() -> f64 {
    crate::sysid::DEFAULT_COMPLIANCE
}

fn default_true() -> bool {
    true
}

fn default_threshold() -> f64 {
    DEFAULT_AIRMESH_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintSpec {
    /// Distance constraints on every mesh edge (rest lengths from the
    /// subset's rest positions) and, optionally, a volume constraint per tet.
    FromTetmesh {
        #[serde(default = "default_compliance_value")]
        default_compliance: f64,
        #[serde(default = "default_true")]
        airmesh: bool,
        #[serde(default = "default_threshold")]
        airmesh_threshold: f64,
    },
    Explicit {
        distance: Vec<DistanceConstraint>,
        #[serde(default)]
        airmesh: Vec<AirMeshConstraint>,
        #[serde(default = "default_threshold")]
        airmesh_threshold: f64,
    },
}

impl Default for ConstraintSpec {
    fn default() -> Self {
        ConstraintSpec::FromTetmesh {
            default_compliance: default_compliance_value(),
            airmesh: true,
            airmesh_threshold: default_threshold(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MassSpec {
    Uniform { value: f64 },
    /// One mass per flex point, in partition order.
    PerPoint { values: Vec<f64> },
}

impl Default for MassSpec {
    fn default() -> Self {
        MassSpec::Uniform {
            value: crate::sysid::DEFAULT_MASS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriverSpec {
    /// Frame-end targets for the rigid points (in partition order) read
    /// from a trajectory file.
    Trajectory { path: String },
    /// Rigid targets skinned from a rig posed per frame.
    Rig { rig: String, poses: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub cloud: String,
    pub tetmesh: String,
    #[serde(default)]
    pub partition: PartitionSpec,
    #[serde(default)]
    pub constraints: ConstraintSpec,
    pub sim: SimConfig,
    #[serde(default)]
    pub masses: MassSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub driver: Option<DriverSpec>,
    #[serde(default)]
    pub seed: u64,
}

/// Driver data resolved from its [`DriverSpec`].
#[derive(Debug, Clone)]
pub enum LoadedDriver {
    Trajectory(Trajectory),
    Rig { rig: Rig, poses: Vec<Pose> },
}

/// A scene with every referenced file loaded and cross-validated.
#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub file: SceneFile,
    pub cloud: CloudData,
    /// Indices of the simulated subset into the cloud.
    pub subset_indices: Vec<usize>,
    /// Rest positions of the subset.
    pub subset_positions: Vec<Vector3<f64>>,
    pub mesh: TetMesh,
    pub scene: SimScene,
    /// Initial parameters implied by the scene (masses and the constraint
    /// compliances).
    pub params: PhysParams,
    pub driver: Option<LoadedDriver>,
    pub seed: u64,
}

pub fn load_scene(path: &Path) -> Result<LoadedScene> {
    let text = read_to_string(path)?;
    let file: SceneFile = from_json_str(path, &text)?;
    file.sim.validate()?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let resolve = |p: &str| -> PathBuf { base.join(p) };

    let cloud = read_cloud(&resolve(&file.cloud))?;
    let mesh_file = read_tetmesh(&resolve(&file.tetmesh))?;
    let subset_indices: Vec<usize> = match &mesh_file.sampled_indices {
        Some(s) => s.clone(),
        None => (0..cloud.positions.len()).collect(),
    };
    if let Some(&bad) = subset_indices.iter().find(|&&i| i >= cloud.positions.len()) {
        return Err(Error::InvalidInput(format!(
            "sampled index {bad} out of range for cloud of {} points",
            cloud.positions.len()
        )));
    }
    let subset_positions: Vec<Vector3<f64>> = subset_indices
        .iter()
        .map(|&i| cloud.positions[i])
        .collect();
    let mesh = mesh_file.mesh();
    let n = subset_positions.len();
    if let Some(&bad) = mesh.tets.iter().flatten().find(|&&v| v >= n) {
        return Err(Error::InvalidInput(format!(
            "mesh vertex {bad} out of range for subset of {n} points"
        )));
    }

    let partition = match &file.partition {
        PartitionSpec::Labels => {
            let labels = cloud.labels.as_ref().ok_or_else(|| {
                Error::InvalidInput(
                    "partition mode 'labels' needs a labeled cloud".into(),
                )
            })?;
            let mut rigid = Vec::new();
            let mut flex = Vec::new();
            for (k, &i) in subset_indices.iter().enumerate() {
                match labels[i] {
                    PointLabel::Body => rigid.push(k),
                    PointLabel::Cloth => flex.push(k),
                }
            }
            Partition::new(rigid, flex, n)?
        }
        PartitionSpec::Explicit { rigid, flex } => {
            Partition::new(rigid.clone(), flex.clone(), n)?
        }
    };

    let (constraints, default_compliance) = match &file.constraints {
        ConstraintSpec::FromTetmesh {
            default_compliance,
            airmesh,
            airmesh_threshold,
        } => {
            let distance = mesh
                .edges
                .iter()
                .map(|&[a, b]| {
                    let rest = (subset_positions[a] - subset_positions[b]).norm();
                    if rest <= 0.0 {
                        return Err(Error::DegenerateGeometry(format!(
                            "edge ({a}, {b}) has zero rest length"
                        )));
                    }
                    Ok(DistanceConstraint {
                        endpoints: (a, b),
                        rest_length: rest,
                        compliance: *default_compliance,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let airmesh_cons = if *airmesh {
                mesh.tets
                    .iter()
                    .map(|t| {
                        let v = crate::geom::predicates::orient(
                            &subset_positions[t[0]],
                            &subset_positions[t[1]],
                            &subset_positions[t[2]],
                            &subset_positions[t[3]],
                        );
                        if v <= 0 {
                            return Err(Error::DegenerateGeometry(format!(
                                "tet {t:?} is not positively oriented at rest"
                            )));
                        }
                        let m = nalgebra::Matrix3::from_columns(&[
                            subset_positions[t[1]] - subset_positions[t[0]],
                            subset_positions[t[2]] - subset_positions[t[0]],
                            subset_positions[t[3]] - subset_positions[t[0]],
                        ]);
                        Ok(AirMeshConstraint {
                            tet: *t,
                            rest_signed_volume: m.determinant() / 6.0,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?
            } else {
                Vec::new()
            };
            (
                ConstraintSet {
                    distance,
                    airmesh: airmesh_cons,
                    airmesh_threshold: *airmesh_threshold,
                },
                *default_compliance,
            )
        }
        ConstraintSpec::Explicit {
            distance,
            airmesh,
            airmesh_threshold,
        } => (
            ConstraintSet {
                distance: distance.clone(),
                airmesh: airmesh.clone(),
                airmesh_threshold: *airmesh_threshold,
            },
            default_compliance_value(),
        ),
    };

    let mass = match &file.masses {
        MassSpec::Uniform { value } => GroupedParam::uniform(*value, partition.flex.len())?,
        MassSpec::PerPoint { values } => {
            if values.len() != partition.flex.len() {
                return Err(Error::InvalidInput(format!(
                    "{} masses for {} flex points",
                    values.len(),
                    partition.flex.len()
                )));
            }
            GroupedParam::per_element(values)?
        }
    };
    let compliance = match &file.constraints {
        ConstraintSpec::Explicit { distance, .. } => GroupedParam::per_element(
            &distance.iter().map(|c| c.compliance).collect::<Vec<_>>(),
        )?,
        ConstraintSpec::FromTetmesh { .. } => {
            GroupedParam::uniform(default_compliance, constraints.distance.len())?
        }
    };

    let driver = match &file.driver {
        None => None,
        Some(DriverSpec::Trajectory { path: p }) => {
            let traj = read_trajectory(&resolve(p))?;
            if traj.frames() > 0 && traj.points() != partition.rigid.len() {
                return Err(Error::InvalidInput(format!(
                    "driver trajectory has {} points, partition has {} rigid points",
                    traj.points(),
                    partition.rigid.len()
                )));
            }
            Some(LoadedDriver::Trajectory(traj))
        }
        Some(DriverSpec::Rig { rig, poses }) => {
            let rig = read_rig(&resolve(rig))?;
            let poses = read_pose_sequence(&resolve(poses))?;
            for pose in &poses {
                pose.validate(rig.joints.len())?;
            }
            Some(LoadedDriver::Rig { rig, poses })
        }
    };

    let scene = SimScene {
        constraints,
        partition,
        config: file.sim.clone(),
    };
    let seed = file.seed;
    Ok(LoadedScene {
        file,
        cloud,
        subset_indices,
        subset_positions,
        mesh,
        scene,
        params: PhysParams { mass, compliance },
        driver,
        seed,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct SimStateJson {
    positions: Vec<[f64; 3]>,
    velocities: Vec<[f64; 3]>,
}

/// Positions and velocities for resuming a simulation mid-sequence.
pub fn write_sim_state(
    path: &Path,
    positions: &[Vector3<f64>],
    velocities: &[Vector3<f64>],
) -> Result<()> {
    let json = SimStateJson {
        positions: positions.iter().map(|p| [p.x, p.y, p.z]).collect(),
        velocities: velocities.iter().map(|v| [v.x, v.y, v.z]).collect(),
    };
    to_json_pretty(path, &json)
}

pub fn read_sim_state(path: &Path) -> Result<(Vec<Vector3<f64>>, Vec<Vector3<f64>>)> {
    let text = read_to_string(path)?;
    let json: SimStateJson = from_json_str(path, &text)?;
    if json.positions.len() != json.velocities.len() {
        return Err(parse_err(path, "positions/velocities length mismatch"));
    }
    Ok((
        json.positions.into_iter().map(Vector3::from).collect(),
        json.velocities.into_iter().map(Vector3::from).collect(),
    ))
}

#[derive(Debug, Serialize, Deserialize)]
struct EmbeddingFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metadata: Option<super::Metadata>,
    entries: Vec<crate::transfer::PointEmbedding>,
}

pub fn write_embedding(
    path: &Path,
    embedding: &Embedding,
    metadata: Option<super::Metadata>,
) -> Result<()> {
    to_json_pretty(
        path,
        &EmbeddingFile {
            metadata,
            entries: embedding.entries.clone(),
        },
    )
}

pub fn read_embedding(path: &Path) -> Result<Embedding> {
    let text = read_to_string(path)?;
    let file: EmbeddingFile = from_json_str(path, &text)?;
    Ok(Embedding {
        entries: file.entries,
    })
}
