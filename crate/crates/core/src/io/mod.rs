//! File formats shared by the command-line tools.
//!
//! Everything is plain text or JSON except trajectories, which pair a JSON
//! header line with a little-endian f32 payload. All distances are meters,
//! times seconds, masses kilograms.

mod camera;
mod cloud;
mod params;
mod rig;
mod scene;
mod tetmesh;
mod trajectory;

pub use camera::{read_cameras, read_keypoint_frames, read_mask, write_cameras, write_mask};
pub use cloud::{
    read_gaussian_cloud, read_point_cloud, write_gaussian_cloud, write_point_cloud, CloudData,
};
pub use params::{read_params, write_params};
pub use rig::{read_pose_sequence, read_rig, write_pose_sequence, write_rig};
pub use scene::{
    load_scene, read_embedding, read_sim_state, write_embedding, write_sim_state, ConstraintSpec,
    DriverSpec, LoadedDriver, LoadedScene, MassSpec, PartitionSpec, SceneFile,
};
pub use tetmesh::{read_tetmesh, write_tetmesh, TetMeshFile};
pub use trajectory::{read_trajectory, write_trajectory_binary, write_trajectory_json, Trajectory};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Provenance block attached to generated files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl Metadata {
    pub fn new(seed: Option<u64>) -> Self {
        Metadata {
            tool: "pbdsim".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config: None,
        }
    }

    pub fn with_config(mut self, config: serde_json::Value) -> Self {
        self.config = Some(config);
        self
    }
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

pub(crate) fn parse_err(path: &Path, message: impl std::fmt::Display) -> Error {
    Error::parse(path.display().to_string(), message.to_string())
}

pub(crate) fn to_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| parse_err(path, format!("serialization failed: {e}")))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub(crate) fn from_json_str<'a, T: Deserialize<'a>>(path: &Path, text: &'a str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| parse_err(path, e))
}
