//! Tet mesh JSON: `{"tets": [[i,j,k,l], ...], "edges": [[i,j], ...]}` plus
//! the optional sampled-subset index list and a provenance block.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{from_json_str, parse_err, read_to_string, to_json_pretty, Metadata};
use crate::error::Result;
use crate::geom::TetMesh;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TetMeshFile {
    pub tets: Vec<[usize; 4]>,
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampled_indices: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<Metadata>,
}

impl TetMeshFile {
    pub fn mesh(&self) -> TetMesh {
        TetMesh {
            tets: self.tets.clone(),
            edges: self.edges.clone(),
        }
    }
}

pub fn write_tetmesh(
    path: &Path,
    mesh: &TetMesh,
    sampled_indices: Option<&[usize]>,
    metadata: Option<Metadata>,
) -> Result<()> {
    let file = TetMeshFile {
        tets: mesh.tets.clone(),
        edges: mesh.edges.clone(),
        sampled_indices: sampled_indices.map(|s| s.to_vec()),
        metadata,
    };
    to_json_pretty(path, &file)
}

pub fn read_tetmesh(path: &Path) -> Result<TetMeshFile> {
    let text = read_to_string(path)?;
    let file: TetMeshFile = from_json_str(path, &text)?;
    for (i, t) in file.tets.iter().enumerate() {
        let mut sorted = *t;
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(parse_err(path, format!("tet {i} repeats a vertex")));
        }
    }
    for (i, e) in file.edges.iter().enumerate() {
        if e[0] == e[1] {
            return Err(parse_err(path, format!("edge {i} is degenerate")));
        }
    }
    Ok(file)
}
