//! Simulation connectivity from unstructured point clouds: subset sampling,
//! Delaunay tetrahedralization, locality-based tetrahedron filtering, and
//! edge extraction.

mod delaunay;
mod kdtree;
pub mod predicates;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::{substream_rng, uniform_below};

pub use delaunay::Tetrahedralization;
pub use kdtree::KdTree;

/// Unstructured 3D point set (meters).
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<Vector3<f64>>,
}

impl PointCloud {
    pub fn new(positions: Vec<Vector3<f64>>) -> Result<Self> {
        if positions.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidInput(
                "point cloud contains non-finite coordinates".into(),
            ));
        }
        Ok(PointCloud { positions })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Tetrahedra plus the deduplicated edge set, indices into the source cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TetMesh {
    pub tets: Vec<[usize; 4]>,
    pub edges: Vec<[usize; 2]>,
}

impl TetMesh {
    /// Builds a mesh from tetrahedra, re-extracting the edge set.
    pub fn from_tets(tets: Vec<[usize; 4]>) -> Self {
        let edges = extract_edges(&tets);
        TetMesh { tets, edges }
    }
}

/// Deduplicated, lexicographically sorted edge list of a tet set.
pub fn extract_edges(tets: &[[usize; 4]]) -> Vec<[usize; 2]> {
    let mut edges: Vec<[usize; 2]> = Vec::with_capacity(tets.len() * 6);
    for t in tets {
        for i in 0..4 {
            for j in (i + 1)..4 {
                let (a, b) = (t[i].min(t[j]), t[i].max(t[j]));
                edges.push([a, b]);
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    edges
}

/// Exact k-nearest-neighbor lists, sorted by ascending distance
/// (ties by ascending index).
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborIndex {
    pub k: usize,
    pub neighbors: Vec<Vec<usize>>,
}

/// Samples `target_count` distinct indices uniformly without replacement
/// (partial Fisher–Yates over a ChaCha12 stream), clamped to the cloud size.
/// The returned indices are sorted ascending.
pub fn sample_subset(cloud: &PointCloud, target_count: usize, seed: u64) -> Result<Vec<usize>> {
    if cloud.len() < 4 {
        return Err(Error::InvalidInput(format!(
            "cannot sample a simulation subset from {} points (need at least 4)",
            cloud.len()
        )));
    }
    if target_count < 4 {
        return Err(Error::InvalidInput(format!(
            "subset target {target_count} is below the minimum of 4"
        )));
    }
    let n = cloud.len();
    let take = target_count.min(n);
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = substream_rng(seed, "geom.sample");
    for i in 0..take {
        let j = i + uniform_below(&mut rng, (n - i) as u64) as usize;
        indices.swap(i, j);
    }
    let mut out = indices[..take].to_vec();
    out.sort_unstable();
    Ok(out)
}

/// Delaunay tetrahedralization of the given points. Every returned tet has
/// an empty open circumsphere (cospherical ties broken deterministically)
/// and positive signed volume.
pub fn delaunay_tetrahedralize(points: &PointCloud) -> Result<TetMesh> {
    let tri = Tetrahedralization::build(&points.positions)?;
    let tets = tri.finite_cells();
    if tets.is_empty() {
        return Err(Error::DegenerateGeometry(
            "tetrahedralization produced no cells".into(),
        ));
    }
    Ok(TetMesh::from_tets(tets))
}

/// Exact k nearest neighbors for every point, Euclidean metric.
pub fn build_knn(points: &PointCloud, k: usize) -> Result<NeighborIndex> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let tree = KdTree::build(&points.positions);
    let neighbors = points
        .positions
        .iter()
        .enumerate()
        .map(|(i, p)| tree.knn(p, k, i))
        .collect();
    Ok(NeighborIndex { k, neighbors })
}

/// Keeps a tetrahedron iff the three non-reference vertices all lie in the
/// k-NN set of the reference vertex. The reference is the lowest index in
/// the tet; edges are re-extracted from the retained set.
pub fn filter_tets(mesh: &TetMesh, index: &NeighborIndex) -> TetMesh {
    let tets: Vec<[usize; 4]> = mesh
        .tets
        .iter()
        .filter(|tet| {
            let reference = *tet.iter().min().expect("tet has vertices");
            let nn = &index.neighbors[reference];
            tet.iter()
                .filter(|&&v| v != reference)
                .all(|v| nn.contains(v))
        })
        .copied()
        .collect();
    TetMesh::from_tets(tets)
}
