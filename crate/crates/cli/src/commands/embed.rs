use std::path::PathBuf;

use clap::Parser;
use nalgebra::Vector3;
use pbdsim_core::io::{read_point_cloud, read_tetmesh, write_embedding};
use pbdsim_core::transfer::embed;
use pbdsim_core::{Error, Result};
use serde::Serialize;

#[derive(Parser, Serialize)]
pub struct Args {
    /// Cloud file (full point set).
    #[arg(long)]
    cloud: PathBuf,
    /// Tet mesh over the sampled subset (with its index list).
    #[arg(long)]
    tetmesh: PathBuf,
    /// Embedding output (JSON); entries follow ascending unsampled index.
    #[arg(long, short)]
    out: PathBuf,
}

pub fn run(args: Args) -> Result<()> {
    let (cloud, _) = read_point_cloud(&args.cloud)?;
    let mesh_file = read_tetmesh(&args.tetmesh)?;
    let subset: Vec<usize> = mesh_file
        .sampled_indices
        .clone()
        .unwrap_or_else(|| (0..cloud.len()).collect());
    if let Some(&bad) = subset.iter().find(|&&i| i >= cloud.len()) {
        return Err(Error::InvalidInput(format!(
            "sampled index {bad} out of range for cloud of {} points",
            cloud.len()
        )));
    }
    let sampled_positions: Vec<Vector3<f64>> =
        subset.iter().map(|&i| cloud.positions[i]).collect();
    let in_subset: std::collections::HashSet<usize> = subset.iter().copied().collect();
    let unsampled: Vec<Vector3<f64>> = (0..cloud.len())
        .filter(|i| !in_subset.contains(i))
        .map(|i| cloud.positions[i])
        .collect();
    let mesh = mesh_file.mesh();
    if mesh.tets.is_empty() {
        return Err(Error::InvalidInput("tet mesh is empty".into()));
    }
    let embedding = embed(&unsampled, &sampled_positions, &mesh);
    let interior = embedding
        .entries
        .iter()
        .filter(|e| matches!(e, pbdsim_core::transfer::PointEmbedding::Interior { .. }))
        .count();
    println!(
        "embedded {} points: {} interior, {} exterior",
        embedding.entries.len(),
        interior,
        embedding.entries.len() - interior
    );
    let meta = super::metadata(None, &args)?;
    write_embedding(&args.out, &embedding, Some(meta))
}
