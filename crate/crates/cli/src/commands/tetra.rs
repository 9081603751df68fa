use std::path::PathBuf;

use clap::Parser;
use pbdsim_core::geom::{build_knn, delaunay_tetrahedralize, filter_tets, sample_subset, PointCloud};
use pbdsim_core::io::{load_scene, read_point_cloud, write_tetmesh};
use pbdsim_core::{Error, Result};
use serde::Serialize;

#[derive(Parser, Serialize)]
pub struct Args {
    /// Scene file supplying the cloud path and seed (flags override).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Cloud file (text or JSON form).
    #[arg(long)]
    cloud: Option<PathBuf>,
    /// Output tet mesh (JSON).
    #[arg(long, short)]
    out: PathBuf,
    /// Number of points to sample for the simulated subset.
    #[arg(long, default_value_t = 10_000)]
    target_count: usize,
    /// Neighborhood size of the locality filter.
    #[arg(long, default_value_t = 30)]
    k: usize,
    #[arg(long)]
    seed: Option<u64>,
}

pub fn run(args: Args) -> Result<()> {
    let (cloud_path, mut seed) = match (&args.config, &args.cloud) {
        (Some(cfg), None) => {
            let scene = load_scene(cfg)?;
            let base = cfg.parent().unwrap_or_else(|| std::path::Path::new("."));
            (base.join(&scene.file.cloud), scene.seed)
        }
        (_, Some(cloud)) => (cloud.clone(), 0),
        (None, None) => {
            return Err(Error::InvalidInput(
                "either --config or --cloud is required".into(),
            ))
        }
    };
    if let Some(s) = args.seed {
        seed = s;
    }

    let (cloud, _labels) = read_point_cloud(&cloud_path)?;
    let selected = sample_subset(&cloud, args.target_count, seed)?;
    let subset = PointCloud::new(selected.iter().map(|&i| cloud.positions[i]).collect())?;
    let mesh = delaunay_tetrahedralize(&subset)?;
    let index = build_knn(&subset, args.k)?;
    let filtered = filter_tets(&mesh, &index);
    println!(
        "sampled {} of {} points; {} tets ({} before filtering), {} edges",
        subset.len(),
        cloud.len(),
        filtered.tets.len(),
        mesh.tets.len(),
        filtered.edges.len()
    );
    let meta = super::metadata(Some(seed), &args)?;
    write_tetmesh(&args.out, &filtered, Some(&selected), Some(meta))?;
    Ok(())
}
