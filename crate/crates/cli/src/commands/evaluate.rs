use std::path::{Path, PathBuf};

use clap::Parser;
use pbdsim_core::metrics::{hf_psnr, hf_ssim, psnr, ssim, Image};
use pbdsim_core::{Error, Result};
use serde::Serialize;

#[derive(Parser, Serialize)]
pub struct Args {
    /// Ground-truth image directory (PNG/PPM/PGM).
    #[arg(long)]
    gt: PathBuf,
    /// Prediction directory; files are matched by name.
    #[arg(long)]
    pred: PathBuf,
    /// Metrics table output (CSV).
    #[arg(long, short)]
    out: PathBuf,
    /// Gaussian width of the high-pass filter (pixels).
    #[arg(long, default_value_t = pbdsim_core::metrics::DEFAULT_HF_SIGMA)]
    hf_sigma: f64,
}

fn load_image(path: &Path) -> Result<Image> {
    let img = image::open(path)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = img.as_raw().iter().map(|&b| b as f64 / 255.0).collect();
    Image::new(w, h, 3, data)
}

pub fn run(args: Args) -> Result<()> {
    let mut names: Vec<String> = std::fs::read_dir(&args.gt)
        .map_err(|e| Error::io(args.gt.display().to_string(), e))?
        .filter_map(|entry| {
            let entry = entry.ok()?;
            let name = entry.file_name().to_str()?.to_string();
            let lower = name.to_lowercase();
            if lower.ends_with(".png") || lower.ends_with(".ppm") || lower.ends_with(".pgm") {
                Some(name)
            } else {
                None
            }
        })
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no PNG/PPM/PGM images in {}",
            args.gt.display()
        )));
    }

    let mut rows = Vec::new();
    let mut sums = [0.0f64; 4];
    for name in &names {
        let gt = load_image(&args.gt.join(name))?;
        let pred_path = args.pred.join(name);
        if !pred_path.exists() {
            return Err(Error::InvalidInput(format!(
                "prediction missing for {name}"
            )));
        }
        let pred = load_image(&pred_path)?;
        let values = [
            psnr(&gt, &pred)?,
            ssim(&gt, &pred)?,
            hf_psnr(&gt, &pred, args.hf_sigma)?,
            hf_ssim(&gt, &pred, args.hf_sigma)?,
        ];
        for (s, v) in sums.iter_mut().zip(&values) {
            *s += v;
        }
        rows.push((name.clone(), values));
    }

    let mut csv = format!(
        "# tool: pbdsim {}\n# hf_sigma: {}\nname,psnr,ssim,hf_psnr,hf_ssim\n",
        env!("CARGO_PKG_VERSION"),
        args.hf_sigma
    );
    let fmt = |v: f64| {
        if v.is_infinite() {
            "inf".to_string()
        } else {
            format!("{v:.6}")
        }
    };
    for (name, values) in &rows {
        csv.push_str(&format!(
            "{name},{},{},{},{}\n",
            fmt(values[0]),
            fmt(values[1]),
            fmt(values[2]),
            fmt(values[3])
        ));
    }
    let n = rows.len() as f64;
    csv.push_str(&format!(
        "mean,{},{},{},{}\n",
        fmt(sums[0] / n),
        fmt(sums[1] / n),
        fmt(sums[2] / n),
        fmt(sums[3] / n)
    ));
    std::fs::write(&args.out, &csv).map_err(|e| Error::io(args.out.display().to_string(), e))?;
    println!(
        "evaluated {} image pairs; mean psnr {} ssim {}",
        rows.len(),
        fmt(sums[0] / n),
        fmt(sums[1] / n)
    );
    Ok(())
}
