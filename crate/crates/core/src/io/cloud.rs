//! Point and Gaussian cloud files.
//!
//! Text form: one JSON header line
//! `{"fields": [...], "count": N, "units": "m"}` followed by one row per
//! point with whitespace-separated values. Recognized field sets:
//! `x y z`, `x y z label`, and the Gaussian extension
//! `x y z qw qx qy qz sx sy sz label`. The equivalent single-document JSON
//! form is an object `{"units", "positions", "labels"?, "rotations"?,
//! "scales"?}` (rotations as wxyz).

use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{from_json_str, parse_err, read_to_string, write_bytes};
use crate::error::Result;
use crate::geom::PointCloud;
use crate::transfer::{GaussianCloud, PointLabel};

/// Cloud file contents: always positions, optionally labels and the
/// Gaussian attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudData {
    pub positions: Vec<Vector3<f64>>,
    pub labels: Option<Vec<PointLabel>>,
    pub rotations: Option<Vec<UnitQuaternion<f64>>>,
    pub scales: Option<Vec<Vector3<f64>>>,
}

impl CloudData {
    pub fn point_cloud(&self) -> Result<PointCloud> {
        PointCloud::new(self.positions.clone())
    }

    pub fn gaussian_cloud(&self, path: &Path) -> Result<GaussianCloud> {
        let rotations = self
            .rotations
            .clone()
            .ok_or_else(|| parse_err(path, "cloud lacks rotation columns"))?;
        let scales = self
            .scales
            .clone()
            .ok_or_else(|| parse_err(path, "cloud lacks scale columns"))?;
        let labels = self
            .labels
            .clone()
            .ok_or_else(|| parse_err(path, "cloud lacks a label column"))?;
        let cloud = GaussianCloud {
            positions: self.positions.clone(),
            rotations,
            scales,
            labels,
        };
        cloud.validate()?;
        Ok(cloud)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TextHeader {
    fields: Vec<String>,
    count: usize,
    units: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonCloud {
    units: String,
    positions: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rotations: Option<Vec<[f64; 4]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scales: Option<Vec<[f64; 3]>>,
}

fn label_from(token: &str, path: &Path) -> Result<PointLabel> {
    match token {
        "body" => Ok(PointLabel::Body),
        "cloth" => Ok(PointLabel::Cloth),
        other => Err(parse_err(path, format!("unknown label '{other}'"))),
    }
}

fn label_to(label: PointLabel) -> &'static str {
    match label {
        PointLabel::Body => "body",
        PointLabel::Cloth => "cloth",
    }
}

fn quat_from(wxyz: [f64; 4], path: &Path) -> Result<UnitQuaternion<f64>> {
    let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
    let n = q.norm();
    if !((n - 1.0).abs() <= 1e-6) {
        return Err(parse_err(
            path,
            format!("quaternion norm {n} is outside the 1e-6 unit tolerance"),
        ));
    }
    Ok(UnitQuaternion::from_quaternion(q))
}

/// Reads either cloud form. Text rows are detected by the header line;
/// otherwise the whole file must parse as the JSON form.
pub fn read_cloud(path: &Path) -> Result<CloudData> {
    let text = read_to_string(path)?;
    if let Ok(json) = serde_json::from_str::<JsonCloud>(&text) {
        return cloud_from_json(path, json);
    }
    let mut lines = text.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| parse_err(path, "empty cloud file"))?;
    let header: TextHeader = from_json_str(path, header_line)?;
    let known: Vec<&str> = header.fields.iter().map(|s| s.as_str()).collect();
    let gaussian = ["x", "y", "z", "qw", "qx", "qy", "qz", "sx", "sy", "sz", "label"];
    let (has_label, has_gaussian) = match known.as_slice() {
        ["x", "y", "z"] => (false, false),
        ["x", "y", "z", "label"] => (true, false),
        f if f == gaussian => (true, true),
        other => {
            return Err(parse_err(path, format!("unsupported field set {other:?}")));
        }
    };
    let mut positions = Vec::with_capacity(header.count);
    let mut labels = Vec::new();
    let mut rotations = Vec::new();
    let mut scales = Vec::new();
    for (ln, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != known.len() {
            return Err(parse_err(
                path,
                format!("row {}: {} values for {} fields", ln + 2, tokens.len(), known.len()),
            ));
        }
        let num = |i: usize| -> Result<f64> {
            tokens[i]
                .parse::<f64>()
                .map_err(|e| parse_err(path, format!("row {}: {e}", ln + 2)))
        };
        positions.push(Vector3::new(num(0)?, num(1)?, num(2)?));
        if has_gaussian {
            rotations.push(quat_from([num(3)?, num(4)?, num(5)?, num(6)?], path)?);
            scales.push(Vector3::new(num(7)?, num(8)?, num(9)?));
            labels.push(label_from(tokens[10], path)?);
        } else if has_label {
            labels.push(label_from(tokens[3], path)?);
        }
    }
    if positions.len() != header.count {
        return Err(parse_err(
            path,
            format!("header says {} points, file has {}", header.count, positions.len()),
        ));
    }
    Ok(CloudData {
        positions,
        labels: if has_label { Some(labels) } else { None },
        rotations: if has_gaussian { Some(rotations) } else { None },
        scales: if has_gaussian { Some(scales) } else { None },
    })
}

fn cloud_from_json(path: &Path, json: JsonCloud) -> Result<CloudData> {
    if json.units != "m" {
        return Err(parse_err(path, format!("unsupported units '{}'", json.units)));
    }
    let n = json.positions.len();
    let check = |len: usize, what: &str| -> Result<()> {
        if len != n {
            return Err(parse_err(path, format!("{what} count {len} != {n} positions")));
        }
        Ok(())
    };
    let positions = json.positions.iter().map(|p| Vector3::from(*p)).collect();
    let labels = match json.labels {
        Some(ls) => {
            check(ls.len(), "label")?;
            Some(
                ls.iter()
                    .map(|s| label_from(s, path))
                    .collect::<Result<Vec<_>>>()?,
            )
        }
        None => None,
    };
    let rotations = match json.rotations {
        Some(rs) => {
            check(rs.len(), "rotation")?;
            Some(rs.into_iter().map(|q| quat_from(q, path)).collect::<Result<Vec<_>>>()?)
        }
        None => None,
    };
    let scales = match json.scales {
        Some(ss) => {
            check(ss.len(), "scale")?;
            Some(ss.into_iter().map(Vector3::from).collect())
        }
        None => None,
    };
    Ok(CloudData {
        positions,
        labels,
        rotations,
        scales,
    })
}

pub fn read_point_cloud(path: &Path) -> Result<(PointCloud, Option<Vec<PointLabel>>)> {
    let data = read_cloud(path)?;
    Ok((data.point_cloud()?, data.labels))
}

pub fn read_gaussian_cloud(path: &Path) -> Result<GaussianCloud> {
    let data = read_cloud(path)?;
    data.gaussian_cloud(path)
}

pub fn write_point_cloud(
    path: &Path,
    positions: &[Vector3<f64>],
    labels: Option<&[PointLabel]>,
) -> Result<()> {
    let fields: Vec<&str> = if labels.is_some() {
        vec!["x", "y", "z", "label"]
    } else {
        vec!["x", "y", "z"]
    };
    let header = serde_json::json!({"fields": fields, "count": positions.len(), "units": "m"});
    let mut out = header.to_string();
    out.push('\n');
    for (i, p) in positions.iter().enumerate() {
        match labels {
            Some(ls) => out.push_str(&format!(
                "{:.17e} {:.17e} {:.17e} {}\n",
                p.x,
                p.y,
                p.z,
                label_to(ls[i])
            )),
            None => out.push_str(&format!("{:.17e} {:.17e} {:.17e}\n", p.x, p.y, p.z)),
        }
    }
    write_bytes(path, out.as_bytes())
}

pub fn write_gaussian_cloud(path: &Path, cloud: &GaussianCloud) -> Result<()> {
    cloud.validate()?;
    let header = serde_json::json!({
        "fields": ["x","y","z","qw","qx","qy","qz","sx","sy","sz","label"],
        "count": cloud.len(),
        "units": "m",
    });
    let mut out = header.to_string();
    out.push('\n');
    for i in 0..cloud.len() {
        let p = cloud.positions[i];
        let q = cloud.rotations[i].quaternion();
        let s = cloud.scales[i];
        out.push_str(&format!(
            "{:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {}\n",
            p.x,
            p.y,
            p.z,
            q.w,
            q.i,
            q.j,
            q.k,
            s.x,
            s.y,
            s.z,
            label_to(cloud.labels[i])
        ));
    }
    write_bytes(path, out.as_bytes())
}
