//! Trajectory files: positions of N points over F frames.
//!
//! Binary form: one JSON header line
//! `{"points": N, "frames": F, "frame_dt": dt, "payload": "f32le", ...}`
//! terminated by `\n`, followed by `F·N·3` little-endian f32 values ordered
//! frame-major, then point-major, then xyz. Small cases may use the pure
//! JSON form `{"points", "frames", "frame_dt", "positions"}` instead.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{from_json_str, parse_err, read_bytes, to_json_pretty, write_bytes, Metadata};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub frame_dt: f64,
    /// `positions[frame][point]`
    pub positions: Vec<Vec<Vector3<f64>>>,
}

impl Trajectory {
    pub fn frames(&self) -> usize {
        self.positions.len()
    }

    pub fn points(&self) -> usize {
        self.positions.first().map_or(0, |f| f.len())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct BinaryHeader {
    points: usize,
    frames: usize,
    frame_dt: f64,
    payload: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metadata: Option<Metadata>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonTrajectory {
    points: usize,
    frames: usize,
    frame_dt: f64,
    positions: Vec<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metadata: Option<Metadata>,
}

pub fn write_trajectory_binary(
    path: &Path,
    trajectory: &Trajectory,
    metadata: Option<Metadata>,
) -> Result<()> {
    let header = BinaryHeader {
        points: trajectory.points(),
        frames: trajectory.frames(),
        frame_dt: trajectory.frame_dt,
        payload: "f32le".into(),
        metadata,
    };
    let mut bytes = serde_json::to_string(&header)
        .map_err(|e| parse_err(path, e))?
        .into_bytes();
    bytes.push(b'\n');
    bytes.reserve(trajectory.frames() * trajectory.points() * 12);
    for frame in &trajectory.positions {
        for p in frame {
            for c in 0..3 {
                bytes.extend_from_slice(&(p[c] as f32).to_le_bytes());
            }
        }
    }
    write_bytes(path, &bytes)
}

pub fn write_trajectory_json(
    path: &Path,
    trajectory: &Trajectory,
    metadata: Option<Metadata>,
) -> Result<()> {
    let json = JsonTrajectory {
        points: trajectory.points(),
        frames: trajectory.frames(),
        frame_dt: trajectory.frame_dt,
        positions: trajectory
            .positions
            .iter()
            .map(|f| f.iter().map(|p| [p.x, p.y, p.z]).collect())
            .collect(),
        metadata,
    };
    to_json_pretty(path, &json)
}

/// Reads either trajectory form, distinguished by the `payload` key on the
/// first line.
pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let bytes = read_bytes(path)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| parse_err(path, "missing header line"))?;
    let first_line = std::str::from_utf8(&bytes[..newline])
        .map_err(|_| parse_err(path, "header is not utf-8"))?;
    if let Ok(header) = serde_json::from_str::<BinaryHeader>(first_line) {
        if header.payload != "f32le" {
            return Err(parse_err(
                path,
                format!("unsupported payload '{}'", header.payload),
            ));
        }
        let body = &bytes[newline + 1..];
        let expect = header.frames * header.points * 12;
        if body.len() != expect {
            return Err(parse_err(
                path,
                format!("payload holds {} bytes, expected {expect}", body.len()),
            ));
        }
        let mut positions = Vec::with_capacity(header.frames);
        let mut offset = 0;
        for _ in 0..header.frames {
            let mut frame = Vec::with_capacity(header.points);
            for _ in 0..header.points {
                let mut coords = [0.0f64; 3];
                for c in coords.iter_mut() {
                    let raw: [u8; 4] = body[offset..offset + 4].try_into().unwrap();
                    *c = f32::from_le_bytes(raw) as f64;
                    offset += 4;
                }
                frame.push(Vector3::from(coords));
            }
            positions.push(frame);
        }
        return Ok(Trajectory {
            frame_dt: header.frame_dt,
            positions,
        });
    }
    // Whole-document JSON form.
    let text = std::str::from_utf8(&bytes).map_err(|_| parse_err(path, "not utf-8"))?;
    let json: JsonTrajectory = from_json_str(path, text)?;
    if json.positions.len() != json.frames
        || json.positions.iter().any(|f| f.len() != json.points)
    {
        return Err(parse_err(path, "frame/point counts disagree with data"));
    }
    Ok(Trajectory {
        frame_dt: json.frame_dt,
        positions: json
            .positions
            .into_iter()
            .map(|f| f.into_iter().map(Vector3::from).collect())
            .collect(),
    })
}
