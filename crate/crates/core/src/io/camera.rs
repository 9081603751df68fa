//! Camera lists (JSON), silhouette masks (PGM), and keypoint files.

use std::path::Path;

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::{from_json_str, parse_err, read_bytes, read_to_string, to_json_pretty, write_bytes};
use crate::error::Result;
use crate::posefit::{Camera, KeypointSet, SilhouetteMask};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraJson {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    /// Row-major world→camera rotation.
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
    width: usize,
    height: usize,
}

pub fn read_cameras(path: &Path) -> Result<Vec<Camera>> {
    let text = read_to_string(path)?;
    let json: Vec<CameraJson> = from_json_str(path, &text)?;
    json.into_iter()
        .map(|c| {
            let m = Matrix3::from_rows(&[
                Vector3::from(c.rotation[0]).transpose(),
                Vector3::from(c.rotation[1]).transpose(),
                Vector3::from(c.rotation[2]).transpose(),
            ]);
            let camera = Camera {
                fx: c.fx,
                fy: c.fy,
                cx: c.cx,
                cy: c.cy,
                rotation: Rotation3::from_matrix_unchecked(m),
                translation: Vector3::from(c.translation),
                width: c.width,
                height: c.height,
            };
            camera.validate()?;
            Ok(camera)
        })
        .collect()
}

pub fn write_cameras(path: &Path, cameras: &[Camera]) -> Result<()> {
    let json: Vec<CameraJson> = cameras
        .iter()
        .map(|c| {
            let m = c.rotation.matrix();
            CameraJson {
                fx: c.fx,
                fy: c.fy,
                cx: c.cx,
                cy: c.cy,
                rotation: [
                    [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                    [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                    [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
                ],
                translation: [c.translation.x, c.translation.y, c.translation.z],
                width: c.width,
                height: c.height,
            }
        })
        .collect();
    to_json_pretty(path, &json)
}

/// Reads a binary (P5) or ASCII (P2) PGM; any value above zero is "person".
pub fn read_mask(path: &Path) -> Result<SilhouetteMask> {
    let bytes = read_bytes(path)?;
    let mut cursor = 0usize;
    let mut token = || -> Result<String> {
        // Skip whitespace and `#` comments between header tokens.
        loop {
            while cursor < bytes.len() && bytes[cursor].is_ascii_whitespace() {
                cursor += 1;
            }
            if cursor < bytes.len() && bytes[cursor] == b'#' {
                while cursor < bytes.len() && bytes[cursor] != b'\n' {
                    cursor += 1;
                }
                continue;
            }
            break;
        }
        let start = cursor;
        while cursor < bytes.len() && !bytes[cursor].is_ascii_whitespace() {
            cursor += 1;
        }
        if start == cursor {
            return Err(parse_err(path, "unexpected end of PGM header"));
        }
        Ok(std::str::from_utf8(&bytes[start..cursor])
            .map_err(|_| parse_err(path, "PGM header is not ascii"))?
            .to_string())
    };
    let magic = token()?;
    let width: usize = token()?.parse().map_err(|e| parse_err(path, e))?;
    let height: usize = token()?.parse().map_err(|e| parse_err(path, e))?;
    let maxval: usize = token()?.parse().map_err(|e| parse_err(path, e))?;
    if maxval == 0 || maxval > 255 {
        return Err(parse_err(path, format!("unsupported maxval {maxval}")));
    }
    let data = match magic.as_str() {
        "P5" => {
            let start = cursor + 1; // single whitespace after maxval
            let expect = width * height;
            if bytes.len() < start + expect {
                return Err(parse_err(path, "PGM payload truncated"));
            }
            bytes[start..start + expect]
                .iter()
                .map(|&b| u8::from(b > 0))
                .collect()
        }
        "P2" => {
            let mut data = Vec::with_capacity(width * height);
            for _ in 0..width * height {
                let v: usize = token()?.parse().map_err(|e| parse_err(path, e))?;
                data.push(u8::from(v > 0));
            }
            data
        }
        other => return Err(parse_err(path, format!("unsupported PGM magic '{other}'"))),
    };
    Ok(SilhouetteMask {
        width,
        height,
        data,
    })
}

/// Writes a binary PGM with values 0/255.
pub fn write_mask(path: &Path, mask: &SilhouetteMask) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", mask.width, mask.height).into_bytes();
    bytes.extend(mask.data.iter().map(|&m| if m > 0 { 255u8 } else { 0 }));
    write_bytes(path, &bytes)
}

#[derive(Debug, Serialize, Deserialize)]
struct KeypointFrameJson {
    targets: Vec<Option<[f64; 3]>>,
}

/// Per-frame keypoint targets for the rig's marker vertices.
pub fn read_keypoint_frames(path: &Path) -> Result<Vec<KeypointSet>> {
    let text = read_to_string(path)?;
    let json: Vec<KeypointFrameJson> = from_json_str(path, &text)?;
    Ok(json
        .into_iter()
        .map(|f| KeypointSet {
            targets: f.targets.into_iter().map(|t| t.map(Vector3::from)).collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cameras_round_trip() {
        let dir = std::env::temp_dir().join("pbdsim-io-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cams.json");
        let cams = vec![Camera {
            fx: 500.0,
            fy: 510.0,
            cx: 320.0,
            cy: 240.0,
            rotation: Rotation3::from_euler_angles(0.1, -0.2, 0.3),
            translation: Vector3::new(0.0, 0.5, 2.0),
            width: 640,
            height: 480,
        }];
        write_cameras(&path, &cams).unwrap();
        let back = read_cameras(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert!((back[0].rotation.matrix() - cams[0].rotation.matrix()).norm() < 1e-12);
        assert_eq!(back[0].width, 640);
    }

    #[test]
    fn pgm_round_trip_and_ascii() {
        let dir = std::env::temp_dir().join("pbdsim-io-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("mask.pgm");
        let mask = SilhouetteMask {
            width: 4,
            height: 3,
            data: vec![0, 1, 0, 1, 1, 1, 0, 0, 0, 0, 1, 0],
        };
        write_mask(&path, &mask).unwrap();
        assert_eq!(read_mask(&path).unwrap(), mask);

        let ascii = dir.join("mask_ascii.pgm");
        std::fs::write(&ascii, "P2\n# comment\n2 2\n255\n0 255\n255 0\n").unwrap();
        let back = read_mask(&ascii).unwrap();
        assert_eq!(back.data, vec![0, 1, 1, 0]);
    }

    #[test]
    fn keypoints_parse_with_validity() {
        let dir = std::env::temp_dir().join("pbdsim-io-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("kp.json");
        std::fs::write(
            &path,
            r#"[{"targets":[[0,1,2],null]},{"targets":[null,[3,4,5]]}]"#,
        )
        .unwrap();
        let frames = read_keypoint_frames(&path).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0].targets[0], Some(Vector3::new(0.0, 1.0, 2.0)));
        assert_eq!(frames[0].targets[1], None);
        assert_eq!(frames[1].targets[1], Some(Vector3::new(3.0, 4.0, 5.0)));
    }
}
