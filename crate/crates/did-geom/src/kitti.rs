//! KITTI-format file I/O: calibration text files, label / detection text
//! files, and velodyne `.bin` point clouds.
//!
//! Only the `P2` camera matrix is required; `Tr_velo_to_cam` and `R0_rect`
//! are parsed when present so that real KITTI clouds can be moved into the
//! rectified camera frame. Detection serialization is fixed at 2 decimals,
//! which is lossy by contract.

use byteorder::{ByteOrder, LittleEndian};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KittiError {
    #[error("missing key `{0}` in calibration text")]
    MissingKey(String),
    #[error("malformed number `{token}` in {context}")]
    MalformedNumber { token: String, context: String },
    #[error("wrong arity in {context}: expected {expected}, got {got}")]
    WrongArity {
        context: String,
        expected: usize,
        got: usize,
    },
    #[error("point cloud buffer truncated: {0} bytes is not a multiple of 16")]
    TruncatedFile(usize),
    #[error("label has no score; detections require one")]
    MissingScore,
    #[error("invalid projection matrix: f_u={fu}, f_v={fv} must be positive")]
    InvalidProjection { fu: f64, fv: f64 },
}

/// Camera projection: 3x4 matrix `P` plus the intrinsics derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraCalib {
    pub p: [[f64; 4]; 3],
    pub fu: f64,
    pub fv: f64,
    pub cu: f64,
    pub cv: f64,
    pub tx: f64,
    pub ty: f64,
}

impl CameraCalib {
    pub fn from_matrix(p: [[f64; 4]; 3]) -> Result<Self, KittiError> {
        let (fu, fv) = (p[0][0], p[1][1]);
        if fu <= 0.0 || fv <= 0.0 {
            return Err(KittiError::InvalidProjection { fu, fv });
        }
        Ok(Self {
            p,
            fu,
            fv,
            cu: p[0][2],
            cv: p[1][2],
            tx: p[0][3],
            ty: p[1][3],
        })
    }

    /// Pinhole with focal `f`, principal point `(cu, cv)`, zero translation.
    pub fn pinhole(f: f64, cu: f64, cv: f64) -> Self {
        Self::from_matrix([
            [f, 0.0, cu, 0.0],
            [0.0, f, cv, 0.0],
            [0.0, 0.0, 1.0, 0.0],
        ])
        .expect("positive focal length")
    }
}

/// `Tr_velo_to_cam` plus `R0_rect`, enough to move velodyne points into the
/// rectified camera frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibExtrinsics {
    pub tr_velo_to_cam: [[f64; 4]; 3],
    pub r0_rect: [[f64; 3]; 3],
}

impl CalibExtrinsics {
    /// p_cam = R0 * (Tr * [x y z 1])
    pub fn velo_to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        let tr = &self.tr_velo_to_cam;
        let t = [
            tr[0][0] * p[0] + tr[0][1] * p[1] + tr[0][2] * p[2] + tr[0][3],
            tr[1][0] * p[0] + tr[1][1] * p[1] + tr[1][2] * p[2] + tr[1][3],
            tr[2][0] * p[0] + tr[2][1] * p[1] + tr[2][2] * p[2] + tr[2][3],
        ];
        let r = &self.r0_rect;
        [
            r[0][0] * t[0] + r[0][1] * t[1] + r[0][2] * t[2],
            r[1][0] * t[0] + r[1][1] * t[1] + r[1][2] * t[2],
            r[2][0] * t[0] + r[2][1] * t[1] + r[2][2] * t[2],
        ]
    }
}

fn parse_reals(tokens: &[&str], context: &str, expected: usize) -> Result<Vec<f64>, KittiError> {
    if tokens.len() != expected {
        return Err(KittiError::WrongArity {
            context: context.to_string(),
            expected,
            got: tokens.len(),
        });
    }
    tokens
        .iter()
        .map(|t| {
            t.parse::<f64>().map_err(|_| KittiError::MalformedNumber {
                token: (*t).to_string(),
                context: context.to_string(),
            })
        })
        .collect()
}

fn find_keyed_values<'a>(text: &'a str, key: &str) -> Option<Vec<&'a str>> {
    for line in text.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix(key) {
            return Some(rest.split_whitespace().collect());
        }
    }
    None
}

/// Parse the `P2:` camera matrix out of a KITTI calibration file.
pub fn parse_calibration(text: &str) -> Result<CameraCalib, KittiError> {
    let tokens =
        find_keyed_values(text, "P2:").ok_or_else(|| KittiError::MissingKey("P2".into()))?;
    let v = parse_reals(&tokens, "P2", 12)?;
    CameraCalib::from_matrix([
        [v[0], v[1], v[2], v[3]],
        [v[4], v[5], v[6], v[7]],
        [v[8], v[9], v[10], v[11]],
    ])
}

/// Parse `Tr_velo_to_cam` and `R0_rect`; both keys must be present.
pub fn parse_extrinsics(text: &str) -> Result<CalibExtrinsics, KittiError> {
    let tr_tokens = find_keyed_values(text, "Tr_velo_to_cam:")
        .ok_or_else(|| KittiError::MissingKey("Tr_velo_to_cam".into()))?;
    let tr = parse_reals(&tr_tokens, "Tr_velo_to_cam", 12)?;
    let r0_tokens =
        find_keyed_values(text, "R0_rect:").ok_or_else(|| KittiError::MissingKey("R0_rect".into()))?;
    let r0 = parse_reals(&r0_tokens, "R0_rect", 9)?;
    Ok(CalibExtrinsics {
        tr_velo_to_cam: [
            [tr[0], tr[1], tr[2], tr[3]],
            [tr[4], tr[5], tr[6], tr[7]],
            [tr[8], tr[9], tr[10], tr[11]],
        ],
        r0_rect: [
            [r0[0], r0[1], r0[2]],
            [r0[3], r0[4], r0[5]],
            [r0[6], r0[7], r0[8]],
        ],
    })
}

/// Write a calibration file containing the `P2` line that `parse_calibration`
/// reads back.
pub fn write_calibration(calib: &CameraCalib) -> String {
    let mut out = String::from("P2:");
    for row in &calib.p {
        for v in row {
            out.push_str(&format!(" {v}"));
        }
    }
    out.push('\n');
    out
}

/// One KITTI label / detection line. `location` is the bottom-face center of
/// the 3D box in the camera frame, per the KITTI convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectLabel {
    pub category: String,
    pub truncation: f64,
    pub occlusion: i32,
    pub alpha: f64,
    /// (u_min, v_min, u_max, v_max) in pixels.
    pub box2d: [f64; 4],
    /// (h, w, l) in meters.
    pub dims: [f64; 3],
    /// Bottom-face center (x, y, z) in meters, camera frame.
    pub location: [f64; 3],
    pub ry: f64,
    pub score: Option<f64>,
}

impl ObjectLabel {
    pub fn box2d_height(&self) -> f64 {
        self.box2d[3] - self.box2d[1]
    }
}

/// Parse one 15-field label line or 16-field detection line.
pub fn parse_label_line(text: &str) -> Result<ObjectLabel, KittiError> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() != 15 && tokens.len() != 16 {
        return Err(KittiError::WrongArity {
            context: "label line".into(),
            expected: 15,
            got: tokens.len(),
        });
    }
    let num = |i: usize| -> Result<f64, KittiError> {
        tokens[i]
            .parse::<f64>()
            .map_err(|_| KittiError::MalformedNumber {
                token: tokens[i].to_string(),
                context: format!("label field {i}"),
            })
    };
    let occlusion = tokens[2]
        .parse::<f64>()
        .map_err(|_| KittiError::MalformedNumber {
            token: tokens[2].to_string(),
            context: "label field 2".into(),
        })? as i32;
    Ok(ObjectLabel {
        category: tokens[0].to_string(),
        truncation: num(1)?,
        occlusion,
        alpha: num(3)?,
        box2d: [num(4)?, num(5)?, num(6)?, num(7)?],
        dims: [num(8)?, num(9)?, num(10)?],
        location: [num(11)?, num(12)?, num(13)?],
        ry: num(14)?,
        score: if tokens.len() == 16 {
            Some(num(15)?)
        } else {
            None
        },
    })
}

fn serialize_fields(label: &ObjectLabel) -> String {
    format!(
        "{} {:.2} {} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2}",
        label.category,
        label.truncation,
        label.occlusion,
        label.alpha,
        label.box2d[0],
        label.box2d[1],
        label.box2d[2],
        label.box2d[3],
        label.dims[0],
        label.dims[1],
        label.dims[2],
        label.location[0],
        label.location[1],
        label.location[2],
        label.ry,
    )
}

/// 16-field detection line at 2-decimal precision; requires a score.
pub fn serialize_detection(label: &ObjectLabel) -> Result<String, KittiError> {
    let score = label.score.ok_or(KittiError::MissingScore)?;
    Ok(format!("{} {:.2}", serialize_fields(label), score))
}

/// 15-field ground-truth line at 2-decimal precision.
pub fn serialize_label(label: &ObjectLabel) -> String {
    serialize_fields(label)
}

/// Velodyne-style cloud: (x, y, z, reflectance) per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct PointCloud {
    pub points: Vec<[f32; 4]>,
}

/// Decode a `.bin` buffer: little-endian f32, 4 per point. Non-finite records
/// are rejected (dropped) after decoding.
pub fn read_point_cloud(bytes: &[u8]) -> Result<PointCloud, KittiError> {
    if bytes.len() % 16 != 0 {
        return Err(KittiError::TruncatedFile(bytes.len()));
    }
    let points = bytes
        .chunks_exact(16)
        .map(|c| {
            [
                LittleEndian::read_f32(&c[0..4]),
                LittleEndian::read_f32(&c[4..8]),
                LittleEndian::read_f32(&c[8..12]),
                LittleEndian::read_f32(&c[12..16]),
            ]
        })
        .filter(|p| p.iter().all(|v| v.is_finite()))
        .collect();
    Ok(PointCloud { points })
}

pub fn write_point_cloud(cloud: &PointCloud) -> Vec<u8> {
    let mut out = vec![0u8; cloud.points.len() * 16];
    for (i, p) in cloud.points.iter().enumerate() {
        for (j, v) in p.iter().enumerate() {
            LittleEndian::write_f32(&mut out[i * 16 + j * 4..i * 16 + j * 4 + 4], *v);
        }
    }
    out
}
