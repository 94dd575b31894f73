//! Camera (JSON) and match (CSV) files.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use sgh::geometry::{Correspondence, GeneralizedCamera, PinholeCamera};

use crate::CliError;

const QUATERNION_TOL: f64 = 1e-9;

/// Intrinsics given either as a focal length with an optional principal
/// point or as a full row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focal: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub principal_point: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<[f64; 9]>,
}

impl Intrinsics {
    pub fn from_matrix(k: &Matrix3<f64>) -> Self {
        let mut rows = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                rows[3 * r + c] = k[(r, c)];
            }
        }
        Self {
            focal: None,
            principal_point: None,
            k: Some(rows),
        }
    }

    pub fn matrix(&self, what: &str) -> Result<Matrix3<f64>, CliError> {
        match (self.k, self.focal) {
            (Some(k), None) => Ok(Matrix3::from_row_slice(&k)),
            (None, Some(f)) => {
                let [cx, cy] = self.principal_point.unwrap_or([0.0, 0.0]);
                Ok(Matrix3::new(f, 0.0, cx, 0.0, f, cy, 0.0, 0.0, 1.0))
            }
            _ => Err(CliError::Input(format!("{what}: give exactly one of `focal` and `k`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigCamera {
    pub id: u32,
    #[serde(flatten)]
    pub intrinsics: Intrinsics,
    /// Unit quaternion `[w, x, y, z]` of the camera-to-rig rotation.
    pub rotation: [f64; 4],
    /// Camera centre in the rig frame.
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraFile {
    /// Intrinsics of the pinhole. In focal mode only the principal point is
    /// used, and it may be omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pinhole: Option<Intrinsics>,
    pub cameras: Vec<RigCamera>,
}

/// A parsed camera file: the rig and the pinhole intrinsics.
pub struct Cameras {
    pub rig: GeneralizedCamera,
    pub pinhole_k: Option<Matrix3<f64>>,
    index_of: HashMap<u32, usize>,
}

impl Cameras {
    pub fn index(&self, id: u32) -> Option<usize> {
        self.index_of.get(&id).copied()
    }
}

pub fn quaternion_to_rotation(q: [f64; 4]) -> Result<Matrix3<f64>, String> {
    let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
    if (quat.norm() - 1.0).abs() > QUATERNION_TOL {
        return Err(format!("quaternion norm {} is not 1", quat.norm()));
    }
    Ok(*UnitQuaternion::from_quaternion(quat).to_rotation_matrix().matrix())
}

pub fn rotation_to_quaternion(r: &Matrix3<f64>) -> [f64; 4] {
    let q = UnitQuaternion::from_matrix(r);
    // Keep w non-negative so equal rotations print identically.
    let s = if q.w < 0.0 { -1.0 } else { 1.0 };
    [s * q.w, s * q.i, s * q.j, s * q.k]
}

impl CameraFile {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = read_text(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn build(&self) -> Result<Cameras, CliError> {
        let mut cams = Vec::with_capacity(self.cameras.len());
        let mut index_of = HashMap::new();
        for (i, c) in self.cameras.iter().enumerate() {
            let what = format!("camera {}", c.id);
            if index_of.insert(c.id, i).is_some() {
                return Err(CliError::Input(format!("duplicate camera id {}", c.id)));
            }
            let rotation = quaternion_to_rotation(c.rotation).map_err(|e| CliError::Input(format!("{what}: {e}")))?;
            let cam = PinholeCamera::new(c.intrinsics.matrix(&what)?, rotation, Vector3::from(c.translation))
                .map_err(|e| CliError::Input(format!("{what}: {e}")))?;
            cams.push(cam);
        }
        let rig = GeneralizedCamera::new(cams).map_err(|e| CliError::Input(e.to_string()))?;
        let pinhole_k = self.pinhole.as_ref().map(|p| p.matrix("pinhole")).transpose()?;
        Ok(Cameras {
            rig,
            pinhole_k,
            index_of,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchRow {
    pub p_x: f64,
    pub p_y: f64,
    pub cam_id: u32,
    pub g_x: f64,
    pub g_y: f64,
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Parses match rows from CSV text with a `p_x,p_y,cam_id,g_x,g_y` header.
pub fn parse_matches(text: &str, origin: &str) -> Result<Vec<MatchRow>, CliError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.deserialize::<MatchRow>() {
        let row = record.map_err(|e| CliError::Parse {
            path: origin.to_string(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_matches(path: &Path) -> Result<Vec<MatchRow>, CliError> {
    parse_matches(&read_text(path)?, &path.display().to_string())
}

/// Converts rows into correspondences, resolving camera ids.
pub fn correspondences(rows: &[MatchRow], cameras: &Cameras, origin: &str) -> Result<Vec<Correspondence>, CliError> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            let index = cameras.index(r.cam_id).ok_or_else(|| CliError::Parse {
                path: origin.to_string(),
                line: i + 2,
                message: format!("unknown camera id {}", r.cam_id),
            })?;
            Ok(Correspondence::new(Vector2::new(r.p_x, r.p_y), Vector2::new(r.g_x, r.g_y), index))
        })
        .collect()
}

pub fn write_matches(rows: &[MatchRow], path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}
