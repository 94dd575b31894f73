//! Cameras, correspondences and the frames they live in.
//!
//! Conventions: a camera pose `(R, t)` maps local coordinates to the parent
//! frame, `X_parent = R·X_local + t`. The generalized camera's frame is the
//! frame of its anchor camera. A pinhole pose `(R, t)` therefore places the
//! pinhole centre at `t` in that frame.

mod homography;
mod metrics;

pub use homography::{
    build_constraint_rows, compose_g, decompose_homography, decompose_up_to_scale,
    Decomposition, SemiHomography,
};
pub(crate) use homography::independent_constraint_rows;
pub use metrics::{cheirality_filter, pose_errors, transfer_error, transfer_residual, PoseErrors};

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::rotation_aligning;

const ORTHONORMAL_TOL: f64 = 1e-12;

/// Whether the pinhole intrinsics are known or only `K = diag(f, f, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Calibrated,
    Focal,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Calibrated => write!(f, "calibrated"),
            Mode::Focal => write!(f, "focal"),
        }
    }
}

/// Rigid transform, `x_parent = rotation·x_local + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }

    /// Re-expresses a pinhole pose given in the local frame in the parent frame.
    pub fn transform_pose(&self, pose: &PoseSolution) -> PoseSolution {
        PoseSolution {
            rotation: self.rotation * pose.rotation,
            translation: self.apply(&pose.translation),
            ..pose.clone()
        }
    }

    /// Re-expresses a reduced match given in the parent frame in the local frame.
    pub fn localize_match(&self, m: &ReducedMatch) -> ReducedMatch {
        let rt = self.rotation.transpose();
        ReducedMatch {
            q: rt * m.q,
            center: rt * (m.center - self.translation),
            ..m.clone()
        }
    }
}

/// A posed pinhole camera of the rig.
#[derive(Debug, Clone, PartialEq)]
pub struct PinholeCamera {
    intrinsics: Matrix3<f64>,
    intrinsics_inv: Matrix3<f64>,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl PinholeCamera {
    pub fn new(
        intrinsics: Matrix3<f64>,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        let intrinsics_inv = intrinsics
            .try_inverse()
            .filter(|k| k.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::InvalidCamera("singular intrinsics".into()))?;
        if intrinsics[(2, 0)] != 0.0 || intrinsics[(2, 1)] != 0.0 || intrinsics[(1, 0)] != 0.0 {
            return Err(Error::InvalidCamera("intrinsics must be upper triangular".into()));
        }
        check_rotation(&rotation)?;
        Ok(Self {
            intrinsics,
            intrinsics_inv,
            rotation,
            translation,
        })
    }

    pub fn with_focal(
        focal: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        if !(focal > 0.0) {
            return Err(Error::InvalidFocal(focal));
        }
        Self::new(
            Matrix3::from_diagonal(&Vector3::new(focal, focal, 1.0)),
            rotation,
            translation,
        )
    }

    pub fn intrinsics(&self) -> &Matrix3<f64> {
        &self.intrinsics
    }

    pub fn intrinsics_inv(&self) -> &Matrix3<f64> {
        &self.intrinsics_inv
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn pose(&self) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation,
            translation: self.translation,
        }
    }

    /// Pixel of a point given in the parent frame, `None` behind the camera.
    pub fn project(&self, x: &Vector3<f64>) -> Option<Vector2<f64>> {
        let local = self.rotation.transpose() * (x - self.translation);
        if local.z <= 0.0 {
            return None;
        }
        let h = self.intrinsics * local;
        Some(Vector2::new(h.x / h.z, h.y / h.z))
    }
}

fn check_rotation(r: &Matrix3<f64>) -> Result<()> {
    let err = (r.transpose() * r - Matrix3::identity()).amax();
    if !(err <= ORTHONORMAL_TOL) || r.determinant() <= 0.0 {
        return Err(Error::InvalidCamera("rotation is not in SO(3)".into()));
    }
    Ok(())
}

/// A rig of calibrated, posed pinhole cameras.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedCamera {
    cameras: Vec<PinholeCamera>,
}

impl GeneralizedCamera {
    pub fn new(cameras: Vec<PinholeCamera>) -> Result<Self> {
        if cameras.is_empty() {
            return Err(Error::InvalidCamera("a rig needs at least one camera".into()));
        }
        Ok(Self { cameras })
    }

    pub fn cameras(&self) -> &[PinholeCamera] {
        &self.cameras
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn camera(&self, index: usize) -> Result<&PinholeCamera> {
        self.cameras.get(index).ok_or(Error::CameraIndex {
            index,
            len: self.cameras.len(),
        })
    }

    pub fn is_anchored(&self) -> bool {
        let c = &self.cameras[0];
        c.rotation == Matrix3::identity() && c.translation == Vector3::zeros()
    }
}

/// Re-expresses the rig in the frame of camera `anchor`.
///
/// The returned transform maps anchored coordinates back to the original
/// frame, so `transform.transform_pose` lifts poses estimated in the anchored
/// frame back to the caller's frame.
pub fn anchor_frame(
    rig: &GeneralizedCamera,
    anchor: usize,
) -> Result<(GeneralizedCamera, RigidTransform)> {
    let transform = rig.camera(anchor)?.pose();
    let to_local = transform.inverse();
    let cameras = rig
        .cameras
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let (rotation, translation) = if i == anchor {
                (Matrix3::identity(), Vector3::zeros())
            } else {
                (to_local.rotation * c.rotation, to_local.apply(&c.translation))
            };
            PinholeCamera {
                rotation,
                translation,
                ..c.clone()
            }
        })
        .collect();
    Ok((GeneralizedCamera { cameras }, transform))
}

/// A pixel match between the pinhole image and one rig camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    /// Homogeneous pixel in the pinhole image, third coordinate 1.
    pub p: Vector3<f64>,
    /// Homogeneous pixel in the rig camera's image, third coordinate 1.
    pub g: Vector3<f64>,
    pub cam_index: usize,
}

impl Correspondence {
    pub fn new(p: Vector2<f64>, g: Vector2<f64>, cam_index: usize) -> Self {
        Self {
            p: p.push(1.0),
            g: g.push(1.0),
            cam_index,
        }
    }
}

/// A correspondence with the rig calibration folded in: the rig side becomes
/// the ray direction `q = R_i·K_i⁻¹·g` from centre `t_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedMatch {
    /// Normalized ray (calibrated) or centred pixel (focal) in the pinhole.
    pub p: Vector3<f64>,
    pub q: Vector3<f64>,
    pub center: Vector3<f64>,
    pub cam_index: usize,
}

/// Folds the rig calibration and the pinhole intrinsics into a match.
///
/// Calibrated mode requires `pinhole_k` and stores `K⁻¹·p`. Focal mode keeps
/// the pixel, only subtracting the principal point when `pinhole_k` is given.
pub fn reduce_match(
    corr: &Correspondence,
    rig: &GeneralizedCamera,
    mode: Mode,
    pinhole_k: Option<&Matrix3<f64>>,
) -> Result<ReducedMatch> {
    let cam = rig.camera(corr.cam_index)?;
    let q = cam.rotation * (cam.intrinsics_inv * corr.g);
    let p = match (mode, pinhole_k) {
        (Mode::Calibrated, Some(k)) => {
            let k_inv = k
                .try_inverse()
                .ok_or_else(|| Error::InvalidCamera("singular pinhole intrinsics".into()))?;
            k_inv * corr.p
        }
        (Mode::Calibrated, None) => {
            return Err(Error::InvalidCamera(
                "calibrated mode needs pinhole intrinsics".into(),
            ))
        }
        (Mode::Focal, Some(k)) => {
            Vector3::new(corr.p.x - k[(0, 2)], corr.p.y - k[(1, 2)], corr.p.z)
        }
        (Mode::Focal, None) => corr.p,
    };
    Ok(ReducedMatch {
        p,
        q,
        center: cam.translation,
        cam_index: corr.cam_index,
    })
}

/// Plane `ñᵀX + 1 = 0` with `ñ = n/d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneVector(pub Vector3<f64>);

impl PlaneVector {
    /// Plane through `point` with unit `normal`; fails for planes through the origin.
    pub fn from_point_normal(point: &Vector3<f64>, normal: &Vector3<f64>) -> Result<Self> {
        let d = -normal.dot(point);
        if d.abs() < 1e-14 {
            return Err(Error::Degenerate("plane passes through the origin".into()));
        }
        Ok(Self(normal / d))
    }

    /// Same plane expressed in the parent frame of `transform`.
    pub fn to_parent(&self, transform: &RigidTransform) -> Result<Self> {
        let n_parent = transform.rotation * self.0;
        let denom = 1.0 - n_parent.dot(&transform.translation);
        if denom.abs() < 1e-14 {
            return Err(Error::Degenerate("plane passes through the origin".into()));
        }
        Ok(Self(n_parent / denom))
    }
}

/// Depth α of the pixel ray `K⁻¹·p` where it meets the plane.
pub fn depth_from_plane(p: &Vector3<f64>, plane: &PlaneVector, k: &Matrix3<f64>) -> Result<f64> {
    let ray = k
        .try_inverse()
        .ok_or_else(|| Error::InvalidCamera("singular intrinsics".into()))?
        * p;
    depth_along_ray(&ray, plane)
}

pub(crate) fn depth_along_ray(ray: &Vector3<f64>, plane: &PlaneVector) -> Result<f64> {
    let denom = plane.0.dot(ray);
    if denom.abs() < 1e-14 {
        return Err(Error::RayParallelToPlane);
    }
    Ok(-1.0 / denom)
}

/// A pinhole pose candidate expressed in the rig frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSolution {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    /// Scene plane in the pinhole's local frame.
    pub plane: PlaneVector,
    pub focal: Option<f64>,
}

impl PoseSolution {
    /// Pinhole intrinsics for this candidate: `base` with its focal entries
    /// replaced when the candidate carries a focal length.
    pub fn intrinsics(&self, base: &Matrix3<f64>) -> Matrix3<f64> {
        let mut k = *base;
        if let Some(f) = self.focal {
            k[(0, 0)] = f;
            k[(1, 1)] = f;
        }
        k
    }

    /// Pinhole centre in the rig frame.
    pub fn center(&self) -> Vector3<f64> {
        self.translation
    }
}

/// Rotations applied by [`prerotate`] to the pinhole and rig sides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prerotation {
    pub pinhole: Matrix3<f64>,
    pub rig: Matrix3<f64>,
}

impl Prerotation {
    /// Maps a pose found for the rotated matches back to the input frames.
    pub fn restore(&self, pose: &PoseSolution) -> PoseSolution {
        PoseSolution {
            rotation: self.rig.transpose() * pose.rotation * self.pinhole,
            translation: self.rig.transpose() * pose.translation,
            plane: PlaneVector(self.pinhole.transpose() * pose.plane.0),
            focal: pose.focal,
        }
    }
}

/// Rotates the frames so that the first match looks down the optical axis.
///
/// In calibrated mode both `p₁` and `q₁` are aligned with `[0, 0, 1]`. In
/// focal mode only the rig side is rotated, since a general rotation of the
/// pinhole image does not commute with `K = diag(f, f, 1)`.
pub fn prerotate(matches: &[ReducedMatch], mode: Mode) -> (Prerotation, Vec<ReducedMatch>) {
    let first = &matches[0];
    let pinhole = match mode {
        Mode::Calibrated => rotation_aligning(&first.p, &Vector3::z()),
        Mode::Focal => Matrix3::identity(),
    };
    let rig = rotation_aligning(&first.q, &Vector3::z());
    let rotated = matches
        .iter()
        .map(|m| ReducedMatch {
            p: pinhole * m.p,
            q: rig * m.q,
            center: rig * m.center,
            cam_index: m.cam_index,
        })
        .collect();
    (Prerotation { pinhole, rig }, rotated)
}
