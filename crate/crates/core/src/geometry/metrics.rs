//! Cheirality, pose errors and reprojection through the plane.

use nalgebra::{Matrix3, Vector2, Vector3};

use super::{depth_along_ray, Correspondence, GeneralizedCamera, PoseSolution, ReducedMatch};
use crate::linalg::rotation_angle;

/// Ray of a reduced pinhole observation under a candidate's focal length.
fn pinhole_ray(sol: &PoseSolution, p: &Vector3<f64>) -> Vector3<f64> {
    match sol.focal {
        Some(f) => Vector3::new(p.x / f, p.y / f, p.z),
        None => *p,
    }
}

/// Depths `(α, β)` of a match in the pinhole and in its rig camera.
pub(crate) fn match_depths(sol: &PoseSolution, m: &ReducedMatch) -> Option<(f64, f64)> {
    let ray = pinhole_ray(sol, &m.p);
    let alpha = depth_along_ray(&ray, &sol.plane).ok()?;
    let x = sol.rotation * (alpha * ray) + sol.translation;
    let beta = m.q.dot(&(x - m.center)) / m.q.norm_squared();
    Some((alpha, beta))
}

/// Whether the rig camera of `m` is on the same side of the plane as the
/// pinhole, so that both can see its front face.
fn same_side_of_plane(sol: &PoseSolution, m: &ReducedMatch) -> bool {
    let local = sol.rotation.transpose() * (m.center - sol.translation);
    sol.plane.0.dot(&local) + 1.0 > 0.0
}

/// Keeps candidates that place every match in front of both the pinhole and
/// the rig camera observing it, with all cameras on the same side of the
/// plane.
pub fn cheirality_filter(solutions: Vec<PoseSolution>, matches: &[ReducedMatch]) -> Vec<PoseSolution> {
    solutions
        .into_iter()
        .filter(|sol| {
            matches.iter().all(|m| {
                matches!(match_depths(sol, m), Some((a, b)) if a > 0.0 && b > 0.0)
                    && same_side_of_plane(sol, m)
            })
        })
        .collect()
}

/// Errors of an estimate against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoseErrors {
    /// Axis-angle magnitude of `R_gtᵀ·R_est`, degrees.
    pub rotation_deg: f64,
    /// Angle between the translation vectors, degrees.
    pub translation_dir_deg: f64,
    /// Distance between the camera centres, scene units.
    pub position: f64,
    /// `|f_est − f_gt|` in pixels, 0 unless both carry a focal length.
    pub focal_px: f64,
}

fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    if a.norm() == 0.0 || b.norm() == 0.0 {
        return 0.0;
    }
    a.cross(b).norm().atan2(a.dot(b))
}

pub fn pose_errors(est: &PoseSolution, gt: &PoseSolution) -> PoseErrors {
    PoseErrors {
        rotation_deg: rotation_angle(&(gt.rotation.transpose() * est.rotation)).to_degrees(),
        translation_dir_deg: angle_between(&est.translation, &gt.translation).to_degrees(),
        position: (est.center() - gt.center()).norm(),
        focal_px: match (est.focal, gt.focal) {
            (Some(a), Some(b)) => (a - b).abs(),
            _ => 0.0,
        },
    }
}

/// Pixel offset from `corr.g` to the projection into its rig camera of the
/// plane point seen at `corr.p`. `None` when the point is behind either
/// camera or the ray misses the plane.
///
/// `pinhole_k` supplies the pinhole intrinsics; a candidate focal length
/// overrides its focal entries.
pub fn transfer_residual(
    sol: &PoseSolution,
    corr: &Correspondence,
    rig: &GeneralizedCamera,
    pinhole_k: &Matrix3<f64>,
) -> Option<Vector2<f64>> {
    let cam = rig.camera(corr.cam_index).ok()?;
    let k_inv = sol.intrinsics(pinhole_k).try_inverse()?;
    let ray = k_inv * corr.p;
    let alpha = depth_along_ray(&ray, &sol.plane).ok().filter(|&a| a > 0.0)?;
    let x = sol.rotation * (alpha * ray) + sol.translation;
    let pix = cam.project(&x)?;
    Some(pix - corr.g.xy() / corr.g.z)
}

/// Length of [`transfer_residual`], infinite when it is undefined.
pub fn transfer_error(
    sol: &PoseSolution,
    corr: &Correspondence,
    rig: &GeneralizedCamera,
    pinhole_k: &Matrix3<f64>,
) -> f64 {
    transfer_residual(sol, corr, rig, pinhole_k).map_or(f64::INFINITY, |r| r.norm())
}
