//! Solvers for a calibrated pinhole: sH5₂, sH5₃ and sH5₄.

use nalgebra::{DVector, Matrix3, Vector3};

use super::{
    affine_line, roots_along_line, stacked_rows, Diagnostics, Prepared, SolverId, SolverOptions,
    SolverOutput,
};
use crate::elim::{primed_to_matrix, primed_vector, shipped, Variant};
use crate::error::{Error, Result};
use crate::geometry::{
    cheirality_filter, decompose_homography, decompose_up_to_scale, depth_along_ray, Mode,
    PoseSolution, ReducedMatch, SemiHomography,
};
use crate::linalg::{nullspace, singular_values_3x3};

/// Unknown order of the reduced calibrated systems:
/// `[g11, g12, g21, g22, g31, g32, m1, m2, m3, g33]` as indices into `(G, m)`.
const REDUCED_COLUMNS: [usize; 10] = [0, 1, 3, 4, 6, 7, 9, 10, 11, 8];

/// Chart point `(G′ without g′₃₃, m′)` of a reduced vector with `g13 = g23 = 0`.
fn reduced_to_chart(b: &DVector<f64>) -> Vec<f64> {
    vec![b[0], b[1], 0.0, b[2], b[3], 0.0, b[4], b[5], b[6], b[7], b[8]]
}

/// `|g₃₃|` such that `g₃₃·G′` has unit middle singular value, checked
/// against the back-substitution generators when `back_tol` is set.
pub fn recover_scale_calibrated(
    g_prime: &Matrix3<f64>,
    m_prime: &Vector3<f64>,
    back_tol: Option<f64>,
) -> Result<f64> {
    let sv = singular_values_3x3(g_prime);
    if !(sv[1] > 1e-12 * sv[0]) {
        return Err(Error::Degenerate("G' has rank below 2".into()));
    }
    let g33 = 1.0 / sv[1];
    if let Some(tol) = back_tol {
        let mut x = primed_vector(g_prime, m_prime);
        x.push(g33);
        if shipped(Variant::CalBack).max_residual(&x) > tol {
            return Err(Error::InconsistentScale);
        }
    }
    Ok(g33)
}

/// Scale of a unit-norm translation fixed by a match from another camera:
/// `s = cᵀ[R·p]ₓq / tᵀ[R·p]ₓq`.
pub fn translation_scale(rotation: &Matrix3<f64>, translation: &Vector3<f64>, m: &ReducedMatch) -> Result<f64> {
    let v = (rotation * m.p).cross(&m.q);
    let num = m.center.dot(&v);
    let den = translation.dot(&v);
    if !(den.abs() > 1e-12 * num.abs()) {
        return Err(Error::ScaleDenominatorZero);
    }
    Ok(num / den)
}

/// Turns chart points on `I₂′` into poses: scale, residual filter,
/// decomposition and cheirality.
fn finish(
    prep: &Prepared,
    solver: SolverId,
    degree: usize,
    roots: &[f64],
    line: (&[f64], &[f64]),
    opts: &SolverOptions,
) -> Result<SolverOutput> {
    let mut diagnostics = Diagnostics {
        poly_degree: degree,
        n_real_roots: roots.len(),
        filtered_count: 0,
    };
    if roots.is_empty() {
        return Err(Error::NoRealRoots);
    }
    let mut candidates = Vec::new();
    for &gamma in roots {
        let x: Vec<f64> = line.0.iter().zip(line.1).map(|(a, b)| a + gamma * b).collect();
        let (g_prime, m_prime) = primed_to_matrix(&x);
        let Ok(g33) = recover_scale_calibrated(&g_prime, &m_prime, opts.back_tol) else {
            diagnostics.filtered_count += 1;
            continue;
        };
        let sh = SemiHomography {
            g: g_prime * g33,
            m: m_prime * g33,
            w: 1.0,
        };
        if let Some(tol) = opts.residual_tol {
            if shipped(Variant::CalI1).max_residual(&sh.to_vector()) > tol {
                diagnostics.filtered_count += 1;
                continue;
            }
        }
        let Ok(decs) = decompose_homography(&sh) else {
            diagnostics.filtered_count += 1;
            continue;
        };
        let poses: Vec<PoseSolution> = decs
            .into_iter()
            .map(|d| PoseSolution {
                rotation: d.rotation,
                translation: d.translation,
                plane: d.plane,
                focal: None,
            })
            .collect();
        let kept = cheirality_filter(poses, &prep.matches);
        if kept.is_empty() {
            diagnostics.filtered_count += 1;
        }
        candidates.extend(kept);
    }
    if candidates.is_empty() {
        return Err(Error::AllFiltered);
    }
    Ok(SolverOutput {
        solver,
        solutions: candidates.iter().map(|p| prep.restore(p)).collect(),
        diagnostics,
    })
}

/// Samples with at most two matches per camera: a quintic in one unknown.
pub fn solve_sh5_2(matches: &[ReducedMatch], opts: &SolverOptions) -> Result<SolverOutput> {
    let prep = Prepared::new(matches, Mode::Calibrated, Some(2))?;
    let c = stacked_rows(&prep.matches[1..], &REDUCED_COLUMNS);
    let basis = nullspace(&c, 2)?;
    let (b0, dir) = affine_line(&basis, 9)?;
    let (x0, xd) = (reduced_to_chart(&b0), reduced_to_chart(&dir));
    let (poly, roots) = roots_along_line(shipped(Variant::CalI2), &x0, &xd, 5)?;
    let degree = poly.degree().unwrap_or(0);
    finish(&prep, SolverId::SH5_2, degree, &roots, (&x0, &xd), opts)
}

/// Samples with three matches in one camera. The anchor rows fix `G′`, so
/// along the solution line only `m′` moves and the restriction is a cubic.
pub fn solve_sh5_3(matches: &[ReducedMatch], opts: &SolverOptions) -> Result<SolverOutput> {
    let prep = Prepared::new(matches, Mode::Calibrated, Some(3))?;
    let c = stacked_rows(&prep.matches[1..], &REDUCED_COLUMNS);
    let basis = nullspace(&c, 2)?;
    let (b0, dir) = affine_line(&basis, 9)?;
    let (x0, xd) = (reduced_to_chart(&b0), reduced_to_chart(&dir));
    let (poly, roots) = roots_along_line(shipped(Variant::CalI2), &x0, &xd, 3)?;
    let degree = poly.degree().unwrap_or(0);
    finish(&prep, SolverId::SH5_3, degree, &roots, (&x0, &xd), opts)
}

/// Angle-free residual of a match under a pose: sine of the angle between
/// the observed ray and the direction to the plane point.
fn ray_residual(pose: &PoseSolution, m: &ReducedMatch) -> f64 {
    let Ok(alpha) = depth_along_ray(&m.p, &pose.plane) else {
        return f64::INFINITY;
    };
    let d = pose.rotation * (alpha * m.p) + pose.translation - m.center;
    let denom = d.norm() * m.q.norm();
    if denom == 0.0 {
        return f64::INFINITY;
    }
    d.cross(&m.q).norm() / denom
}

/// Four matches in one camera: a homography from those four, with the metric
/// scale taken from the fifth.
///
/// Every factorization of the homography can be scaled to fit the fifth
/// match exactly, so when both physically valid factorizations pass the
/// cheirality checks both are returned, ordered by fifth-match residual.
pub fn solve_sh5_4(matches: &[ReducedMatch], _opts: &SolverOptions) -> Result<SolverOutput> {
    let prep = Prepared::new(matches, Mode::Calibrated, Some(4))?;
    let columns: Vec<usize> = (0..9).collect();
    let c = stacked_rows(&prep.matches[..4], &columns);
    let h = nullspace(&c, 1)?.remove(0);
    let h = Matrix3::from_row_slice(h.as_slice());
    let decs = decompose_up_to_scale(&h)?;
    let fifth = &prep.matches[4];
    let mut diagnostics = Diagnostics {
        poly_degree: 0,
        n_real_roots: decs.len(),
        filtered_count: 0,
    };
    let mut poses = Vec::new();
    for d in decs {
        let Ok(s) = translation_scale(&d.rotation, &d.translation, fifth) else {
            diagnostics.filtered_count += 1;
            continue;
        };
        poses.push(PoseSolution {
            rotation: d.rotation,
            translation: d.translation * s,
            plane: crate::geometry::PlaneVector(d.plane.0 / s),
            focal: None,
        });
    }
    let n_before = poses.len();
    let mut kept: Vec<(f64, PoseSolution)> = cheirality_filter(poses, &prep.matches)
        .into_iter()
        .map(|p| (ray_residual(&p, fifth), p))
        .collect();
    diagnostics.filtered_count += n_before - kept.len();
    if kept.is_empty() {
        return Err(Error::AllFiltered);
    }
    kept.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(SolverOutput {
        solver: SolverId::SH5_4,
        solutions: kept.iter().map(|(_, p)| prep.restore(p)).collect(),
        diagnostics,
    })
}
