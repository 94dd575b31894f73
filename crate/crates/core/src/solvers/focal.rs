//! Solvers for a pinhole with unknown focal length: sH5f₂ and sH5f₃.

use nalgebra::{DVector, Matrix3, Matrix3x2, Vector3};

use super::{
    affine_line, roots_along_line, stacked_rows, Diagnostics, Prepared, SolverId, SolverOptions,
    SolverOutput,
};
use crate::elim::{primed_to_matrix, primed_vector, shipped, Variant};
use crate::error::{Error, Result};
use crate::geometry::{
    cheirality_filter, decompose_homography, Mode, PoseSolution, ReducedMatch, SemiHomography,
};
use crate::linalg::{complement_basis, nullspace};

/// Unknown order of the focal systems: `G` without `g33`, then `m`, then `g33`.
const FOCAL_COLUMNS: [usize; 12] = [0, 1, 2, 3, 4, 5, 6, 7, 9, 10, 11, 8];

/// `(g₃₃, w)` for a chart point `(G′, m′)`.
///
/// On `m′^⊥` the matrix `g₃₃·G′` acts as `R·diag(w, w, 1)`, so with `V` a
/// basis of `m′^⊥` and `a = Vᵀe₃`,
/// `g₃₃²·VᵀG′ᵀG′V = w²·(I − aaᵀ) + aaᵀ`. The three distinct entries are
/// solved for `(g₃₃², w²)` in the least-squares sense.
pub fn recover_scale_focal(
    g_prime: &Matrix3<f64>,
    m_prime: &Vector3<f64>,
    back_tol: Option<f64>,
) -> Result<(f64, f64)> {
    if !(m_prime.norm() > 1e-12) {
        return Err(Error::Degenerate("plane vector vanishes".into()));
    }
    let (v1, v2) = complement_basis(m_prime);
    let gv1 = g_prime * v1;
    let gv2 = g_prime * v2;
    let m = [gv1.dot(&gv1), gv1.dot(&gv2), gv2.dot(&gv2)];
    let a = [v1.z, v2.z];
    let aa = [a[0] * a[0], a[0] * a[1], a[1] * a[1]];
    let id = [1.0, 0.0, 1.0];
    let lhs = Matrix3x2::from_fn(|i, j| if j == 0 { m[i] } else { aa[i] - id[i] });
    let rhs = Vector3::from(aa);
    let svd = lhs.svd(true, true);
    let (s_max, s_min) = (
        svd.singular_values.max(),
        svd.singular_values.min(),
    );
    if !(s_min > 1e-10 * s_max) {
        return Err(Error::Degenerate("focal length and scale are not separable".into()));
    }
    let sol = svd.solve(&rhs, 0.0).map_err(|_| Error::InconsistentScale)?;
    let (s, wq) = (sol[0], sol[1]);
    if !(wq > 0.0) {
        return Err(Error::NegativeFocal);
    }
    if !(s > 0.0) {
        return Err(Error::InconsistentScale);
    }
    let (g33, w) = (s.sqrt(), wq.sqrt());
    if let Some(tol) = back_tol {
        let mut x = primed_vector(g_prime, m_prime);
        x.extend([g33, w]);
        if shipped(Variant::FocBack).max_residual(&x) > tol {
            return Err(Error::InconsistentScale);
        }
    }
    Ok((g33, w))
}

/// Divides pixel coordinates by their mean distance to the principal point.
fn normalize_pixels(matches: &[ReducedMatch]) -> (f64, Vec<ReducedMatch>) {
    let mean = matches
        .iter()
        .map(|m| (m.p.x * m.p.x + m.p.y * m.p.y).sqrt() / m.p.z.abs().max(f64::MIN_POSITIVE))
        .sum::<f64>()
        / matches.len() as f64;
    let s = if mean > 1e-12 && mean.is_finite() { mean } else { 1.0 };
    let scaled = matches
        .iter()
        .map(|m| ReducedMatch {
            p: Vector3::new(m.p.x / s, m.p.y / s, m.p.z),
            ..m.clone()
        })
        .collect();
    (s, scaled)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    prep: &Prepared,
    scaled: &[ReducedMatch],
    pixel_scale: f64,
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
        let Ok((g33, w)) = recover_scale_focal(&g_prime, &m_prime, opts.back_tol) else {
            diagnostics.filtered_count += 1;
            continue;
        };
        let sh = SemiHomography {
            g: g_prime * g33,
            m: m_prime * g33,
            w,
        };
        if let Some(tol) = opts.residual_tol {
            if shipped(Variant::FocI1).max_residual(&sh.to_vector()) > tol {
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
                focal: Some(1.0 / w),
            })
            .collect();
        let kept = cheirality_filter(poses, scaled);
        if kept.is_empty() {
            diagnostics.filtered_count += 1;
        }
        candidates.extend(kept.into_iter().map(|mut p| {
            p.focal = p.focal.map(|f| f * pixel_scale);
            p
        }));
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

fn chart(b: &DVector<f64>) -> Vec<f64> {
    b.as_slice()[..11].to_vec()
}

/// Focal samples with at most two matches per camera: a quintic.
pub fn solve_sh5f_2(matches: &[ReducedMatch], opts: &SolverOptions) -> Result<SolverOutput> {
    let prep = Prepared::new(matches, Mode::Focal, Some(2))?;
    let (s, scaled) = normalize_pixels(&prep.matches);
    let c = stacked_rows(&scaled, &FOCAL_COLUMNS);
    let basis = nullspace(&c, 2)?;
    let (b0, dir) = affine_line(&basis, 11)?;
    let (x0, xd) = (chart(&b0), chart(&dir));
    let (poly, roots) = roots_along_line(shipped(Variant::FocI2), &x0, &xd, 5)?;
    let degree = poly.degree().unwrap_or(0);
    finish(&prep, &scaled, s, SolverId::SH5f2, degree, &roots, (&x0, &xd), opts)
}

/// Focal samples with three matches in one camera: a cubic.
pub fn solve_sh5f_3(matches: &[ReducedMatch], opts: &SolverOptions) -> Result<SolverOutput> {
    let prep = Prepared::new(matches, Mode::Focal, Some(3))?;
    let (s, scaled) = normalize_pixels(&prep.matches);
    let c = stacked_rows(&scaled, &FOCAL_COLUMNS);
    let basis = nullspace(&c, 2)?;
    let (b0, dir) = affine_line(&basis, 11)?;
    let (x0, xd) = (chart(&b0), chart(&dir));
    let (poly, roots) = roots_along_line(shipped(Variant::FocI2), &x0, &xd, 3)?;
    let degree = poly.degree().unwrap_or(0);
    finish(&prep, &scaled, s, SolverId::SH5f3, degree, &roots, (&x0, &xd), opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{compose_g, PlaneVector};
    use crate::solvers::solve_with;
    use crate::testutil::{closest, pattern_sample, random_rotation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scale_and_focal_of_true_homography() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        for _ in 0..200 {
            let r = random_rotation(&mut rng);
            let t = Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0));
            let n = PlaneVector(Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)));
            let f = rng.random_range(0.5..3.0);
            let sh = compose_g(&r, &t, &n, Some(f)).unwrap();
            let g33 = sh.g[(2, 2)];
            if g33.abs() < 1e-2 {
                continue;
            }
            let (s, w) = recover_scale_focal(&(sh.g / g33), &(sh.m / g33), Some(1e-8)).unwrap();
            assert!((s - g33.abs()).abs() < 1e-9 * g33.abs());
            assert!((w - 1.0 / f).abs() < 1e-9 / f);
        }
    }

    #[test]
    fn fronto_parallel_plane_is_degenerate() {
        let sh = compose_g(
            &Matrix3::identity(),
            &Vector3::new(0.3, -0.2, 1.0),
            &PlaneVector(Vector3::new(0.0, 0.0, -0.5)),
            Some(2.0),
        )
        .unwrap();
        let g33 = sh.g[(2, 2)];
        assert!(matches!(
            recover_scale_focal(&(sh.g / g33), &(sh.m / g33), None),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn negative_focal_is_rejected() {
        // Build G′ so that the fit is exact with g₃₃² = −1 and w² = −2.
        let m = Vector3::new(0.5, 0.0, 0.75f64.sqrt());
        let (v1, v2) = complement_basis(&m);
        let a = nalgebra::Vector2::new(v1.z, v2.z);
        let (s, wq) = (-1.0, -2.0);
        let target = ((nalgebra::Matrix2::identity() - a * a.transpose()) * wq + a * a.transpose()) / s;
        let l = target.cholesky().unwrap().l().transpose();
        let gv = nalgebra::Matrix3x2::new(l[(0, 0)], l[(0, 1)], l[(1, 0)], l[(1, 1)], 0.0, 0.0);
        let basis = Matrix3::from_columns(&[v1, v2, m.normalize()]);
        let image = Matrix3::from_columns(&[gv.column(0).into(), gv.column(1).into(), Vector3::z()]);
        let g = image * basis.transpose();
        assert_eq!(recover_scale_focal(&g, &m, None), Err(Error::NegativeFocal));
    }

    fn check_recovery(solver: SolverId) {
        let opts = SolverOptions::default();
        let mut solved = 0;
        for seed in 0..100 {
            let (matches, truth) = pattern_sample(solver, seed);
            let Ok(out) = solve_with(solver, &matches, &opts) else {
                continue;
            };
            assert!(out.solutions.len() <= solver.max_solutions());
            let e = closest(&out.solutions, &truth);
            let f = truth.focal.unwrap();
            assert!(
                e.rotation_deg < 1e-5 && e.position < 1e-5 && e.focal_px / f < 1e-6,
                "{solver} seed {seed}: {e:?}"
            );
            solved += 1;
        }
        assert!(solved >= 95, "{solver}: {solved}");
    }

    #[test]
    fn sh5f_2_recovers_truth() {
        check_recovery(SolverId::SH5f2);
    }

    #[test]
    fn sh5f_3_recovers_truth() {
        check_recovery(SolverId::SH5f3);
    }

    #[test]
    fn polynomial_degrees() {
        let opts = SolverOptions::noisy();
        for seed in 0..20 {
            let (m, _) = pattern_sample(SolverId::SH5f2, seed);
            assert_eq!(solve_sh5f_2(&m, &opts).unwrap().diagnostics.poly_degree, 5);
            let (m, _) = pattern_sample(SolverId::SH5f3, seed);
            assert_eq!(solve_sh5f_3(&m, &opts).unwrap().diagnostics.poly_degree, 3);
        }
    }

    #[test]
    fn focal_scales_with_pixels() {
        for seed in 0..10 {
            let (m, _) = pattern_sample(SolverId::SH5f2, seed);
            let opts = SolverOptions::default();
            let a = solve_sh5f_2(&m, &opts).unwrap().solutions;
            let scaled: Vec<ReducedMatch> = m
                .iter()
                .map(|x| ReducedMatch {
                    p: Vector3::new(3.0 * x.p.x, 3.0 * x.p.y, x.p.z),
                    ..x.clone()
                })
                .collect();
            let b = solve_sh5f_2(&scaled, &opts).unwrap().solutions;
            assert_eq!(a.len(), b.len());
            for s in &b {
                let back = PoseSolution {
                    focal: s.focal.map(|f| f / 3.0),
                    ..s.clone()
                };
                let e = closest(&a, &back);
                assert!(e.rotation_deg < 1e-6 && e.focal_px < 1e-6, "seed {seed}: {e:?}");
            }
        }
    }
}
