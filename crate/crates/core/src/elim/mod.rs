//! Elimination-ideal generators: loading, evaluation, restriction to affine
//! lines and the vanishing check.

mod table;

pub use table::{
    checksum, load_table, parse_table, shipped, GeneratorTable, SparsePoly, TableSource, Term,
    Variant, GM_VARS, PRIMED_VARS,
};

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{compose_g, PlaneVector, SemiHomography};
use crate::poly::UnivariatePoly;

/// Default tolerance of [`residual_filter`] on noise-free data.
pub const FILTER_TOL: f64 = 1e-6;
/// Bound on the residual of valid samples in [`verify_vanishing`].
pub const VALID_TOL: f64 = 1e-9;
/// Bound below which an invalid sample counts as vanishing.
pub const INVALID_TOL: f64 = 1e-3;

/// Variable values of `variant` for a semi-homography, `None` when the
/// table uses the `g₃₃ = 1` chart and `g₃₃` vanishes.
pub fn assignment(variant: Variant, sh: &SemiHomography) -> Option<Vec<f64>> {
    let full = sh.to_vector();
    match variant {
        Variant::CalI1 | Variant::FocI1 => Some(full.to_vec()),
        _ => {
            let g33 = full[8];
            if g33 == 0.0 {
                return None;
            }
            let mut x: Vec<f64> = full
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != 8)
                .map(|(_, v)| v / g33)
                .collect();
            match variant {
                Variant::CalBack => x.push(g33),
                Variant::FocBack => x.extend([g33, sh.w]),
                _ => {}
            }
            Some(x)
        }
    }
}

/// Chart variables `(G′ without g′₃₃, m′)` of an 11-vector, read back as
/// `(G′, m′)` with `g′₃₃ = 1`.
pub fn primed_to_matrix(x: &[f64]) -> (Matrix3<f64>, Vector3<f64>) {
    let g = Matrix3::new(x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7], 1.0);
    (g, Vector3::new(x[8], x[9], x[10]))
}

/// Chart variables of `(G′, m′)`; `g′₃₃` is dropped.
pub fn primed_vector(g: &Matrix3<f64>, m: &Vector3<f64>) -> Vec<f64> {
    let mut x: Vec<f64> = (0..8).map(|i| g[(i / 3, i % 3)]).collect();
    x.extend(m.iter());
    x
}

fn chebyshev_nodes(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| ((2 * k + 1) as f64 * std::f64::consts::PI / (2 * n) as f64).cos())
        .collect()
}

/// Restricts `poly` to the line `x(γ) = b0 + γ·b1` by interpolation at
/// `poly.degree() + 1` Chebyshev nodes.
pub fn specialize_univariate(poly: &SparsePoly, b0: &[f64], b1: &[f64]) -> UnivariatePoly {
    specialize_with_degree(poly, b0, b1, poly.degree())
}

/// As [`specialize_univariate`], with a known bound on the degree in `γ`.
pub fn specialize_with_degree(
    poly: &SparsePoly,
    b0: &[f64],
    b1: &[f64],
    degree: usize,
) -> UnivariatePoly {
    let nodes = chebyshev_nodes(degree + 1);
    let mut x = vec![0.0; b0.len()];
    let values = DVector::from_iterator(
        nodes.len(),
        nodes.iter().map(|&g| {
            for (xi, (a, b)) in x.iter_mut().zip(b0.iter().zip(b1)) {
                *xi = a + g * b;
            }
            poly.evaluate(&x)
        }),
    );
    let vander = DMatrix::from_fn(nodes.len(), nodes.len(), |i, j| nodes[i].powi(j as i32));
    let coeffs = vander
        .lu()
        .solve(&values)
        .expect("Chebyshev Vandermonde matrix is invertible");
    UnivariatePoly::new(coeffs.iter().copied().collect())
}

/// Keeps the candidates whose largest normalized generator residual is at
/// most `tol`.
pub fn residual_filter(candidates: &[Vec<f64>], table: &GeneratorTable, tol: f64) -> Vec<Vec<f64>> {
    candidates
        .iter()
        .filter(|x| table.max_residual(x) <= tol)
        .cloned()
        .collect()
}

/// Extremes of the generator residuals over valid and invalid samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VanishingReport {
    pub n_samples: usize,
    pub max_valid_residual: f64,
    pub min_invalid_residual: f64,
    /// Set when no samples were drawn, so the check passed vacuously.
    pub vacuous: bool,
}

/// A valid semi-homography with a random pose, plane and (for focal tables)
/// focal length in `[0.5, 3]`.
pub fn random_valid_homography(focal: bool, rng: &mut impl Rng) -> SemiHomography {
    loop {
        let axis = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let r = nalgebra::Rotation3::new(axis * rng.random_range(0.0..std::f64::consts::PI));
        let t = Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0));
        let n = PlaneVector(Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)));
        let f = focal.then(|| rng.random_range(0.5..3.0));
        let sh = compose_g(r.matrix(), &t, &n, f).expect("positive focal");
        if sh.g[(2, 2)].abs() > 1e-3 {
            return sh;
        }
    }
}

/// A semi-homography that is off the variety: the rotation is replaced by a
/// matrix with distinct singular values (and, for the calibrated tables,
/// uniform scaling is not enough to fix it).
fn random_invalid_homography(focal: bool, rng: &mut impl Rng) -> SemiHomography {
    let mut sh = random_valid_homography(focal, rng);
    let distort = Matrix3::from_diagonal(&Vector3::new(
        rng.random_range(0.5..0.8),
        rng.random_range(1.25..2.0),
        1.0,
    ));
    let axis = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let u = nalgebra::Rotation3::new(axis);
    sh.g = sh.g + (u.matrix() * distort * u.matrix().transpose() - Matrix3::identity()) * sh.g;
    sh
}

fn is_focal(variant: Variant) -> bool {
    matches!(variant, Variant::FocI1 | Variant::FocI2 | Variant::FocBack)
}

/// Evaluates every generator on `n_samples` valid and invalid samples.
///
/// Fails with [`Error::ValidationFailed`] when a valid sample leaves a
/// residual above [`VALID_TOL`] or an invalid sample falls below
/// [`INVALID_TOL`].
pub fn verify_vanishing(table: &GeneratorTable, n_samples: usize, seed: u64) -> Result<VanishingReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let focal = is_focal(table.variant);
    let mut max_valid: f64 = 0.0;
    let mut min_invalid = f64::INFINITY;
    for _ in 0..n_samples {
        let valid = random_valid_homography(focal, &mut rng);
        let x = assignment(table.variant, &valid).expect("g33 bounded away from zero");
        max_valid = max_valid.max(table.max_residual(&x));

        let invalid = random_invalid_homography(focal, &mut rng);
        if let Some(x) = assignment(table.variant, &invalid) {
            min_invalid = min_invalid.min(table.max_residual(&x));
        }
    }
    if n_samples == 0 {
        log::warn!("verify_vanishing on {} with zero samples passes vacuously", table.variant);
    }
    let report = VanishingReport {
        n_samples,
        max_valid_residual: max_valid,
        min_invalid_residual: min_invalid,
        vacuous: n_samples == 0,
    };
    if max_valid > VALID_TOL || min_invalid < INVALID_TOL {
        return Err(Error::ValidationFailed {
            max_valid,
            min_invalid,
        });
    }
    Ok(report)
}
