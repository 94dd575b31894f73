//! Small dense linear algebra used by the solvers: null spaces, reduced row
//! echelon form, 3×3 singular values and a few rotation helpers.

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, Vector3};

use crate::error::{Error, Result};

/// Singular values below this fraction of the largest one count as zero.
pub const NULLSPACE_GAP: f64 = 1e-6;

/// Pivots below this fraction of the largest matrix entry are treated as zero.
pub const PIVOT_TOL: f64 = 1e-12;

/// Orthonormal basis of the right null space of `c`.
///
/// The matrix is padded with zero rows to a square shape and decomposed by
/// SVD, so the basis is returned as the right singular vectors belonging to
/// the `expected_dim` smallest singular values. Fails with
/// [`Error::Degenerate`] when the numerical dimension differs from
/// `expected_dim`.
pub fn nullspace(c: &DMatrix<f64>, expected_dim: usize) -> Result<Vec<DVector<f64>>> {
    let (rows, cols) = c.shape();
    if expected_dim == 0 || expected_dim > cols {
        return Err(Error::Degenerate(format!(
            "cannot extract a {expected_dim}-dimensional null space from {cols} columns"
        )));
    }
    let mut padded = DMatrix::<f64>::zeros(rows.max(cols), cols);
    padded.view_mut((0, 0), (rows, cols)).copy_from(c);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma_max = svd.singular_values[order[0]];
    if sigma_max == 0.0 {
        return Err(Error::Degenerate("zero coefficient matrix".into()));
    }
    let numerical_dim = order
        .iter()
        .filter(|&&i| svd.singular_values[i] <= NULLSPACE_GAP * sigma_max)
        .count();
    if numerical_dim != expected_dim {
        return Err(Error::Degenerate(format!(
            "null space has dimension {numerical_dim}, expected {expected_dim}"
        )));
    }
    Ok(order[cols - expected_dim..]
        .iter()
        .map(|&i| v_t.row(i).transpose())
        .collect())
}

/// Reduced row echelon form with partial pivoting.
///
/// Returns the reduced matrix together with the pivot column of each row.
/// Fails with [`Error::RankDeficient`] when fewer pivots than rows are found.
pub fn gauss_jordan(c: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let mut a = c.clone();
    let (rows, cols) = a.shape();
    let scale = a.amax();
    if scale == 0.0 {
        return Err(Error::RankDeficient);
    }
    let tol = PIVOT_TOL * scale;
    let mut pivots = Vec::with_capacity(rows);
    let mut r = 0;
    for col in 0..cols {
        if r == rows {
            break;
        }
        let (best, value) = (r..rows)
            .map(|i| (i, a[(i, col)].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .expect("non-empty row range");
        if value < tol {
            continue;
        }
        a.swap_rows(r, best);
        let p = a[(r, col)];
        for j in 0..cols {
            a[(r, j)] /= p;
        }
        for i in 0..rows {
            if i == r {
                continue;
            }
            let f = a[(i, col)];
            if f != 0.0 {
                for j in 0..cols {
                    a[(i, j)] -= f * a[(r, j)];
                }
            }
        }
        pivots.push(col);
        r += 1;
    }
    if pivots.len() < rows {
        return Err(Error::RankDeficient);
    }
    Ok((a, pivots))
}

/// Singular values of a 3×3 matrix in descending order.
pub fn singular_values_3x3(m: &Matrix3<f64>) -> [f64; 3] {
    let sv = m.svd(false, false).singular_values;
    let mut s = [sv[0], sv[1], sv[2]];
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Two unit vectors spanning the orthogonal complement of `v`.
pub fn complement_basis(v: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let n = v.normalize();
    let helper = if n.x.abs() < 0.6 {
        Vector3::x()
    } else if n.y.abs() < 0.6 {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let u1 = n.cross(&helper).normalize();
    let u2 = n.cross(&u1);
    (u1, u2)
}

/// Closest rotation (Frobenius norm) to `m`, with determinant +1.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let d = (u * v_t).determinant().signum();
    u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t
}

/// Rotation angle of `r` in radians, accurate for small angles.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let sin = 0.5
        * Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm();
    let cos = 0.5 * (r.trace() - 1.0);
    sin.atan2(cos)
}

/// Rotation taking the direction of `from` onto the direction of `to`.
///
/// Anti-parallel inputs use a half turn about the x-axis (or y-axis when the
/// vectors lie along x).
pub fn rotation_aligning(from: &Vector3<f64>, to: &Vector3<f64>) -> Matrix3<f64> {
    match Rotation3::rotation_between(from, to) {
        Some(r) => *r.matrix(),
        None => {
            let axis = if from.normalize().x.abs() > 0.9 {
                Vector3::y_axis()
            } else {
                Vector3::x_axis()
            };
            *Rotation3::from_axis_angle(&axis, std::f64::consts::PI).matrix()
        }
    }
}
