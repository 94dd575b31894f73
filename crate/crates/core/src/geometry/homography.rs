//! Semi-generalized homography `(G, m)`: linear constraints, composition from
//! a pose and decomposition back into poses.

use nalgebra::{Matrix3, SMatrix, Vector3};

use super::{PlaneVector, ReducedMatch};
use crate::error::{Error, Result};
use crate::linalg::{complement_basis, nearest_rotation, singular_values_3x3, skew};

/// `G = R·diag(w, w, 1) − t·mᵀ` together with `m = diag(w, w, 1)·ñ` and `w = 1/f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemiHomography {
    pub g: Matrix3<f64>,
    pub m: Vector3<f64>,
    /// Inverse focal length; 1 in calibrated mode.
    pub w: f64,
}

impl SemiHomography {
    fn k(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(1.0 / self.w, 1.0 / self.w, 1.0))
    }

    /// The plane-induced homography `H = G·K = R − t·ñᵀ`.
    pub fn homography(&self) -> Matrix3<f64> {
        self.g * self.k()
    }

    /// The plane vector `ñ = K·m` in the pinhole frame.
    pub fn plane(&self) -> Vector3<f64> {
        self.k() * self.m
    }

    /// The twelve unknowns `(G row-major, m)`.
    pub fn to_vector(&self) -> [f64; 12] {
        let mut v = [0.0; 12];
        for r in 0..3 {
            for c in 0..3 {
                v[3 * r + c] = self.g[(r, c)];
            }
        }
        v[9..].copy_from_slice(self.m.as_slice());
        v
    }
}

/// The three rows of `[q]ₓ(G·p + (mᵀp)·c) = 0` over the unknowns
/// `(G row-major, m)`. Only two of them are linearly independent.
pub fn build_constraint_rows(m: &ReducedMatch) -> SMatrix<f64, 3, 12> {
    let s = skew(&m.q);
    let sc = s * m.center;
    SMatrix::<f64, 3, 12>::from_fn(|k, j| {
        if j < 9 {
            s[(k, j / 3)] * m.p[j % 3]
        } else {
            sc[k] * m.p[j - 9]
        }
    })
}

/// Two independent rows of the same constraint, obtained by projecting onto
/// an orthonormal basis of the plane orthogonal to `q`.
pub(crate) fn independent_constraint_rows(m: &ReducedMatch) -> SMatrix<f64, 2, 12> {
    let (u1, u2) = complement_basis(&m.q);
    SMatrix::<f64, 2, 12>::from_fn(|k, j| {
        let u = if k == 0 { &u1 } else { &u2 };
        if j < 9 {
            u[j / 3] * m.p[j % 3]
        } else {
            u.dot(&m.center) * m.p[j - 9]
        }
    })
}

/// Builds `(G, m)` from a pose, a plane in the pinhole frame and an optional
/// focal length.
pub fn compose_g(
    rotation: &Matrix3<f64>,
    translation: &Vector3<f64>,
    plane: &PlaneVector,
    focal: Option<f64>,
) -> Result<SemiHomography> {
    let w = match focal {
        Some(f) if f > 0.0 => 1.0 / f,
        Some(f) => return Err(Error::InvalidFocal(f)),
        None => 1.0,
    };
    let k_inv = Matrix3::from_diagonal(&Vector3::new(w, w, 1.0));
    let m = k_inv * plane.0;
    Ok(SemiHomography {
        g: rotation * k_inv - translation * m.transpose(),
        m,
        w,
    })
}

/// One factorization `H = R − t·ñᵀ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub plane: PlaneVector,
}

/// Factors `H = G·K` as `R − t·ñᵀ` using the known plane vector `ñ = K·m`.
///
/// `G` restricted to the plane orthogonal to `ñ` acts as `R`, so the rotation
/// is the orthogonal Procrustes fit on that plane (with det = +1) and the
/// translation follows from `(R − H)·ñ = t·|ñ|²`. Both sign classes
/// `(H, ñ)` and `(−H, −ñ)` are returned; cheirality picks between them.
pub fn decompose_homography(sh: &SemiHomography) -> Result<Vec<Decomposition>> {
    let h = sh.homography();
    let plane = sh.plane();
    let sv = singular_values_3x3(&h);
    if !(sv[1] > 1e-12 * sv[0]) {
        return Err(Error::DegenerateHomography);
    }
    let mut out = Vec::with_capacity(2);
    for sign in [1.0, -1.0] {
        let hs = h * sign;
        let ns = plane * sign;
        let norm2 = ns.norm_squared();
        if norm2 < 1e-28 {
            out.push(Decomposition {
                rotation: nearest_rotation(&hs),
                translation: Vector3::zeros(),
                plane: PlaneVector(ns),
            });
            continue;
        }
        let (u1, u2) = complement_basis(&ns);
        let cross_cov = hs * u1 * u1.transpose() + hs * u2 * u2.transpose();
        let rotation = nearest_rotation(&cross_cov);
        let translation = (rotation - hs) * ns / norm2;
        out.push(Decomposition {
            rotation,
            translation,
            plane: PlaneVector(ns),
        });
    }
    Ok(out)
}

/// Classical singular-value factorization of a homography known only up to
/// scale and sign.
///
/// The input is normalized so that its middle singular value is 1. Each sign
/// yields two factors `(R, t, n)` with unit `n`; only the product `t·nᵀ` is
/// metric, the split between `t` and `n` (including its sign) is left to
/// the caller.
pub fn decompose_up_to_scale(h: &Matrix3<f64>) -> Result<Vec<Decomposition>> {
    let sv = singular_values_3x3(h);
    if !(sv[1] > 1e-12 * sv[0]) {
        return Err(Error::DegenerateHomography);
    }
    let hn = h / sv[1];
    let mut out = Vec::with_capacity(4);
    for sign in [1.0, -1.0] {
        let hs = hn * sign;
        let svd = hs.svd(false, true);
        let v_t = svd.v_t.expect("requested V^T");
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let s1 = svd.singular_values[order[0]].powi(2);
        let s3 = svd.singular_values[order[2]].powi(2);
        let v1: Vector3<f64> = v_t.row(order[0]).transpose();
        let v2: Vector3<f64> = v_t.row(order[1]).transpose();
        let v3: Vector3<f64> = v_t.row(order[2]).transpose();
        if s1 - s3 < 1e-12 {
            out.push(Decomposition {
                rotation: nearest_rotation(&hs),
                translation: Vector3::zeros(),
                plane: PlaneVector(v3),
            });
            continue;
        }
        let a = (1.0 - s3).max(0.0).sqrt();
        let b = (s1 - 1.0).max(0.0).sqrt();
        let c = (s1 - s3).sqrt();
        for u in [(a * v1 + b * v3) / c, (a * v1 - b * v3) / c] {
            let basis = Matrix3::from_columns(&[v2, u, v2.cross(&u)]);
            let hv2 = hs * v2;
            let hu = hs * u;
            let image = Matrix3::from_columns(&[hv2, hu, hv2.cross(&hu)]);
            let rotation = nearest_rotation(&(image * basis.transpose()));
            let normal = v2.cross(&u);
            let translation = (rotation - hs) * normal;
            out.push(Decomposition {
                rotation,
                translation,
                plane: PlaneVector(normal),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rotation_angle;
    use crate::testutil::random_rotation;
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_plane(rng: &mut impl Rng) -> PlaneVector {
        PlaneVector(Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5)))
    }

    #[test]
    fn compose_examples() {
        let r = *Rotation3::from_euler_angles(0.1, 0.2, 0.3).matrix();
        let n = PlaneVector(Vector3::new(0.1, -0.2, -0.05));
        let sh = compose_g(&r, &Vector3::zeros(), &n, None).unwrap();
        assert_eq!(sh.g, r);
        assert_eq!(sh.m, n.0);

        let sh = compose_g(
            &Matrix3::identity(),
            &Vector3::new(0.0, 0.0, 1.0),
            &PlaneVector(Vector3::new(0.0, 0.0, -1.0)),
            None,
        )
        .unwrap();
        assert_eq!(sh.g, Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 2.0)));
        assert_eq!(
            compose_g(&r, &Vector3::zeros(), &n, Some(-1.0)),
            Err(Error::InvalidFocal(-1.0))
        );
    }

    #[test]
    fn constraint_rows_vanish_on_composed_homography() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..500 {
            let r = random_rotation(&mut rng);
            let t = Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0));
            let plane = random_plane(&mut rng);
            let focal = (trial % 2 == 0).then(|| rng.random_range(0.5..3.0));
            let sh = compose_g(&r, &t, &plane, focal).unwrap();
            let w = sh.w;
            let k_inv = Matrix3::from_diagonal(&Vector3::new(w, w, 1.0));
            // A pinhole pixel on the plane, seen from an arbitrary rig camera.
            let p = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0);
            let ray = k_inv * p;
            let alpha = -1.0 / plane.0.dot(&ray);
            let x = r * (alpha * ray) + t;
            let center = Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0));
            let m = ReducedMatch {
                p,
                q: x - center,
                center,
                cam_index: 1,
            };
            let v = nalgebra::SVector::<f64, 12>::from_row_slice(&sh.to_vector());
            let rows = build_constraint_rows(&m);
            let scale = rows.abs().max() * v.abs().max();
            assert!((rows * v).amax() <= 1e-10 * scale.max(1.0));
            assert!((independent_constraint_rows(&m) * v).amax() <= 1e-10 * scale.max(1.0));
        }
    }

    #[test]
    fn zero_center_leaves_plane_block_empty() {
        let m = ReducedMatch {
            p: Vector3::new(0.2, 0.1, 1.0),
            q: Vector3::new(-0.3, 0.4, 1.0),
            center: Vector3::zeros(),
            cam_index: 0,
        };
        let rows = build_constraint_rows(&m);
        assert!(rows.columns(9, 3).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn constraint_rows_have_rank_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..1000 {
            let m = ReducedMatch {
                p: Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
                q: Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
                center: Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
                cam_index: 0,
            };
            let sv = build_constraint_rows(&m).singular_values();
            let mut s: Vec<f64> = sv.iter().copied().collect();
            s.sort_by(|a, b| b.total_cmp(a));
            assert!(s[1] > 1e-8 * s[0]);
            assert!(s[2] <= 1e-12 * s[0]);
        }
    }

    #[test]
    fn decompose_identity_uses_supplied_plane() {
        let sh = SemiHomography {
            g: Matrix3::identity(),
            m: Vector3::new(0.1, 0.2, -0.3),
            w: 1.0,
        };
        let d = decompose_homography(&sh).unwrap();
        assert!((d[0].rotation - Matrix3::identity()).amax() < 1e-14);
        assert!(d[0].translation.norm() < 1e-14);
        assert_eq!(d[0].plane.0, sh.m);
    }

    #[test]
    fn decompose_inverts_compose_example() {
        let sh = SemiHomography {
            g: Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 2.0)),
            m: Vector3::new(0.0, 0.0, -1.0),
            w: 1.0,
        };
        let d = decompose_homography(&sh).unwrap();
        assert!(d.iter().any(|d| (d.rotation - Matrix3::identity()).amax() < 1e-14
            && (d.translation - Vector3::z()).amax() < 1e-14
            && d.plane.0 == Vector3::new(0.0, 0.0, -1.0)));
    }

    #[test]
    fn decompose_rejects_rank_one() {
        let sh = SemiHomography {
            g: Vector3::new(1.0, 2.0, 3.0) * Vector3::new(0.0, 1.0, 0.0).transpose(),
            m: Vector3::z(),
            w: 1.0,
        };
        assert_eq!(decompose_homography(&sh), Err(Error::DegenerateHomography));
    }

    #[test]
    fn decompose_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for trial in 0..1000 {
            let r = random_rotation(&mut rng);
            let t = Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0));
            let plane = random_plane(&mut rng);
            let focal = (trial % 2 == 1).then(|| rng.random_range(0.5..3.0));
            let sh = compose_g(&r, &t, &plane, focal).unwrap();
            let found = decompose_homography(&sh).unwrap();
            let best = found
                .iter()
                .map(|d| rotation_angle(&(r.transpose() * d.rotation)).to_degrees())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-8, "trial {trial}: rotation error {best}");
            let h = sh.homography();
            for d in &found {
                let lhs = d.rotation - d.translation * d.plane.0.transpose();
                let sign = if d.plane.0.dot(&plane.0) > 0.0 { 1.0 } else { -1.0 };
                assert!((lhs - sign * h).amax() < 1e-8 * h.amax().max(1.0));
            }
        }
    }

    #[test]
    fn classical_decomposition_contains_ground_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..500 {
            let r = random_rotation(&mut rng);
            let t = Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0));
            let plane = random_plane(&mut rng);
            let h = r - t * plane.0.transpose();
            let scale = rng.random_range(-5.0..5.0);
            let found = decompose_up_to_scale(&(h * scale)).unwrap();
            assert!(found.len() <= 4);
            let product = t * plane.0.transpose();
            assert!(found.iter().any(|d| {
                rotation_angle(&(r.transpose() * d.rotation)) < 1e-9
                    && (d.translation * d.plane.0.transpose() - product).amax()
                        < 1e-8 * product.amax().max(1.0)
            }));
        }
    }
}
