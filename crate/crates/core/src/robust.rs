//! LO-RANSAC over the five-point solvers with MSAC scoring.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, Vector3};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{
    reduce_match, transfer_error, transfer_residual, Correspondence, GeneralizedCamera, Mode,
    PlaneVector, PoseSolution, ReducedMatch,
};
use crate::solvers::{classify_sample, solve_with, SolverOptions};

/// Attempts at drawing a sample with a solvable camera pattern.
pub const MAX_SAMPLE_ATTEMPTS: usize = 100;
const LO_MAX_ITERATIONS: usize = 50;
const LO_GRADIENT_TOL: f64 = 1e-10;
const MIN_LO_INLIERS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    pub max_iterations: usize,
    /// Inlier threshold on the transfer error, pixels.
    pub threshold: f64,
    pub mode: Mode,
    /// Run exactly `max_iterations` instead of stopping adaptively.
    pub fixed_iterations: bool,
    pub confidence: f64,
    pub lo_enabled: bool,
    pub seed: u64,
    pub solver_options: SolverOptions,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            threshold: 2.0,
            mode: Mode::Calibrated,
            fixed_iterations: false,
            confidence: 0.999,
            lo_enabled: true,
            seed: 0,
            solver_options: SolverOptions::noisy(),
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) {
            return Err(Error::Degenerate(format!("threshold must be positive, got {}", self.threshold)));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::Degenerate(format!(
                "confidence must lie in (0, 1), got {}",
                self.confidence
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub best: PoseSolution,
    pub inlier_mask: Vec<bool>,
    /// Truncated quadratic cost of `best` over all matches.
    pub score: f64,
    pub iterations_run: usize,
    /// Wall-clock time in seconds; excluded from determinism comparisons.
    pub elapsed: f64,
    /// `(iteration, score)` each time the best model improved.
    pub history: Vec<(usize, f64)>,
}

impl RansacResult {
    pub fn n_inliers(&self) -> usize {
        self.inlier_mask.iter().filter(|&&b| b).count()
    }
}

/// Everything needed to evaluate a model on the matches.
struct Problem<'a> {
    correspondences: &'a [Correspondence],
    reduced: Vec<ReducedMatch>,
    rig: &'a GeneralizedCamera,
    pinhole_k: &'a Matrix3<f64>,
    mode: Mode,
}

/// Draws five distinct indices whose camera pattern some solver accepts.
pub fn sample(matches: &[ReducedMatch], mode: Mode, rng: &mut ChaCha8Rng) -> Result<[usize; 5]> {
    if matches.len() < 5 {
        return Err(Error::NotEnoughMatches(matches.len()));
    }
    for _ in 0..MAX_SAMPLE_ATTEMPTS {
        let idx = index::sample(rng, matches.len(), 5);
        let mut out = [0; 5];
        for (o, i) in out.iter_mut().zip(idx.iter()) {
            *o = i;
        }
        let picked: Vec<ReducedMatch> = out.iter().map(|&i| matches[i].clone()).collect();
        if classify_sample(&picked, mode).is_ok() {
            return Ok(out);
        }
    }
    Err(Error::NoSolvablePattern(MAX_SAMPLE_ATTEMPTS))
}

/// MSAC score: inlier mask and `Σ min(e², threshold²)`.
pub fn score(
    model: &PoseSolution,
    correspondences: &[Correspondence],
    rig: &GeneralizedCamera,
    pinhole_k: &Matrix3<f64>,
    threshold: f64,
) -> (Vec<bool>, f64) {
    let cap = threshold * threshold;
    let mut cost = 0.0;
    let mask = correspondences
        .iter()
        .map(|c| {
            let e = transfer_error(model, c, rig, pinhole_k);
            cost += (e * e).min(cap);
            e < threshold
        })
        .collect();
    (mask, cost)
}

/// Local parameterization of a model: rotation increment, translation,
/// plane vector and (focal mode) log focal length.
fn perturb(base: &PoseSolution, x: &DVector<f64>) -> PoseSolution {
    let w = Vector3::new(x[0], x[1], x[2]);
    PoseSolution {
        rotation: Rotation3::new(w).matrix() * base.rotation,
        translation: base.translation + Vector3::new(x[3], x[4], x[5]),
        plane: PlaneVector(base.plane.0 + Vector3::new(x[6], x[7], x[8])),
        focal: base.focal.map(|f| if x.len() > 9 { f * x[9].exp() } else { f }),
    }
}

fn residuals(model: &PoseSolution, matches: &[&Correspondence], p: &Problem) -> Option<DVector<f64>> {
    let mut r = DVector::zeros(2 * matches.len());
    for (i, c) in matches.iter().enumerate() {
        let d = transfer_residual(model, c, p.rig, p.pinhole_k)?;
        r[2 * i] = d.x;
        r[2 * i + 1] = d.y;
    }
    Some(r)
}

fn step_sizes(model: &PoseSolution, n_params: usize) -> Vec<f64> {
    let t = 1e-6 * model.translation.norm().max(1.0);
    let n = 1e-6 * model.plane.0.norm().max(1e-6);
    let mut h = vec![1e-6, 1e-6, 1e-6, t, t, t, n, n, n];
    if n_params > 9 {
        h.push(1e-6);
    }
    h
}

/// Levenberg–Marquardt refinement of the summed squared transfer error over
/// `inliers`. Returns the input when no step lowers the cost.
pub fn local_optimize(
    model: &PoseSolution,
    inliers: &[&Correspondence],
    rig: &GeneralizedCamera,
    pinhole_k: &Matrix3<f64>,
) -> PoseSolution {
    let problem = Problem {
        correspondences: &[],
        reduced: Vec::new(),
        rig,
        pinhole_k,
        mode: if model.focal.is_some() { Mode::Focal } else { Mode::Calibrated },
    };
    refine(model, inliers, &problem)
}

fn refine(model: &PoseSolution, inliers: &[&Correspondence], p: &Problem) -> PoseSolution {
    let n_params = if p.mode == Mode::Focal && model.focal.is_some() { 10 } else { 9 };
    if inliers.len() < MIN_LO_INLIERS {
        return model.clone();
    }
    let Some(mut r) = residuals(model, inliers, p) else {
        return model.clone();
    };
    let mut current = model.clone();
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    for _ in 0..LO_MAX_ITERATIONS {
        let h = step_sizes(&current, n_params);
        let mut jac = DMatrix::zeros(r.len(), n_params);
        let mut ok = true;
        for j in 0..n_params {
            let mut dx = DVector::zeros(n_params);
            dx[j] = h[j];
            let plus = residuals(&perturb(&current, &dx), inliers, p);
            dx[j] = -h[j];
            let minus = residuals(&perturb(&current, &dx), inliers, p);
            match (plus, minus) {
                (Some(a), Some(b)) => jac.set_column(j, &((a - b) / (2.0 * h[j]))),
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            break;
        }
        let grad = jac.transpose() * &r;
        if grad.norm() < LO_GRADIENT_TOL {
            break;
        }
        let jtj = jac.transpose() * &jac;
        let mut improved = false;
        while lambda < 1e12 {
            let mut a = jtj.clone();
            for k in 0..n_params {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&grad))) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = perturb(&current, &step);
            match residuals(&candidate, inliers, p) {
                Some(rc) if rc.norm_squared() < cost => {
                    current = candidate;
                    r = rc;
                    let new_cost = r.norm_squared();
                    let decrease = cost - new_cost;
                    cost = new_cost;
                    lambda = (lambda / 10.0).max(1e-12);
                    improved = decrease > 1e-15 * cost.max(1e-300);
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        if !improved {
            break;
        }
    }
    current
}

fn adaptive_bound(n_inliers: usize, n: usize, confidence: f64) -> f64 {
    let w = n_inliers as f64 / n as f64;
    let p_good = w.powi(5);
    if p_good >= 1.0 {
        return 0.0;
    }
    if p_good <= 0.0 {
        return f64::INFINITY;
    }
    ((1.0 - confidence).ln() / (1.0 - p_good).ln()).ceil()
}

struct Best {
    model: PoseSolution,
    mask: Vec<bool>,
    cost: f64,
}

impl<'a> Problem<'a> {
    fn score(&self, model: &PoseSolution, threshold: f64) -> (Vec<bool>, f64) {
        score(model, self.correspondences, self.rig, self.pinhole_k, threshold)
    }

    fn inliers(&self, mask: &[bool]) -> Vec<&'a Correspondence> {
        self.correspondences
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(c, _)| c)
            .collect()
    }

    /// Refines on the inliers of `best` and keeps the result when its MSAC
    /// score is lower.
    fn polish(&self, best: &mut Best, threshold: f64) -> bool {
        let inliers = self.inliers(&best.mask);
        let refined = refine(&best.model, &inliers, self);
        let (mask, cost) = self.score(&refined, threshold);
        if cost < best.cost {
            *best = Best {
                model: refined,
                mask,
                cost,
            };
            return true;
        }
        false
    }
}

/// Estimates the pinhole pose from all correspondences.
///
/// `pinhole_k` gives the pinhole intrinsics in calibrated mode and only its
/// principal point in focal mode.
pub fn ransac(
    correspondences: &[Correspondence],
    rig: &GeneralizedCamera,
    pinhole_k: &Matrix3<f64>,
    config: &RansacConfig,
) -> Result<RansacResult> {
    config.validate()?;
    let start = Instant::now();
    if correspondences.len() < 5 {
        return Err(Error::NotEnoughMatches(correspondences.len()));
    }
    let reduced = correspondences
        .iter()
        .map(|c| reduce_match(c, rig, config.mode, Some(pinhole_k)))
        .collect::<Result<Vec<_>>>()?;
    let problem = Problem {
        correspondences,
        reduced,
        rig,
        pinhole_k,
        mode: config.mode,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<Best> = None;
    let mut history = Vec::new();
    let mut bound = config.max_iterations as f64;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        if !config.fixed_iterations && iterations as f64 >= bound {
            break;
        }
        iterations += 1;
        let idx = sample(&problem.reduced, config.mode, &mut rng)?;
        let picked: Vec<ReducedMatch> = idx.iter().map(|&i| problem.reduced[i].clone()).collect();
        let Ok((_, solver)) = classify_sample(&picked, config.mode) else {
            continue;
        };
        let Ok(out) = solve_with(solver, &picked, &config.solver_options) else {
            continue;
        };
        for candidate in out.solutions {
            let (mask, cost) = problem.score(&candidate, config.threshold);
            if best.as_ref().is_some_and(|b| cost >= b.cost) {
                continue;
            }
            let mut current = Best {
                model: candidate,
                mask,
                cost,
            };
            if config.lo_enabled {
                problem.polish(&mut current, config.threshold);
            }
            history.push((iterations, current.cost));
            let n_inliers = current.mask.iter().filter(|&&m| m).count();
            bound = adaptive_bound(n_inliers, correspondences.len(), config.confidence);
            best = Some(current);
        }
    }
    let mut best = best.ok_or(Error::NoModelFound)?;
    if config.lo_enabled {
        for _ in 0..3 {
            if !problem.polish(&mut best, config.threshold) {
                break;
            }
            history.push((iterations, best.cost));
        }
    }
    Ok(RansacResult {
        best: best.model,
        inlier_mask: best.mask,
        score: best.cost,
        iterations_run: iterations,
        elapsed: start.elapsed().as_secs_f64(),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{gen_scene, SceneConfig};
    use crate::geometry::pose_errors;

    fn scene(outliers: f64, noise: f64, seed: u64) -> crate::bench::Scene {
        let config = SceneConfig {
            n_points: 100,
            outlier_ratio: outliers,
            noise_sigma: noise,
            ..Default::default()
        };
        gen_scene(&config, seed).unwrap()
    }

    #[test]
    fn truth_scores_all_noise_free_matches() {
        let s = scene(0.0, 0.0, 1);
        let (mask, cost) = score(&s.truth_for(Mode::Calibrated), &s.correspondences, &s.rig, s.pinhole.intrinsics(), 2.0);
        assert!(mask.iter().all(|&m| m));
        assert!(cost < 1e-12);
    }

    #[test]
    fn empty_and_hopeless_scores() {
        let s = scene(0.0, 0.0, 2);
        let (mask, cost) = score(&s.truth, &[], &s.rig, s.pinhole.intrinsics(), 2.0);
        assert!(mask.is_empty() && cost == 0.0);
        let behind = PoseSolution {
            plane: PlaneVector(-s.truth.plane.0),
            ..s.truth.clone()
        };
        let (mask, cost) = score(&behind, &s.correspondences, &s.rig, s.pinhole.intrinsics(), 2.0);
        assert!(mask.iter().all(|&m| !m));
        assert_eq!(cost, s.correspondences.len() as f64 * 4.0);
    }

    #[test]
    fn sampling_needs_two_cameras() {
        let s = scene(0.0, 0.0, 3);
        let one_cam: Vec<ReducedMatch> = s
            .reduced(Mode::Calibrated)
            .unwrap()
            .into_iter()
            .map(|m| ReducedMatch { cam_index: 0, ..m })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample(&one_cam, Mode::Calibrated, &mut rng), Err(Error::NoSolvablePattern(MAX_SAMPLE_ATTEMPTS)));
        assert_eq!(sample(&one_cam[..4], Mode::Calibrated, &mut rng), Err(Error::NotEnoughMatches(4)));
    }

    #[test]
    fn five_matches_give_the_only_sample() {
        let s = scene(0.0, 0.0, 4);
        let m = s.reduced(Mode::Calibrated).unwrap();
        let mut picked: Vec<ReducedMatch> = Vec::new();
        for x in &m {
            let n = picked.iter().filter(|p| p.cam_index == x.cam_index).count();
            if n < 2 && picked.len() < 5 {
                picked.push(x.clone());
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut idx = sample(&picked, Mode::Calibrated, &mut rng).unwrap();
        idx.sort_unstable();
        assert_eq!(idx, [0, 1, 2, 3, 4]);
    }

    #[test]
    fn local_optimization_recovers_perturbed_model() {
        let s = scene(0.0, 0.0, 5);
        let truth = s.truth_for(Mode::Calibrated);
        let offset = Rotation3::new(Vector3::new(0.0, 0.5f64.to_radians(), 0.0));
        let start = PoseSolution {
            rotation: offset.matrix() * truth.rotation,
            ..truth.clone()
        };
        let all: Vec<&Correspondence> = s.correspondences.iter().collect();
        let refined = local_optimize(&start, &all, &s.rig, s.pinhole.intrinsics());
        assert!(pose_errors(&refined, &truth).rotation_deg < 1e-6);
        let again = local_optimize(&refined, &all, &s.rig, s.pinhole.intrinsics());
        assert!(pose_errors(&again, &refined).rotation_deg < 1e-8);
    }

    #[test]
    fn ransac_noise_free_is_fast_and_exact() {
        let s = scene(0.0, 0.0, 6);
        let config = RansacConfig {
            solver_options: SolverOptions::default(),
            ..Default::default()
        };
        let res = ransac(&s.correspondences, &s.rig, s.pinhole.intrinsics(), &config).unwrap();
        assert!(res.iterations_run <= 10);
        assert!(pose_errors(&res.best, &s.truth_for(Mode::Calibrated)).rotation_deg < 1e-6);
    }

    #[test]
    fn ransac_is_deterministic_and_monotone() {
        let s = scene(0.3, 1.0, 7);
        let config = RansacConfig {
            max_iterations: 200,
            fixed_iterations: true,
            seed: 11,
            ..Default::default()
        };
        let a = ransac(&s.correspondences, &s.rig, s.pinhole.intrinsics(), &config).unwrap();
        let b = ransac(&s.correspondences, &s.rig, s.pinhole.intrinsics(), &config).unwrap();
        assert_eq!(a.iterations_run, 200);
        assert_eq!(RansacResult { elapsed: 0.0, ..a.clone() }, RansacResult { elapsed: 0.0, ..b });
        assert!(a.history.windows(2).all(|w| w[1].1 <= w[0].1));
        let (mask, cost) = score(&a.best, &s.correspondences, &s.rig, s.pinhole.intrinsics(), 2.0);
        assert_eq!(mask, a.inlier_mask);
        assert!((cost - a.score).abs() <= 1e-9 * cost.max(1.0));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let s = scene(0.0, 0.0, 8);
        let config = RansacConfig {
            threshold: 0.0,
            ..Default::default()
        };
        assert!(ransac(&s.correspondences, &s.rig, s.pinhole.intrinsics(), &config).is_err());
    }
}
