//! Helpers shared by unit tests.

use nalgebra::{Matrix3, UnitQuaternion, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::bench::{gen_pattern_scene, gen_scene, Scene, SceneConfig};
use crate::geometry::{pose_errors, PoseErrors, PoseSolution, ReducedMatch};
use crate::solvers::SolverId;

/// Rotation drawn uniformly from SO(3).
pub fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    let v = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    *UnitQuaternion::from_quaternion(nalgebra::Quaternion::from(v))
        .to_rotation_matrix()
        .matrix()
}

/// Noise-free scene with `n_cams` rig cameras and 30 matches.
pub fn random_scene(rng: &mut impl Rng, n_cams: usize) -> Scene {
    let config = SceneConfig {
        n_gen_cameras: n_cams,
        n_points: 30,
        ..Default::default()
    };
    gen_scene(&config, rng.random()).expect("scene generation")
}

/// Noise-free five-match sample in the canonical pattern of `solver`.
pub fn pattern_sample(solver: SolverId, seed: u64) -> (Vec<ReducedMatch>, PoseSolution) {
    let scene = gen_pattern_scene(&SceneConfig::default(), solver.canonical_pattern(), seed)
        .expect("scene generation");
    let mode = solver.mode();
    (scene.reduced(mode).expect("reduction"), scene.truth_for(mode))
}

/// Pose errors of the solution closest to `truth`.
pub fn closest(solutions: &[PoseSolution], truth: &PoseSolution) -> PoseErrors {
    solutions
        .iter()
        .map(|s| pose_errors(s, truth))
        .min_by(|a, b| {
            (a.rotation_deg + a.position).total_cmp(&(b.rotation_deg + b.position))
        })
        .expect("at least one solution")
}
