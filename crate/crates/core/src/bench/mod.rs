//! Synthetic experiments: scene generation, per-trial metrics and CSV output.

mod experiments;
mod scene;

pub use experiments::{
    emit_csv, median, run_experiment, run_forward, run_noise_sweep, run_planarity, run_stability,
    write_csv, Experiment, ExperimentConfig, TrialRecord, NOISE_SIGMAS, PLANARITY_OFFSETS,
};
pub use scene::{gen_pattern_scene, gen_scene, plane_in_rig_frame, Motion, Scene, SceneConfig};
