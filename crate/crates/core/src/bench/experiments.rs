//! Synthetic solver experiments and their CSV records.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::scene::{gen_pattern_scene, Motion, SceneConfig};
use crate::error::{Error, Result};
use crate::geometry::pose_errors;
use crate::solvers::{solve_with, SolverId, SolverOptions};

pub const NOISE_SIGMAS: [f64; 4] = [0.0, 0.5, 1.0, 2.0];
pub const PLANARITY_OFFSETS: [f64; 5] = [0.0, 0.01, 0.05, 0.1, 0.2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Stability,
    Noise,
    Planarity,
    Forward,
}

impl Experiment {
    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "stability" => Some(Self::Stability),
            "noise" => Some(Self::Noise),
            "planarity" => Some(Self::Planarity),
            "forward" => Some(Self::Forward),
            _ => None,
        }
    }
}

/// One solver run on one synthetic sample. Error fields are empty when the
/// solver failed or returned nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub experiment: Experiment,
    pub solver: SolverId,
    pub parameter: f64,
    pub trial: usize,
    pub rot_deg: Option<f64>,
    pub trans_dir_deg: Option<f64>,
    pub pos_units: Option<f64>,
    pub focal_px: Option<f64>,
    /// Seconds spent in the solver, 0 when timing is disabled.
    pub solver_time: f64,
    pub n_solutions: usize,
}

impl TrialRecord {
    pub fn failed(&self) -> bool {
        self.rot_deg.is_none()
    }
}

/// Settings shared by all experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scene: SceneConfig,
    pub trials: usize,
    pub seed: u64,
    /// Record solver wall time. Disable for byte-reproducible output.
    pub timing: bool,
    /// Worker threads, 0 for the available parallelism.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            trials: 1000,
            seed: 0,
            timing: true,
            threads: 0,
        }
    }
}

/// Seed of trial `i`. Independent of the experiment and its parameter so
/// that sweeps share the underlying camera setups.
fn trial_seed(base: u64, trial: usize) -> u64 {
    let mut z = base ^ (trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn run_trial(
    experiment: Experiment,
    solver: SolverId,
    parameter: f64,
    scene_config: &SceneConfig,
    cfg: &ExperimentConfig,
    trial: usize,
) -> TrialRecord {
    let mut record = TrialRecord {
        experiment,
        solver,
        parameter,
        trial,
        rot_deg: None,
        trans_dir_deg: None,
        pos_units: None,
        focal_px: None,
        solver_time: 0.0,
        n_solutions: 0,
    };
    let mode = solver.mode();
    let Ok(scene) = gen_pattern_scene(scene_config, solver.canonical_pattern(), trial_seed(cfg.seed, trial))
    else {
        return record;
    };
    let Ok(matches) = scene.reduced(mode) else {
        return record;
    };
    let exact = scene_config.noise_sigma == 0.0 && scene_config.planarity_offset == 0.0;
    let opts = if exact { SolverOptions::default() } else { SolverOptions::noisy() };

    let start = Instant::now();
    let out = solve_with(solver, &matches, &opts);
    if cfg.timing {
        record.solver_time = start.elapsed().as_secs_f64();
    }
    let Ok(out) = out else {
        return record;
    };
    record.n_solutions = out.solutions.len();
    let truth = scene.truth_for(mode);
    let best = out
        .solutions
        .iter()
        .map(|s| pose_errors(s, &truth))
        .min_by(|a, b| a.rotation_deg.total_cmp(&b.rotation_deg));
    if let Some(e) = best {
        record.rot_deg = Some(e.rotation_deg);
        record.trans_dir_deg = Some(e.translation_dir_deg);
        record.pos_units = Some(e.position);
        record.focal_px = (mode == crate::geometry::Mode::Focal).then_some(e.focal_px);
    }
    record
}

/// Runs `cfg.trials` trials per parameter value, in parallel, and returns the
/// records ordered by parameter then trial.
fn sweep(
    experiment: Experiment,
    solver: SolverId,
    parameters: &[f64],
    cfg: &ExperimentConfig,
    configure: impl Fn(&mut SceneConfig, f64) + Sync,
) -> Vec<TrialRecord> {
    let jobs: Vec<(f64, usize)> = parameters
        .iter()
        .flat_map(|&p| (0..cfg.trials).map(move |t| (p, t)))
        .collect();
    let threads = match cfg.threads {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    };
    let chunk = jobs.len().div_ceil(threads.max(1)).max(1);
    let configure = &configure;
    std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|&(p, t)| {
                            let mut scene = cfg.scene.clone();
                            configure(&mut scene, p);
                            run_trial(experiment, solver, p, &scene, cfg, t)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("trial worker panicked"))
            .collect()
    })
}

/// Noise-free trials on generic scenes.
pub fn run_stability(solver: SolverId, cfg: &ExperimentConfig) -> Vec<TrialRecord> {
    sweep(Experiment::Stability, solver, &[0.0], cfg, |s, _| {
        s.noise_sigma = 0.0;
        s.planarity_offset = 0.0;
        s.motion = Motion::Generic;
    })
}

/// Gaussian pixel noise of each `sigma` in both images.
pub fn run_noise_sweep(solver: SolverId, sigmas: &[f64], cfg: &ExperimentConfig) -> Vec<TrialRecord> {
    sweep(Experiment::Noise, solver, sigmas, cfg, |s, sigma| {
        s.noise_sigma = sigma;
        s.planarity_offset = 0.0;
        s.motion = Motion::Generic;
    })
}

/// Noise-free points displaced off the plane by up to each offset.
pub fn run_planarity(solver: SolverId, offsets: &[f64], cfg: &ExperimentConfig) -> Vec<TrialRecord> {
    sweep(Experiment::Planarity, solver, offsets, cfg, |s, offset| {
        s.noise_sigma = 0.0;
        s.planarity_offset = offset;
        s.motion = Motion::Generic;
    })
}

/// Pinhole displaced along the optical axis of rig camera 0, with noise.
pub fn run_forward(solver: SolverId, sigmas: &[f64], cfg: &ExperimentConfig) -> Vec<TrialRecord> {
    sweep(Experiment::Forward, solver, sigmas, cfg, |s, sigma| {
        s.noise_sigma = sigma;
        s.planarity_offset = 0.0;
        s.motion = Motion::Forward;
    })
}

/// Runs `experiment` with its default parameter sweep.
pub fn run_experiment(experiment: Experiment, solver: SolverId, cfg: &ExperimentConfig) -> Vec<TrialRecord> {
    match experiment {
        Experiment::Stability => run_stability(solver, cfg),
        Experiment::Noise => run_noise_sweep(solver, &NOISE_SIGMAS, cfg),
        Experiment::Planarity => run_planarity(solver, &PLANARITY_OFFSETS, cfg),
        Experiment::Forward => run_forward(solver, &NOISE_SIGMAS, cfg),
    }
}

fn sort_records(records: &mut [TrialRecord]) {
    records.sort_by(|a, b| {
        a.experiment
            .cmp(&b.experiment)
            .then(a.solver.name().cmp(b.solver.name()))
            .then(a.parameter.total_cmp(&b.parameter))
            .then(a.trial.cmp(&b.trial))
    });
}

/// Writes a header and one row per record, ordered by experiment, solver,
/// parameter and trial.
pub fn write_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<()> {
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);
    let mut w = csv::Writer::from_writer(out);
    for r in &sorted {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}

pub fn emit_csv(records: &[TrialRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_csv(records, std::io::BufWriter::new(file))
}

/// Median of the finite values, `None` when there are none.
pub fn median(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}
