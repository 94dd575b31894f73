//! `sgh`: solve, robustly estimate and benchmark semi-generalized
//! homographies from the command line.

mod files;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use sgh::bench::{
    emit_csv, gen_pattern_scene, gen_scene, run_experiment, write_csv, Experiment, ExperimentConfig, SceneConfig,
};
use sgh::elim::{assignment, shipped, verify_vanishing, Variant};
use sgh::geometry::{
    compose_g, reduce_match, transfer_error, Correspondence, GeneralizedCamera, Mode, PoseSolution,
};
use sgh::robust::{ransac, RansacConfig};
use sgh::solvers::{solve, SolverId, SolverOptions};

use files::{CameraFile, Cameras, Intrinsics, MatchRow, RigCamera};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Solver(#[from] sgh::Error),
    #[error("{0}")]
    Check(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use sgh::Error as E;
        match self {
            CliError::Solver(E::Unsolvable(_) | E::NoSolvablePattern(_)) => 2,
            CliError::Solver(
                E::Degenerate(_)
                | E::DegenerateHomography
                | E::RankDeficient
                | E::RayParallelToPlane
                | E::NoRealRoots
                | E::AllFiltered
                | E::InconsistentScale
                | E::NegativeFocal
                | E::ScaleDenominatorZero
                | E::NoModelFound,
            ) => 3,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "sgh", version, about = "Semi-generalized homography solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Calib,
    Focal,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Calib => Mode::Calibrated,
            ModeArg::Focal => Mode::Focal,
        }
    }
}

#[derive(Args)]
struct InputArgs {
    /// Camera file (JSON).
    #[arg(long)]
    cameras: PathBuf,
    /// Match file (CSV with header p_x,p_y,cam_id,g_x,g_y).
    #[arg(long)]
    matches: PathBuf,
    #[arg(long, value_enum)]
    mode: ModeArg,
}

#[derive(Subcommand)]
enum Command {
    /// Solve from exactly five matches and print every candidate pose.
    Solve {
        #[command(flatten)]
        input: InputArgs,
        /// Pinhole focal length in pixels (calibrated mode), overriding the
        /// camera file.
        #[arg(long)]
        focal: Option<f64>,
    },
    /// Robust estimation over all matches.
    Ransac {
        #[command(flatten)]
        input: InputArgs,
        /// Inlier threshold on the transfer error, pixels.
        #[arg(long, default_value_t = 2.0)]
        threshold: f64,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        /// Stop early once the confidence bound is met.
        #[arg(long)]
        adaptive: bool,
        #[arg(long, default_value_t = 0.999)]
        confidence: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the result JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthetic solver experiments written as CSV.
    Bench {
        /// stability, noise, planarity or forward
        #[arg(value_parser = parse_experiment)]
        experiment: Experiment,
        /// Solver name (sH5_2, sH5_3, sH5_4, sH5f_2, sH5f_3) or `all`.
        #[arg(long, default_value = "all")]
        solver: String,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Scene configuration (JSON with SceneConfig fields).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Leave solver_time at 0 so that output is byte-reproducible.
        #[arg(long)]
        no_timing: bool,
        /// Worker threads, 0 for all cores.
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// List the shipped generator tables, or validate them with --check.
    Tables {
        /// Evaluate every table on random valid and invalid points
        #[arg(long)]
        check: bool,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a synthetic camera file and match file.
    Synth {
        #[arg(long)]
        cameras: PathBuf,
        #[arg(long)]
        matches: PathBuf,
        /// Matches per rig camera, e.g. 2,2,1. Overrides --points.
        #[arg(long, value_delimiter = ',')]
        pattern: Option<Vec<usize>>,
        #[arg(long, default_value_t = 100)]
        points: usize,
        /// Pixel noise standard deviation.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Fraction of matches replaced by random pixels.
        #[arg(long, default_value_t = 0.0)]
        outliers: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_experiment(s: &str) -> Result<Experiment, String> {
    Experiment::from_name(s).ok_or_else(|| format!("unknown experiment `{s}`"))
}

#[derive(Debug, Serialize, Deserialize)]
struct PoseRecord {
    quaternion: [f64; 4],
    translation: [f64; 3],
    plane: [f64; 3],
    focal: Option<f64>,
}

impl PoseRecord {
    fn from_pose(p: &PoseSolution) -> Self {
        Self {
            quaternion: files::rotation_to_quaternion(&p.rotation),
            translation: p.translation.into(),
            plane: p.plane.0.into(),
            focal: p.focal,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Candidate {
    #[serde(flatten)]
    pose: PoseRecord,
    /// Largest normalized I₁ generator residual of the composed `(G, m)`.
    generator_residual: f64,
    /// Largest transfer error over the input matches, pixels.
    transfer_px: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RansacOutput {
    pose: PoseRecord,
    inliers: Vec<usize>,
    score: f64,
    iterations: usize,
    wall_time: f64,
}

fn generator_residual(pose: &PoseSolution, mode: Mode) -> Result<f64, CliError> {
    let sh = compose_g(&pose.rotation, &pose.translation, &pose.plane, pose.focal)?;
    let variant = match mode {
        Mode::Calibrated => Variant::CalI1,
        Mode::Focal => Variant::FocI1,
    };
    let x = assignment(variant, &sh).expect("I1 tables use every variable");
    Ok(shipped(variant).max_residual(&x))
}

fn score_candidate(
    pose: &PoseSolution,
    mode: Mode,
    corrs: &[Correspondence],
    rig: &GeneralizedCamera,
    base_k: &Matrix3<f64>,
) -> Result<Candidate, CliError> {
    Ok(Candidate {
        pose: PoseRecord::from_pose(pose),
        generator_residual: generator_residual(pose, mode)?,
        transfer_px: corrs
            .iter()
            .map(|c| transfer_error(pose, c, rig, base_k))
            .fold(0.0, f64::max),
    })
}

struct Loaded {
    cameras: Cameras,
    corrs: Vec<Correspondence>,
    mode: Mode,
    base_k: Matrix3<f64>,
}

fn load(input: &InputArgs, focal: Option<f64>) -> Result<Loaded, CliError> {
    let mode = Mode::from(input.mode);
    let mut file = CameraFile::read(&input.cameras)?;
    if let Some(f) = focal {
        if mode == Mode::Focal {
            return Err(CliError::Input("--focal only applies to calib mode".into()));
        }
        let pp = file
            .pinhole
            .as_ref()
            .and_then(|p| p.matrix("pinhole").ok())
            .map(|k| [k[(0, 2)], k[(1, 2)]]);
        file.pinhole = Some(Intrinsics {
            focal: Some(f),
            principal_point: pp,
            k: None,
        });
    }
    let cameras = file.build()?;
    let rows = files::read_matches(&input.matches)?;
    let corrs = files::correspondences(&rows, &cameras, &input.matches.display().to_string())?;
    let base_k = match (mode, cameras.pinhole_k) {
        (_, Some(k)) => k,
        (Mode::Focal, None) => Matrix3::identity(),
        (Mode::Calibrated, None) => {
            return Err(CliError::Input(
                "calib mode needs pinhole intrinsics in the camera file or --focal".into(),
            ))
        }
    };
    Ok(Loaded {
        cameras,
        corrs,
        mode,
        base_k,
    })
}

fn cmd_solve(input: &InputArgs, focal: Option<f64>) -> Result<(), CliError> {
    let l = load(input, focal)?;
    if l.corrs.len() != 5 {
        return Err(CliError::Input(format!("expected 5 matches, got {}", l.corrs.len())));
    }
    let reduced = l
        .corrs
        .iter()
        .map(|c| reduce_match(c, &l.cameras.rig, l.mode, l.cameras.pinhole_k.as_ref()))
        .collect::<sgh::Result<Vec<_>>>()?;
    let out = solve(&reduced, l.mode, &SolverOptions::default())?;
    eprintln!("solver {}: {} candidate(s)", out.solver, out.solutions.len());
    for pose in &out.solutions {
        let c = score_candidate(pose, l.mode, &l.corrs, &l.cameras.rig, &l.base_k)?;
        println!("{}", serde_json::to_string(&c).expect("serializable"));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_ransac(
    input: &InputArgs,
    threshold: f64,
    iters: usize,
    adaptive: bool,
    confidence: f64,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let l = load(input, None)?;
    let config = RansacConfig {
        max_iterations: iters,
        threshold,
        mode: l.mode,
        fixed_iterations: !adaptive,
        confidence,
        seed,
        ..Default::default()
    };
    let result = ransac(&l.corrs, &l.cameras.rig, &l.base_k, &config)?;
    let record = RansacOutput {
        pose: PoseRecord::from_pose(&result.best),
        inliers: result
            .inlier_mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i)
            .collect(),
        score: result.score,
        iterations: result.iterations_run,
        wall_time: result.elapsed,
    };
    let json = serde_json::to_string_pretty(&record).expect("serializable");
    if let Some(path) = out {
        std::fs::write(path, &json).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    println!("{json}");
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    experiment: Experiment,
    solver: &str,
    trials: usize,
    seed: u64,
    out: Option<&Path>,
    config: Option<&Path>,
    no_timing: bool,
    threads: usize,
) -> Result<(), CliError> {
    let solvers: Vec<SolverId> = if solver.eq_ignore_ascii_case("all") {
        SolverId::ALL.to_vec()
    } else {
        vec![SolverId::from_name(solver).ok_or_else(|| CliError::Input(format!("unknown solver `{solver}`")))?]
    };
    let scene: SceneConfig = match config {
        Some(path) => serde_json::from_str(&files::read_text(path)?).map_err(|e| CliError::Parse {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?,
        None => SceneConfig::default(),
    };
    scene.validate()?;
    let cfg = ExperimentConfig {
        scene,
        trials,
        seed,
        timing: !no_timing,
        threads,
    };
    let records: Vec<_> = solvers.iter().flat_map(|&s| run_experiment(experiment, s, &cfg)).collect();
    match out {
        Some(path) => emit_csv(&records, path)?,
        None => write_csv(&records, std::io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_tables(check: bool, samples: usize, seed: u64) -> Result<(), CliError> {
    let mut failed = Vec::new();
    for variant in Variant::ALL {
        let table = shipped(variant);
        let degrees: Vec<String> = table.polys.iter().map(|p| p.degree().to_string()).collect();
        let mut line = format!("{variant}: {} generators, degrees [{}]", table.polys.len(), degrees.join(","));
        if check {
            match verify_vanishing(table, samples, seed) {
                Ok(r) => line += &format!(
                    ", ok (max valid {:.1e}, min invalid {:.1e})",
                    r.max_valid_residual, r.min_invalid_residual
                ),
                Err(e) => {
                    line += &format!(", FAILED: {e}");
                    failed.push(variant.name());
                }
            }
        }
        println!("{line}");
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(format!("tables failed validation: {}", failed.join(", "))))
    }
}

fn cmd_synth(
    cameras: &Path,
    matches: &Path,
    pattern: Option<&[usize]>,
    points: usize,
    noise: f64,
    outliers: f64,
    seed: u64,
) -> Result<(), CliError> {
    let config = SceneConfig {
        n_points: points,
        noise_sigma: noise,
        outlier_ratio: outliers,
        ..Default::default()
    };
    let scene = match pattern {
        Some(p) => gen_pattern_scene(&config, p, seed)?,
        None => gen_scene(&config, seed)?,
    };
    let file = CameraFile {
        pinhole: Some(Intrinsics::from_matrix(scene.pinhole.intrinsics())),
        cameras: scene
            .rig
            .cameras()
            .iter()
            .enumerate()
            .map(|(i, c)| RigCamera {
                id: i as u32,
                intrinsics: Intrinsics::from_matrix(c.intrinsics()),
                rotation: files::rotation_to_quaternion(c.rotation()),
                translation: (*c.translation()).into(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&file).expect("serializable");
    std::fs::write(cameras, json).map_err(|e| CliError::Io(format!("{}: {e}", cameras.display())))?;
    let rows: Vec<MatchRow> = scene
        .correspondences
        .iter()
        .map(|c| MatchRow {
            p_x: c.p.x / c.p.z,
            p_y: c.p.y / c.p.z,
            cam_id: c.cam_index as u32,
            g_x: c.g.x / c.g.z,
            g_y: c.g.y / c.g.z,
        })
        .collect();
    files::write_matches(&rows, matches)?;
    println!("{}", serde_json::to_string(&PoseRecord::from_pose(&scene.truth)).expect("serializable"));
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve { input, focal } => cmd_solve(&input, focal),
        Command::Ransac {
            input,
            threshold,
            iters,
            adaptive,
            confidence,
            seed,
            out,
        } => cmd_ransac(&input, threshold, iters, adaptive, confidence, seed, out.as_deref()),
        Command::Bench {
            experiment,
            solver,
            trials,
            seed,
            out,
            config,
            no_timing,
            threads,
        } => cmd_bench(experiment, &solver, trials, seed, out.as_deref(), config.as_deref(), no_timing, threads),
        Command::Tables { check, samples, seed } => cmd_tables(check, samples, seed),
        Command::Synth {
            cameras,
            matches,
            pattern,
            points,
            noise,
            outliers,
            seed,
        } => cmd_synth(&cameras, &matches, pattern.as_deref(), points, noise, outliers, seed),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Solver(sgh::Error::Unsolvable("x".into())).exit_code(), 2);
        assert_eq!(CliError::Solver(sgh::Error::Degenerate("x".into())).exit_code(), 3);
        assert_eq!(CliError::Input("x".into()).exit_code(), 1);
        assert_eq!(
            CliError::Parse {
                path: "a".into(),
                line: 1,
                message: "b".into()
            }
            .exit_code(),
            1
        );
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
