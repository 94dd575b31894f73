//! Python bindings. Cameras, matches and poses cross the boundary as plain
//! lists and dicts.

use nalgebra::{Matrix3, Vector2, Vector3};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sgh::bench::{gen_pattern_scene, gen_scene, SceneConfig};
use sgh::elim::{shipped, Variant};
use sgh::geometry::{reduce_match, Correspondence, GeneralizedCamera, Mode, PinholeCamera, PoseSolution};
use sgh::robust::{ransac as run_ransac, RansacConfig};
use sgh::solvers::{solve as run_solve, SolverId, SolverOptions};

create_exception!(sgh_py, SolverError, PyException);
create_exception!(sgh_py, UnsolvableError, SolverError);

type Mat = [[f64; 3]; 3];

#[derive(FromPyObject)]
struct CameraArg {
    #[pyo3(item)]
    k: Mat,
    #[pyo3(item)]
    rotation: Mat,
    #[pyo3(item)]
    translation: [f64; 3],
}

/// `(p_x, p_y, cam_index, g_x, g_y)`.
type MatchArg = (f64, f64, usize, f64, f64);

fn to_matrix(m: &Mat) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| m[r][c])
}

fn from_matrix(m: &Matrix3<f64>) -> Mat {
    [0, 1, 2].map(|r| [0, 1, 2].map(|c| m[(r, c)]))
}

fn to_py_err(e: sgh::Error) -> PyErr {
    match e {
        sgh::Error::Unsolvable(_) | sgh::Error::NoSolvablePattern(_) => UnsolvableError::new_err(e.to_string()),
        sgh::Error::InvalidCamera(_) | sgh::Error::InvalidFocal(_) | sgh::Error::CameraIndex { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => SolverError::new_err(e.to_string()),
    }
}

fn parse_mode(mode: &str) -> PyResult<Mode> {
    match mode {
        "calib" | "calibrated" => Ok(Mode::Calibrated),
        "focal" => Ok(Mode::Focal),
        _ => Err(PyValueError::new_err(format!("mode must be 'calib' or 'focal', got {mode:?}"))),
    }
}

fn build_rig(cameras: &[CameraArg]) -> Result<GeneralizedCamera, sgh::Error> {
    let cams = cameras
        .iter()
        .map(|c| PinholeCamera::new(to_matrix(&c.k), to_matrix(&c.rotation), Vector3::from(c.translation)))
        .collect::<Result<Vec<_>, _>>()?;
    GeneralizedCamera::new(cams)
}

fn build_matches(matches: &[MatchArg]) -> Vec<Correspondence> {
    matches
        .iter()
        .map(|&(px, py, cam, gx, gy)| Correspondence::new(Vector2::new(px, py), Vector2::new(gx, gy), cam))
        .collect()
}

fn pose_dict<'py>(py: Python<'py>, pose: &PoseSolution) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("rotation", from_matrix(&pose.rotation))?;
    d.set_item("translation", <[f64; 3]>::from(pose.translation))?;
    d.set_item("plane", <[f64; 3]>::from(pose.plane.0))?;
    d.set_item("focal", pose.focal)?;
    Ok(d)
}

/// Solves from exactly five matches. `pinhole_k` is required in calibrated
/// mode; in focal mode only its principal point is used, and omitting it
/// means pixels are already centred. Returns a list of pose dicts with
/// `rotation`, `translation` (pinhole centre in the rig frame), `plane`
/// (`n/d` in the pinhole frame) and `focal` (None in calibrated mode).
#[pyfunction]
#[pyo3(signature = (cameras, matches, mode = "calib", pinhole_k = None))]
fn solve<'py>(
    py: Python<'py>,
    cameras: Vec<CameraArg>,
    matches: Vec<MatchArg>,
    mode: &str,
    pinhole_k: Option<Mat>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mode = parse_mode(mode)?;
    let rig = build_rig(&cameras).map_err(to_py_err)?;
    let k = pinhole_k.map(|k| to_matrix(&k));
    let reduced = build_matches(&matches)
        .iter()
        .map(|c| reduce_match(c, &rig, mode, k.as_ref()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(to_py_err)?;
    let out = run_solve(&reduced, mode, &SolverOptions::default()).map_err(to_py_err)?;
    out.solutions.iter().map(|p| pose_dict(py, p)).collect()
}

/// Robust estimation over all matches. Returns a dict with `pose`,
/// `inliers` (indices), `score` and `iterations`.
#[pyfunction]
#[pyo3(signature = (cameras, matches, mode = "calib", pinhole_k = None, threshold = 2.0, iterations = 1000, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn ransac<'py>(
    py: Python<'py>,
    cameras: Vec<CameraArg>,
    matches: Vec<MatchArg>,
    mode: &str,
    pinhole_k: Option<Mat>,
    threshold: f64,
    iterations: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let mode = parse_mode(mode)?;
    let rig = build_rig(&cameras).map_err(to_py_err)?;
    let k = match (pinhole_k, mode) {
        (Some(k), _) => to_matrix(&k),
        (None, Mode::Focal) => Matrix3::identity(),
        (None, Mode::Calibrated) => return Err(PyValueError::new_err("calibrated mode needs pinhole_k")),
    };
    let config = RansacConfig {
        max_iterations: iterations,
        threshold,
        mode,
        fixed_iterations: true,
        seed,
        ..Default::default()
    };
    let corrs = build_matches(&matches);
    let result = py
        .detach(|| run_ransac(&corrs, &rig, &k, &config))
        .map_err(to_py_err)?;
    let d = PyDict::new(py);
    d.set_item("pose", pose_dict(py, &result.best)?)?;
    let inliers: Vec<usize> = result
        .inlier_mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| i)
        .collect();
    d.set_item("inliers", inliers)?;
    d.set_item("score", result.score)?;
    d.set_item("iterations", result.iterations_run)?;
    Ok(d)
}

/// Generates a synthetic planar scene. With `pattern` (e.g. `[2, 2, 1]`)
/// the scene has exactly those matches per rig camera.
#[pyfunction]
#[pyo3(signature = (pattern = None, n_points = 100, noise = 0.0, outliers = 0.0, seed = 0))]
fn synthetic_scene<'py>(
    py: Python<'py>,
    pattern: Option<Vec<usize>>,
    n_points: usize,
    noise: f64,
    outliers: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let config = SceneConfig {
        n_points,
        noise_sigma: noise,
        outlier_ratio: outliers,
        ..Default::default()
    };
    let scene = match pattern {
        Some(p) => gen_pattern_scene(&config, &p, seed),
        None => gen_scene(&config, seed),
    }
    .map_err(to_py_err)?;
    let d = PyDict::new(py);
    let cameras = scene
        .rig
        .cameras()
        .iter()
        .map(|c| {
            let cd = PyDict::new(py);
            cd.set_item("k", from_matrix(c.intrinsics()))?;
            cd.set_item("rotation", from_matrix(c.rotation()))?;
            cd.set_item("translation", <[f64; 3]>::from(*c.translation()))?;
            Ok(cd)
        })
        .collect::<PyResult<Vec<_>>>()?;
    d.set_item("cameras", cameras)?;
    d.set_item("pinhole_k", from_matrix(scene.pinhole.intrinsics()))?;
    let matches: Vec<MatchArg> = scene
        .correspondences
        .iter()
        .map(|c| (c.p.x, c.p.y, c.cam_index, c.g.x, c.g.y))
        .collect();
    d.set_item("matches", matches)?;
    d.set_item("inliers", scene.inliers.clone())?;
    d.set_item("truth", pose_dict(py, &scene.truth)?)?;
    Ok(d)
}

/// Names of the five solvers.
#[pyfunction]
fn solver_names() -> Vec<&'static str> {
    SolverId::ALL.iter().map(|s| s.name()).collect()
}

/// `{table name: [generator degrees]}` for the shipped tables.
#[pyfunction]
fn tables(py: Python<'_>) -> PyResult<Bound<'_, PyDict>> {
    let d = PyDict::new(py);
    for v in Variant::ALL {
        let degrees: Vec<usize> = shipped(v).polys.iter().map(|p| p.degree()).collect();
        d.set_item(v.name(), degrees)?;
    }
    Ok(d)
}

#[pymodule]
fn sgh_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(ransac, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_scene, m)?)?;
    m.add_function(wrap_pyfunction!(solver_names, m)?)?;
    m.add_function(wrap_pyfunction!(tables, m)?)?;
    m.add("SolverError", m.py().get_type::<SolverError>())?;
    m.add("UnsolvableError", m.py().get_type::<UnsolvableError>())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip() {
        let m = Matrix3::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0);
        let rows = from_matrix(&m);
        assert_eq!(rows[0], [1.0, 2.0, 3.0]);
        assert_eq!(to_matrix(&rows), m);
    }

    #[test]
    fn synthetic_matches_solve_through_helpers() {
        let scene = gen_pattern_scene(&SceneConfig::default(), &[3, 1, 1], 2).unwrap();
        let cams: Vec<CameraArg> = scene
            .rig
            .cameras()
            .iter()
            .map(|c| CameraArg {
                k: from_matrix(c.intrinsics()),
                rotation: from_matrix(c.rotation()),
                translation: (*c.translation()).into(),
            })
            .collect();
        let rig = build_rig(&cams).unwrap();
        let args: Vec<MatchArg> = scene
            .correspondences
            .iter()
            .map(|c| (c.p.x, c.p.y, c.cam_index, c.g.x, c.g.y))
            .collect();
        let corrs = build_matches(&args);
        assert_eq!(corrs, scene.correspondences);
        let reduced: Vec<_> = corrs
            .iter()
            .map(|c| reduce_match(c, &rig, Mode::Focal, Some(scene.pinhole.intrinsics())).unwrap())
            .collect();
        let out = run_solve(&reduced, Mode::Focal, &SolverOptions::default()).unwrap();
        assert!(out.solutions.iter().any(|s| (s.focal.unwrap() - scene.truth.focal.unwrap()).abs() < 1e-4));
    }
}
