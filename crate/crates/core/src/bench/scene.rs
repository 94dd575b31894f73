//! Synthetic planar scenes: a rig of cameras and one pinhole looking at a
//! textured square.

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    reduce_match, Correspondence, GeneralizedCamera, Mode, PinholeCamera, PlaneVector,
    PoseSolution, ReducedMatch, RigidTransform,
};

const MAX_SCENE_ATTEMPTS: usize = 50;
const MAX_POINT_ATTEMPTS: usize = 2000;
/// Largest angle between a camera centre direction and the plane normal.
const MAX_ELEVATION_DEG: f64 = 60.0;
const MAX_AXIS_PERTURBATION_DEG: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Motion {
    Generic,
    Forward,
}

/// Parameters of a synthetic scene. Lengths are in scene units, image
/// quantities in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub plane_size: f64,
    pub n_gen_cameras: usize,
    pub distance_range: [f64; 2],
    pub image_size: f64,
    pub focal_range: [f64; 2],
    pub noise_sigma: f64,
    pub planarity_offset: f64,
    pub motion: Motion,
    /// Matches generated when no sample pattern is requested.
    pub n_points: usize,
    /// Fraction of matches whose rig pixel is replaced by a uniform draw.
    pub outlier_ratio: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            plane_size: 10.0,
            n_gen_cameras: 5,
            distance_range: [20.0, 35.0],
            image_size: 1000.0,
            focal_range: [800.0, 1200.0],
            noise_sigma: 0.0,
            planarity_offset: 0.0,
            motion: Motion::Generic,
            n_points: 100,
            outlier_ratio: 0.0,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Degenerate(format!("invalid scene config: {msg}")));
        if !(self.distance_range[0] < self.distance_range[1]) || self.distance_range[0] <= 0.0 {
            return bad("distance range");
        }
        if !(self.focal_range[0] <= self.focal_range[1]) || self.focal_range[0] <= 0.0 {
            return bad("focal range");
        }
        if !(self.noise_sigma >= 0.0) || !(self.planarity_offset >= 0.0) {
            return bad("noise and planarity offset must be non-negative");
        }
        if self.n_gen_cameras == 0 || !(self.plane_size > 0.0) || !(self.image_size > 0.0) {
            return bad("sizes must be positive");
        }
        if !(0.0..=1.0).contains(&self.outlier_ratio) {
            return bad("outlier ratio");
        }
        Ok(())
    }
}

/// A generated scene, expressed in the frame of rig camera 0.
#[derive(Debug, Clone)]
pub struct Scene {
    pub rig: GeneralizedCamera,
    /// The pinhole with its true intrinsics and pose in the rig frame.
    pub pinhole: PinholeCamera,
    pub truth: PoseSolution,
    /// Noise-free 3D points in the rig frame, one per correspondence.
    pub points: Vec<Vector3<f64>>,
    pub correspondences: Vec<Correspondence>,
    pub inliers: Vec<bool>,
}

impl Scene {
    /// Reduces all correspondences. Focal mode only uses the principal point
    /// of the pinhole.
    pub fn reduced(&self, mode: Mode) -> Result<Vec<ReducedMatch>> {
        self.correspondences
            .iter()
            .map(|c| reduce_match(c, &self.rig, mode, Some(self.pinhole.intrinsics())))
            .collect()
    }

    /// Ground truth as a solver in `mode` would report it.
    pub fn truth_for(&self, mode: Mode) -> PoseSolution {
        PoseSolution {
            focal: match mode {
                Mode::Calibrated => None,
                Mode::Focal => self.truth.focal,
            },
            ..self.truth.clone()
        }
    }
}

fn look_at_rotation(axis: &Vector3<f64>, rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let z = axis.normalize();
    let v: [f64; 3] = UnitSphere.sample(rng);
    let mut x = Vector3::from(v).cross(&z);
    if x.norm() < 1e-6 {
        x = z.cross(&Vector3::x());
    }
    let x = x.normalize();
    let y = z.cross(&x);
    Matrix3::from_columns(&[x, y, z])
}

fn perturb_axis(axis: &Vector3<f64>, rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let v: [f64; 3] = UnitSphere.sample(rng);
    let dir = Vector3::from(v);
    let perp = (dir - axis * axis.dot(&dir)).normalize();
    let angle = rng.random_range(0.0..MAX_AXIS_PERTURBATION_DEG).to_radians();
    axis * angle.cos() + perp * angle.sin()
}

fn intrinsics(focal: f64, image_size: f64) -> Matrix3<f64> {
    let c = image_size / 2.0;
    Matrix3::new(focal, 0.0, c, 0.0, focal, c, 0.0, 0.0, 1.0)
}

fn random_world_camera(config: &SceneConfig, rng: &mut ChaCha8Rng) -> Result<PinholeCamera> {
    let cos_max = MAX_ELEVATION_DEG.to_radians().cos();
    let dir = loop {
        let v: [f64; 3] = UnitSphere.sample(rng);
        let v = Vector3::from(v);
        if v.z >= cos_max {
            break v;
        }
    };
    let distance = rng.random_range(config.distance_range[0]..config.distance_range[1]);
    let half = config.plane_size / 2.0;
    let target = Vector3::new(
        rng.random_range(-0.2 * half..0.2 * half),
        rng.random_range(-0.2 * half..0.2 * half),
        0.0,
    );
    let center = target + dir * distance;
    let axis = perturb_axis(&(target - center).normalize(), rng);
    let rotation = look_at_rotation(&axis, rng);
    let focal = rng.random_range(config.focal_range[0]..=config.focal_range[1]);
    PinholeCamera::new(intrinsics(focal, config.image_size), rotation, center)
}

fn in_image(cam: &PinholeCamera, x: &Vector3<f64>, size: f64) -> Option<Vector2<f64>> {
    cam.project(x)
        .filter(|p| p.x >= 0.0 && p.x <= size && p.y >= 0.0 && p.y <= size)
}

fn random_plane_point(config: &SceneConfig, rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let half = config.plane_size / 2.0;
    let z = if config.planarity_offset > 0.0 {
        rng.random_range(-config.planarity_offset..=config.planarity_offset)
    } else {
        0.0
    };
    Vector3::new(rng.random_range(-half..half), rng.random_range(-half..half), z)
}

/// Generates a scene whose points are each assigned to a random rig camera
/// that sees them.
pub fn gen_scene(config: &SceneConfig, seed: u64) -> Result<Scene> {
    generate(config, seed, None)
}

/// Generates a five-match scene with the given per-camera multiplicities,
/// e.g. `[3, 1, 1]`. Each group goes to a distinct, randomly chosen camera.
pub fn gen_pattern_scene(config: &SceneConfig, pattern: &[usize], seed: u64) -> Result<Scene> {
    if pattern.len() > config.n_gen_cameras || pattern.contains(&0) {
        return Err(Error::Degenerate(format!(
            "pattern {pattern:?} needs more cameras than the rig has"
        )));
    }
    generate(config, seed, Some(pattern))
}

fn generate(config: &SceneConfig, seed: u64, pattern: Option<&[usize]>) -> Result<Scene> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_SCENE_ATTEMPTS {
        if let Some(scene) = try_generate(config, pattern, &mut rng)? {
            return Ok(scene);
        }
    }
    Err(Error::Degenerate(
        "could not satisfy visibility constraints".into(),
    ))
}

fn try_generate(
    config: &SceneConfig,
    pattern: Option<&[usize]>,
    rng: &mut ChaCha8Rng,
) -> Result<Option<Scene>> {
    let rig_world: Vec<PinholeCamera> = (0..config.n_gen_cameras)
        .map(|_| random_world_camera(config, rng))
        .collect::<Result<_>>()?;
    let pinhole_world = match config.motion {
        Motion::Generic => random_world_camera(config, rng)?,
        Motion::Forward => {
            let g1 = &rig_world[0];
            let axis = g1.rotation().column(2).into_owned();
            let step = rng.random_range(0.1..0.3) * g1.translation().z.abs();
            let focal = rng.random_range(config.focal_range[0]..=config.focal_range[1]);
            PinholeCamera::new(
                intrinsics(focal, config.image_size),
                *g1.rotation(),
                g1.translation() + axis * step,
            )?
        }
    };

    // Assign points to cameras.
    let mut world_points = Vec::new();
    let mut cams = Vec::new();
    match pattern {
        None => {
            let mut attempts = 0;
            while world_points.len() < config.n_points {
                attempts += 1;
                if attempts > MAX_POINT_ATTEMPTS.max(50 * config.n_points) {
                    return Ok(None);
                }
                let x = random_plane_point(config, rng);
                if in_image(&pinhole_world, &x, config.image_size).is_none() {
                    continue;
                }
                let visible: Vec<usize> = (0..rig_world.len())
                    .filter(|&i| in_image(&rig_world[i], &x, config.image_size).is_some())
                    .collect();
                if let Some(&i) = visible.choose(rng) {
                    world_points.push(x);
                    cams.push(i);
                }
            }
        }
        Some(pattern) => {
            let mut ids: Vec<usize> = (0..rig_world.len()).collect();
            ids.shuffle(rng);
            for (&count, &cam) in pattern.iter().zip(&ids) {
                let mut found = 0;
                let mut attempts = 0;
                while found < count {
                    attempts += 1;
                    if attempts > MAX_POINT_ATTEMPTS {
                        return Ok(None);
                    }
                    let x = random_plane_point(config, rng);
                    if in_image(&pinhole_world, &x, config.image_size).is_some()
                        && in_image(&rig_world[cam], &x, config.image_size).is_some()
                    {
                        world_points.push(x);
                        cams.push(cam);
                        found += 1;
                    }
                }
            }
        }
    }

    // Everything below is expressed in the frame of rig camera 0.
    let to_rig = rig_world[0].pose().inverse();
    let rig = GeneralizedCamera::new(
        rig_world
            .iter()
            .map(|c| {
                PinholeCamera::new(
                    *c.intrinsics(),
                    to_rig.rotation * c.rotation(),
                    to_rig.apply(c.translation()),
                )
            })
            .collect::<Result<_>>()?,
    )?;
    let pinhole = PinholeCamera::new(
        *pinhole_world.intrinsics(),
        to_rig.rotation * pinhole_world.rotation(),
        to_rig.apply(pinhole_world.translation()),
    )?;
    let pinhole_from_world = pinhole_world.pose().inverse();
    let plane = PlaneVector::from_point_normal(
        &pinhole_from_world.translation,
        &(pinhole_from_world.rotation * Vector3::z()),
    )?;
    let truth = PoseSolution {
        rotation: *pinhole.rotation(),
        translation: *pinhole.translation(),
        plane,
        focal: Some(pinhole.intrinsics()[(0, 0)]),
    };

    let noise = Normal::new(0.0, config.noise_sigma.max(0.0)).expect("finite sigma");
    let jitter = |v: Vector2<f64>, rng: &mut ChaCha8Rng| {
        if config.noise_sigma > 0.0 {
            v + Vector2::new(noise.sample(rng), noise.sample(rng))
        } else {
            v
        }
    };
    let points: Vec<Vector3<f64>> = world_points.iter().map(|x| to_rig.apply(x)).collect();
    let mut correspondences = Vec::with_capacity(points.len());
    for (x, &cam) in points.iter().zip(&cams) {
        let p = pinhole.project(x).expect("visible in pinhole");
        let g = rig.cameras()[cam].project(x).expect("visible in rig camera");
        let p = jitter(p, rng);
        let g = jitter(g, rng);
        correspondences.push(Correspondence::new(p, g, cam));
    }

    let mut inliers = vec![true; points.len()];
    let n_out = (config.outlier_ratio * points.len() as f64).round() as usize;
    if n_out > 0 {
        let mut idx: Vec<usize> = (0..points.len()).collect();
        idx.shuffle(rng);
        for &i in &idx[..n_out] {
            correspondences[i].g = Vector3::new(
                rng.random_range(0.0..config.image_size),
                rng.random_range(0.0..config.image_size),
                1.0,
            );
            inliers[i] = false;
        }
    }

    Ok(Some(Scene {
        rig,
        pinhole,
        truth,
        points,
        correspondences,
        inliers,
    }))
}

/// The scene plane expressed in the rig frame.
pub fn plane_in_rig_frame(scene: &Scene) -> Result<PlaneVector> {
    scene.truth.plane.to_parent(&RigidTransform {
        rotation: scene.truth.rotation,
        translation: scene.truth.translation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_free_points_lie_on_plane() {
        for seed in 0..20 {
            let scene = gen_scene(&SceneConfig::default(), seed).unwrap();
            let to_pinhole = scene.pinhole.pose().inverse();
            for x in &scene.points {
                let xp = to_pinhole.apply(x);
                let r = scene.truth.plane.0.dot(&xp) + 1.0;
                assert!(r.abs() < 1e-12, "plane residual {r}");
            }
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let cfg = SceneConfig {
            noise_sigma: 1.0,
            outlier_ratio: 0.3,
            ..Default::default()
        };
        let a = gen_scene(&cfg, 7).unwrap();
        let b = gen_scene(&cfg, 7).unwrap();
        assert_eq!(a.correspondences, b.correspondences);
        assert_eq!(a.inliers, b.inliers);
        assert_eq!(a.truth, b.truth);
    }

    #[test]
    fn pattern_scene_has_requested_multiplicities() {
        let cfg = SceneConfig::default();
        for (seed, pattern) in [[3usize, 1, 1], [2, 2, 1]].iter().enumerate() {
            let scene = gen_pattern_scene(&cfg, pattern, seed as u64).unwrap();
            let mut counts = vec![0; cfg.n_gen_cameras];
            for c in &scene.correspondences {
                counts[c.cam_index] += 1;
            }
            counts.retain(|&c| c > 0);
            counts.sort_unstable_by(|a, b| b.cmp(a));
            assert_eq!(&counts, pattern);
        }
    }

    #[test]
    fn forward_motion_keeps_orientation() {
        let cfg = SceneConfig {
            motion: Motion::Forward,
            ..Default::default()
        };
        let scene = gen_scene(&cfg, 3).unwrap();
        assert!((scene.truth.rotation - Matrix3::identity()).amax() < 1e-12);
        let t = scene.truth.translation;
        assert!(t.x.abs() < 1e-9 && t.y.abs() < 1e-9 && t.z > 0.0);
    }

    #[test]
    fn plane_round_trips_to_rig_frame() {
        let scene = gen_scene(&SceneConfig::default(), 5).unwrap();
        let plane = plane_in_rig_frame(&scene).unwrap();
        for x in &scene.points {
            assert!((plane.0.dot(x) + 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = SceneConfig {
            distance_range: [35.0, 20.0],
            ..Default::default()
        };
        assert!(gen_scene(&cfg, 0).is_err());
    }
}
