//! Procedural scenes of analytic primitives with a simulated camera and
//! lidar; the geometric ground truth for every downstream check.

mod primitives;
mod scenes;

pub use primitives::{Primitive, Shape, ShapeHit, Texture, HIT_EPS};
pub use scenes::{builtin, builtin_names, checker_plane, textured_room, textureless_corridor, two_courts};

use alloc::string::String;
use alloc::vec::Vec;
use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::camera::{look_at, Intrinsics, Pose};
use crate::dataset::{Dataset, Frame, Split};
use crate::error::{invalid, Result};
use crate::image::{Image, Rgb};
use crate::recon::{color_to_u8, PointCloud};
use crate::trajectory::{Sim3, TimedPose, Trajectory};

#[cfg(not(feature = "std"))]
use num_traits::Float;

/// Directional light plus ambient term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Light {
    /// Unit vector pointing toward the light.
    pub direction: Vector3<f64>,
    pub ambient: f64,
    pub diffuse: f64,
}

impl Default for Light {
    fn default() -> Self {
        Self {
            direction: Vector3::new(0.3, 0.5, 1.0).normalize(),
            ambient: 0.35,
            diffuse: 0.65,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: Vector3<f64>,
    pub look_at: Vector3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraSpec {
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view (degrees).
    pub fov_deg: f64,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            fov_deg: 60.0,
        }
    }
}

impl CameraSpec {
    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::from_fov(self.width, self.height, self.fov_deg.to_radians())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalSource {
    /// Analytic surface normals at lidar pixels.
    #[default]
    Analytic,
    /// Normals estimated from the simulated range image.
    Range,
}

/// Camera-aligned lidar on a pixel subgrid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LidarSpec {
    /// Returns on every `stride`-th pixel in both directions.
    pub stride: usize,
    /// Gaussian range noise σ (m).
    pub noise: f64,
    pub max_range: f64,
    pub normals: NormalSource,
}

impl Default for LidarSpec {
    fn default() -> Self {
        Self {
            stride: 4,
            noise: 0.02,
            max_range: 100.0,
            normals: NormalSource::Analytic,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub name: String,
    pub primitives: Vec<Primitive>,
    pub light: Light,
    pub sky_color: Rgb,
    pub waypoints: Vec<Waypoint>,
    /// Seconds between consecutive frames.
    pub frame_interval: f64,
    pub camera: CameraSpec,
    pub lidar: LidarSpec,
    /// Ground-truth surface samples per m².
    pub gt_density: f64,
    /// Every `test_every`-th frame (1-based) goes to the test split; 0 keeps all for training.
    pub test_every: usize,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            primitives: Vec::new(),
            light: Light::default(),
            sky_color: [0.55, 0.7, 0.95],
            waypoints: Vec::new(),
            frame_interval: 0.1,
            camera: CameraSpec::default(),
            lidar: LidarSpec::default(),
            gt_density: 400.0,
            test_every: 0,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.primitives.is_empty() {
            return Err(invalid("scene needs at least one primitive"));
        }
        if self.camera.width < 8 || self.camera.height < 8 {
            return Err(invalid("camera resolution must be at least 8x8"));
        }
        if !(self.camera.fov_deg > 0.0 && self.camera.fov_deg < 180.0) {
            return Err(invalid("field of view must lie in (0, 180) degrees"));
        }
        if self.lidar.stride == 0 || !(self.lidar.noise >= 0.0) {
            return Err(invalid("lidar stride must be >= 1 and noise >= 0"));
        }
        if self.waypoints.is_empty() {
            return Err(invalid("trajectory script needs at least one waypoint"));
        }
        if !(self.frame_interval > 0.0) {
            return Err(invalid("frame interval must be positive"));
        }
        for p in &self.primitives {
            p.shape.validate()?;
            p.texture.validate()?;
        }
        Ok(())
    }

    pub fn poses(&self) -> Vec<Pose> {
        self.waypoints.iter().map(|w| look_at(w.position, w.look_at)).collect()
    }

    /// Copy with a different image resolution.
    pub fn with_resolution(mut self, width: usize, height: usize) -> Self {
        self.camera.width = width;
        self.camera.height = height;
        self
    }
}

/// Nearest surface hit with the normal facing the ray origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub position: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub albedo: Rgb,
    pub primitive: usize,
}

pub fn raycast(origin: &Vector3<f64>, direction: &Vector3<f64>, scene: &SceneSpec) -> Option<Hit> {
    let mut best: Option<(ShapeHit, usize)> = None;
    for (i, p) in scene.primitives.iter().enumerate() {
        if let Some(h) = p.shape.intersect(origin, direction) {
            if best.as_ref().is_none_or(|(b, _)| h.t < b.t) {
                best = Some((h, i));
            }
        }
    }
    best.map(|(h, i)| {
        let normal = if h.normal.dot(direction) > 0.0 { -h.normal } else { h.normal };
        Hit {
            t: h.t,
            position: origin + direction * h.t,
            normal,
            albedo: scene.primitives[i].texture.albedo(h.uv),
            primitive: i,
        }
    })
}

/// Lambertian radiance of a hit under the scene light.
pub fn shade(hit: &Hit, light: &Light) -> Rgb {
    let lambert = hit.normal.dot(&light.direction).max(0.0);
    let k = light.ambient + light.diffuse * lambert;
    hit.albedo.map(|a| (a * k).clamp(0.0, 1.0))
}

/// Renders one capture: image, noisy lidar range on the pixel subgrid,
/// camera-frame normals and the sky mask.
pub fn simulate_frame<R: Rng + ?Sized>(scene: &SceneSpec, pose: &Pose, id: usize, rng: &mut R) -> Frame {
    let camera = scene.camera.intrinsics();
    let (w, h) = (camera.width, camera.height);
    let mut frame = Frame::blank(id, camera, *pose);
    frame.timestamp = id as f64 * scene.frame_interval;
    let mut depth = Image::filled(w, h, 0.0);
    let mut normals = Image::filled(w, h, [0.0; 3]);
    let mut sky = Image::filled(w, h, false);
    let noise = Normal::new(0.0, scene.lidar.noise.max(0.0)).expect("finite noise");
    let stride = scene.lidar.stride.max(1);
    let origin = pose.translation.vector;
    let to_camera = pose.rotation.inverse();
    for v in 0..h {
        for u in 0..w {
            let d = pose.rotation * camera.direction(u as f64, v as f64);
            let lidar_pixel = u % stride == 0 && v % stride == 0;
            match raycast(&origin, &d, scene) {
                Some(hit) => {
                    frame.image.set(u, v, shade(&hit, &scene.light));
                    if lidar_pixel && hit.t <= scene.lidar.max_range {
                        let eps = if scene.lidar.noise > 0.0 { noise.sample(rng) } else { 0.0 };
                        let r = hit.t + eps;
                        if r > 0.0 {
                            depth.set(u, v, r);
                            let n = to_camera * hit.normal;
                            normals.set(u, v, [n.x, n.y, n.z]);
                        }
                    }
                }
                None => {
                    frame.image.set(u, v, scene.sky_color);
                    sky.set(u, v, true);
                }
            }
        }
    }
    if scene.lidar.normals == NormalSource::Range {
        normals = lidar_normals_from_range(&depth, &camera, stride);
    }
    frame.depth = Some(depth);
    frame.normals = Some(normals);
    frame.sky = Some(sky);
    frame
}

/// Camera-frame normals from a range image by central differences over
/// `stride` pixels, oriented toward the sensor. Pixels with a missing
/// neighbor get the zero vector.
pub fn lidar_normals_from_range(depth: &Image<f64>, camera: &Intrinsics, stride: usize) -> Image<[f64; 3]> {
    let (w, h) = (depth.width(), depth.height());
    let s = stride.max(1);
    let point = |u: usize, v: usize| -> Option<Vector3<f64>> {
        let r = *depth.get(u, v);
        (r > 0.0 && r.is_finite()).then(|| camera.direction(u as f64, v as f64) * r)
    };
    Image::from_fn(w, h, |u, v| {
        if u < s || v < s || u + s >= w || v + s >= h {
            return [0.0; 3];
        }
        let (Some(p), Some(l), Some(r), Some(t), Some(b)) =
            (point(u, v), point(u - s, v), point(u + s, v), point(u, v - s), point(u, v + s))
        else {
            return [0.0; 3];
        };
        let n = (r - l).cross(&(b - t));
        let Some(mut n) = n.try_normalize(1e-15) else { return [0.0; 3] };
        if n.dot(&p) > 0.0 {
            n = -n;
        }
        [n.x, n.y, n.z]
    })
}

/// Uniform area samples over every bounded primitive, colored by albedo.
pub fn sample_ground_truth<R: Rng + ?Sized>(scene: &SceneSpec, density: f64, rng: &mut R) -> PointCloud {
    let mut cloud = PointCloud {
        normals: Some(Vec::new()),
        ..Default::default()
    };
    for p in &scene.primitives {
        let area = p.shape.area();
        if !area.is_finite() {
            log::warn!("skipping unbounded primitive in ground-truth sampling");
            continue;
        }
        let n = (area * density).round() as usize;
        for _ in 0..n {
            if let Some((x, normal, uv)) = p.shape.sample(rng) {
                cloud.positions.push(x);
                cloud.colors.push(color_to_u8(p.texture.albedo(uv)));
                if let Some(ns) = cloud.normals.as_mut() {
                    ns.push(normal);
                }
            }
        }
    }
    cloud
}

/// Distance from `p` to the nearest primitive surface.
pub fn surface_distance(scene: &SceneSpec, p: &Vector3<f64>) -> f64 {
    scene.primitives.iter().map(|q| q.shape.distance(p)).fold(f64::INFINITY, f64::min)
}

/// Everything `generate_dataset` produces.
#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub trajectory: Trajectory,
    /// The metric trajectory under `perturbation`, as an up-to-scale estimate would look.
    pub perturbed: Trajectory,
    pub perturbation: Sim3,
}

fn frame_rng(seed: u64, id: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (id as u64 + 1))
}

/// Simulates every waypoint and samples the ground-truth cloud.
pub fn generate_dataset(spec: &SceneSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let poses = spec.poses();
    let mut frames = Vec::with_capacity(poses.len());
    for (i, pose) in poses.iter().enumerate() {
        let mut rng = frame_rng(spec.seed, i);
        let mut frame = simulate_frame(spec, pose, i, &mut rng);
        if spec.test_every > 0 && (i + 1) % spec.test_every == 0 {
            frame.split = Split::Test;
        }
        frames.push(frame);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_c10d);
    let gt = sample_ground_truth(spec, spec.gt_density, &mut rng);
    let trajectory = Trajectory::new(
        frames
            .iter()
            .map(|f| TimedPose {
                timestamp: f.timestamp,
                pose: f.pose,
                frame_id: f.id,
            })
            .collect(),
    )?;
    let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let perturbation = Sim3::new(
        rng.random_range(0.5..2.0),
        UnitQuaternion::from_scaled_axis(axis),
        Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)),
    )?;
    let perturbed = trajectory.transformed(&perturbation);
    let mut dataset = Dataset::new(frames);
    dataset.gt_cloud = Some(gt);
    Ok(SynthOutput {
        dataset,
        trajectory,
        perturbed,
        perturbation,
    })
}
