//! Ray generation, sampling along rays and quadrature volume rendering.

mod sampling;

pub use sampling::{sample_around, sample_importance, sample_stratified, SampledTs};

use alloc::vec::Vec;
use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{Intrinsics, Pose};
use crate::dataset::Frame;
use crate::error::{invalid, Result};
use crate::field::{check_unit, RadianceField, SampleCache};
use crate::image::{Image, Rgb};
#[cfg(not(feature = "std"))]
use num_traits::Float;

/// Opacity below which the rendered normal is meaningless.
pub const NORMAL_OPACITY_GATE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
    pub near: f64,
    pub far: f64,
    pub pixel: (usize, usize),
    pub frame_id: usize,
}

impl Ray {
    pub fn new(origin: Vector3<f64>, direction: Vector3<f64>, near: f64, far: f64) -> Result<Self> {
        check_unit(&direction)?;
        if !(near > 0.0 && near < far) {
            return Err(invalid("ray bounds must satisfy 0 < near < far"));
        }
        Ok(Self {
            origin,
            direction,
            near,
            far,
            pixel: (0, 0),
            frame_id: 0,
        })
    }

    pub fn at(&self, t: f64) -> Vector3<f64> {
        self.origin + self.direction * t
    }

    /// Ray through integer pixel `(u, v)` of a posed camera.
    pub fn through_pixel(camera: &Intrinsics, pose: &Pose, frame_id: usize, u: usize, v: usize, near: f64, far: f64) -> Self {
        let d = camera.direction(u as f64, v as f64);
        Self {
            origin: pose.translation.vector,
            direction: (pose.rotation * d).normalize(),
            near,
            far,
            pixel: (u, v),
            frame_id,
        }
    }
}

/// Rays from `frame`'s camera center through each requested pixel.
pub fn generate_rays(frame: &Frame, pixels: &[(usize, usize)], near: f64, far: f64) -> Result<Vec<Ray>> {
    frame.camera.validate()?;
    let r = frame.pose.rotation.to_rotation_matrix();
    let m = r.matrix();
    if ((m.transpose() * m) - nalgebra::Matrix3::identity()).amax() > 1e-6 || m.determinant() < 0.0 {
        return Err(invalid("camera rotation is not orthonormal"));
    }
    if !(near > 0.0 && near < far) {
        return Err(invalid("ray bounds must satisfy 0 < near < far"));
    }
    pixels
        .iter()
        .map(|&(u, v)| {
            if !frame.camera.contains(u, v) {
                return Err(invalid(alloc::format!(
                    "pixel ({u}, {v}) outside {}x{} image",
                    frame.camera.width,
                    frame.camera.height
                )));
            }
            Ok(Ray::through_pixel(&frame.camera, &frame.pose, frame.id, u, v, near, far))
        })
        .collect()
}

/// Quadrature weights `w_i = T_i (1 - exp(-σ_i δ_i))` and transmittance
/// `T_i = exp(-Σ_{j<i} σ_j δ_j)`.
pub fn quadrature_weights(sigmas: &[f64], deltas: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut weights = Vec::with_capacity(sigmas.len());
    let mut transmittance = Vec::with_capacity(sigmas.len());
    let mut optical_depth = 0.0f64;
    for (&s, &d) in sigmas.iter().zip(deltas) {
        let tau = s * d;
        let t = (-optical_depth).exp();
        transmittance.push(t);
        // -expm1(-tau) keeps 1 - exp(-tau) accurate for small tau
        weights.push(t * -(-tau).exp_m1());
        optical_depth += tau;
    }
    (weights, transmittance)
}

/// Pulls gradients on quadrature weights back to densities:
/// `∂L/∂σ_i = δ_i (g_i T_i e^{-σ_i δ_i} - Σ_{k>i} g_k w_k)`.
pub fn quadrature_backward(samples: &RaySamples, weight_grads: &[f64]) -> Vec<f64> {
    let n = samples.len();
    let mut out = alloc::vec![0.0; n];
    let mut tail = 0.0;
    for i in (0..n).rev() {
        let tau = samples.sigmas[i] * samples.deltas[i];
        let own = weight_grads[i] * samples.transmittance[i] * (-tau).exp();
        out[i] = samples.deltas[i] * (own - tail);
        tail += weight_grads[i] * samples.weights[i];
    }
    out
}

/// Samples along one ray with their field values and quadrature weights.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RaySamples {
    pub ts: Vec<f64>,
    pub deltas: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub colors: Vec<Rgb>,
    pub weights: Vec<f64>,
    pub transmittance: Vec<f64>,
    /// `∇σ` per sample, present when normals were requested.
    pub density_gradients: Option<Vec<Vector3<f64>>>,
}

impl RaySamples {
    pub fn new(ts: Vec<f64>, deltas: Vec<f64>, sigmas: Vec<f64>, colors: Vec<Rgb>) -> Self {
        let (weights, transmittance) = quadrature_weights(&sigmas, &deltas);
        Self {
            ts,
            deltas,
            sigmas,
            colors,
            weights,
            transmittance,
            density_gradients: None,
        }
    }

    pub fn len(&self) -> usize {
        self.ts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ts.is_empty()
    }

    pub fn opacity(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn mean_spacing(&self) -> f64 {
        if self.deltas.is_empty() {
            return 0.0;
        }
        self.deltas.iter().sum::<f64>() / self.deltas.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderedPixel {
    pub color: Rgb,
    pub depth: f64,
    pub opacity: f64,
    pub normal: Option<Vector3<f64>>,
}

/// Surface normal of one sample, `-∇σ / ‖∇σ‖`.
pub fn sample_normal(g: &Vector3<f64>) -> Option<Vector3<f64>> {
    let n = g.norm();
    (n > 0.0 && n.is_finite()).then(|| -g / n)
}

/// Composites one ray: `ĉ = Σ w_i c_i`, opacity `Σ w_i`, depth
/// `Σ w_i t_i / max(opacity, 1e-6)`, normal from weight-averaged per-sample
/// normals when opacity reaches [`NORMAL_OPACITY_GATE`].
pub fn render_pixel(samples: &RaySamples) -> RenderedPixel {
    let mut color = [0.0; 3];
    let mut opacity = 0.0;
    let mut depth_sum = 0.0;
    for (i, &w) in samples.weights.iter().enumerate() {
        for (c, s) in color.iter_mut().zip(&samples.colors[i]) {
            *c += w * s;
        }
        opacity += w;
        depth_sum += w * samples.ts[i];
    }
    let normal = match &samples.density_gradients {
        Some(grads) if opacity >= NORMAL_OPACITY_GATE => {
            let mut acc = Vector3::zeros();
            for (w, g) in samples.weights.iter().zip(grads) {
                if let Some(n) = sample_normal(g) {
                    acc += n * *w;
                }
            }
            let len = acc.norm();
            (len > 0.0).then(|| acc / len)
        }
        _ => None,
    };
    RenderedPixel {
        color,
        depth: depth_sum / opacity.max(1e-6),
        opacity,
        normal,
    }
}

/// Anything that can be volume rendered.
pub trait RadianceSource {
    fn densities(&self, positions: &[Vector3<f64>]) -> Vec<f64>;

    /// Density, color and optionally `∇σ` at each position, viewed along `d`.
    fn shade(
        &self,
        positions: &[Vector3<f64>],
        d: &Vector3<f64>,
        frame: Option<usize>,
        with_gradients: bool,
    ) -> (Vec<f64>, Vec<Rgb>, Option<Vec<Vector3<f64>>>);

    fn density(&self, x: &Vector3<f64>) -> f64 {
        self.densities(core::slice::from_ref(x))[0]
    }
}

impl RadianceSource for RadianceField {
    fn densities(&self, positions: &[Vector3<f64>]) -> Vec<f64> {
        let mut cache = self.new_cache();
        positions.iter().map(|x| self.forward_density(x, &mut cache)).collect()
    }

    fn shade(
        &self,
        positions: &[Vector3<f64>],
        d: &Vector3<f64>,
        frame: Option<usize>,
        with_gradients: bool,
    ) -> (Vec<f64>, Vec<Rgb>, Option<Vec<Vector3<f64>>>) {
        let mut cache: SampleCache = self.new_cache();
        let dir = self.encode_direction(d);
        let mut sigmas = Vec::with_capacity(positions.len());
        let mut colors = Vec::with_capacity(positions.len());
        let mut grads = with_gradients.then(|| Vec::with_capacity(positions.len()));
        for x in positions {
            let (s, c) = self.forward(x, &dir, frame, &mut cache);
            sigmas.push(s);
            colors.push(c);
            if let Some(g) = grads.as_mut() {
                g.push(self.density_gradient_cached(&mut cache));
            }
        }
        (sigmas, colors, grads)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub coarse: usize,
    pub fine: usize,
    /// Extra samples around the lidar depth on training rays that have one.
    pub guided: usize,
    pub near: f64,
    pub far: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            coarse: 64,
            fine: 64,
            guided: 16,
            near: 0.1,
            far: 120.0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.coarse < 2 {
            return Err(invalid("at least two coarse samples per ray are required"));
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(invalid("sampler bounds must satisfy 0 < near < far"));
        }
        Ok(())
    }
}

/// Sample positions for one ray: stratified, then importance-resampled from
/// the coarse densities when `fine > 0`. Without an rng every step uses
/// deterministic midpoints.
pub fn place_samples<S: RadianceSource + ?Sized, R: Rng + ?Sized>(
    source: &S,
    ray: &Ray,
    sampler: &SamplerConfig,
    rng: Option<&mut R>,
) -> SampledTs {
    let mut rng = rng;
    let coarse = sample_stratified(ray, sampler.coarse, rng.as_deref_mut());
    if sampler.fine == 0 {
        return coarse;
    }
    let positions: Vec<_> = coarse.ts.iter().map(|&t| ray.at(t)).collect();
    let sigmas = source.densities(&positions);
    let (weights, _) = quadrature_weights(&sigmas, &coarse.deltas);
    sample_importance(ray, &coarse, &weights, sampler.fine, rng)
}

/// Renders one ray end to end.
pub fn render_ray<S: RadianceSource + ?Sized, R: Rng + ?Sized>(
    source: &S,
    ray: &Ray,
    sampler: &SamplerConfig,
    frame: Option<usize>,
    with_normals: bool,
    rng: Option<&mut R>,
) -> (RaySamples, RenderedPixel) {
    let placed = place_samples(source, ray, sampler, rng);
    let positions: Vec<_> = placed.ts.iter().map(|&t| ray.at(t)).collect();
    let (sigmas, colors, grads) = source.shade(&positions, &ray.direction, frame, with_normals);
    let mut samples = RaySamples::new(placed.ts, placed.deltas, sigmas, colors);
    samples.density_gradients = grads;
    let pixel = render_pixel(&samples);
    (samples, pixel)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedImage {
    pub rgb: Image<Rgb>,
    pub depth: Image<f64>,
    /// World-frame unit normals; zero where absent.
    pub normal: Image<[f64; 3]>,
    pub opacity: Image<f64>,
}

/// Renders every pixel of a posed camera with deterministic midpoint sampling.
pub fn render_image<S: RadianceSource + ?Sized>(
    source: &S,
    camera: &Intrinsics,
    pose: &Pose,
    frame: Option<usize>,
    sampler: &SamplerConfig,
    with_normals: bool,
) -> RenderedImage {
    let (w, h) = (camera.width, camera.height);
    let mut rgb = Image::filled(w, h, [0.0; 3]);
    let mut depth = Image::filled(w, h, 0.0);
    let mut normal = Image::filled(w, h, [0.0; 3]);
    let mut opacity = Image::filled(w, h, 0.0);
    for v in 0..h {
        for u in 0..w {
            let ray = Ray::through_pixel(camera, pose, frame.unwrap_or(0), u, v, sampler.near, sampler.far);
            let (_, px) = render_ray::<S, rand_chacha::ChaCha8Rng>(source, &ray, sampler, frame, with_normals, None);
            rgb.set(u, v, px.color);
            depth.set(u, v, px.depth);
            opacity.set(u, v, px.opacity);
            if let Some(n) = px.normal {
                normal.set(u, v, [n.x, n.y, n.z]);
            }
        }
    }
    RenderedImage {
        rgb,
        depth,
        normal,
        opacity,
    }
}
