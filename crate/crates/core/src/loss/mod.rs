//! Training objectives and their gradients with respect to rendered quantities.

use alloc::vec::Vec;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::image::Rgb;
use crate::render::{sample_normal, Ray, RaySamples, RenderedPixel};

#[cfg(not(feature = "std"))]
use num_traits::Float;

/// Floor inside the depth-loss logarithm.
pub const LOG_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthTarget {
    pub depth: f64,
    pub sigma_hat: f64,
}

impl DepthTarget {
    pub fn new(depth: f64, sigma_hat: f64) -> Result<Self> {
        if !(depth > 0.0 && depth.is_finite()) || !(sigma_hat > 0.0 && sigma_hat.is_finite()) {
            return Err(invalid("depth target needs D > 0 and σ̂ > 0"));
        }
        Ok(Self { depth, sigma_hat })
    }

    /// Prior kernel `exp(-(t - D)² / 2σ̂²)`.
    pub fn kernel(&self, t: f64) -> f64 {
        let z = (t - self.depth) / self.sigma_hat;
        (-0.5 * z * z).exp()
    }
}

/// Per-ray supervision.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayTarget {
    pub color: Rgb,
    pub depth: Option<DepthTarget>,
    pub normal: Option<Vector3<f64>>,
    pub sky: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RayBatch {
    pub rays: Vec<Ray>,
    pub targets: Vec<RayTarget>,
}

impl RayBatch {
    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rays.len() != self.targets.len() {
            return Err(invalid("ray and target counts differ"));
        }
        for t in &self.targets {
            if t.normal.is_some_and(|n| (n.norm() - 1.0).abs() > 1e-3) {
                return Err(invalid("lidar normal must be unit length"));
            }
            if t.sky && t.depth.is_some() {
                return Err(invalid("sky rays cannot carry a depth target"));
            }
        }
        Ok(())
    }

    /// Number of rays contributing to each mean-reduced term.
    pub fn counts(&self) -> TermCounts {
        TermCounts::from_targets(&self.targets)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermCounts {
    pub rgb: usize,
    pub depth: usize,
    pub normal: usize,
    pub sky: usize,
}

impl TermCounts {
    /// Non-sky rays feed the photometric term; sky rays feed only the sky term.
    pub fn from_targets(targets: &[RayTarget]) -> Self {
        let mut c = TermCounts::default();
        for t in targets {
            if t.sky {
                c.sky += 1;
            } else {
                c.rgb += 1;
                c.depth += t.depth.is_some() as usize;
                c.normal += t.normal.is_some() as usize;
            }
        }
        c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub depth: f64,
    pub normal: f64,
    pub sky: f64,
    /// Depth prior standard deviation σ̂ (m).
    pub sigma_hat: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            depth: 0.1,
            normal: 0.05,
            sky: 0.01,
            sigma_hat: 0.05,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.depth, self.normal, self.sky].iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(invalid("loss weights must be finite and non-negative"));
        }
        if !(self.sigma_hat > 0.0) {
            return Err(invalid("σ̂ must be positive"));
        }
        Ok(())
    }
}

/// Mean-reduced loss terms and their weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub rgb: f64,
    pub depth: f64,
    pub normal: f64,
    pub sky: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.rgb, self.depth, self.normal, self.sky, self.total].iter().all(|v| v.is_finite())
    }
}

pub fn photometric_loss(rendered: &Rgb, target: &Rgb) -> f64 {
    rendered.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 3.0
}

pub fn depth_loss(samples: &RaySamples, target: Option<&DepthTarget>) -> f64 {
    let Some(target) = target else { return 0.0 };
    samples
        .weights
        .iter()
        .zip(&samples.ts)
        .zip(&samples.deltas)
        .map(|((w, t), d)| -(w + LOG_EPS).ln() * target.kernel(*t) * d)
        .sum()
}

pub fn normal_loss(n_hat: &Vector3<f64>, n_bar: &Vector3<f64>) -> f64 {
    (n_hat - n_bar).abs().sum() + (1.0 - n_hat.dot(n_bar)).abs()
}

pub fn sky_loss(samples: &RaySamples, is_sky: bool) -> f64 {
    if !is_sky {
        return 0.0;
    }
    samples.weights.iter().map(|w| w * w).sum()
}

/// Weighted total over a rendered batch.
pub fn total_loss(targets: &[RayTarget], renders: &[(RaySamples, RenderedPixel)], weights: &LossWeights) -> Result<LossBreakdown> {
    if targets.is_empty() {
        return Err(invalid("cannot evaluate the loss of an empty batch"));
    }
    if targets.len() != renders.len() {
        return Err(invalid("target and render counts differ"));
    }
    let counts = TermCounts::from_targets(targets);
    let mut sums = LossBreakdown::default();
    for (t, (samples, px)) in targets.iter().zip(renders) {
        let r = ray_losses(t, samples, px, weights.sigma_hat);
        sums.rgb += r.rgb;
        sums.depth += r.depth;
        sums.normal += r.normal;
        sums.sky += r.sky;
    }
    Ok(reduce(&sums, &counts, weights))
}

/// Unreduced loss terms of one ray (zero where the term does not apply).
pub fn ray_losses(target: &RayTarget, samples: &RaySamples, px: &RenderedPixel, sigma_hat: f64) -> LossBreakdown {
    if target.sky {
        return LossBreakdown {
            sky: sky_loss(samples, true),
            ..Default::default()
        };
    }
    let depth = target
        .depth
        .map(|d| depth_loss(samples, Some(&DepthTarget { sigma_hat, ..d })))
        .unwrap_or(0.0);
    let normal = match (target.normal, px.normal) {
        (Some(bar), Some(hat)) => normal_loss(&hat, &bar),
        _ => 0.0,
    };
    LossBreakdown {
        rgb: photometric_loss(&px.color, &target.color),
        depth,
        normal,
        sky: 0.0,
        total: 0.0,
    }
}

/// Applies per-term means and weights to summed terms.
pub fn reduce(sums: &LossBreakdown, counts: &TermCounts, weights: &LossWeights) -> LossBreakdown {
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    let mut out = LossBreakdown {
        rgb: mean(sums.rgb, counts.rgb),
        depth: mean(sums.depth, counts.depth),
        normal: mean(sums.normal, counts.normal),
        sky: mean(sums.sky, counts.sky),
        total: 0.0,
    };
    out.total = out.rgb + weights.depth * out.depth + weights.normal * out.normal + weights.sky * out.sky;
    out
}

/// Gradient of the batch total with respect to one ray's per-sample
/// quantities: weights, colors and density gradients `∇σ_i`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleGrads {
    pub weights: Vec<f64>,
    pub colors: Vec<Rgb>,
    pub density_gradients: Option<Vec<Vector3<f64>>>,
}

/// Backpropagates the batch total (with means over `counts`) to one ray's samples.
pub fn ray_loss_gradients(
    target: &RayTarget,
    samples: &RaySamples,
    px: &RenderedPixel,
    counts: &TermCounts,
    weights: &LossWeights,
) -> SampleGrads {
    let n = samples.len();
    let mut g = SampleGrads {
        weights: alloc::vec![0.0; n],
        colors: alloc::vec![[0.0; 3]; n],
        density_gradients: None,
    };
    if target.sky {
        if counts.sky > 0 && weights.sky > 0.0 {
            let scale = 2.0 * weights.sky / counts.sky as f64;
            for (gw, w) in g.weights.iter_mut().zip(&samples.weights) {
                *gw = scale * w;
            }
        }
        return g;
    }
    if counts.rgb > 0 {
        let scale = 2.0 / (3.0 * counts.rgb as f64);
        let dc: [f64; 3] = core::array::from_fn(|k| scale * (px.color[k] - target.color[k]));
        for i in 0..n {
            let c = &samples.colors[i];
            g.weights[i] += dc[0] * c[0] + dc[1] * c[1] + dc[2] * c[2];
            g.colors[i] = dc.map(|v| v * samples.weights[i]);
        }
    }
    if let Some(d) = target.depth.filter(|_| counts.depth > 0 && weights.depth > 0.0) {
        let d = DepthTarget {
            sigma_hat: weights.sigma_hat,
            ..d
        };
        let scale = weights.depth / counts.depth as f64;
        for i in 0..n {
            let k = d.kernel(samples.ts[i]);
            if k != 0.0 {
                g.weights[i] -= scale * k * samples.deltas[i] / (samples.weights[i] + LOG_EPS);
            }
        }
    }
    if let (Some(bar), Some(hat), Some(grads)) = (target.normal, px.normal, samples.density_gradients.as_ref()) {
        if counts.normal > 0 && weights.normal > 0.0 {
            let scale = weights.normal / counts.normal as f64;
            let d_hat = normal_loss_gradient(&hat, &bar) * scale;
            let mut acc = Vector3::zeros();
            let normals: Vec<Option<Vector3<f64>>> = grads.iter().map(sample_normal).collect();
            for (n_i, w) in normals.iter().zip(&samples.weights) {
                if let Some(n_i) = n_i {
                    acc += n_i * *w;
                }
            }
            let len = acc.norm();
            let d_acc = (Matrix3::identity() - hat * hat.transpose()) * d_hat / len;
            let mut dg = alloc::vec![Vector3::zeros(); n];
            for i in 0..n {
                if let Some(n_i) = normals[i] {
                    g.weights[i] += d_acc.dot(&n_i);
                    // n_i = -∇σ / |∇σ|
                    let d_ni = d_acc * samples.weights[i];
                    dg[i] = -(d_ni - n_i * n_i.dot(&d_ni)) / grads[i].norm();
                }
            }
            g.density_gradients = Some(dg);
        }
    }
    g
}

/// Subgradient of the per-ray normal loss with respect to `N̂`.
pub fn normal_loss_gradient(n_hat: &Vector3<f64>, n_bar: &Vector3<f64>) -> Vector3<f64> {
    let l1 = (n_hat - n_bar).map(sign);
    l1 - n_bar * sign(1.0 - n_hat.dot(n_bar))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests;
