//! Geometric accuracy/completeness against a reference cloud and image
//! quality metrics.

mod image_metrics;

pub use image_metrics::{masked_metrics, psnr, ssim, ImageMetrics, PSNR_CAP, SSIM_WINDOW};

use alloc::vec::Vec;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::recon::{KdTree, PointCloud};

#[cfg(not(feature = "std"))]
use num_traits::Float;

/// Inlier thresholds (m) reported alongside the distance statistics.
pub const INLIER_THRESHOLDS: [f64; 3] = [0.1, 0.5, 1.0];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Distances are clamped to `cap` (m) before averaging.
    pub cap: f64,
    /// When non-empty, only points inside one of these boxes are evaluated.
    pub include: Vec<Aabb>,
    /// Points inside any of these boxes are dropped (changed regions).
    pub exclude: Vec<Aabb>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            cap: 1.0,
            include: Vec::new(),
            exclude: Vec::new(),
        }
    }
}

impl EvalConfig {
    pub fn keeps(&self, p: &Vector3<f64>) -> bool {
        (self.include.is_empty() || self.include.iter().any(|b| b.contains(p))) && !self.exclude.iter().any(|b| b.contains(p))
    }

    pub fn crop(&self, cloud: &PointCloud) -> PointCloud {
        let keep: Vec<bool> = cloud.positions.iter().map(|p| self.keeps(p)).collect();
        cloud.filtered(&keep)
    }
}

/// Capped nearest-neighbor distance statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    pub mean: f64,
    pub median: f64,
    /// Fractions of points within each of [`INLIER_THRESHOLDS`].
    pub inliers: [f64; 3],
    pub count: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GeomReport {
    pub accuracy: DistanceStats,
    pub completeness: DistanceStats,
}

/// Per-point capped distances from `from` to the nearest point of `to`.
pub fn nearest_distances(from: &PointCloud, to: &PointCloud, cap: f64) -> Result<Vec<f64>> {
    if from.is_empty() || to.is_empty() {
        return Err(invalid("distance statistics need two non-empty clouds"));
    }
    if !(cap > 0.0) {
        return Err(invalid("distance cap must be positive"));
    }
    let tree = KdTree::new(&to.positions);
    Ok(from
        .positions
        .iter()
        .map(|p| tree.nearest(p).map_or(cap, |(_, d)| d.min(cap)))
        .collect())
}

fn stats(mut d: Vec<f64>) -> DistanceStats {
    let n = d.len();
    let mean = d.iter().sum::<f64>() / n as f64;
    let inliers = INLIER_THRESHOLDS.map(|t| d.iter().filter(|v| **v <= t).count() as f64 / n as f64);
    d.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 { d[n / 2] } else { 0.5 * (d[n / 2 - 1] + d[n / 2]) };
    DistanceStats {
        mean,
        median,
        inliers,
        count: n,
    }
}

/// Distance from the reconstruction to the reference.
pub fn accuracy(recon: &PointCloud, reference: &PointCloud, cap: f64) -> Result<DistanceStats> {
    nearest_distances(recon, reference, cap).map(stats)
}

/// Distance from the reference to the reconstruction.
pub fn completeness(recon: &PointCloud, reference: &PointCloud, cap: f64) -> Result<DistanceStats> {
    nearest_distances(reference, recon, cap).map(stats)
}

/// Both directions after applying the config's crop boxes to both clouds.
pub fn evaluate_geometry(recon: &PointCloud, reference: &PointCloud, config: &EvalConfig) -> Result<GeomReport> {
    let (r, g) = (config.crop(recon), config.crop(reference));
    Ok(GeomReport {
        accuracy: accuracy(&r, &g, config.cap)?,
        completeness: completeness(&r, &g, config.cap)?,
    })
}

/// Reconstruction colored by its capped accuracy error, blue (0) to red (cap).
pub fn error_cloud(recon: &PointCloud, reference: &PointCloud, cap: f64) -> Result<PointCloud> {
    let d = nearest_distances(recon, reference, cap)?;
    let mut out = recon.clone();
    out.colors = d
        .iter()
        .map(|e| {
            let f = e / cap;
            [(255.0 * f).round() as u8, 0, (255.0 * (1.0 - f)).round() as u8]
        })
        .collect();
    Ok(out)
}
