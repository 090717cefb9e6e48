//! Point clouds: extraction from a trained field, culling, merging.

mod kdtree;

pub use kdtree::KdTree;

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Frame;
use crate::error::{invalid, Result};
use crate::render::{render_ray, RadianceSource, Ray, SamplerConfig};
use crate::trajectory::Sim3;

#[cfg(not(feature = "std"))]
use num_traits::Float;

/// Positions with 8-bit colors and optional unit normals.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<Vector3<f64>>,
    pub colors: Vec<[u8; 3]>,
    pub normals: Option<Vec<Vector3<f64>>>,
}

impl PointCloud {
    pub fn new(positions: Vec<Vector3<f64>>, colors: Vec<[u8; 3]>, normals: Option<Vec<Vector3<f64>>>) -> Result<Self> {
        if colors.len() != positions.len() || normals.as_ref().is_some_and(|n| n.len() != positions.len()) {
            return Err(invalid("point cloud attribute lengths differ"));
        }
        if positions.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(invalid("point cloud contains non-finite coordinates"));
        }
        if let Some(ns) = &normals {
            if ns.iter().any(|n| (n.norm() - 1.0).abs() > 1e-3) {
                return Err(invalid("point cloud normals must be unit length"));
            }
        }
        Ok(Self {
            positions,
            colors,
            normals,
        })
    }

    /// Gray cloud from positions only.
    pub fn from_positions(positions: Vec<Vector3<f64>>) -> Self {
        let colors = alloc::vec![[128; 3]; positions.len()];
        Self {
            positions,
            colors,
            normals: None,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn index(&self) -> KdTree {
        KdTree::new(&self.positions)
    }

    /// Keeps the points whose flag is set.
    pub fn filtered(&self, keep: &[bool]) -> PointCloud {
        let pick = |i: &usize| keep[*i];
        let idx: Vec<usize> = (0..self.len()).filter(pick).collect();
        PointCloud {
            positions: idx.iter().map(|i| self.positions[*i]).collect(),
            colors: idx.iter().map(|i| self.colors[*i]).collect(),
            normals: self.normals.as_ref().map(|n| idx.iter().map(|i| n[*i]).collect()),
        }
    }

    pub fn transformed(&self, t: &Sim3) -> PointCloud {
        PointCloud {
            positions: self.positions.iter().map(|p| t.apply(p)).collect(),
            colors: self.colors.clone(),
            normals: self.normals.as_ref().map(|n| n.iter().map(|v| t.rotate(v)).collect()),
        }
    }

    /// Appends `other`; normals survive only if both clouds carry them.
    pub fn extend(&mut self, other: &PointCloud) {
        let had_points = !self.is_empty();
        self.normals = match (self.normals.take(), &other.normals) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            (None, Some(b)) if !had_points => Some(b.clone()),
            _ => None,
        };
        self.positions.extend_from_slice(&other.positions);
        self.colors.extend_from_slice(&other.colors);
    }
}

pub fn color_to_u8(c: [f64; 3]) -> [u8; 3] {
    c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractConfig {
    pub target_count: usize,
    /// Maximum rays rendered, as a multiple of `target_count`.
    pub ray_budget_factor: usize,
    pub opacity_gate: f64,
    pub with_normals: bool,
    pub sampler: SamplerConfig,
    pub seed: u64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            target_count: 200_000,
            ray_budget_factor: 4,
            opacity_gate: 0.7,
            with_normals: true,
            sampler: SamplerConfig::default(),
            seed: 0,
        }
    }
}

/// Renders uniformly drawn training pixels and keeps the expected-depth
/// point of every sufficiently opaque ray.
pub fn extract_points<S: RadianceSource + ?Sized>(field: &S, frames: &[&Frame], config: &ExtractConfig) -> Result<PointCloud> {
    if config.target_count == 0 {
        return Err(invalid("target point count must be at least 1"));
    }
    config.sampler.validate()?;
    let total: usize = frames.iter().map(|f| f.pixel_count()).sum();
    if total == 0 {
        return Err(invalid("no training pixels to extract from"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let budget = config.target_count.saturating_mul(config.ray_budget_factor.max(1));
    let mut cloud = PointCloud {
        normals: config.with_normals.then(Vec::new),
        ..Default::default()
    };
    let sampler = &config.sampler;
    for _ in 0..budget {
        if cloud.len() >= config.target_count {
            break;
        }
        let (frame, u, v) = pick_pixel(frames, total, &mut rng);
        let ray = Ray::through_pixel(&frame.camera, &frame.pose, frame.id, u, v, sampler.near, sampler.far);
        let (_, px) = render_ray::<S, ChaCha8Rng>(field, &ray, sampler, Some(frame.id), config.with_normals, None);
        if !(px.opacity >= config.opacity_gate) || !px.depth.is_finite() {
            continue;
        }
        cloud.positions.push(ray.at(px.depth));
        cloud.colors.push(color_to_u8(px.color));
        if let Some(normals) = cloud.normals.as_mut() {
            normals.push(px.normal.unwrap_or_else(|| -ray.direction));
        }
    }
    if cloud.is_empty() {
        log::warn!("extraction produced no points: the field is transparent along every sampled ray");
    }
    Ok(cloud)
}

pub(crate) fn pick_pixel<'a, R: Rng + ?Sized>(frames: &[&'a Frame], total: usize, rng: &mut R) -> (&'a Frame, usize, usize) {
    let mut k = rng.random_range(0..total);
    for f in frames {
        let n = f.pixel_count();
        if k < n {
            return (f, k % f.camera.width, k / f.camera.width);
        }
        k -= n;
    }
    unreachable!("pixel index within total")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CullConfig {
    /// Field density threshold τ_σ (1/m); `None` disables the test.
    pub density_gate: Option<f64>,
    /// Neighbor search radius (m).
    pub radius: f64,
    /// Minimum neighbors (excluding the point) within `radius`; 0 disables the test.
    pub min_neighbors: usize,
}

impl Default for CullConfig {
    fn default() -> Self {
        Self {
            density_gate: Some(1.0),
            radius: 0.2,
            min_neighbors: 5,
        }
    }
}

/// Which culling tests ran and how many points each removed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CullReport {
    pub input: usize,
    pub kept: usize,
    pub density_applied: bool,
    pub removed_by_density: usize,
    pub neighbors_applied: bool,
    pub removed_by_neighbors: usize,
}

/// Drops points in low field density or with too few neighbors. The
/// density test needs a field; without one only the neighbor test runs.
pub fn cull_low_density(cloud: &PointCloud, field: Option<&dyn RadianceSource>, config: &CullConfig) -> (PointCloud, CullReport) {
    let n = cloud.len();
    let mut report = CullReport {
        input: n,
        ..Default::default()
    };
    if n == 0 {
        return (cloud.clone(), report);
    }
    let mut keep = alloc::vec![true; n];
    if let (Some(field), Some(gate)) = (field, config.density_gate) {
        report.density_applied = true;
        let sigmas = field.densities(&cloud.positions);
        for (k, s) in keep.iter_mut().zip(&sigmas) {
            if !(*s >= gate) {
                *k = false;
                report.removed_by_density += 1;
            }
        }
    }
    if config.min_neighbors > 0 {
        report.neighbors_applied = true;
        let tree = cloud.index();
        // The query point counts itself.
        let need = config.min_neighbors + 1;
        for (i, p) in cloud.positions.iter().enumerate() {
            if keep[i] && tree.count_within(p, config.radius, need) < need {
                keep[i] = false;
                report.removed_by_neighbors += 1;
            }
        }
    }
    let out = cloud.filtered(&keep);
    report.kept = out.len();
    (out, report)
}

/// A submap cloud in its local frame with its local-to-world transform.
pub struct SubmapCloud<'a> {
    pub cloud: PointCloud,
    pub local_to_world: Sim3,
    pub field: Option<&'a dyn RadianceSource>,
}

/// Culls each submap in its own frame, maps it to world and concatenates;
/// optionally voxel-downsamples the result.
pub fn merge_submaps(parts: &[SubmapCloud<'_>], cull: &CullConfig, voxel: Option<f64>) -> (PointCloud, Vec<CullReport>) {
    let mut merged = PointCloud::default();
    let mut reports = Vec::with_capacity(parts.len());
    for part in parts {
        let (culled, report) = cull_low_density(&part.cloud, part.field, cull);
        merged.extend(&culled.transformed(&part.local_to_world));
        reports.push(report);
    }
    if let Some(size) = voxel.filter(|s| *s > 0.0) {
        merged = voxel_downsample(&merged, size);
    }
    (merged, reports)
}

/// One averaged point per occupied voxel of side `size`.
pub fn voxel_downsample(cloud: &PointCloud, size: f64) -> PointCloud {
    struct Acc {
        position: Vector3<f64>,
        color: [f64; 3],
        normal: Vector3<f64>,
        count: usize,
    }
    let mut cells: BTreeMap<[i64; 3], Acc> = BTreeMap::new();
    for (i, p) in cloud.positions.iter().enumerate() {
        let key = [0, 1, 2].map(|a| (p[a] / size).floor() as i64);
        let acc = cells.entry(key).or_insert(Acc {
            position: Vector3::zeros(),
            color: [0.0; 3],
            normal: Vector3::zeros(),
            count: 0,
        });
        acc.position += p;
        for c in 0..3 {
            acc.color[c] += cloud.colors[i][c] as f64;
        }
        if let Some(n) = &cloud.normals {
            acc.normal += n[i];
        }
        acc.count += 1;
    }
    let mut out = PointCloud {
        normals: cloud.normals.as_ref().map(|_| Vec::new()),
        ..Default::default()
    };
    for acc in cells.values() {
        let k = acc.count as f64;
        out.positions.push(acc.position / k);
        out.colors.push(acc.color.map(|c| (c / k).round() as u8));
        if let Some(ns) = out.normals.as_mut() {
            let n = acc.normal.try_normalize(1e-12).unwrap_or(Vector3::z());
            ns.push(n);
        }
    }
    out
}

#[cfg(test)]
mod tests;
