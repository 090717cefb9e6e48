use alloc::vec::Vec;
use nalgebra::{DMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Sim3, Trajectory};
use crate::error::{invalid, Result};

#[cfg(not(feature = "std"))]
use num_traits::Float;

/// XY area (m²) covered by one submap when choosing `k` automatically.
pub const SUBMAP_AREA: f64 = 2500.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionConfig {
    /// Affinity bandwidth ℓ (m).
    pub bandwidth: f64,
    pub restarts: usize,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            bandwidth: 10.0,
            restarts: 10,
            max_iterations: 100,
            seed: 0,
        }
    }
}

/// Cluster assignment of trajectory frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub k: usize,
    pub frame_ids: Vec<usize>,
    /// Cluster of `frame_ids[i]`.
    pub labels: Vec<usize>,
    /// Local-to-world transform of each cluster (translation to its centroid).
    pub local_frames: Vec<Sim3>,
}

impl Partition {
    /// Single cluster holding every frame.
    pub fn single(traj: &Trajectory) -> Self {
        let positions = traj.positions();
        let centroid = mean(&positions);
        Self {
            k: 1,
            frame_ids: traj.poses().iter().map(|p| p.frame_id).collect(),
            labels: alloc::vec![0; positions.len()],
            local_frames: alloc::vec![Sim3::from_translation(centroid)],
        }
    }

    pub fn label_of(&self, frame_id: usize) -> Option<usize> {
        self.frame_ids.iter().position(|f| *f == frame_id).map(|i| self.labels[i])
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.frame_ids
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| **l == cluster)
            .map(|(f, _)| *f)
            .collect()
    }

    pub fn centroid(&self, cluster: usize) -> Vector3<f64> {
        self.local_frames[cluster].translation
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_ids.len() != self.labels.len() || self.local_frames.len() != self.k {
            return Err(invalid("partition arrays are inconsistent"));
        }
        if self.labels.iter().any(|l| *l >= self.k) {
            return Err(invalid("partition label out of range"));
        }
        Ok(())
    }
}

fn mean(points: &[Vector3<f64>]) -> Vector3<f64> {
    if points.is_empty() {
        return Vector3::zeros();
    }
    points.iter().sum::<Vector3<f64>>() / points.len() as f64
}

/// Spectral clustering of camera positions into `k` groups.
pub fn spectral_partition(traj: &Trajectory, k: usize, config: &PartitionConfig) -> Result<Partition> {
    let n = traj.len();
    if k == 0 {
        return Err(invalid("cluster count must be at least 1"));
    }
    if k > n {
        return Err(invalid(alloc::format!("cannot split {n} frames into {k} clusters")));
    }
    if !(config.bandwidth > 0.0) {
        return Err(invalid("affinity bandwidth must be positive"));
    }
    let positions = traj.positions();
    let labels = if k == 1 {
        alloc::vec![0; n]
    } else {
        let embedding = spectral_embedding(&positions, k, config.bandwidth);
        canonical_labels(&kmeans(&embedding, k, config), k)
    };
    let local_frames = (0..k)
        .map(|c| {
            let members: Vec<_> = positions
                .iter()
                .zip(&labels)
                .filter(|(_, l)| **l == c)
                .map(|(p, _)| *p)
                .collect();
            Sim3::from_translation(mean(&members))
        })
        .collect();
    Ok(Partition {
        k,
        frame_ids: traj.poses().iter().map(|p| p.frame_id).collect(),
        labels,
        local_frames,
    })
}

/// Row-normalized eigenvectors of the `k` smallest eigenvalues of the
/// symmetric normalized Laplacian.
fn spectral_embedding(positions: &[Vector3<f64>], k: usize, bandwidth: f64) -> Vec<Vec<f64>> {
    let n = positions.len();
    let two_l2 = 2.0 * bandwidth * bandwidth;
    let w = DMatrix::from_fn(n, n, |i, j| (-(positions[i] - positions[j]).norm_squared() / two_l2).exp());
    let inv_sqrt_deg: Vec<f64> = (0..n).map(|i| 1.0 / w.row(i).sum().sqrt()).collect();
    let lap = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - inv_sqrt_deg[i] * w[(i, j)] * inv_sqrt_deg[j]
    });
    let eig = lap.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
    (0..n)
        .map(|i| {
            let mut row: Vec<f64> = order[..k].iter().map(|c| eig.eigenvectors[(i, *c)]).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
            row
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Best of `config.restarts` seeded k-means++ / Lloyd runs.
fn kmeans(points: &[Vec<f64>], k: usize, config: &PartitionConfig) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..config.restarts.max(1) {
        let (cost, labels) = lloyd(points, k, config.max_iterations, &mut rng);
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, labels));
        }
    }
    best.map(|(_, l)| l).unwrap_or_default()
}

fn lloyd(points: &[Vec<f64>], k: usize, iterations: usize, rng: &mut ChaCha8Rng) -> (f64, Vec<usize>) {
    let n = points.len();
    let dim = points[0].len();
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..n)].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if u < *d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[next].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centers[centers.len() - 1]));
        }
    }
    let mut labels = alloc::vec![usize::MAX; n];
    for _ in 0..iterations.max(1) {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = (f64::INFINITY, 0);
            for (c, center) in centers.iter().enumerate() {
                let d = sq_dist(p, center);
                if d < best.0 {
                    best = (d, c);
                }
            }
            if labels[i] != best.1 {
                labels[i] = best.1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let mut sum = alloc::vec![0.0; dim];
            let mut count = 0usize;
            for (p, _) in points.iter().zip(&labels).filter(|(_, l)| **l == c) {
                sum.iter_mut().zip(p).for_each(|(s, v)| *s += v);
                count += 1;
            }
            if count > 0 {
                *center = sum.into_iter().map(|s| s / count as f64).collect();
            }
        }
    }
    let cost = points.iter().zip(&labels).map(|(p, l)| sq_dist(p, &centers[*l])).sum();
    (cost, labels)
}

/// Renumbers clusters in order of first appearance, dropping empty ones
/// from the numbering only if they never occur.
fn canonical_labels(labels: &[usize], k: usize) -> Vec<usize> {
    let mut map = alloc::vec![usize::MAX; k];
    let mut next = 0;
    labels
        .iter()
        .map(|l| {
            if map[*l] == usize::MAX {
                map[*l] = next;
                next += 1;
            }
            map[*l]
        })
        .collect()
}

/// Within-cluster sum of squared distances to cluster centroids (m²).
pub fn partition_cost(positions: &[Vector3<f64>], labels: &[usize], k: usize) -> f64 {
    (0..k)
        .map(|c| {
            let members: Vec<_> = positions.iter().zip(labels).filter(|(_, l)| **l == c).map(|(p, _)| *p).collect();
            let m = mean(&members);
            members.iter().map(|p| (p - m).norm_squared()).sum::<f64>()
        })
        .sum()
}

/// Submap count from the XY footprint of the trajectory.
pub fn auto_k(traj: &Trajectory) -> usize {
    let positions = traj.positions();
    if positions.is_empty() {
        return 1;
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &positions {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let area = (hi[0] - lo[0]) * (hi[1] - lo[1]);
    ((area / SUBMAP_AREA).ceil() as usize).max(1)
}
