//! Similarity transforms, trajectory alignment and trajectory partitioning.

mod partition;

pub use partition::{auto_k, partition_cost, spectral_partition, Partition, PartitionConfig};

use alloc::vec::Vec;
use nalgebra::{Matrix3, Rotation3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::Pose;
use crate::error::{invalid, Error, Result};

#[cfg(not(feature = "std"))]
use num_traits::Float;

/// Maximum timestamp gap (s) for associating two trajectories.
pub const ASSOCIATION_WINDOW: f64 = 0.01;

/// `x -> s R x + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sim3 {
    pub scale: f64,
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Sim3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Sim3 {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(scale: f64, rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid("similarity scale must be positive and finite"));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(invalid("similarity translation must be finite"));
        }
        Ok(Self {
            scale,
            rotation,
            translation,
        })
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            translation: t,
            ..Self::identity()
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p * self.scale + self.translation
    }

    /// Rotates a direction; scale and translation do not act on normals.
    pub fn rotate(&self, n: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * n
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Sim3) -> Sim3 {
        Sim3 {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.apply(&other.translation),
        }
    }

    pub fn inverse(&self) -> Sim3 {
        let rot = self.rotation.inverse();
        let scale = 1.0 / self.scale;
        Sim3 {
            scale,
            rotation: rot,
            translation: -(rot * self.translation) * scale,
        }
    }

    /// Maps a world-from-camera pose: rotations compose, positions transform.
    pub fn transform_pose(&self, pose: &Pose) -> Pose {
        Pose::from_parts(
            Translation3::from(self.apply(&pose.translation.vector)),
            self.rotation * pose.rotation,
        )
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        (self.scale - 1.0).abs() <= tol && self.rotation.angle() <= tol && self.translation.norm() <= tol
    }
}

/// Closed-form least-squares similarity mapping `src` onto `dst`.
pub fn umeyama(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<Sim3> {
    if src.len() != dst.len() {
        return Err(invalid("point lists differ in length"));
    }
    let n = src.len();
    if n < 3 {
        return Err(Error::Degenerate(alloc::format!("need at least 3 correspondences, got {n}")));
    }
    let inv_n = 1.0 / n as f64;
    let mu_s = src.iter().sum::<Vector3<f64>>() * inv_n;
    let mu_d = dst.iter().sum::<Vector3<f64>>() * inv_n;
    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let a = s - mu_s;
        cov += (d - mu_d) * a.transpose();
        var_s += a.norm_squared();
    }
    cov *= inv_n;
    var_s *= inv_n;
    if !(var_s > 0.0) || !var_s.is_finite() {
        return Err(Error::Degenerate("source points are coincident".into()));
    }
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut sv = svd.singular_values;
    // Sort so rank checks can look at the two largest values.
    let mut order = [0usize, 1, 2];
    order.sort_by(|a, b| sv[*b].total_cmp(&sv[*a]));
    let largest = sv[order[0]];
    if !(largest > 0.0) || sv[order[1]] <= 1e-12 * largest {
        return Err(Error::Degenerate(
            "cross-covariance has rank below 2 (collinear points)".into(),
        ));
    }
    let mut sign = Matrix3::identity();
    if (u.determinant() * vt.determinant()) < 0.0 {
        let smallest = order[2];
        sign[(smallest, smallest)] = -1.0;
        sv[smallest] = -sv[smallest];
    }
    let r = u * sign * vt;
    let scale = sv.sum() / var_s;
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
    let translation = mu_d - rotation * mu_s * scale;
    Sim3::new(scale, rotation, translation)
}

/// Root mean squared distance between `t(src)` and `dst`.
pub fn alignment_rmse(t: &Sim3, src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> f64 {
    let n = src.len().max(1) as f64;
    let sum: f64 = src.iter().zip(dst).map(|(s, d)| (t.apply(s) - d).norm_squared()).sum();
    (sum / n).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimedPose {
    pub timestamp: f64,
    pub pose: Pose,
    pub frame_id: usize,
}

/// Time-ordered camera poses.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    poses: Vec<TimedPose>,
}

impl Trajectory {
    pub fn new(poses: Vec<TimedPose>) -> Result<Self> {
        for w in poses.windows(2) {
            if !(w[1].timestamp > w[0].timestamp) {
                return Err(invalid(alloc::format!(
                    "timestamps must be strictly increasing ({} then {})",
                    w[0].timestamp,
                    w[1].timestamp
                )));
            }
        }
        if poses.iter().any(|p| !p.timestamp.is_finite() || !p.pose.translation.vector.iter().all(|v| v.is_finite())) {
            return Err(invalid("trajectory contains non-finite values"));
        }
        Ok(Self { poses })
    }

    pub fn poses(&self) -> &[TimedPose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.poses.iter().map(|p| p.pose.translation.vector).collect()
    }

    pub fn transformed(&self, t: &Sim3) -> Trajectory {
        Trajectory {
            poses: self
                .poses
                .iter()
                .map(|p| TimedPose {
                    pose: t.transform_pose(&p.pose),
                    ..*p
                })
                .collect(),
        }
    }

    /// Index of the pose nearest in time to `timestamp`, if within `window`.
    pub fn nearest(&self, timestamp: f64, window: f64) -> Option<usize> {
        let i = self.poses.partition_point(|p| p.timestamp < timestamp);
        let mut best: Option<(usize, f64)> = None;
        for j in [i.wrapping_sub(1), i] {
            if let Some(p) = self.poses.get(j) {
                let gap = (p.timestamp - timestamp).abs();
                if gap <= window && best.is_none_or(|(_, g)| gap < g) {
                    best = Some((j, gap));
                }
            }
        }
        best.map(|(j, _)| j)
    }
}

/// Aligns an up-to-scale trajectory to a metric one by timestamp association.
pub fn rescale_trajectory(up_to_scale: &Trajectory, metric: &Trajectory) -> Result<(Trajectory, Sim3)> {
    let mut src = Vec::new();
    let mut dst = Vec::new();
    for p in up_to_scale.poses() {
        if let Some(j) = metric.nearest(p.timestamp, ASSOCIATION_WINDOW) {
            src.push(p.pose.translation.vector);
            dst.push(metric.poses()[j].pose.translation.vector);
        }
    }
    if src.len() < 3 {
        return Err(Error::Degenerate(alloc::format!(
            "only {} timestamp associations within {} s",
            src.len(),
            ASSOCIATION_WINDOW
        )));
    }
    let t = umeyama(&src, &dst)?;
    Ok((up_to_scale.transformed(&t), t))
}

#[cfg(test)]
mod tests;
