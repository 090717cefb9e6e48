//! Plain-text trajectories and JSON partitions.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use lidarfield_core::camera::Pose;
use lidarfield_core::trajectory::{Partition, Sim3, TimedPose, Trajectory};
use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{read, write, Error, Result};

/// Largest accepted deviation of a stored quaternion from unit norm.
pub const QUATERNION_TOLERANCE: f64 = 1e-3;

/// Builds a pose from `t` and `q = (qx, qy, qz, qw)`, renormalizing `q`.
pub fn pose_from_parts(t: [f64; 3], q: [f64; 4]) -> std::result::Result<Pose, String> {
    if !t.iter().chain(q.iter()).all(|v| v.is_finite()) {
        return Err("pose has non-finite values".into());
    }
    let quat = Quaternion::new(q[3], q[0], q[1], q[2]);
    let norm = quat.norm();
    if (norm - 1.0).abs() > QUATERNION_TOLERANCE {
        return Err(format!("quaternion norm {norm:.6} is not unit"));
    }
    // Already-unit values are kept bit for bit so that files round-trip.
    let rotation = if (norm - 1.0).abs() <= 4.0 * f64::EPSILON {
        UnitQuaternion::new_unchecked(quat)
    } else {
        UnitQuaternion::from_quaternion(quat)
    };
    Ok(Isometry3::from_parts(Translation3::new(t[0], t[1], t[2]), rotation))
}

/// `(t, q)` with `q = (qx, qy, qz, qw)`.
pub fn pose_parts(pose: &Pose) -> ([f64; 3], [f64; 4]) {
    let t = pose.translation.vector;
    let q = pose.rotation.quaternion();
    ([t.x, t.y, t.z], [q.i, q.j, q.k, q.w])
}

/// One line per pose: `timestamp tx ty tz qx qy qz qw`.
pub fn format_trajectory(traj: &Trajectory) -> String {
    let mut s = String::new();
    for p in traj.poses() {
        let (t, q) = pose_parts(&p.pose);
        let _ = writeln!(s, "{} {} {} {} {} {} {} {}", p.timestamp, t[0], t[1], t[2], q[0], q[1], q[2], q[3]);
    }
    s
}

/// Parses a trajectory file; frame ids are line order. Blank lines and
/// lines starting with `#` are skipped.
pub fn parse_trajectory(text: &str) -> std::result::Result<Trajectory, String> {
    let mut poses = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
        let vals = vals.map_err(|e| format!("line {}: {e}", lineno + 1))?;
        if vals.len() != 8 {
            return Err(format!("line {}: expected 8 values, found {}", lineno + 1, vals.len()));
        }
        let pose = pose_from_parts([vals[1], vals[2], vals[3]], [vals[4], vals[5], vals[6], vals[7]])
            .map_err(|e| format!("line {}: {e}", lineno + 1))?;
        poses.push(TimedPose {
            timestamp: vals[0],
            pose,
            frame_id: poses.len(),
        });
    }
    Trajectory::new(poses).map_err(|e| e.to_string())
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    write(path, format_trajectory(traj).as_bytes())
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let text = String::from_utf8(read(path)?).map_err(|_| Error::format(path, "not UTF-8 text"))?;
    parse_trajectory(&text).map_err(|m| Error::format(path, m))
}

/// On-disk partition: frame id to cluster plus per-cluster centroids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionFile {
    pub k: usize,
    pub assignments: BTreeMap<usize, usize>,
    pub centroids: Vec<[f64; 3]>,
}

impl From<&Partition> for PartitionFile {
    fn from(p: &Partition) -> Self {
        Self {
            k: p.k,
            assignments: p.frame_ids.iter().copied().zip(p.labels.iter().copied()).collect(),
            centroids: p.local_frames.iter().map(|s| s.translation.into()).collect(),
        }
    }
}

impl PartitionFile {
    pub fn to_partition(&self) -> lidarfield_core::Result<Partition> {
        let p = Partition {
            k: self.k,
            frame_ids: self.assignments.keys().copied().collect(),
            labels: self.assignments.values().copied().collect(),
            local_frames: self.centroids.iter().map(|c| Sim3::from_translation(Vector3::from(*c))).collect(),
        };
        p.validate()?;
        Ok(p)
    }
}

pub fn write_partition(path: &Path, p: &Partition) -> Result<()> {
    let json = serde_json::to_vec_pretty(&PartitionFile::from(p)).expect("partition serializes");
    write(path, &json)
}

pub fn read_partition(path: &Path) -> Result<Partition> {
    let file: PartitionFile = serde_json::from_slice(&read(path)?).map_err(|e| Error::format(path, e.to_string()))?;
    file.to_partition().map_err(|e| Error::format(path, e.to_string()))
}
