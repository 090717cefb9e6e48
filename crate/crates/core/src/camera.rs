//! Pinhole cameras in the OpenCV convention: x right, y down, z forward.
//!
//! Poses are world-from-camera rigid transforms.

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
#[cfg(not(feature = "std"))]
use num_traits::Float;

pub type Pose = Isometry3<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Camera with the principal point at the image center and the given
    /// horizontal field of view in radians.
    pub fn from_fov(width: usize, height: usize, horizontal_fov: f64) -> Self {
        let fx = (width as f64 / 2.0) / (horizontal_fov / 2.0).tan();
        Self {
            width,
            height,
            fx,
            fy: fx,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(invalid("pinhole focal lengths must be finite and positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(invalid("camera resolution must be non-zero"));
        }
        Ok(())
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        u < self.width && v < self.height
    }

    /// Unnormalized camera-frame bearing through pixel `(u, v)` with unit z.
    pub fn bearing(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Unit camera-frame direction through pixel `(u, v)`.
    pub fn direction(&self, u: f64, v: f64) -> Vector3<f64> {
        self.bearing(u, v).normalize()
    }

    /// Projects a camera-frame point; `None` behind the camera.
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }
}

/// World-from-camera pose at `position` looking at `target`, with world +z up.
pub fn look_at(position: Vector3<f64>, target: Vector3<f64>) -> Pose {
    let forward = (target - position).normalize();
    let mut up = Vector3::z();
    if forward.cross(&up).norm() < 1e-9 {
        up = Vector3::y();
    }
    let right = forward.cross(&up).normalize();
    let down = forward.cross(&right);
    let rot = nalgebra::Matrix3::from_columns(&[right, down, forward]);
    let rotation = UnitQuaternion::from_matrix(&rot);
    Isometry3::from_parts(Translation3::from(position), rotation)
}

pub fn camera_center(pose: &Pose) -> Vector3<f64> {
    pose.translation.vector
}

pub fn transform_point(pose: &Pose, p: &Vector3<f64>) -> Vector3<f64> {
    (pose * Point3::from(*p)).coords
}
