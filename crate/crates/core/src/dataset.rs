//! In-memory captures: posed images with aligned lidar products.

use alloc::vec::Vec;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::camera::{Intrinsics, Pose};
use crate::image::{Image, Rgb};
use crate::recon::PointCloud;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
}

/// One capture. Depth stores the lidar range along each pixel ray in meters
/// (0 = no return); normals are unit camera-frame vectors (zero = invalid);
/// `sky` is true where the pixel sees sky.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub id: usize,
    pub timestamp: f64,
    pub camera: Intrinsics,
    pub pose: Pose,
    pub split: Split,
    pub image: Image<Rgb>,
    pub depth: Option<Image<f64>>,
    pub normals: Option<Image<[f64; 3]>>,
    pub sky: Option<Image<bool>>,
}

impl Frame {
    /// Frame with a black image and no lidar products.
    pub fn blank(id: usize, camera: Intrinsics, pose: Pose) -> Self {
        Self {
            id,
            timestamp: id as f64,
            camera,
            pose,
            split: Split::Train,
            image: Image::filled(camera.width, camera.height, [0.0; 3]),
            depth: None,
            normals: None,
            sky: None,
        }
    }

    pub fn position(&self) -> Vector3<f64> {
        self.pose.translation.vector
    }

    pub fn pixel_count(&self) -> usize {
        self.camera.width * self.camera.height
    }

    /// Same capture with the pose re-expressed in a frame whose origin sits
    /// at `origin` (world coordinates).
    pub fn shifted(&self, origin: &Vector3<f64>) -> Self {
        let mut f = self.clone();
        f.pose.translation.vector -= origin;
        f
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub frames: Vec<Frame>,
    pub gt_cloud: Option<PointCloud>,
}

impl Dataset {
    pub fn new(frames: Vec<Frame>) -> Self {
        Self {
            frames,
            gt_cloud: None,
        }
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Frame> {
        self.frames.iter().filter(move |f| f.split == split)
    }

    pub fn train_frames(&self) -> Vec<&Frame> {
        self.split(Split::Train).collect()
    }

    pub fn max_frame_id(&self) -> Option<usize> {
        self.frames.iter().map(|f| f.id).max()
    }
}
