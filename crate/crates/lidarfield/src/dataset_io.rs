//! On-disk dataset layout.
//!
//! ```text
//! cameras.json        intrinsics records
//! frames.jsonl        one record per frame
//! images/ depth/ normals/ sky/
//! gt_cloud.ply        optional reference cloud
//! trajectory.txt      frame poses, world-from-camera
//! ```
//!
//! Paths inside records are relative to the dataset root.

use std::path::{Path, PathBuf};

use lidarfield_core::camera::Intrinsics;
use lidarfield_core::dataset::{Dataset, Frame, Split};
use lidarfield_core::synth::{SceneSpec, SynthOutput};
use lidarfield_core::trajectory::{TimedPose, Trajectory};
use serde::{Deserialize, Serialize};

use crate::error::{read, write, Error, Result};
use crate::images;
use crate::ply;
use crate::trajectory_io::{pose_from_parts, pose_parts, write_trajectory};

pub const CAMERAS: &str = "cameras.json";
pub const FRAMES: &str = "frames.jsonl";
pub const GT_CLOUD: &str = "gt_cloud.ply";
pub const TRAJECTORY: &str = "trajectory.txt";
pub const TRAJECTORY_ESTIMATE: &str = "trajectory_estimate.txt";
pub const SCENE: &str = "scene.json";
pub const PERTURBATION: &str = "perturbation.json";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub id: usize,
    #[serde(flatten)]
    pub intrinsics: Intrinsics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub id: usize,
    pub timestamp: f64,
    pub camera: usize,
    pub split: Split,
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normals: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sky: Option<String>,
    /// Camera center (m).
    pub position: [f64; 3],
    /// World-from-camera rotation as `(qx, qy, qz, qw)`.
    pub rotation: [f64; 4],
}

fn rel(kind: &str, id: usize) -> String {
    format!("{kind}/{id:06}.png")
}

/// Writes `dataset` under `root`, creating directories as needed.
pub fn write_dataset(root: &Path, dataset: &Dataset) -> Result<()> {
    let mut cameras: Vec<Intrinsics> = Vec::new();
    let mut lines = String::new();
    for f in &dataset.frames {
        let camera = match cameras.iter().position(|c| *c == f.camera) {
            Some(i) => i,
            None => {
                cameras.push(f.camera);
                cameras.len() - 1
            }
        };
        let (t, q) = pose_parts(&f.pose);
        let record = FrameRecord {
            id: f.id,
            timestamp: f.timestamp,
            camera,
            split: f.split,
            image: rel("images", f.id),
            depth: f.depth.as_ref().map(|_| rel("depth", f.id)),
            normals: f.normals.as_ref().map(|_| rel("normals", f.id)),
            sky: f.sky.as_ref().map(|_| rel("sky", f.id)),
            position: t,
            rotation: q,
        };
        images::write_rgb(&root.join(&record.image), &f.image)?;
        if let (Some(p), Some(img)) = (&record.depth, &f.depth) {
            images::write_depth(&root.join(p), img)?;
        }
        if let (Some(p), Some(img)) = (&record.normals, &f.normals) {
            images::write_normals(&root.join(p), img)?;
        }
        if let (Some(p), Some(img)) = (&record.sky, &f.sky) {
            images::write_mask(&root.join(p), img)?;
        }
        lines.push_str(&serde_json::to_string(&record).expect("frame record serializes"));
        lines.push('\n');
    }
    let records: Vec<CameraRecord> = cameras
        .into_iter()
        .enumerate()
        .map(|(id, intrinsics)| CameraRecord { id, intrinsics })
        .collect();
    write(&root.join(CAMERAS), &serde_json::to_vec_pretty(&records).expect("cameras serialize"))?;
    write(&root.join(FRAMES), lines.as_bytes())?;
    write_trajectory(&root.join(TRAJECTORY), &dataset_trajectory(dataset)?)?;
    if let Some(gt) = &dataset.gt_cloud {
        ply::write_ply(&root.join(GT_CLOUD), gt)?;
    }
    Ok(())
}

/// Writes a generated scene: the dataset plus the scene description, the
/// perturbed trajectory estimate and its perturbation.
pub fn write_synth(root: &Path, spec: &SceneSpec, out: &SynthOutput) -> Result<()> {
    write_dataset(root, &out.dataset)?;
    write(&root.join(SCENE), &serde_json::to_vec_pretty(spec).expect("scene serializes"))?;
    write_trajectory(&root.join(TRAJECTORY_ESTIMATE), &out.perturbed)?;
    write(
        &root.join(PERTURBATION),
        &serde_json::to_vec_pretty(&out.perturbation).expect("transform serializes"),
    )
}

/// Frame poses ordered by timestamp.
pub fn dataset_trajectory(dataset: &Dataset) -> Result<Trajectory> {
    let mut poses: Vec<TimedPose> = dataset
        .frames
        .iter()
        .map(|f| TimedPose {
            timestamp: f.timestamp,
            pose: f.pose,
            frame_id: f.id,
        })
        .collect();
    poses.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    Ok(Trajectory::new(poses)?)
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, bytes: &[u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| Error::format(path, e.to_string()))
}

/// Loads and validates a dataset directory.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let cam_path = root.join(CAMERAS);
    let cameras: Vec<CameraRecord> = parse_json(&cam_path, &read(&cam_path)?)?;
    for c in &cameras {
        c.intrinsics
            .validate()
            .map_err(|e| Error::format(&cam_path, format!("camera {}: {e}", c.id)))?;
    }
    let frames_path = root.join(FRAMES);
    let text = String::from_utf8(read(&frames_path)?).map_err(|_| Error::format(&frames_path, "not UTF-8 text"))?;
    let mut frames: Vec<Frame> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry = |msg: String| Error::format(&frames_path, format!("line {}: {msg}", i + 1));
        let r: FrameRecord = serde_json::from_str(line).map_err(|e| entry(e.to_string()))?;
        if frames.iter().any(|f| f.id == r.id) {
            return Err(entry(format!("duplicate frame id {}", r.id)));
        }
        let camera = cameras
            .iter()
            .find(|c| c.id == r.camera)
            .ok_or_else(|| entry(format!("unknown camera id {}", r.camera)))?
            .intrinsics;
        let pose = pose_from_parts(r.position, r.rotation).map_err(|m| entry(format!("frame {}: {m}", r.id)))?;
        let file = |p: &str| -> Result<PathBuf> {
            let path = root.join(p);
            if !path.is_file() {
                return Err(Error::format(&path, format!("missing file referenced by {FRAMES} line {}", i + 1)));
            }
            Ok(path)
        };
        let check = |path: &Path, w: usize, h: usize| -> Result<()> {
            if (w, h) != (camera.width, camera.height) {
                return Err(Error::format(
                    path,
                    format!("size {w}x{h} does not match camera {} ({}x{})", r.camera, camera.width, camera.height),
                ));
            }
            Ok(())
        };
        let image_path = file(&r.image)?;
        let image = images::read_rgb(&image_path)?;
        check(&image_path, image.width(), image.height())?;
        let mut frame = Frame::blank(r.id, camera, pose);
        frame.timestamp = r.timestamp;
        frame.split = r.split;
        frame.image = image;
        if let Some(p) = &r.depth {
            let path = file(p)?;
            let d = images::read_depth(&path)?;
            check(&path, d.width(), d.height())?;
            frame.depth = Some(d);
        }
        if let Some(p) = &r.normals {
            let path = file(p)?;
            let n = images::read_normals(&path)?;
            check(&path, n.width(), n.height())?;
            frame.normals = Some(n);
        }
        if let Some(p) = &r.sky {
            let path = file(p)?;
            let s = images::read_mask(&path)?;
            check(&path, s.width(), s.height())?;
            frame.sky = Some(s);
        }
        frames.push(frame);
    }
    let mut dataset = Dataset::new(frames);
    let gt = root.join(GT_CLOUD);
    if gt.is_file() {
        dataset.gt_cloud = Some(ply::read_ply(&gt)?);
    }
    Ok(dataset)
}
