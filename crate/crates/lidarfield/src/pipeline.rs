//! End-to-end steps shared by the command line and tests.

use std::path::{Path, PathBuf};

use lidarfield_core::camera::{Intrinsics, Pose};
use lidarfield_core::dataset::{Dataset, Frame, Split};
use lidarfield_core::eval::{masked_metrics, psnr, ssim, ImageMetrics};
use lidarfield_core::recon::{extract_points, merge_submaps, CullConfig, CullReport, ExtractConfig, PointCloud, SubmapCloud};
use lidarfield_core::render::{render_image, RadianceSource, RenderedImage, SamplerConfig};
use lidarfield_core::train::{train, train_submaps, LogEntry, TrainConfig};
use lidarfield_core::trajectory::{Partition, Sim3};
use serde::Serialize;

use crate::checkpoint::{self, Checkpoint, CheckpointMeta};
use crate::error::{write, Error, Result};

/// `frame` with its pose expressed in the model coordinates.
pub fn to_model_frame(frame: &Frame, local_to_world: &Sim3) -> Frame {
    let mut f = frame.clone();
    if !local_to_world.is_identity(0.0) {
        f.pose = local_to_world.inverse().transform_pose(&frame.pose);
    }
    f
}

/// Training frames of a model in its own coordinates: the recorded frame
/// ids, or every training frame when none are recorded.
pub fn model_frames(dataset: &Dataset, meta: &CheckpointMeta) -> Vec<Frame> {
    dataset
        .frames
        .iter()
        .filter(|f| {
            if meta.frame_ids.is_empty() {
                f.split == Split::Train
            } else {
                meta.frame_ids.contains(&f.id)
            }
        })
        .map(|f| to_model_frame(f, &meta.local_to_world))
        .collect()
}

/// Sampler a model was trained with, or the default.
pub fn model_sampler(meta: &CheckpointMeta) -> SamplerConfig {
    meta.train.as_ref().map(|t| t.sampler).unwrap_or_default()
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainedModel {
    pub path: PathBuf,
    pub cluster: Option<usize>,
    pub frames: usize,
    pub final_log: Option<LogEntry>,
    #[serde(skip)]
    pub checkpoint: Checkpoint,
}

fn write_log(path: &Path, log: &[LogEntry]) -> Result<()> {
    let mut s = String::new();
    for e in log {
        s.push_str(&serde_json::to_string(e).expect("log entry serializes"));
        s.push('\n');
    }
    write(path, s.as_bytes())
}

/// Trains one model on every training frame, or one per cluster when a
/// partition is given, and writes checkpoints and logs into `out`.
pub fn train_models(dataset: &Dataset, config: &TrainConfig, partition: Option<&Partition>, overlap: f64, out: &Path) -> Result<Vec<TrainedModel>> {
    let mut models = Vec::new();
    match partition {
        None => {
            let frames = dataset.train_frames();
            let ckpt_path = out.join("model.ckpt");
            let frame_ids: Vec<usize> = frames.iter().map(|f| f.id).collect();
            let meta_for = |iteration: usize| CheckpointMeta {
                frame_ids: frame_ids.clone(),
                iteration,
                train: Some(config.clone()),
                ..CheckpointMeta::default()
            };
            let mut hook = |it: usize, field: &lidarfield_core::field::RadianceField| {
                checkpoint::save(&ckpt_path, &Checkpoint::new(field.clone(), meta_for(it))).map_err(|e| e.to_string())
            };
            let outcome = train(&frames, config, Some(&mut hook))?;
            let ckpt = Checkpoint::new(outcome.field, meta_for(config.iterations));
            checkpoint::save(&ckpt_path, &ckpt)?;
            write_log(&out.join("train_log.jsonl"), &outcome.log)?;
            models.push(TrainedModel {
                path: ckpt_path,
                cluster: None,
                frames: frames.len(),
                final_log: outcome.log.last().copied(),
                checkpoint: ckpt,
            });
        }
        Some(p) => {
            for m in train_submaps(dataset, p, config, overlap)? {
                let path = out.join(format!("submap_{}.ckpt", m.cluster));
                let ckpt = Checkpoint::new(
                    m.outcome.field,
                    CheckpointMeta {
                        local_to_world: m.local_to_world,
                        cluster: Some(m.cluster),
                        frame_ids: m.frame_ids.clone(),
                        iteration: config.iterations,
                        train: Some(config.clone()),
                    },
                );
                checkpoint::save(&path, &ckpt)?;
                write_log(&out.join(format!("submap_{}_log.jsonl", m.cluster)), &m.outcome.log)?;
                models.push(TrainedModel {
                    path,
                    cluster: Some(m.cluster),
                    frames: m.frame_ids.len(),
                    final_log: m.outcome.log.last().copied(),
                    checkpoint: ckpt,
                });
            }
        }
    }
    Ok(models)
}

/// Extracts a model's points in its own coordinates.
pub fn extract_local(ckpt: &Checkpoint, dataset: &Dataset, config: &ExtractConfig) -> Result<PointCloud> {
    let frames = model_frames(dataset, &ckpt.meta);
    let refs: Vec<&Frame> = frames.iter().collect();
    Ok(extract_points(&ckpt.field, &refs, config)?)
}

/// Extracts a model's points in world coordinates.
pub fn extract_world(ckpt: &Checkpoint, dataset: &Dataset, config: &ExtractConfig) -> Result<PointCloud> {
    Ok(extract_local(ckpt, dataset, config)?.transformed(&ckpt.meta.local_to_world))
}

/// Checkpoints in `dir`, sorted by file name.
pub fn list_checkpoints(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::format(dir, "no .ckpt files found"));
    }
    Ok(paths)
}

/// Extracts every model, culls each in its own frame and merges in world.
pub fn merge_models(
    models: &[Checkpoint],
    dataset: &Dataset,
    extract: &ExtractConfig,
    cull: &CullConfig,
    voxel: Option<f64>,
) -> Result<(PointCloud, Vec<CullReport>)> {
    let mut parts = Vec::with_capacity(models.len());
    for m in models {
        parts.push(SubmapCloud {
            cloud: extract_local(m, dataset, extract)?,
            local_to_world: m.meta.local_to_world,
            field: Some(&m.field as &dyn RadianceSource),
        });
    }
    Ok(merge_submaps(&parts, cull, voxel))
}

/// Renders a world-frame pose through a model.
pub fn render_world(ckpt: &Checkpoint, camera: &Intrinsics, pose: &Pose, frame: Option<usize>, sampler: &SamplerConfig) -> RenderedImage {
    let local = if ckpt.meta.local_to_world.is_identity(0.0) {
        *pose
    } else {
        ckpt.meta.local_to_world.inverse().transform_pose(pose)
    };
    render_image(&ckpt.field, camera, &local, frame, sampler, true)
}

#[derive(Clone, Debug, Serialize)]
pub struct ViewScore {
    pub frame: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub masked: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ViewReport {
    pub frames: Vec<ViewScore>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

/// Image metrics of a model on every frame of `split`, ignoring sky pixels
/// where a mask exists. Held-out frames use the default appearance code.
pub fn evaluate_views(ckpt: &Checkpoint, dataset: &Dataset, split: Split, sampler: &SamplerConfig) -> Result<ViewReport> {
    let mut frames = Vec::new();
    for f in dataset.split(split) {
        let appearance = (split == Split::Train).then_some(f.id);
        let r = render_world(ckpt, &f.camera, &f.pose, appearance, sampler);
        let score = match &f.sky {
            Some(sky) => {
                let valid = sky.map(|s| !*s);
                let ImageMetrics { psnr, ssim } = masked_metrics(&f.image, &r.rgb, &valid)?;
                ViewScore {
                    frame: f.id,
                    psnr,
                    ssim,
                    masked: true,
                }
            }
            None => ViewScore {
                frame: f.id,
                psnr: psnr(&f.image, &r.rgb)?,
                ssim: ssim(&f.image, &r.rgb)?,
                masked: false,
            },
        };
        frames.push(score);
    }
    if frames.is_empty() {
        return Err(Error::Core(lidarfield_core::Error::InvalidInput(format!("dataset has no {split:?} frames"))));
    }
    let n = frames.len() as f64;
    Ok(ViewReport {
        mean_psnr: frames.iter().map(|s| s.psnr).sum::<f64>() / n,
        mean_ssim: frames.iter().map(|s| s.ssim).sum::<f64>() / n,
        frames,
    })
}
