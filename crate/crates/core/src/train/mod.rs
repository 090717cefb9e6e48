//! Optimization: ray batching, per-ray gradients, Adam and the training loop.

mod adam;

pub use adam::{adam_step, AdamConfig, AdamState};

use alloc::string::String;
use alloc::vec::Vec;
use nalgebra::Vector3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Frame};
use crate::error::{invalid, Error, Result};
use crate::field::{FieldConfig, OutputGrad, RadianceField, SampleCache, SceneNormalization};
use crate::loss::{
    ray_loss_gradients, ray_losses, reduce, DepthTarget, LossBreakdown, LossWeights, RayBatch, RayTarget,
    TermCounts,
};
use crate::recon::pick_pixel;
use crate::render::{place_samples, quadrature_backward, sample_around, render_pixel, Ray, RaySamples, RenderedPixel, SamplerConfig};
use crate::trajectory::{Partition, Sim3};

#[cfg(not(feature = "std"))]
use num_traits::Float;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub rays_per_iteration: usize,
    pub iterations: usize,
    /// Learning rate at the first iteration, decayed exponentially to `lr_end`.
    pub lr_start: f64,
    pub lr_end: f64,
    pub adam: AdamConfig,
    pub loss: LossWeights,
    pub sampler: SamplerConfig,
    pub field: FieldConfig,
    /// Jittered stratified sampling during training.
    pub jitter: bool,
    /// Lower bound on the normalized half extent of the camera bounding box (m).
    pub min_half_extent: f64,
    pub log_every: usize,
    /// Checkpoint hook period in iterations; 0 disables it.
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rays_per_iteration: 4096,
            iterations: 10_000,
            lr_start: 1e-2,
            lr_end: 1e-3,
            adam: AdamConfig::default(),
            loss: LossWeights::default(),
            sampler: SamplerConfig::default(),
            field: FieldConfig::default(),
            jitter: true,
            min_half_extent: 1.0,
            log_every: 100,
            checkpoint_every: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rays_per_iteration == 0 {
            return Err(invalid("rays_per_iteration must be at least 1"));
        }
        if !(self.lr_start > 0.0 && self.lr_end > 0.0) {
            return Err(invalid("learning rates must be positive"));
        }
        if !(self.min_half_extent > 0.0) {
            return Err(invalid("min_half_extent must be positive"));
        }
        self.loss.validate()?;
        self.sampler.validate()?;
        self.field.validate()
    }

    /// Exponentially decayed learning rate at `iteration`.
    pub fn learning_rate(&self, iteration: usize) -> f64 {
        if self.iterations <= 1 {
            return self.lr_start;
        }
        let f = iteration as f64 / (self.iterations - 1) as f64;
        self.lr_start * (self.lr_end / self.lr_start).powf(f.min(1.0))
    }
}

/// One logged training interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iteration: usize,
    #[serde(rename = "L_rgb")]
    pub rgb: f64,
    #[serde(rename = "L_depth")]
    pub depth: f64,
    #[serde(rename = "L_normal")]
    pub normal: f64,
    #[serde(rename = "L_sky")]
    pub sky: f64,
    pub total: f64,
    pub lr: f64,
}

impl LogEntry {
    fn new(iteration: usize, loss: &LossBreakdown, lr: f64) -> Self {
        Self {
            iteration,
            rgb: loss.rgb,
            depth: loss.depth,
            normal: loss.normal,
            sky: loss.sky,
            total: loss.total,
            lr,
        }
    }
}

/// Draws `n` pixels uniformly over all frames' pixels with their supervision.
pub fn sample_batch<R: Rng + ?Sized>(
    frames: &[&Frame],
    n: usize,
    sampler: &SamplerConfig,
    sigma_hat: f64,
    rng: &mut R,
) -> Result<RayBatch> {
    let total: usize = frames.iter().map(|f| f.pixel_count()).sum();
    if total == 0 {
        return Err(invalid("cannot sample rays from an empty dataset"));
    }
    let mut batch = RayBatch {
        rays: Vec::with_capacity(n),
        targets: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let (frame, u, v) = pick_pixel(frames, total, rng);
        batch.rays.push(Ray::through_pixel(&frame.camera, &frame.pose, frame.id, u, v, sampler.near, sampler.far));
        batch.targets.push(pixel_target(frame, u, v, sigma_hat));
    }
    Ok(batch)
}

/// Supervision available at one pixel. Normals are rotated into world.
pub fn pixel_target(frame: &Frame, u: usize, v: usize, sigma_hat: f64) -> RayTarget {
    let sky = frame.sky.as_ref().is_some_and(|s| *s.get(u, v));
    let depth = frame
        .depth
        .as_ref()
        .map(|d| *d.get(u, v))
        .filter(|d| !sky && *d > 0.0 && d.is_finite())
        .map(|depth| DepthTarget { depth, sigma_hat });
    let normal = frame
        .normals
        .as_ref()
        .map(|n| Vector3::from(*n.get(u, v)))
        .filter(|n| !sky && n.norm() > 0.5)
        .map(|n| (frame.pose.rotation * n).normalize());
    RayTarget {
        color: *frame.image.get(u, v),
        depth,
        normal,
        sky,
    }
}

/// Reusable per-sample forward caches.
pub struct RayWorkspace {
    caches: Vec<SampleCache>,
    upstream: Vec<OutputGrad>,
}

impl RayWorkspace {
    pub fn new(field: &RadianceField, sampler: &SamplerConfig) -> Self {
        let n = sampler.coarse.max(2) + sampler.fine + sampler.guided;
        Self {
            caches: (0..n).map(|_| field.new_cache()).collect(),
            upstream: Vec::with_capacity(n),
        }
    }
}

/// Renders one ray with recorded caches, evaluates its share of the batch
/// loss and accumulates parameter gradients into `grads`. Returns the ray's
/// unreduced loss terms.
#[allow(clippy::too_many_arguments)]
pub fn ray_gradient<R: Rng + ?Sized>(
    field: &RadianceField,
    ray: &Ray,
    target: &RayTarget,
    counts: &TermCounts,
    weights: &LossWeights,
    sampler: &SamplerConfig,
    rng: Option<&mut R>,
    work: &mut RayWorkspace,
    grads: &mut [f64],
) -> (LossBreakdown, RaySamples, RenderedPixel) {
    let mut rng = rng;
    let mut placed = place_samples(field, ray, sampler, rng.as_deref_mut());
    if let Some(d) = target.depth.filter(|_| weights.depth > 0.0) {
        placed = sample_around(ray, &placed, d.depth, d.sigma_hat, sampler.guided, rng);
    }
    let n = placed.ts.len();
    while work.caches.len() < n {
        work.caches.push(field.new_cache());
    }
    let with_normals = target.normal.is_some() && weights.normal > 0.0;
    let dir = field.encode_direction(&ray.direction);
    let mut sigmas = Vec::with_capacity(n);
    let mut colors = Vec::with_capacity(n);
    let mut dgrads = with_normals.then(|| Vec::with_capacity(n));
    for (t, cache) in placed.ts.iter().zip(work.caches.iter_mut()) {
        let (s, c) = field.forward(&ray.at(*t), &dir, Some(ray.frame_id), cache);
        sigmas.push(s);
        colors.push(c);
        if let Some(g) = dgrads.as_mut() {
            g.push(field.density_gradient_cached(cache));
        }
    }
    let mut samples = RaySamples::new(placed.ts, placed.deltas, sigmas, colors);
    samples.density_gradients = dgrads;
    let px = render_pixel(&samples);
    let losses = ray_losses(target, &samples, &px, weights.sigma_hat);
    let sg = ray_loss_gradients(target, &samples, &px, counts, weights);
    let dsigma = quadrature_backward(&samples, &sg.weights);
    work.upstream.clear();
    for i in 0..n {
        work.upstream.push(OutputGrad {
            sigma: dsigma[i],
            rgb: sg.colors[i],
            density_gradient: sg.density_gradients.as_ref().map(|g| g[i]),
        });
    }
    for (cache, up) in work.caches.iter_mut().zip(&work.upstream) {
        field.backward_sample(cache, up, grads);
    }
    (losses, samples, px)
}

/// Batch loss and its parameter gradient.
pub fn batch_gradient<R: Rng + ?Sized>(
    field: &RadianceField,
    batch: &RayBatch,
    weights: &LossWeights,
    sampler: &SamplerConfig,
    mut rng: Option<&mut R>,
    work: &mut RayWorkspace,
    grads: &mut [f64],
) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(invalid("cannot evaluate the loss of an empty batch"));
    }
    let counts = batch.counts();
    let mut sums = LossBreakdown::default();
    for (ray, target) in batch.rays.iter().zip(&batch.targets) {
        let (l, _, _) = ray_gradient(field, ray, target, &counts, weights, sampler, rng.as_deref_mut(), work, grads);
        sums.rgb += l.rgb;
        sums.depth += l.depth;
        sums.normal += l.normal;
        sums.sky += l.sky;
    }
    Ok(reduce(&sums, &counts, weights))
}

/// Called with the field every `checkpoint_every` iterations (and at the end).
pub type CheckpointHook<'a> = dyn FnMut(usize, &RadianceField) -> core::result::Result<(), String> + 'a;

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub field: RadianceField,
    pub log: Vec<LogEntry>,
}

/// Builds the initial field for a set of training frames.
pub fn init_field(frames: &[&Frame], config: &TrainConfig) -> Result<RadianceField> {
    let positions: Vec<_> = frames.iter().map(|f| f.position()).collect();
    let normalization = SceneNormalization::from_positions(&positions, config.min_half_extent);
    let mut field_config = config.field.clone();
    let max_id = frames.iter().map(|f| f.id).max().unwrap_or(0);
    field_config.num_frames = field_config.num_frames.max(max_id + 1);
    field_config.seed = config.seed;
    RadianceField::new(field_config, normalization)
}

/// Trains a field on `frames` from scratch.
pub fn train(frames: &[&Frame], config: &TrainConfig, hook: Option<&mut CheckpointHook<'_>>) -> Result<TrainOutcome> {
    config.validate()?;
    if frames.is_empty() || frames.iter().all(|f| f.pixel_count() == 0) {
        return Err(invalid("training needs at least one frame with pixels"));
    }
    let field = init_field(frames, config)?;
    train_from(field, frames, config, hook)
}

/// Continues optimizing an existing field.
pub fn train_from(
    mut field: RadianceField,
    frames: &[&Frame],
    config: &TrainConfig,
    mut hook: Option<&mut CheckpointHook<'_>>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = AdamState::new(field.param_count());
    let mut grads = alloc::vec![0.0; field.param_count()];
    let mut work = RayWorkspace::new(&field, &config.sampler);
    let mut log = Vec::new();
    for it in 0..config.iterations {
        let batch = sample_batch(frames, config.rays_per_iteration, &config.sampler, config.loss.sigma_hat, &mut rng)?;
        grads.iter_mut().for_each(|g| *g = 0.0);
        let jitter = if config.jitter { Some(&mut rng) } else { None };
        let loss = batch_gradient(&field, &batch, &config.loss, &config.sampler, jitter, &mut work, &mut grads)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                iteration: it,
                what: "loss".into(),
            });
        }
        let lr = config.learning_rate(it);
        adam_step(field.params_mut(), &grads, &mut state, lr, &config.adam).map_err(|e| match e {
            Error::NonFinite { what, .. } => Error::NonFinite { iteration: it, what },
            other => other,
        })?;
        let done = it + 1;
        if config.log_every > 0 && (done % config.log_every == 0 || done == config.iterations) {
            let entry = LogEntry::new(done, &loss, lr);
            log::info!(
                "iteration {} total {:.5} rgb {:.5} depth {:.5} normal {:.5} sky {:.5}",
                done,
                entry.total,
                entry.rgb,
                entry.depth,
                entry.normal,
                entry.sky
            );
            log.push(entry);
        }
        if let Some(h) = hook.as_deref_mut() {
            if config.checkpoint_every > 0 && done % config.checkpoint_every == 0 {
                h(done, &field).map_err(Error::Hook)?;
            }
        }
    }
    Ok(TrainOutcome { field, log })
}

/// A submap field trained in its own local frame.
#[derive(Clone, Debug)]
pub struct SubmapModel {
    pub cluster: usize,
    pub frame_ids: Vec<usize>,
    pub local_to_world: Sim3,
    pub outcome: TrainOutcome,
}

/// Frames of one cluster plus, with `overlap_radius > 0`, frames of other
/// clusters within that distance of any member camera.
pub fn submap_frames<'a>(dataset: &'a Dataset, partition: &Partition, cluster: usize, overlap_radius: f64) -> Vec<&'a Frame> {
    let members = partition.members(cluster);
    let member_positions: Vec<_> = dataset.frames.iter().filter(|f| members.contains(&f.id)).map(|f| f.position()).collect();
    dataset
        .train_frames()
        .into_iter()
        .filter(|f| {
            members.contains(&f.id)
                || (overlap_radius > 0.0
                    && partition.label_of(f.id).is_some()
                    && member_positions.iter().any(|p| (p - f.position()).norm() <= overlap_radius))
        })
        .collect()
}

/// Trains one independent field per cluster in its centroid-origin frame.
pub fn train_submaps(
    dataset: &Dataset,
    partition: &Partition,
    config: &TrainConfig,
    overlap_radius: f64,
) -> Result<Vec<SubmapModel>> {
    partition.validate()?;
    for f in dataset.train_frames() {
        if partition.label_of(f.id).is_none() {
            return Err(invalid(alloc::format!("frame {} is not covered by the partition", f.id)));
        }
    }
    let mut out = Vec::new();
    for cluster in 0..partition.k {
        let frames = submap_frames(dataset, partition, cluster, overlap_radius);
        if frames.is_empty() {
            log::warn!("submap {cluster} has no training frames; skipped");
            continue;
        }
        let origin = partition.centroid(cluster);
        let local: Vec<Frame> = frames.iter().map(|f| f.shifted(&origin)).collect();
        let local_refs: Vec<&Frame> = local.iter().collect();
        log::info!("training submap {cluster} on {} frames", local.len());
        let outcome = train(&local_refs, config, None)?;
        out.push(SubmapModel {
            cluster,
            frame_ids: frames.iter().map(|f| f.id).collect(),
            local_to_world: partition.local_frames[cluster],
            outcome,
        });
    }
    Ok(out)
}
