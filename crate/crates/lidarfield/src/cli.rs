//! The `lidarfield` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use lidarfield_core::camera::Intrinsics;
use lidarfield_core::dataset::Split;
use lidarfield_core::eval::{error_cloud, evaluate_geometry, EvalConfig};
use lidarfield_core::recon::{CullConfig, ExtractConfig};
use lidarfield_core::synth::{builtin, builtin_names, generate_dataset, SceneSpec};
use lidarfield_core::train::TrainConfig;
use lidarfield_core::trajectory::{auto_k, rescale_trajectory, spectral_partition, PartitionConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::checkpoint;
use crate::dataset_io::{dataset_trajectory, load_dataset, write_synth};
use crate::error::{read, Error, Result};
use crate::images::{write_depth, write_rgb};
use crate::pipeline::{evaluate_views, list_checkpoints, merge_models, model_sampler, render_world, train_models};
use crate::ply::{read_ply, write_ply};
use crate::trajectory_io::{read_partition, read_trajectory, write_partition, write_trajectory};

#[derive(Debug, Parser)]
#[command(name = "lidarfield", version, about = "Lidar-supervised radiance fields for large outdoor scenes")]
pub struct Cli {
    /// Seed for every random choice; overrides seeds in config files.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// More log output on stderr (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Split a dataset trajectory into submaps.
    Partition(PartitionArgs),
    /// Align an up-to-scale trajectory to a metric one.
    Align(AlignArgs),
    /// Train a model, or one per submap.
    Train(TrainArgs),
    /// Render views of a model.
    Render(RenderArgs),
    /// Extract a point cloud from a model.
    Extract(ExtractArgs),
    /// Cull and merge submap clouds.
    Merge(MergeArgs),
    /// Accuracy and completeness of a reconstruction.
    EvalGeom(EvalGeomArgs),
    /// PSNR and SSIM of a model on a dataset split.
    EvalView(EvalViewArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Builtin scene name or path to a scene JSON file.
    #[arg(long)]
    pub scene: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, requires = "height")]
    pub width: Option<usize>,
    #[arg(long, requires = "width")]
    pub height: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, conflicts_with = "auto")]
    pub k: Option<usize>,
    /// Choose k from the trajectory extent (the default without --k).
    #[arg(long)]
    pub auto: bool,
    /// Partition settings as JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Partition file to write; the report always goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long)]
    pub dst: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Partition file; trains one model per cluster.
    #[arg(long)]
    pub partition: Option<PathBuf>,
    /// Include frames of other clusters within this distance (m).
    #[arg(long, default_value_t = 0.0)]
    pub overlap: f64,
    #[arg(long)]
    pub no_depth_loss: bool,
    #[arg(long)]
    pub no_normal_loss: bool,
    /// Training settings as JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub rays: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// World-frame trajectory of the views.
    #[arg(long)]
    pub poses: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Take the camera from this dataset's first frame.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    /// Horizontal field of view (degrees).
    #[arg(long, default_value_t = 60.0)]
    pub fov: f64,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Extraction settings as JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(default)]
pub struct MergeConfig {
    pub extract: ExtractConfig,
    pub cull: CullConfig,
    pub voxel: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    /// Directory of submap checkpoints.
    #[arg(long)]
    pub models: PathBuf,
    /// Dataset the submaps were trained on.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub voxel: Option<f64>,
    /// Merge settings as JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalGeomArgs {
    #[arg(long)]
    pub recon: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub cap: Option<f64>,
    /// Crop boxes and cap as JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write the reconstruction colored by error.
    #[arg(long)]
    pub error_ply: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalViewArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    init_logging(cli.verbose);
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => serde_json::from_slice(&read(p)?).map_err(|e| Error::format(p, e.to_string())),
    }
}

fn report(value: &impl Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth(a, cli.seed),
        Command::Partition(a) => partition(a, cli.seed),
        Command::Align(a) => align(a),
        Command::Train(a) => train(a, cli.seed),
        Command::Render(a) => render(a),
        Command::Extract(a) => extract(a, cli.seed),
        Command::Merge(a) => merge(a, cli.seed),
        Command::EvalGeom(a) => eval_geom(a),
        Command::EvalView(a) => eval_view(a),
    }
}

fn synth(a: &SynthArgs, seed: Option<u64>) -> Result<()> {
    let mut spec: SceneSpec = match builtin(&a.scene) {
        Some(s) => s,
        None => {
            let path = Path::new(&a.scene);
            if !path.exists() {
                return Err(Error::Usage(format!(
                    "unknown scene '{}'; builtins are {}",
                    a.scene,
                    builtin_names().join(", ")
                )));
            }
            serde_json::from_slice(&read(path)?).map_err(|e| Error::format(path, e.to_string()))?
        }
    };
    if let (Some(w), Some(h)) = (a.width, a.height) {
        spec = spec.with_resolution(w, h);
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    let out = generate_dataset(&spec)?;
    write_synth(&a.out, &spec, &out)?;
    report(&json!({
        "scene": spec.name,
        "frames": out.dataset.frames.len(),
        "gt_points": out.dataset.gt_cloud.as_ref().map_or(0, |c| c.len()),
        "out": a.out,
    }));
    Ok(())
}

fn partition(a: &PartitionArgs, seed: Option<u64>) -> Result<()> {
    let dataset = load_dataset(&a.dataset)?;
    let traj = dataset_trajectory(&dataset)?;
    let mut config: PartitionConfig = load_config(a.config.as_deref())?;
    if let Some(s) = seed {
        config.seed = s;
    }
    let k = a.k.unwrap_or_else(|| auto_k(&traj));
    let p = spectral_partition(&traj, k, &config)?;
    if let Some(out) = &a.out {
        write_partition(out, &p)?;
    }
    let sizes: Vec<usize> = (0..p.k).map(|c| p.members(c).len()).collect();
    let centroids: Vec<[f64; 3]> = (0..p.k).map(|c| p.centroid(c).into()).collect();
    report(&json!({ "k": p.k, "sizes": sizes, "centroids": centroids }));
    Ok(())
}

fn align(a: &AlignArgs) -> Result<()> {
    let src = read_trajectory(&a.src)?;
    let dst = read_trajectory(&a.dst)?;
    let (aligned, t) = rescale_trajectory(&src, &dst)?;
    write_trajectory(&a.out, &aligned)?;
    let rmse = {
        let mut sum = 0.0;
        let mut n = 0usize;
        for p in aligned.poses() {
            if let Some(j) = dst.nearest(p.timestamp, f64::INFINITY) {
                sum += (p.pose.translation.vector - dst.poses()[j].pose.translation.vector).norm_squared();
                n += 1;
            }
        }
        (sum / n.max(1) as f64).sqrt()
    };
    report(&json!({ "transform": t, "rmse": rmse }));
    Ok(())
}

fn train(a: &TrainArgs, seed: Option<u64>) -> Result<()> {
    let dataset = load_dataset(&a.dataset)?;
    let mut config: TrainConfig = load_config(a.config.as_deref())?;
    if let Some(n) = a.iterations {
        config.iterations = n;
    }
    if let Some(n) = a.rays {
        config.rays_per_iteration = n;
    }
    if a.no_depth_loss {
        config.loss.depth = 0.0;
    }
    if a.no_normal_loss {
        config.loss.normal = 0.0;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    let partition = a.partition.as_deref().map(read_partition).transpose()?;
    let models = train_models(&dataset, &config, partition.as_ref(), a.overlap, &a.out)?;
    report(&models);
    Ok(())
}

fn render(a: &RenderArgs) -> Result<()> {
    let ckpt = checkpoint::load(&a.model)?;
    let traj = read_trajectory(&a.poses)?;
    let camera = match &a.dataset {
        Some(d) => {
            let ds = load_dataset(d)?;
            ds.frames.first().map(|f| f.camera).ok_or_else(|| Error::format(d, "dataset has no frames"))?
        }
        None => {
            let c = Intrinsics::from_fov(a.width, a.height, a.fov.to_radians());
            c.validate()?;
            c
        }
    };
    let sampler = model_sampler(&ckpt.meta);
    let mut written = Vec::new();
    for p in traj.poses() {
        let appearance = ckpt.meta.frame_ids.contains(&p.frame_id).then_some(p.frame_id);
        let r = render_world(&ckpt, &camera, &p.pose, appearance, &sampler);
        let rgb = a.out.join("images").join(format!("{:06}.png", p.frame_id));
        write_rgb(&rgb, &r.rgb)?;
        write_depth(&a.out.join("depth").join(format!("{:06}.png", p.frame_id)), &r.depth)?;
        written.push(rgb);
    }
    report(&json!({ "views": written.len(), "out": a.out }));
    Ok(())
}

fn extract(a: &ExtractArgs, seed: Option<u64>) -> Result<()> {
    let ckpt = checkpoint::load(&a.model)?;
    let dataset = load_dataset(&a.dataset)?;
    let mut config: ExtractConfig = match &a.config {
        Some(p) => load_config(Some(p))?,
        None => ExtractConfig {
            sampler: model_sampler(&ckpt.meta),
            ..ExtractConfig::default()
        },
    };
    if let Some(n) = a.count {
        config.target_count = n;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    let cloud = crate::pipeline::extract_world(&ckpt, &dataset, &config)?;
    write_ply(&a.out, &cloud)?;
    report(&json!({ "points": cloud.len(), "out": a.out }));
    Ok(())
}

fn merge(a: &MergeArgs, seed: Option<u64>) -> Result<()> {
    let dataset = load_dataset(&a.dataset)?;
    let mut models = Vec::new();
    for p in list_checkpoints(&a.models)? {
        models.push(checkpoint::load(&p)?);
    }
    let mut config: MergeConfig = match &a.config {
        Some(p) => load_config(Some(p))?,
        None => MergeConfig {
            extract: ExtractConfig {
                sampler: model_sampler(&models[0].meta),
                ..ExtractConfig::default()
            },
            ..MergeConfig::default()
        },
    };
    if let Some(n) = a.count {
        config.extract.target_count = n;
    }
    if a.voxel.is_some() {
        config.voxel = a.voxel;
    }
    if let Some(s) = seed {
        config.extract.seed = s;
    }
    let (cloud, reports) = merge_models(&models, &dataset, &config.extract, &config.cull, config.voxel)?;
    write_ply(&a.out, &cloud)?;
    report(&json!({ "points": cloud.len(), "submaps": reports, "out": a.out }));
    Ok(())
}

fn eval_geom(a: &EvalGeomArgs) -> Result<()> {
    let recon = read_ply(&a.recon)?;
    let reference = read_ply(&a.reference)?;
    let mut config: EvalConfig = load_config(a.config.as_deref())?;
    if let Some(c) = a.cap {
        config.cap = c;
    }
    let r = evaluate_geometry(&recon, &reference, &config)?;
    if let Some(path) = &a.error_ply {
        write_ply(path, &error_cloud(&config.crop(&recon), &config.crop(&reference), config.cap)?)?;
    }
    report(&r);
    Ok(())
}

fn eval_view(a: &EvalViewArgs) -> Result<()> {
    let ckpt = checkpoint::load(&a.model)?;
    let dataset = load_dataset(&a.dataset)?;
    let split = match a.split {
        SplitArg::Train => Split::Train,
        SplitArg::Test => Split::Test,
    };
    let r = evaluate_views(&ckpt, &dataset, split, &model_sampler(&ckpt.meta))?;
    report(&r);
    Ok(())
}
