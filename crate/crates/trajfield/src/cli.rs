//! Command-line interface.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::checkpoint::Checkpoint;
use crate::dataset::SceneDataset;
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::export::{check_times, export_tracks, grid_pixels, render_image, training_pose};
use crate::scene::{make_scene, SceneSpec};
use crate::train::{run, with_thread_pool, TrainConfig, Trainer};

#[derive(Debug, Parser)]
#[command(
    name = "trajfield",
    version,
    about = "Spacetime trajectory fields for dynamic view synthesis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    MakeScene(MakeSceneArgs),
    /// Train a field on a dataset.
    Train(TrainArgs),
    /// Render an image from a checkpoint.
    Render(RenderArgs),
    /// Score held-out views.
    Eval(EvalArgs),
    /// Export per-pixel 3D trajectories.
    ExportTraj(ExportArgs),
}

#[derive(Debug, Args)]
pub struct MakeSceneArgs {
    #[arg(long)]
    pub preset: String,
    #[arg(long, default_value_t = 24)]
    pub frames: usize,
    #[arg(long, default_value_t = 96)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Leave out the optical flow.
    #[arg(long)]
    pub no_flow: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON training config; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Continue from a checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub steps_per_epoch: Option<usize>,
    /// DCT coefficients per axis.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub uniform_rays: Option<usize>,
    #[arg(long)]
    pub mask_rays: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Hidden width of the trunk.
    #[arg(long)]
    pub net_width: Option<usize>,
    #[arg(long)]
    pub net_depth: Option<usize>,
    /// Keep trajectories at zero (static baseline).
    #[arg(long)]
    pub freeze_trajectory: bool,
    /// Disable occlusion-aware blending of warped renders.
    #[arg(long)]
    pub no_blending: bool,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Index of a training camera.
    #[arg(long, default_value_t = 0)]
    pub pose: usize,
    /// Interpolate toward the next camera by this fraction.
    #[arg(long)]
    pub interp: Option<f64>,
    /// Explicit row-major 3x4 camera-to-world matrix (12 comma-separated
    /// numbers); overrides --pose.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub matrix: Option<Vec<f64>>,
    /// Geometry time; defaults to the pose index.
    #[arg(long)]
    pub t0: Option<f64>,
    /// Radiance time; defaults to t0.
    #[arg(long)]
    pub t_query: Option<f64>,
    /// Allow times outside the sequence.
    #[arg(long)]
    pub extrapolate: bool,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Report path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub t0: usize,
    /// Pixel stride of the query grid; 0 exports nothing.
    #[arg(long, default_value_t = 8)]
    pub grid: usize,
    /// Keep only pixels inside the dataset's motion mask at t0.
    #[arg(long, requires = "data")]
    pub mask_only: bool,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub samples: Option<usize>,
}

/// Resolves `ck/ep1` to `ck/ep1.ckpt` when only the latter exists.
pub fn resolve_checkpoint(path: &Path) -> PathBuf {
    if path.is_file() {
        return path.to_path_buf();
    }
    let with_ext = path.with_extension("ckpt");
    if with_ext.is_file() {
        with_ext
    } else {
        path.to_path_buf()
    }
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(&resolve_checkpoint(path))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn make_scene_cmd(a: &MakeSceneArgs) -> Result<()> {
    let spec = SceneSpec::preset(&a.preset, a.frames, a.width, a.height)?;
    let mut ds = make_scene(&spec, a.seed)?;
    if a.no_flow {
        ds.flow_fwd = None;
        ds.flow_bwd = None;
    }
    ds.export(&a.out)?;
    let moving = ds.masks.iter().filter(|m| m.iter().any(|&b| b)).count();
    println!(
        "{}: preset {} with {} frames of {}x{}, {} with motion, {} held-out views, {} probes",
        a.out.display(),
        ds.preset,
        ds.num_frames,
        ds.width(),
        ds.height(),
        moving,
        ds.heldout.len(),
        ds.probes.len()
    );
    Ok(())
}

/// Config from an optional file with flag overrides applied.
pub fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::format(p, e.to_string()))?
        }
        None => TrainConfig::default(),
    };
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.steps_per_epoch {
        cfg.steps_per_epoch = Some(v);
    }
    if let Some(v) = a.k {
        cfg.num_coeffs = Some(v);
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.samples {
        cfg.samples = v;
    }
    if let Some(v) = a.uniform_rays {
        cfg.uniform_rays = v;
    }
    if let Some(v) = a.mask_rays {
        cfg.mask_rays = v;
    }
    if let Some(v) = a.lr {
        cfg.lr = v;
    }
    if let Some(v) = a.net_width {
        cfg.network.trunk_width = v;
    }
    if let Some(v) = a.net_depth {
        cfg.network.trunk_depth = v;
    }
    cfg.freeze_trajectory |= a.freeze_trajectory;
    if a.no_blending {
        cfg.occlusion_blending = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn train_cmd(a: &TrainArgs) -> Result<()> {
    let ds = SceneDataset::load(&a.data)?;
    let mut trainer = match &a.resume {
        Some(p) => {
            let ck = load_checkpoint(p)?;
            let mut cfg = ck.config.clone();
            if a.epochs.is_some() {
                cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
            }
            if let Some(k) = a.k {
                ck.ensure_field(&cfg.network.field_config(ds.num_frames, k))?;
            }
            let mut t = Trainer::from_checkpoint(ck, &ds)?;
            t.config.epochs = cfg.epochs;
            info!("resuming at epoch {}, step {}", t.epoch, t.global_step);
            t
        }
        None => Trainer::new(train_config(a)?, &ds)?,
    };
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let cfg_text = serde_json::to_string_pretty(&trainer.config).expect("config serializes");
    write_text(&a.out.join("config.json"), &(cfg_text + "\n"))?;
    run(&mut trainer, &ds, &a.out)?;
    println!("{}", a.out.join("final.ckpt").display());
    Ok(())
}

pub fn render_cmd(a: &RenderArgs) -> Result<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let scene = &ck.scene;
    let pose = match &a.matrix {
        Some(m) => {
            let m: [f64; 12] = m
                .as_slice()
                .try_into()
                .map_err(|_| Error::Invalid("--matrix needs 12 numbers".into()))?;
            let p = trajfield_core::camera::Pose::from_3x4(&m)?;
            if !p.is_rigid(1e-6) {
                return Err(Error::Invalid(
                    "--matrix rotation is not orthonormal".into(),
                ));
            }
            p
        }
        None => training_pose(scene, a.pose, a.interp)?,
    };
    let default_t = a.pose as f64 + a.interp.unwrap_or(0.0);
    let t0 = a.t0.unwrap_or(default_t);
    let (t0, tq) = check_times(scene.num_frames, t0, a.t_query.unwrap_or(t0), a.extrapolate)?;
    let cam = scene.camera(
        pose,
        a.width.unwrap_or(scene.width),
        a.height.unwrap_or(scene.height),
    )?;
    let samples = a.samples.unwrap_or(ck.config.samples);
    let img = render_image(&ck.params, &scene.ndc(), &cam, t0, tq, samples)?;
    img.save(&a.out)?;
    println!("{}", a.out.display());
    Ok(())
}

pub fn eval_cmd(a: &EvalArgs) -> Result<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let ds = SceneDataset::load(&a.data)?;
    if ds.heldout.is_empty() {
        return Err(Error::Invalid(format!(
            "{} has no held-out views",
            a.data.display()
        )));
    }
    let samples = a.samples.unwrap_or(ck.config.samples);
    let report = evaluate(&ck.params, &ck.scene, &ds, samples)?;
    let text = serde_json::to_string_pretty(&report.to_json()).expect("report serializes") + "\n";
    match &a.out {
        Some(p) => write_text(p, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn export_cmd(a: &ExportArgs) -> Result<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let scene = &ck.scene;
    let mut pixels = grid_pixels(scene.width, scene.height, a.grid);
    if a.mask_only {
        let data = a.data.as_ref().expect("clap enforces --data");
        let ds = SceneDataset::load(data)?;
        let mask = ds
            .masks
            .get(a.t0)
            .ok_or_else(|| Error::Invalid(format!("t0={} outside the dataset", a.t0)))?;
        pixels.retain(|&(r, c)| mask[r * ds.width() + c]);
    }
    let cam = scene.camera(scene.pose(a.t0)?, scene.width, scene.height)?;
    let samples = a.samples.unwrap_or(ck.config.samples);
    let doc = export_tracks(&ck.params, &scene.ndc(), &cam, a.t0, &pixels, samples)?;
    let text = serde_json::to_string_pretty(&doc).expect("tracks serialize") + "\n";
    write_text(&a.out, &text)?;
    println!("{}: {} tracks", a.out.display(), doc.points.len());
    Ok(())
}

pub fn run_cli(cli: Cli) -> Result<()> {
    with_thread_pool(move || match &cli.command {
        Command::MakeScene(a) => make_scene_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Render(a) => render_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::ExportTraj(a) => export_cmd(a),
    })?
}
