//! Optimization loop: batch sampling, sharded loss evaluation, Adam updates,
//! schedules and logging.

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use trajfield_core::camera::{generate_rays, NdcSpace};
use trajfield_core::field::{FieldConfig, NetworkParams};
use trajfield_core::losses::{total_loss, FlowTarget, LossBreakdown, LossWeights, TrainBatch};
use trajfield_core::optim::{Adam, AdamConfig};
use trajfield_core::render::{sample_depths, Attenuation, RayBatch, RenderOptions};
use trajfield_core::schedule::{learning_rate, temporal_radius, weight_schedule, ScheduleConfig};
use trajfield_core::trajectory::default_num_coeffs;
use trajfield_core::{Tape, Tensor};

use crate::checkpoint::{Checkpoint, SceneInfo};
use crate::dataset::SceneDataset;
use crate::error::{Error, Result};

/// Environment variable selecting the worker thread count.
pub const THREADS_ENV: &str = "TRAJFIELD_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    pub trunk_width: usize,
    pub trunk_depth: usize,
    pub skip_layer: Option<usize>,
    pub embed_width: usize,
    pub color_width: usize,
    pub color_layers: usize,
    pub pos_freqs: usize,
    pub dir_freqs: usize,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        let s = FieldConfig::standard(2, 1);
        NetworkSpec {
            trunk_width: s.trunk_width,
            trunk_depth: s.trunk_depth,
            skip_layer: s.skip_layer,
            embed_width: s.embed_width,
            color_width: s.color_width,
            color_layers: s.color_layers,
            pos_freqs: s.pos_freqs,
            dir_freqs: s.dir_freqs,
        }
    }
}

impl NetworkSpec {
    pub fn field_config(&self, num_frames: usize, num_coeffs: usize) -> FieldConfig {
        FieldConfig {
            num_frames,
            num_coeffs,
            trunk_width: self.trunk_width,
            trunk_depth: self.trunk_depth,
            skip_layer: self.skip_layer,
            embed_width: self.embed_width,
            color_width: self.color_width,
            color_layers: self.color_layers,
            pos_freqs: self.pos_freqs,
            dir_freqs: self.dir_freqs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttenuationMode {
    Blended,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Steps per epoch; by default one pass over all pixels of all frames.
    pub steps_per_epoch: Option<usize>,
    pub uniform_rays: usize,
    pub mask_rays: usize,
    pub samples: usize,
    /// DCT coefficients per axis; [`default_num_coeffs`] when unset.
    pub num_coeffs: Option<usize>,
    pub seed: u64,
    pub lr: f64,
    pub lr_decay_epoch: usize,
    pub lr_decay: f64,
    pub initial_radius: usize,
    pub radius_period: usize,
    pub weight_period: usize,
    pub depth_weight: f64,
    pub flow_weight: f64,
    pub svs_weight: f64,
    pub svs_weight_max: f64,
    pub svs_window: usize,
    pub ndc_margin: f64,
    pub network: NetworkSpec,
    /// Keep the trajectory head at zero (static baseline).
    pub freeze_trajectory: bool,
    pub occlusion_blending: bool,
    pub attenuation: AttenuationMode,
    pub use_depth: bool,
    pub use_flow: bool,
    /// Rays per independently evaluated shard.
    pub shard_rays: usize,
    /// Save a checkpoint every this many epochs; 0 saves only the last.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let s = ScheduleConfig::default();
        TrainConfig {
            epochs: 80,
            steps_per_epoch: None,
            uniform_rays: 1024,
            mask_rays: 512,
            samples: 128,
            num_coeffs: None,
            seed: 0,
            lr: s.lr,
            lr_decay_epoch: s.lr_decay_epoch,
            lr_decay: s.lr_decay,
            initial_radius: s.initial_radius,
            radius_period: s.radius_period,
            weight_period: s.weight_period,
            depth_weight: s.depth_init,
            flow_weight: s.flow_init,
            svs_weight: s.svs_init,
            svs_weight_max: s.svs_max,
            svs_window: 8,
            ndc_margin: 0.7,
            network: NetworkSpec::default(),
            freeze_trajectory: false,
            occlusion_blending: true,
            attenuation: AttenuationMode::Blended,
            use_depth: true,
            use_flow: true,
            shard_rays: 128,
            checkpoint_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs),
            (
                "uniform_rays + mask_rays",
                self.uniform_rays + self.mask_rays,
            ),
            ("svs_window", self.svs_window),
            ("shard_rays", self.shard_rays),
            ("initial_radius", self.initial_radius),
            ("radius_period", self.radius_period),
            ("weight_period", self.weight_period),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Invalid(format!("{name} must be positive")));
            }
        }
        if self.samples < 2 {
            return Err(Error::Invalid("need at least 2 samples per ray".into()));
        }
        if self.svs_window > self.samples {
            return Err(Error::Invalid(format!(
                "svs_window {} exceeds {} samples",
                self.svs_window, self.samples
            )));
        }
        if self.steps_per_epoch == Some(0) {
            return Err(Error::Invalid("steps_per_epoch must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite() && self.lr_decay >= 0.0) {
            return Err(Error::Invalid(
                "learning rate must be finite and nonnegative".into(),
            ));
        }
        if !(self.ndc_margin > 0.0 && self.ndc_margin <= 1.0) {
            return Err(Error::Invalid("ndc_margin must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> ScheduleConfig {
        ScheduleConfig {
            initial_radius: self.initial_radius,
            radius_period: self.radius_period,
            weight_period: self.weight_period,
            depth_init: self.depth_weight,
            flow_init: self.flow_weight,
            svs_init: self.svs_weight,
            svs_max: self.svs_weight_max,
            lr: self.lr,
            lr_decay_epoch: self.lr_decay_epoch,
            lr_decay: self.lr_decay,
        }
    }

    pub fn render_options(&self) -> RenderOptions {
        RenderOptions {
            attenuation: match self.attenuation {
                AttenuationMode::Blended => Attenuation::Blended,
                AttenuationMode::Target => Attenuation::Target,
            },
            occlusion_blending: self.occlusion_blending,
        }
    }

    pub fn batch_rays(&self) -> usize {
        self.uniform_rays + self.mask_rays
    }

    pub fn steps_for(&self, ds: &SceneDataset) -> usize {
        self.steps_per_epoch.unwrap_or_else(|| {
            (ds.num_frames * ds.num_pixels())
                .div_ceil(self.batch_rays())
                .max(1)
        })
    }

    pub fn field_config(&self, num_frames: usize) -> FieldConfig {
        let k = self
            .num_coeffs
            .unwrap_or_else(|| default_num_coeffs(num_frames));
        self.network.field_config(num_frames, k)
    }
}

/// Pixel indices and frames drawn for one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledBatch {
    pub t0: usize,
    pub t1: usize,
    pub pixels: Vec<(usize, usize)>,
}

/// Frames within `radius` of `t0`, excluding `t0`.
pub fn t1_window(t0: usize, radius: usize, num_frames: usize) -> Vec<usize> {
    let lo = t0.saturating_sub(radius);
    let hi = (t0 + radius).min(num_frames - 1);
    (lo..=hi).filter(|&t| t != t0).collect()
}

/// Draws `t0`, `t1` and the batch pixels. `mask_pixels[t]` lists the flat
/// indices of the motion mask of frame `t`.
pub fn sample_batch<R: Rng>(
    ds: &SceneDataset,
    mask_pixels: &[Vec<usize>],
    cfg: &TrainConfig,
    radius: usize,
    rng: &mut R,
) -> SampledBatch {
    let n = ds.num_frames;
    let w = ds.width();
    let px = ds.num_pixels();
    let t0 = rng.gen_range(0..n);
    let window = t1_window(t0, radius, n);
    let t1 = *window.choose(rng).expect("at least two frames");
    let mut pixels = Vec::with_capacity(cfg.batch_rays());
    for _ in 0..cfg.uniform_rays {
        let i = rng.gen_range(0..px);
        pixels.push((i / w, i % w));
    }
    let mask = &mask_pixels[t0];
    for _ in 0..cfg.mask_rays {
        let i = if mask.is_empty() {
            rng.gen_range(0..px)
        } else {
            mask[rng.gen_range(0..mask.len())]
        };
        pixels.push((i / w, i % w));
    }
    SampledBatch { t0, t1, pixels }
}

/// Per-step record written to the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub epoch: usize,
    pub step: u64,
    pub t0: usize,
    pub t1: usize,
    pub radius: usize,
    pub lr: f64,
    pub weights: WeightsLog,
    pub photo_t0: f64,
    pub photo_neighbors: f64,
    pub photo_t1: f64,
    pub cycle: f64,
    pub traj_flow_smooth: f64,
    pub traj_rigid: f64,
    pub traj_magnitude: f64,
    pub svs: f64,
    pub depth: f64,
    pub flow: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightsLog {
    pub cycle: f64,
    pub traj: f64,
    pub svs: f64,
    pub depth: f64,
    pub flow: f64,
}

impl From<&LossWeights> for WeightsLog {
    fn from(w: &LossWeights) -> Self {
        WeightsLog {
            cycle: w.cycle,
            traj: w.traj,
            svs: w.svs,
            depth: w.depth,
            flow: w.flow,
        }
    }
}

fn scale_breakdown(b: &mut LossBreakdown, s: f64) {
    b.photo_t0 *= s;
    b.photo_neighbors *= s;
    b.photo_t1 *= s;
    b.cycle *= s;
    b.traj_flow_smooth *= s;
    b.traj_rigid *= s;
    b.traj_magnitude *= s;
    b.svs *= s;
    b.depth *= s;
    b.flow *= s;
    b.total *= s;
}

fn add_breakdown(a: &mut LossBreakdown, b: &LossBreakdown) {
    a.photo_t0 += b.photo_t0;
    a.photo_neighbors += b.photo_neighbors;
    a.photo_t1 += b.photo_t1;
    a.cycle += b.cycle;
    a.traj_flow_smooth += b.traj_flow_smooth;
    a.traj_rigid += b.traj_rigid;
    a.traj_magnitude += b.traj_magnitude;
    a.svs += b.svs;
    a.depth += b.depth;
    a.flow += b.flow;
    a.total += b.total;
}

/// Loss and parameter gradients of `batches`, each weighted by its share of
/// the rays. Shards run in parallel and are reduced in index order.
pub fn evaluate_shards(
    params: &NetworkParams,
    batches: &[TrainBatch],
    weights: &LossWeights,
    opts: RenderOptions,
    trainable: &(dyn Fn(usize) -> bool + Sync),
) -> Result<(LossBreakdown, Vec<Option<Tensor>>)> {
    let total_rays: usize = batches.iter().map(|b| b.rays.num_rays()).sum();
    let results: Vec<Result<(LossBreakdown, Vec<Option<Tensor>>)>> = batches
        .par_iter()
        .map(|batch| {
            let tape = Tape::new();
            let field = params.bind(&tape, trainable);
            let share = batch.rays.num_rays() as f64 / total_rays as f64;
            let (total, mut b) = total_loss(&field, batch, weights, opts)?;
            scale_breakdown(&mut b, share);
            if b.first_non_finite().is_none() {
                total.scale(share).backward()?;
            }
            let grads = field.vars().iter().map(|v| v.grad()).collect();
            Ok((b, grads))
        })
        .collect();
    let mut sum = LossBreakdown::default();
    let mut grads: Vec<Option<Tensor>> = vec![None; params.tensors().len()];
    for r in results {
        let (b, g) = r?;
        add_breakdown(&mut sum, &b);
        for (acc, g) in grads.iter_mut().zip(g) {
            let Some(g) = g else { continue };
            match acc {
                Some(a) => {
                    for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                        *x += y;
                    }
                }
                None => *acc = Some(g),
            }
        }
    }
    Ok((sum, grads))
}

/// Full optimizer state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub scene: SceneInfo,
    pub params: NetworkParams,
    pub adam: Adam,
    pub rng: ChaCha8Rng,
    pub epoch: usize,
    pub step_in_epoch: usize,
    pub global_step: u64,
}

impl Trainer {
    pub fn new(config: TrainConfig, ds: &SceneDataset) -> Result<Self> {
        config.validate()?;
        let field = config.field_config(ds.num_frames);
        let params = NetworkParams::init(field, config.seed)?;
        let adam = Adam::new(AdamConfig::default(), params.tensors());
        let rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));
        let scene = SceneInfo::from_dataset(ds, config.ndc_margin);
        Ok(Trainer {
            config,
            scene,
            params,
            adam,
            rng,
            epoch: 0,
            step_in_epoch: 0,
            global_step: 0,
        })
    }

    pub fn from_checkpoint(ck: Checkpoint, ds: &SceneDataset) -> Result<Self> {
        let expected = SceneInfo::from_dataset(ds, ck.config.ndc_margin);
        if ck.scene != expected {
            return Err(Error::Invalid(
                "checkpoint was trained on a different dataset (cameras or size differ)".into(),
            ));
        }
        Ok(Trainer {
            config: ck.config,
            scene: ck.scene,
            params: ck.params,
            adam: ck.adam,
            rng: ck.rng,
            epoch: ck.epoch,
            step_in_epoch: ck.step_in_epoch,
            global_step: ck.global_step,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            scene: self.scene.clone(),
            params: self.params.clone(),
            adam: self.adam.clone(),
            rng: self.rng.clone(),
            epoch: self.epoch,
            step_in_epoch: self.step_in_epoch,
            global_step: self.global_step,
        }
    }

    pub fn ndc(&self) -> NdcSpace {
        self.scene.ndc()
    }

    pub fn finished(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    fn trainable(&self) -> impl Fn(usize) -> bool + Sync + '_ {
        let freeze = self.config.freeze_trajectory;
        move |i| !(freeze && self.params.is_trajectory_head(i))
    }

    /// Ray batches (one per shard) for a sampled step.
    pub fn build_batches(
        &mut self,
        ds: &SceneDataset,
        s: &SampledBatch,
    ) -> Result<Vec<TrainBatch>> {
        let cfg = &self.config;
        let ndc = self.scene.ndc();
        let rays = generate_rays(&ds.camera(s.t0), &ndc, &s.pixels, s.t0)?;
        let mut depths = Vec::with_capacity(rays.len() * cfg.samples);
        for _ in 0..rays.len() {
            depths.extend(sample_depths(cfg.samples, true, &mut self.rng)?);
        }
        let w = ds.width();
        let img = &ds.rgb[s.t0];
        let mut out = Vec::new();
        for (ci, chunk) in s.pixels.chunks(cfg.shard_rays).enumerate() {
            let start = ci * cfg.shard_rays;
            let rays = rays[start..start + chunk.len()].to_vec();
            let d = depths[start * cfg.samples..(start + chunk.len()) * cfg.samples].to_vec();
            let mut rgb = Vec::with_capacity(3 * chunk.len());
            for &(r, c) in chunk {
                rgb.extend(img.get(r, c));
            }
            let target_depth = if cfg.use_depth {
                let z: Vec<f64> = chunk
                    .iter()
                    .map(|&(r, c)| ds.depth[s.t0][r * w + c] as f64)
                    .collect();
                if z.iter().all(|&z| z > 0.0) {
                    let xi: Vec<f64> = z.iter().map(|&z| ndc.xi_at(z)).collect();
                    if xi.iter().all(|&v| v == xi[0]) {
                        warn!(
                            "constant depth reference in batch at t0={}; depth term skipped",
                            s.t0
                        );
                    }
                    Some(xi)
                } else {
                    None
                }
            } else {
                None
            };
            let mut flows = Vec::new();
            if cfg.use_flow {
                for (forward, tn) in [(true, s.t0 + 1), (false, s.t0.wrapping_sub(1))] {
                    if tn >= ds.num_frames {
                        continue;
                    }
                    let mut f = Vec::with_capacity(2 * chunk.len());
                    for &(r, c) in chunk {
                        match ds.flow(s.t0, forward, r, c) {
                            Some(v) => f.extend(v),
                            None => break,
                        }
                    }
                    if f.len() == 2 * chunk.len() {
                        flows.push(FlowTarget {
                            frame: tn,
                            camera: ds.camera(tn),
                            flow: Tensor::new([chunk.len(), 2], f)?,
                        });
                    }
                }
            }
            out.push(TrainBatch {
                rays: RayBatch::new(rays, d, cfg.samples)?,
                t0: s.t0,
                t1: s.t1,
                num_frames: ds.num_frames,
                target_rgb: Tensor::new([chunk.len(), 3], rgb)?,
                target_depth,
                flows,
                ndc,
                svs_window: cfg.svs_window,
            });
        }
        Ok(out)
    }

    /// Evaluates and applies one update on prepared batches at the current
    /// epoch's schedule.
    pub fn apply_step(
        &mut self,
        batches: &[TrainBatch],
    ) -> Result<(LossBreakdown, LossWeights, f64)> {
        let sched = self.config.schedule();
        let weights = weight_schedule(self.epoch, &sched);
        let lr = learning_rate(self.epoch, &sched);
        let (b, grads) = evaluate_shards(
            &self.params,
            batches,
            &weights,
            self.config.render_options(),
            &self.trainable(),
        )?;
        if let Some(term) = b.first_non_finite() {
            let dump = b
                .terms()
                .iter()
                .map(|(n, v)| format!("{n}={v:e}"))
                .collect::<Vec<_>>()
                .join(" ");
            return Err(Error::NonFiniteLoss {
                term: term.to_string(),
                epoch: self.epoch,
                step: self.global_step,
                dump,
            });
        }
        self.adam.update(self.params.tensors_mut(), &grads, lr)?;
        Ok((b, weights, lr))
    }

    /// Samples a batch and applies one update.
    pub fn step(&mut self, ds: &SceneDataset, mask_pixels: &[Vec<usize>]) -> Result<StepLog> {
        let radius = temporal_radius(self.epoch, ds.num_frames, &self.config.schedule());
        let sampled = sample_batch(ds, mask_pixels, &self.config, radius, &mut self.rng);
        let batches = self.build_batches(ds, &sampled)?;
        let (b, weights, lr) = self.apply_step(&batches)?;
        let log = StepLog {
            epoch: self.epoch,
            step: self.global_step,
            t0: sampled.t0,
            t1: sampled.t1,
            radius,
            lr,
            weights: (&weights).into(),
            photo_t0: b.photo_t0,
            photo_neighbors: b.photo_neighbors,
            photo_t1: b.photo_t1,
            cycle: b.cycle,
            traj_flow_smooth: b.traj_flow_smooth,
            traj_rigid: b.traj_rigid,
            traj_magnitude: b.traj_magnitude,
            svs: b.svs,
            depth: b.depth,
            flow: b.flow,
            total: b.total,
        };
        self.global_step += 1;
        self.step_in_epoch += 1;
        if self.step_in_epoch >= self.config.steps_for(ds) {
            self.step_in_epoch = 0;
            self.epoch += 1;
        }
        Ok(log)
    }
}

/// Flat indices of each frame's motion mask.
pub fn mask_indices(ds: &SceneDataset) -> Vec<Vec<usize>> {
    ds.masks
        .iter()
        .map(|m| {
            m.iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(|(i, _)| i)
                .collect()
        })
        .collect()
}

/// Runs `f` on a pool sized by [`THREADS_ENV`] (default: all cores).
pub fn with_thread_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| Error::Invalid(format!("{THREADS_ENV}={v:?} is not a thread count")))?;
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("ep{epoch}.ckpt"))
}

/// Trains until the configured epoch count, appending to `out/train.ndjson`
/// and writing `out/ep{N}.ckpt` checkpoints plus `out/final.ckpt`.
pub fn run(trainer: &mut Trainer, ds: &SceneDataset, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let log_path = out.join("train.ndjson");
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    let mut log = BufWriter::new(file);
    let masks = mask_indices(ds);
    let steps = trainer.config.steps_for(ds);
    info!(
        "training {} epochs x {steps} steps, {} parameters",
        trainer.config.epochs,
        trainer.params.num_scalars()
    );
    while !trainer.finished() {
        let epoch = trainer.epoch;
        let entry = trainer.step(ds, &masks)?;
        let line =
            serde_json::to_string(&entry).map_err(|e| Error::format(&log_path, e.to_string()))?;
        writeln!(log, "{line}").map_err(|e| Error::io(&log_path, e))?;
        if trainer.epoch != epoch {
            log.flush().map_err(|e| Error::io(&log_path, e))?;
            info!("epoch {} done: total {:.5}", epoch, entry.total);
            let every = trainer.config.checkpoint_every;
            if every > 0 && trainer.epoch.is_multiple_of(every) {
                trainer
                    .checkpoint()
                    .save(&checkpoint_path(out, trainer.epoch))?;
            }
        }
    }
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    trainer.checkpoint().save(&out.join("final.ckpt"))
}

/// Reads a training log.
pub fn read_log(path: &Path) -> Result<Vec<StepLog>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::format(path, e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_clips_and_skips_t0() {
        assert_eq!(t1_window(0, 2, 24), vec![1, 2]);
        assert_eq!(t1_window(5, 2, 24), vec![3, 4, 6, 7]);
        assert_eq!(t1_window(23, 4, 24), vec![19, 20, 21, 22]);
    }

    #[test]
    fn config_json_round_trip_and_defaults() {
        let cfg = TrainConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: TrainConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        let partial: TrainConfig = serde_json::from_str(r#"{"epochs": 3}"#).unwrap();
        assert_eq!(partial.epochs, 3);
        assert_eq!(partial.uniform_rays, 1024);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epoch": 3}"#).is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = TrainConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.svs_window = 500;
        assert!(cfg.validate().is_err());
        cfg = TrainConfig {
            samples: 1,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
