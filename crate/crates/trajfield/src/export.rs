//! Full-frame rendering and trajectory export from trained parameters.

use rand::rngs::mock::StepRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use trajfield_core::camera::{generate_rays, Camera, NdcSpace, Pose, Vec3};
use trajfield_core::field::NetworkParams;
use trajfield_core::render::{
    render_frame, render_frame_at, render_warped, sample_depths, RayBatch, RenderOptions,
};
use trajfield_core::trajectory::TrajectoryCoeffs;
use trajfield_core::Tape;

use crate::checkpoint::SceneInfo;
use crate::error::{Error, Result};
use crate::image::Image;

/// Rays per forward pass when rendering whole images.
pub const RENDER_CHUNK: usize = 256;

/// Evenly spaced ray parameters (sample midpoints).
pub fn render_depths(samples: usize) -> Result<Vec<f64>> {
    Ok(sample_depths(samples, false, &mut StepRng::new(0, 0))?)
}

fn all_pixels(width: usize, height: usize) -> Vec<(usize, usize)> {
    (0..height)
        .flat_map(|r| (0..width).map(move |c| (r, c)))
        .collect()
}

/// Times accepted for rendering. `t0` may leave the sequence when
/// `extrapolate` is set; `t_query` is then clamped.
pub fn check_times(
    num_frames: usize,
    t0: f64,
    t_query: f64,
    extrapolate: bool,
) -> Result<(f64, f64)> {
    let last = (num_frames - 1) as f64;
    let inside = |t: f64| t.is_finite() && (0.0..=last).contains(&t);
    if !t0.is_finite() || !t_query.is_finite() {
        return Err(Error::Invalid("render times must be finite".into()));
    }
    if extrapolate {
        return Ok((t0, t_query.clamp(0.0, last)));
    }
    for (name, t) in [("t0", t0), ("t_query", t_query)] {
        if !inside(t) {
            return Err(Error::Invalid(format!(
                "{name}={t} outside [0, {last}]; pass --extrapolate to allow it"
            )));
        }
    }
    Ok((t0, t_query))
}

/// Renders a full image from `cam` with geometry at `t0` and radiance at
/// `t_query`.
pub fn render_image(
    params: &NetworkParams,
    ndc: &NdcSpace,
    cam: &Camera,
    t0: f64,
    t_query: f64,
    samples: usize,
) -> Result<Image> {
    let depths = render_depths(samples)?;
    let pixels = all_pixels(cam.width(), cam.height());
    let frame = t0.round().max(0.0) as usize;
    let chunks: Vec<Result<Vec<f64>>> = pixels
        .par_chunks(RENDER_CHUNK)
        .map(|chunk| {
            let rays = generate_rays(cam, ndc, chunk, frame)?;
            let batch = RayBatch::shared(rays, &depths)?;
            let tape = Tape::new();
            let field = params.bind_const(&tape);
            let out = render_frame_at(&field, &batch, t0, t_query)?;
            Ok(out.color.value().into_data())
        })
        .collect();
    let mut data = Vec::with_capacity(3 * pixels.len());
    for c in chunks {
        data.extend(c?);
    }
    Image::from_data(
        cam.width(),
        cam.height(),
        data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
    )
}

/// Renders the rays of frame `t0` through the field at `t1` and warps them
/// back, for every pixel of `cam`.
pub fn render_warped_image(
    params: &NetworkParams,
    ndc: &NdcSpace,
    cam: &Camera,
    t0: usize,
    t1: usize,
    samples: usize,
    opts: RenderOptions,
) -> Result<Image> {
    let depths = render_depths(samples)?;
    let pixels = all_pixels(cam.width(), cam.height());
    let chunks: Vec<Result<Vec<f64>>> = pixels
        .par_chunks(RENDER_CHUNK)
        .map(|chunk| {
            let rays = generate_rays(cam, ndc, chunk, t0)?;
            let batch = RayBatch::shared(rays, &depths)?;
            let tape = Tape::new();
            let field = params.bind_const(&tape);
            let frame = render_frame(&field, &batch, t0 as f64)?;
            let warped = render_warped(&field, &batch, &frame, t1 as f64, opts)?;
            Ok(warped.color.value().into_data())
        })
        .collect();
    let mut data = Vec::with_capacity(3 * pixels.len());
    for c in chunks {
        data.extend(c?);
    }
    Image::from_data(
        cam.width(),
        cam.height(),
        data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
    )
}

/// A pose from the training cameras: index `t`, optionally interpolated
/// toward the next camera by `s` in `[0, 1]`.
pub fn training_pose(scene: &SceneInfo, t: usize, s: Option<f64>) -> Result<Pose> {
    let a = scene.pose(t)?;
    match s {
        None => Ok(a),
        Some(s) if (0.0..=1.0).contains(&s) => {
            let b = scene.pose((t + 1).min(scene.num_frames - 1))?;
            Ok(a.lerp(&b, s))
        }
        Some(s) => Err(Error::Invalid(format!("interpolation {s} outside [0, 1]"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub pixel: (usize, usize),
    pub t0: usize,
    /// World-space point at `t0`.
    pub p0: Vec3,
    /// Composited NDC trajectory coefficients, one row of `K` per axis.
    pub coeffs: [Vec<f64>; 3],
    /// World-space position at every frame.
    pub track: Vec<Vec3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackDocument {
    #[serde(rename = "T")]
    pub num_frames: usize,
    #[serde(rename = "K")]
    pub num_coeffs: usize,
    pub points: Vec<TrackPoint>,
}

/// Composites the sample positions and trajectory coefficients of each
/// pixel's ray at `t0` with the normalized weights, then evaluates the
/// trajectory at every frame.
pub fn export_tracks(
    params: &NetworkParams,
    ndc: &NdcSpace,
    cam: &Camera,
    t0: usize,
    pixels: &[(usize, usize)],
    samples: usize,
) -> Result<TrackDocument> {
    let cfg = params.config();
    let (n_frames, k) = (cfg.num_frames, cfg.num_coeffs);
    if t0 >= n_frames {
        return Err(Error::Invalid(format!("t0={t0} outside {n_frames} frames")));
    }
    let depths = render_depths(samples)?;
    let chunks: Vec<Result<Vec<TrackPoint>>> = pixels
        .par_chunks(RENDER_CHUNK)
        .map(|chunk| {
            let rays = generate_rays(cam, ndc, chunk, t0)?;
            let batch = RayBatch::shared(rays, &depths)?;
            let tape = Tape::new();
            let field = params.bind_const(&tape);
            let frame = render_frame(&field, &batch, t0 as f64)?;
            let w = frame.weights.value();
            let phi = frame.phi.value();
            let pos = frame.positions.value();
            let mut out = Vec::with_capacity(chunk.len());
            for (r, &pixel) in chunk.iter().enumerate() {
                let wr = w.row(r);
                let total: f64 = wr.iter().sum();
                let mut p = [0.0; 3];
                let mut c = vec![0.0; 3 * k];
                for (j, &wj) in wr.iter().enumerate() {
                    let a = if total > 0.0 { wj / total } else { 0.0 };
                    let i = r * samples + j;
                    for (d, pd) in p.iter_mut().enumerate() {
                        *pd += a * pos.row(i)[d];
                    }
                    for (ci, cv) in c.iter_mut().enumerate() {
                        *cv += a * phi.row(i)[ci];
                    }
                }
                let coeffs = TrajectoryCoeffs::new(n_frames, k, c)?;
                let base = coeffs.idct_eval(t0 as f64);
                let track = (0..n_frames)
                    .map(|t| {
                        let e = coeffs.idct_eval(t as f64);
                        ndc.to_world([
                            p[0] + e[0] - base[0],
                            p[1] + e[1] - base[1],
                            p[2] + e[2] - base[2],
                        ])
                    })
                    .collect();
                let axes = coeffs.axes();
                out.push(TrackPoint {
                    pixel,
                    t0,
                    p0: ndc.to_world(p),
                    coeffs: [axes[0].to_vec(), axes[1].to_vec(), axes[2].to_vec()],
                    track,
                });
            }
            Ok(out)
        })
        .collect();
    let mut points = Vec::with_capacity(pixels.len());
    for c in chunks {
        points.extend(c?);
    }
    Ok(TrackDocument {
        num_frames: n_frames,
        num_coeffs: k,
        points,
    })
}

/// Pixels on a regular grid with the given stride, starting half a stride in.
pub fn grid_pixels(width: usize, height: usize, stride: usize) -> Vec<(usize, usize)> {
    if stride == 0 {
        return Vec::new();
    }
    (stride / 2..height)
        .step_by(stride)
        .flat_map(|r| (stride / 2..width).step_by(stride).map(move |c| (r, c)))
        .collect()
}
