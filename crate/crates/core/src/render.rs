//! Volumetric rendering along NDC rays, at the frame time and warped to
//! another time through the predicted trajectories.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::camera::{Ray, Vec3};
use crate::error::{Error, Result};
use crate::field::{FieldVars, NetworkParams};
use crate::math;
use crate::tensor::Tensor;
use crate::trajectory::displacement_matrix;

/// Slope of the emptiness sigmoid.
pub const EMPTY_K1: f64 = 2.0;
/// Offset of the emptiness sigmoid.
pub const EMPTY_K2: f64 = 3.0;

/// Guards the division by the blended density.
const BLEND_EPS: f64 = 1e-10;

pub fn p_empty(sigma: f64) -> f64 {
    math::sigmoid(-EMPTY_K1 * sigma + EMPTY_K2)
}

/// Probability that a point empty at `t0` is occupied at `t1`.
pub fn p_occlusion(sigma_t0: f64, sigma_t1: f64) -> f64 {
    p_empty(sigma_t0) * (1.0 - p_empty(sigma_t1))
}

/// `N` depths in `[0, 1]`: bin midpoints, or one uniform draw per bin.
pub fn sample_depths<R: Rng + ?Sized>(n: usize, stratified: bool, rng: &mut R) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 depth samples, got {n}"
        )));
    }
    let step = 1.0 / n as f64;
    Ok((0..n)
        .map(|i| {
            let jitter = if stratified { rng.gen::<f64>() } else { 0.5 };
            (i as f64 + jitter) * step
        })
        .collect())
}

/// Interval lengths; the last one is the nominal spacing `1 / N`.
pub fn deltas(depths: &[f64]) -> Vec<f64> {
    let n = depths.len();
    let mut out: Vec<f64> = depths.windows(2).map(|w| w[1] - w[0]).collect();
    if n > 0 {
        out.push(1.0 / n as f64);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    pub color: [f64; 3],
    pub weights: Vec<f64>,
    /// Weights rescaled to sum to one (all zero for an empty ray).
    pub normalized: Vec<f64>,
    pub depth: f64,
}

/// Alpha compositing over a black background.
pub fn composite(sigmas: &[f64], colors: &[[f64; 3]], depths: &[f64]) -> Result<Composite> {
    if sigmas.len() != colors.len() || sigmas.len() != depths.len() {
        return Err(Error::invalid(format!(
            "composite needs equal lengths, got {} densities, {} colors, {} depths",
            sigmas.len(),
            colors.len(),
            depths.len()
        )));
    }
    if let Some(&s) = sigmas.iter().find(|s| s.is_nan() || **s < 0.0) {
        return Err(Error::Domain {
            op: "composite",
            value: s,
        });
    }
    let dl = deltas(depths);
    let mut trans = 1.0;
    let mut weights = Vec::with_capacity(sigmas.len());
    let mut color = [0.0; 3];
    let mut depth = 0.0;
    for i in 0..sigmas.len() {
        let sd = sigmas[i] * dl[i];
        let w = trans * (1.0 - math::exp(-sd));
        trans *= math::exp(-sd);
        for (acc, c) in color.iter_mut().zip(colors[i]) {
            *acc += w * c;
        }
        depth += w * depths[i];
        weights.push(w);
    }
    let total: f64 = weights.iter().sum();
    let normalized = if total > 0.0 {
        weights.iter().map(|w| w / total).collect()
    } else {
        vec![0.0; weights.len()]
    };
    Ok(Composite {
        color,
        weights,
        normalized,
        depth,
    })
}

/// How the warped render attenuates light.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attenuation {
    /// The occlusion-blended density.
    Blended,
    /// The density found at the corresponding point at `t1`.
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub attenuation: Attenuation,
    /// Off means `p_occ = 0`: plain warping.
    pub occlusion_blending: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            attenuation: Attenuation::Blended,
            occlusion_blending: true,
        }
    }
}

/// A set of rays sharing a frame time, with fixed depth samples.
#[derive(Debug, Clone)]
pub struct RayBatch {
    rays: Vec<Ray>,
    samples: usize,
    depths: Tensor,
    deltas: Tensor,
    positions: Tensor,
}

impl RayBatch {
    /// `depths` holds `N` samples per ray, ray-major.
    pub fn new(rays: Vec<Ray>, depths: Vec<f64>, samples: usize) -> Result<Self> {
        if samples < 2 {
            return Err(Error::invalid("need at least 2 samples per ray"));
        }
        if depths.len() != rays.len() * samples {
            return Err(Error::invalid(format!(
                "{} depths for {} rays of {samples} samples",
                depths.len(),
                rays.len()
            )));
        }
        let r = rays.len();
        let mut dl = Vec::with_capacity(depths.len());
        let mut pos = Vec::with_capacity(depths.len() * 3);
        for (i, ray) in rays.iter().enumerate() {
            let ds = &depths[i * samples..(i + 1) * samples];
            dl.extend(deltas(ds));
            for &xi in ds {
                pos.extend(ray.at(xi).iter().map(|v| v.clamp(-1.0, 1.0)));
            }
        }
        Ok(RayBatch {
            samples,
            depths: Tensor::new([r, samples], depths)?,
            deltas: Tensor::new([r, samples], dl)?,
            positions: Tensor::new([r * samples, 3], pos)?,
            rays,
        })
    }

    /// Every ray uses the same depth samples.
    pub fn shared(rays: Vec<Ray>, depths: &[f64]) -> Result<Self> {
        let all = depths.repeat(rays.len());
        RayBatch::new(rays, all, depths.len())
    }

    pub fn rays(&self) -> &[Ray] {
        &self.rays
    }

    pub fn num_rays(&self) -> usize {
        self.rays.len()
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// `[R, N]`
    pub fn depths(&self) -> &Tensor {
        &self.depths
    }

    /// Sample positions in NDC, `[R * N, 3]`, clamped to the NDC box.
    pub fn positions(&self) -> &Tensor {
        &self.positions
    }

    fn view_dirs(&self) -> Vec<Vec3> {
        self.rays.iter().map(|r| r.view_dir).collect()
    }
}

/// Graph outputs of a frame-time render.
#[derive(Clone, Copy)]
pub struct FrameRender<'t> {
    pub t0: f64,
    /// `[R, 3]`
    pub color: Var<'t>,
    /// `[R, N]`
    pub weights: Var<'t>,
    /// Expected ray parameter, `[R, 1]`.
    pub depth: Var<'t>,
    /// `[P, 3]` constant
    pub positions: Var<'t>,
    /// `[P, 1]`
    pub sigma: Var<'t>,
    /// `[P, 3K]`
    pub phi: Var<'t>,
    /// Per-sample colors, `[P, 3]`.
    pub rgb: Var<'t>,
    /// Encoded view direction and `t0`, `[R, dir_len]`.
    pub dir_time: Var<'t>,
}

/// Graph outputs of a render warped from `t0` to `t1`.
#[derive(Clone, Copy)]
pub struct WarpedRender<'t> {
    pub t1: f64,
    pub color: Var<'t>,
    pub weights: Var<'t>,
    /// Corresponded positions at `t1`, `[P, 3]`.
    pub positions: Var<'t>,
    pub sigma: Var<'t>,
    pub phi: Var<'t>,
    /// Colors at the corresponded points, queried with the `t0` inputs.
    pub rgb: Var<'t>,
    /// `[P, 1]`; a zero constant when blending is off.
    pub p_occ: Var<'t>,
}

fn strict_upper(n: usize) -> Tensor {
    let mut m = vec![0.0; n * n];
    for j in 0..n {
        for i in j + 1..n {
            m[j * n + i] = 1.0;
        }
    }
    Tensor::new([n, n], m).expect("square")
}

/// Returns `(color [R, 3], weights [R, N])`. `atten` sets the opacities and
/// `rgb` (`[P, 3]`) the emitted colors.
fn composite_graph<'t>(
    batch: &RayBatch,
    atten: Var<'t>,
    rgb: Var<'t>,
) -> Result<(Var<'t>, Var<'t>)> {
    let tape = atten.tape();
    let (r, n) = (batch.num_rays(), batch.samples);
    let sd = atten
        .reshape(&[r, n])?
        .mul(tape.constant(batch.deltas.clone()))?;
    let trans = sd.matmul(tape.constant(strict_upper(n)))?.neg().exp();
    let alpha = sd.neg().exp().rsub_scalar(1.0);
    let w = trans.mul(alpha)?;
    let color = w
        .reshape(&[r, n, 1])?
        .mul(rgb.reshape(&[r, n, 3])?)?
        .sum_axis(1)?
        .reshape(&[r, 3])?;
    Ok((color, w))
}

/// Empty-space probability, elementwise.
pub fn p_empty_var(sigma: Var<'_>) -> Var<'_> {
    sigma.scale(-EMPTY_K1).add_scalar(EMPTY_K2).sigmoid()
}

/// Renders `batch` at frame time `t0`.
pub fn render_frame<'t>(
    field: &FieldVars<'t>,
    batch: &RayBatch,
    t0: f64,
) -> Result<FrameRender<'t>> {
    render_frame_at(field, batch, t0, t0)
}

/// Geometry from time `t0`, colors from radiance time `t_query`.
pub fn render_frame_at<'t>(
    field: &FieldVars<'t>,
    batch: &RayBatch,
    t0: f64,
    t_query: f64,
) -> Result<FrameRender<'t>> {
    let tape = field.vars()[0].tape();
    let positions = tape.constant(batch.positions.clone());
    let out = field.query(positions, t0)?;
    let dir_time = field.dir_time_encoding(&batch.view_dirs(), t_query)?;
    let rgb = field.color(out.omega, dir_time, batch.samples)?;
    let (color, weights) = composite_graph(batch, out.sigma, rgb)?;
    let depth = weights
        .mul(tape.constant(batch.depths.clone()))?
        .sum_axis(1)?;
    Ok(FrameRender {
        t0,
        color,
        weights,
        depth,
        positions,
        sigma: out.sigma,
        phi: out.phi,
        rgb,
        dir_time,
    })
}

/// Corresponded positions of `frame`'s samples at time `t`, unclamped.
pub fn corresponded<'t>(field: &FieldVars<'t>, frame: &FrameRender<'t>, t: f64) -> Result<Var<'t>> {
    let cfg = field.config();
    let b = displacement_matrix(cfg.num_frames, cfg.num_coeffs, frame.t0, t);
    let tape = frame.phi.tape();
    frame.positions.add(frame.phi.matmul(tape.constant(b))?)
}

/// Renders `frame`'s rays with the field at `t1`, warped back to `t0`.
pub fn render_warped<'t>(
    field: &FieldVars<'t>,
    batch: &RayBatch,
    frame: &FrameRender<'t>,
    t1: f64,
    opts: RenderOptions,
) -> Result<WarpedRender<'t>> {
    let tape = frame.phi.tape();
    let positions = corresponded(field, frame, t1)?.clamp(-1.0, 1.0);
    let out = field.query(positions, t1)?;
    let rgb1 = field.color(out.omega, frame.dir_time, batch.samples)?;
    let (s0, s1) = (frame.sigma, out.sigma);
    let (p_occ, sigma_blend, rgb_blend) = if opts.occlusion_blending {
        let p_occ = p_empty_var(s0).mul(p_empty_var(s1).rsub_scalar(1.0))?;
        let sigma_blend = s1.add(p_occ.mul(s0.sub(s1)?)?)?;
        let lambda = p_occ.mul(s0)?.div(sigma_blend.add_scalar(BLEND_EPS))?;
        let rgb_blend = rgb1.add(lambda.mul(frame.rgb.sub(rgb1)?)?)?;
        (p_occ, sigma_blend, rgb_blend)
    } else {
        let zeros = tape.constant(Tensor::zeros(s1.shape()));
        (zeros, s1, rgb1)
    };
    let atten = match opts.attenuation {
        Attenuation::Blended => sigma_blend,
        Attenuation::Target => s1,
    };
    let (color, weights) = composite_graph(batch, atten, rgb_blend)?;
    Ok(WarpedRender {
        t1,
        color,
        weights,
        positions,
        sigma: s1,
        phi: out.phi,
        rgb: rgb1,
        p_occ,
    })
}

fn single_batch(ray: &Ray, depths: &[f64]) -> Result<RayBatch> {
    RayBatch::shared(vec![*ray], depths)
}

fn rgb_of(v: Var<'_>) -> [f64; 3] {
    let t = v.value();
    [t.data()[0], t.data()[1], t.data()[2]]
}

/// Color of one ray at its own frame time.
pub fn render_frame_pixel(params: &NetworkParams, ray: &Ray, depths: &[f64]) -> Result<[f64; 3]> {
    let tape = Tape::new();
    let field = params.bind_const(&tape);
    let batch = single_batch(ray, depths)?;
    Ok(rgb_of(render_frame(&field, &batch, ray.time as f64)?.color))
}

/// Color of one ray rendered from the field at `t1`.
pub fn render_warped_pixel(
    params: &NetworkParams,
    ray: &Ray,
    depths: &[f64],
    t1: f64,
    opts: RenderOptions,
) -> Result<[f64; 3]> {
    let tape = Tape::new();
    let field = params.bind_const(&tape);
    let batch = single_batch(ray, depths)?;
    let frame = render_frame(&field, &batch, ray.time as f64)?;
    Ok(rgb_of(
        render_warped(&field, &batch, &frame, t1, opts)?.color,
    ))
}
