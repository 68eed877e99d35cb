//! Training objectives and their weighted combination.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{concat, Var};
use crate::camera::{Camera, NdcSpace};
use crate::error::{Error, Result};
use crate::field::FieldVars;
use crate::render::{
    corresponded, p_empty_var, render_frame, render_warped, RayBatch, RenderOptions,
};
use crate::tensor::Tensor;

/// Guards normalizations by a possibly empty total.
const NORM_EPS: f64 = 1e-10;
/// Added to the rendered-depth variance in the affine fit.
const FIT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub cycle: f64,
    pub traj: f64,
    pub svs: f64,
    pub depth: f64,
    pub flow: f64,
    pub cycle_phi: f64,
    pub cycle_sigma: f64,
    pub cycle_color: f64,
}

impl LossWeights {
    /// Weights at the start of training.
    pub fn initial() -> Self {
        LossWeights {
            cycle: 1.0,
            traj: 0.1,
            svs: 1e-5,
            depth: 0.04,
            flow: 0.02,
            cycle_phi: 1.0,
            cycle_sigma: 0.1,
            cycle_color: 0.1,
        }
    }

    /// Photometric terms only.
    pub fn photometric_only() -> Self {
        LossWeights {
            cycle: 0.0,
            traj: 0.0,
            svs: 0.0,
            depth: 0.0,
            flow: 0.0,
            ..LossWeights::initial()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.cycle,
            self.traj,
            self.svs,
            self.depth,
            self.flow,
            self.cycle_phi,
            self.cycle_sigma,
            self.cycle_color,
        ];
        if all.iter().all(|w| *w >= 0.0 && w.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "loss weights must be finite and nonnegative: {self:?}"
            )))
        }
    }
}

/// Unweighted term values and the weighted total. Absent terms are zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub photo_t0: f64,
    /// Sum over the existing `t0 ± 1` neighbors.
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

impl LossBreakdown {
    pub fn photometric(&self) -> f64 {
        self.photo_t0 + self.photo_neighbors + self.photo_t1
    }

    pub fn traj(&self) -> f64 {
        self.traj_flow_smooth + self.traj_rigid + self.traj_magnitude
    }

    pub fn regularization(&self, w: &LossWeights) -> f64 {
        w.cycle * self.cycle
            + w.traj * self.traj()
            + w.svs * self.svs
            + w.depth * self.depth
            + w.flow * self.flow
    }

    /// `(name, value)` for every term, in a fixed order.
    pub fn terms(&self) -> [(&'static str, f64); 11] {
        [
            ("photo_t0", self.photo_t0),
            ("photo_neighbors", self.photo_neighbors),
            ("photo_t1", self.photo_t1),
            ("cycle", self.cycle),
            ("traj_flow_smooth", self.traj_flow_smooth),
            ("traj_rigid", self.traj_rigid),
            ("traj_magnitude", self.traj_magnitude),
            ("svs", self.svs),
            ("depth", self.depth),
            ("flow", self.flow),
            ("total", self.total),
        ]
    }

    /// Name of the first non-finite term, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.terms()
            .iter()
            .find(|(_, v)| !v.is_finite())
            .map(|(n, _)| *n)
    }
}

/// Mean over rays of the squared color error.
pub fn photo_loss<'t>(rendered: Var<'t>, reference: Var<'t>) -> Result<Var<'t>> {
    let (a, b) = (rendered.shape(), reference.shape());
    if a != b || a.len() != 2 {
        return Err(Error::ShapeMismatch {
            op: "photo_loss",
            lhs: a,
            rhs: b,
        });
    }
    let rays = a[0].max(1) as f64;
    Ok(rendered.sub(reference)?.square().sum().scale(1.0 / rays))
}

/// Mean over samples of the occlusion-weighted disagreement between a point
/// and its correspondence.
pub fn cycle_loss<'t>(
    t0: (Var<'t>, Var<'t>, Var<'t>),
    t1: (Var<'t>, Var<'t>, Var<'t>),
    p_occ: Var<'t>,
    w: &LossWeights,
) -> Result<Var<'t>> {
    let (phi0, sigma0, c0) = t0;
    let (phi1, sigma1, c1) = t1;
    let per = phi0
        .sub(phi1)?
        .abs()
        .sum_axis(1)?
        .scale(w.cycle_phi)
        .add(sigma0.sub(sigma1)?.abs().scale(w.cycle_sigma))?
        .add(c0.sub(c1)?.abs().sum_axis(1)?.scale(w.cycle_color))?;
    p_occ.rsub_scalar(1.0).mul(per)?.mean()
}

/// Mean over rays of the attenuation mass outside the best window.
pub fn svs_loss<'t>(weights: Var<'t>, window: usize) -> Result<Var<'t>> {
    let total = weights.sum_axis(1)?;
    let best = weights.max_over_window(window)?;
    total.sub(best)?.div(total.add_scalar(NORM_EPS))?.mean()
}

/// Maps `[P, 3]` NDC points to world coordinates. Depth is capped at twice
/// the far bound.
pub fn ndc_to_world<'t>(ndc: &NdcSpace, q: Var<'t>) -> Result<Var<'t>> {
    let tape = q.tape();
    let zmax = 1.0 - ndc.near / ndc.far;
    let qz = q.slice(1, 2, 3)?.clamp(-1.0, zmax);
    let z = tape.scalar(2.0 * ndc.near).div(qz.add_scalar(-1.0))?;
    let x = q.slice(1, 0, 1)?.mul(z)?.scale(-1.0 / ndc.scale_x);
    let y = q.slice(1, 1, 2)?.mul(z)?.scale(-1.0 / ndc.scale_y);
    concat(&[x, y, z], 1)
}

/// Inputs of the trajectory regularizer, all `[P, 3]` NDC positions except
/// `p_empty` (`[P, 1]`).
pub struct TrajInputs<'t> {
    pub positions: Var<'t>,
    /// Correspondences at the existing `t0 ± 1`.
    pub neighbors: Vec<Var<'t>>,
    pub at_t1: Var<'t>,
    pub p_empty: Var<'t>,
    pub rays: usize,
    pub samples: usize,
}

/// Returns the flow-smoothness, rigidity and flow-magnitude terms.
pub fn traj_reg_loss<'t>(ndc: &NdcSpace, inp: &TrajInputs<'t>) -> Result<[Var<'t>; 3]> {
    let (r, n) = (inp.rays, inp.samples);
    if n < 2 {
        return Err(Error::invalid(
            "trajectory regularizer needs 2 samples per ray",
        ));
    }
    let tape = inp.positions.tape();
    let to3 = |v: Var<'t>| -> Result<Var<'t>> { ndc_to_world(ndc, v)?.reshape(&[r, n, 3]) };
    let pairs = |v: Var<'t>| -> Result<Var<'t>> { v.slice(1, 0, n - 1)?.sub(v.slice(1, 1, n)?) };
    let l1 = |v: Var<'t>| -> Result<Var<'t>> { v.abs().sum_axis(2)?.mean() };
    let e0 = to3(inp.positions)?;

    let mut smooth = tape.scalar(0.0);
    let mut magnitude = tape.scalar(0.0);
    if !inp.neighbors.is_empty() {
        let share = 1.0 / inp.neighbors.len() as f64;
        for &nb in &inp.neighbors {
            let flow = e0.sub(to3(nb)?)?;
            smooth = smooth.add(l1(pairs(flow)?)?.scale(share))?;
            magnitude = magnitude.add(l1(flow)?.scale(share))?;
        }
    }
    let offsets = pairs(e0)?.sub(pairs(to3(inp.at_t1)?)?)?;
    let occupied = inp
        .p_empty
        .reshape(&[r, n, 1])?
        .slice(1, 0, n - 1)?
        .rsub_scalar(1.0);
    let rigid = l1(offsets.mul(occupied)?)?;
    Ok([smooth, rigid, magnitude])
}

/// Affine-invariant depth term: rendered values (`[R, 1]`) are fitted to
/// `reference` by least squares and the mean absolute residual returned.
/// `None` when the reference is constant.
pub fn depth_loss<'t>(rendered: Var<'t>, reference: &[f64]) -> Result<Option<Var<'t>>> {
    let r = reference.len();
    if rendered.shape() != vec![r, 1] {
        return Err(Error::ShapeMismatch {
            op: "depth_loss",
            lhs: rendered.shape(),
            rhs: vec![r, 1],
        });
    }
    if r < 2 {
        return Ok(None);
    }
    let mean_y = reference.iter().sum::<f64>() / r as f64;
    let spread = reference
        .iter()
        .map(|y| (y - mean_y).abs())
        .fold(0.0, f64::max);
    if spread <= 1e-12 * mean_y.abs().max(1.0) {
        return Ok(None);
    }
    let tape = rendered.tape();
    let dy = tape.constant(Tensor::new(
        [r, 1],
        reference.iter().map(|y| y - mean_y).collect(),
    )?);
    let dx = rendered.sub(rendered.mean()?)?;
    let scale = dx
        .mul(dy)?
        .mean()?
        .div(dx.square().mean()?.add_scalar(FIT_EPS))?;
    Ok(Some(dx.mul(scale)?.sub(dy)?.abs().mean()?))
}

/// Flow toward one neighboring frame.
#[derive(Debug, Clone)]
pub struct FlowTarget {
    pub frame: usize,
    pub camera: Camera,
    /// `[R, 2]` pixel displacement `(du, dv)`.
    pub flow: Tensor,
}

/// Projects the weight-composited correspondences at the neighbor frame and
/// compares the induced pixel motion with `target`. `pixels` are the source
/// `(row, col)` of each ray.
pub fn flow_loss<'t>(
    ndc: &NdcSpace,
    weights: Var<'t>,
    neighbor_positions: Var<'t>,
    pixels: &[(usize, usize)],
    target: &FlowTarget,
) -> Result<Var<'t>> {
    let shape = weights.shape();
    let (r, n) = (shape[0], shape[1]);
    if pixels.len() != r || target.flow.shape() != [r, 2] {
        return Err(Error::invalid(format!(
            "flow_loss: {} pixels and flow {:?} for {r} rays",
            pixels.len(),
            target.flow.shape()
        )));
    }
    let tape = weights.tape();
    let norm = weights.div(weights.sum_axis(1)?.add_scalar(NORM_EPS))?;
    let world = ndc_to_world(ndc, neighbor_positions)?.reshape(&[r, n, 3])?;
    let point = norm
        .reshape(&[r, n, 1])?
        .mul(world)?
        .sum_axis(1)?
        .reshape(&[r, 3])?;
    let pose = &target.camera.pose;
    let t = tape.constant(Tensor::new([1, 3], pose.translation.to_vec())?);
    let rot: Vec<f64> = pose.rotation.iter().flatten().copied().collect();
    let cam = point
        .sub(t)?
        .matmul(tape.constant(Tensor::new([3, 3], rot)?))?;
    let k = &target.camera.intrinsics;
    let depth = cam.slice(1, 2, 3)?.neg().clamp(1e-6, f64::INFINITY);
    let u = cam.slice(1, 0, 1)?.div(depth)?.scale(k.fx).add_scalar(k.cx);
    let v = cam
        .slice(1, 1, 2)?
        .div(depth)?
        .scale(-k.fy)
        .add_scalar(k.cy);
    let mut src = Vec::with_capacity(2 * r);
    for &(row, col) in pixels {
        src.push(col as f64 + 0.5);
        src.push(row as f64 + 0.5);
    }
    let src = Tensor::new([r, 2], src)?;
    let expected = tape.constant(Tensor::new(
        [r, 2],
        src.data()
            .iter()
            .zip(target.flow.data())
            .map(|(s, f)| s + f)
            .collect(),
    )?);
    concat(&[u, v], 1)?.sub(expected)?.abs().sum_axis(1)?.mean()
}

/// Everything one loss evaluation needs besides the network.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub rays: RayBatch,
    pub t0: usize,
    pub t1: usize,
    pub num_frames: usize,
    /// `[R, 3]`
    pub target_rgb: Tensor,
    /// Per-ray reference for the depth term, affine in inverse depth.
    pub target_depth: Option<Vec<f64>>,
    pub flows: Vec<FlowTarget>,
    pub ndc: NdcSpace,
    pub svs_window: usize,
}

/// Builds every term on `field`'s tape and returns the weighted total with
/// its breakdown.
pub fn total_loss<'t>(
    field: &FieldVars<'t>,
    batch: &TrainBatch,
    w: &LossWeights,
    opts: RenderOptions,
) -> Result<(Var<'t>, LossBreakdown)> {
    w.validate()?;
    let (t0, t1) = (batch.t0, batch.t1);
    if t0 >= batch.num_frames || t1 >= batch.num_frames {
        return Err(Error::invalid(format!(
            "frames t0={t0}, t1={t1} outside a {}-frame sequence",
            batch.num_frames
        )));
    }
    let tape = field.vars()[0].tape();
    let target = tape.constant(batch.target_rgb.clone());
    let rays = &batch.rays;
    let frame = render_frame(field, rays, t0 as f64)?;
    let photo_t0 = photo_loss(frame.color, target)?;

    let neighbors: Vec<usize> = [t0.checked_sub(1), Some(t0 + 1)]
        .into_iter()
        .flatten()
        .filter(|&t| t < batch.num_frames)
        .collect();
    let mut photo_nb = tape.scalar(0.0);
    let mut nb_positions = Vec::new();
    for &tn in &neighbors {
        let warped = render_warped(field, rays, &frame, tn as f64, opts)?;
        photo_nb = photo_nb.add(photo_loss(warped.color, target)?)?;
        nb_positions.push((tn, corresponded(field, &frame, tn as f64)?));
    }
    let warped = render_warped(field, rays, &frame, t1 as f64, opts)?;
    let photo_t1 = photo_loss(warped.color, target)?;

    let cycle = cycle_loss(
        (frame.phi, frame.sigma, frame.rgb),
        (warped.phi, warped.sigma, warped.rgb),
        warped.p_occ,
        w,
    )?;
    let [smooth, rigid, magnitude] = traj_reg_loss(
        &batch.ndc,
        &TrajInputs {
            positions: frame.positions,
            neighbors: nb_positions.iter().map(|(_, v)| *v).collect(),
            at_t1: corresponded(field, &frame, t1 as f64)?,
            p_empty: p_empty_var(frame.sigma),
            rays: rays.num_rays(),
            samples: rays.samples(),
        },
    )?;
    let svs = svs_loss(frame.weights, batch.svs_window)?;
    let depth = match &batch.target_depth {
        Some(d) => depth_loss(frame.depth, d)?,
        None => None,
    };
    let pixels: Vec<(usize, usize)> = rays.rays().iter().map(|r| r.pixel).collect();
    let mut flow: Option<Var<'t>> = None;
    let mut flow_count = 0usize;
    for ft in &batch.flows {
        let Some((_, pos)) = nb_positions.iter().find(|(tn, _)| *tn == ft.frame) else {
            continue;
        };
        let term = flow_loss(&batch.ndc, frame.weights, *pos, &pixels, ft)?;
        flow = Some(match flow {
            Some(f) => f.add(term)?,
            None => term,
        });
        flow_count += 1;
    }
    let flow = flow.map(|f| f.scale(1.0 / flow_count as f64));

    let traj = smooth.add(rigid)?.add(magnitude)?;
    let mut total = photo_t0
        .add(photo_nb)?
        .add(photo_t1)?
        .add(cycle.scale(w.cycle))?
        .add(traj.scale(w.traj))?
        .add(svs.scale(w.svs))?;
    if let Some(d) = depth {
        total = total.add(d.scale(w.depth))?;
    }
    if let Some(f) = flow {
        total = total.add(f.scale(w.flow))?;
    }
    let mut b = LossBreakdown {
        photo_t0: photo_t0.item(),
        photo_neighbors: photo_nb.item(),
        photo_t1: photo_t1.item(),
        cycle: cycle.item(),
        traj_flow_smooth: smooth.item(),
        traj_rigid: rigid.item(),
        traj_magnitude: magnitude.item(),
        svs: svs.item(),
        depth: depth.map_or(0.0, |d| d.item()),
        flow: flow.map_or(0.0, |f| f.item()),
        total: 0.0,
    };
    b.total = b.photometric() + b.regularization(w);
    Ok((total, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;

    fn var<'t>(tape: &'t Tape, shape: &[usize], data: &[f64]) -> Var<'t> {
        tape.constant(Tensor::new(shape.to_vec(), data.to_vec()).unwrap())
    }

    #[test]
    fn photo_values() {
        let tape = Tape::new();
        let black = var(&tape, &[2, 3], &[0.0; 6]);
        let white = var(&tape, &[2, 3], &[1.0; 6]);
        assert_eq!(photo_loss(black, white).unwrap().item(), 3.0);
        assert_eq!(photo_loss(white, white).unwrap().item(), 0.0);
        let other = var(&tape, &[3, 2], &[1.0; 6]);
        assert!(photo_loss(black, other).is_err());
    }

    #[test]
    fn cycle_values() {
        let tape = Tape::new();
        let w = LossWeights::initial();
        let phi = var(&tape, &[1, 3], &[0.1, 0.2, 0.3]);
        let phi2 = var(&tape, &[1, 3], &[1.1, 0.2, 0.3]);
        let s = var(&tape, &[1, 1], &[0.5]);
        let c = var(&tape, &[1, 3], &[0.2; 3]);
        let zero = var(&tape, &[1, 1], &[0.0]);
        let one = var(&tape, &[1, 1], &[1.0]);
        assert_eq!(
            cycle_loss((phi, s, c), (phi, s, c), zero, &w)
                .unwrap()
                .item(),
            0.0
        );
        assert_eq!(
            cycle_loss((phi, s, c), (phi2, s, c), one, &w)
                .unwrap()
                .item(),
            0.0
        );
        let v = cycle_loss((phi, s, c), (phi2, s, c), zero, &w)
            .unwrap()
            .item();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn svs_values() {
        let tape = Tape::new();
        let mut spike = vec![0.0; 16];
        spike[5] = 1.0;
        assert_eq!(
            svs_loss(var(&tape, &[1, 16], &spike), 8).unwrap().item(),
            0.0
        );
        let uniform = vec![1.0 / 16.0; 16];
        let u = svs_loss(var(&tape, &[1, 16], &uniform), 8).unwrap().item();
        assert!((u - 0.5).abs() < 1e-9);
        let mut ends = vec![0.0; 16];
        ends[0] = 0.5;
        ends[15] = 0.5;
        let e = svs_loss(var(&tape, &[1, 16], &ends), 4).unwrap().item();
        assert!((e - 0.5).abs() < 1e-9);
        assert_eq!(
            svs_loss(var(&tape, &[1, 16], &[0.0; 16]), 4)
                .unwrap()
                .item(),
            0.0
        );
        assert!(svs_loss(var(&tape, &[1, 16], &ends), 17).is_err());
    }

    #[test]
    fn depth_affine_invariance() {
        let tape = Tape::new();
        let reference = [0.2, 0.5, 0.1, 0.9];
        let exact = var(&tape, &[4, 1], &reference);
        assert!(depth_loss(exact, &reference).unwrap().unwrap().item() < 1e-9);
        let affine: Vec<f64> = reference.iter().map(|y| 2.0 * y + 5.0).collect();
        let a = var(&tape, &[4, 1], &affine);
        assert!(depth_loss(a, &reference).unwrap().unwrap().item() < 1e-9);
        let flat = var(&tape, &[4, 1], &[0.0; 4]);
        assert!(depth_loss(flat, &[0.3; 4]).unwrap().is_none());
    }

    #[test]
    fn ndc_world_round_trip() {
        let ndc = NdcSpace {
            scale_x: 1.5,
            scale_y: 2.0,
            near: 1.0,
            far: 8.0,
        };
        let tape = Tape::new();
        let pts = [[0.3, -0.2, -4.0], [-1.0, 0.5, -1.5]];
        let q: Vec<f64> = pts.iter().flat_map(|p| ndc.to_ndc(*p)).collect();
        let w = ndc_to_world(&ndc, var(&tape, &[2, 3], &q)).unwrap().value();
        for (a, b) in w.data().iter().zip(pts.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn breakdown_bookkeeping() {
        let w = LossWeights::initial();
        let mut b = LossBreakdown {
            photo_t0: 0.3,
            photo_neighbors: 0.2,
            photo_t1: 0.1,
            cycle: 0.05,
            traj_flow_smooth: 0.01,
            traj_rigid: 0.02,
            traj_magnitude: 0.03,
            svs: 0.4,
            depth: 0.1,
            flow: 2.0,
            total: 0.0,
        };
        b.total = b.photometric() + b.regularization(&w);
        assert!((b.total - (0.6 + 0.05 + 0.006 + 4e-6 + 0.004 + 0.04)).abs() < 1e-12);
        assert_eq!(b.first_non_finite(), None);
        b.flow = f64::NAN;
        assert_eq!(b.first_non_finite(), Some("flow"));
        assert!(LossWeights { svs: -1.0, ..w }.validate().is_err());
    }
}
