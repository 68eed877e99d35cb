//! A two-ray, four-sample instance of every objective, small enough for
//! exhaustive finite differences.
#![allow(dead_code)]

use trajfield_core::camera::{Camera, Intrinsics, NdcSpace, Pose, Ray};
use trajfield_core::field::{FieldConfig, FieldVars, NetworkParams};
use trajfield_core::losses::{
    cycle_loss, depth_loss, flow_loss, photo_loss, svs_loss, total_loss, traj_reg_loss, FlowTarget,
    LossWeights, TrainBatch, TrajInputs,
};
use trajfield_core::render::{
    corresponded, p_empty_var, render_frame, render_warped, RayBatch, RenderOptions,
};
use trajfield_core::{Error, Result, Tensor, Var};

pub fn config() -> FieldConfig {
    FieldConfig {
        num_frames: 5,
        num_coeffs: 4,
        trunk_width: 8,
        trunk_depth: 3,
        skip_layer: Some(2),
        embed_width: 4,
        color_width: 4,
        color_layers: 1,
        pos_freqs: 2,
        dir_freqs: 1,
    }
}

/// Seeded weights with a nonzero trajectory head.
pub fn params() -> NetworkParams {
    let mut p = NetworkParams::init(config(), 5).unwrap();
    let i = p.names().iter().position(|n| n == "phi.weight").unwrap();
    for (j, v) in p.tensors_mut()[i].data_mut().iter_mut().enumerate() {
        *v = 0.04 * (((j * 7) % 11) as f64 - 5.0) / 5.0;
    }
    p
}

pub fn intrinsics() -> Intrinsics {
    Intrinsics {
        fx: 10.0,
        fy: 10.0,
        cx: 4.0,
        cy: 3.0,
        width: 8,
        height: 6,
    }
}

pub fn ndc() -> NdcSpace {
    NdcSpace::new(&intrinsics(), 1.0, 5.0, 0.9)
}

pub fn batch() -> TrainBatch {
    let ndc = ndc();
    let cam = Camera::new(intrinsics(), Pose::identity(), 1.0, 5.0).unwrap();
    let pixels = [(1usize, 2usize), (4, 5)];
    let rays: Vec<Ray> = trajfield_core::camera::generate_rays(&cam, &ndc, &pixels, 2).unwrap();
    let depths = vec![0.11, 0.36, 0.6, 0.87, 0.14, 0.4, 0.62, 0.9];
    let neighbor = |dx: f64| {
        Camera::new(
            intrinsics(),
            Pose::from_translation([dx, 0.05, 0.0]),
            1.0,
            5.0,
        )
        .unwrap()
    };
    TrainBatch {
        rays: RayBatch::new(rays, depths, 4).unwrap(),
        t0: 2,
        t1: 4,
        num_frames: 5,
        target_rgb: Tensor::new([2, 3], vec![0.9, 0.2, 0.4, 0.1, 0.7, 0.3]).unwrap(),
        target_depth: Some(vec![0.3, 0.8]),
        flows: vec![
            FlowTarget {
                frame: 1,
                camera: neighbor(-0.1),
                flow: Tensor::new([2, 2], vec![0.4, -0.2, 0.9, 0.1]).unwrap(),
            },
            FlowTarget {
                frame: 3,
                camera: neighbor(0.1),
                flow: Tensor::new([2, 2], vec![-0.5, 0.3, -0.8, 0.0]).unwrap(),
            },
        ],
        ndc,
        svs_window: 2,
    }
}

pub type Term = for<'t> fn(&FieldVars<'t>, &TrainBatch) -> Result<Var<'t>>;

fn target<'t>(f: &FieldVars<'t>, b: &TrainBatch) -> Var<'t> {
    f.vars()[0].tape().constant(b.target_rgb.clone())
}

fn photo<'t>(f: &FieldVars<'t>, b: &TrainBatch) -> Result<Var<'t>> {
    let fr = render_frame(f, &b.rays, b.t0 as f64)?;
    photo_loss(fr.color, target(f, b))
}

fn warped_photo<'t>(f: &FieldVars<'t>, b: &TrainBatch) -> Result<Var<'t>> {
    let fr = render_frame(f, &b.rays, b.t0 as f64)?;
    let w = render_warped(f, &b.rays, &fr, b.t1 as f64, RenderOptions::default())?;
    photo_loss(w.color, target(f, b))
}

fn cycle<'t>(f: &FieldVars<'t>, b: &TrainBatch) -> Result<Var<'t>> {
    let fr = render_frame(f, &b.rays, b.t0 as f64)?;
    let w = render_warped(f, &b.rays, &fr, b.t1 as f64, RenderOptions::default())?;
    cycle_loss(
        (fr.phi, fr.sigma, fr.rgb),
        (w.phi, w.sigma, w.rgb),
        w.p_occ,
        &LossWeights::initial(),
    )
}

fn svs<'t>(f: &FieldVars<'t>, b: &TrainBatch) -> Result<Var<'t>> {
    let fr = render_frame(f, &b.rays, b.t0 as f64)?;
    svs_loss(fr.weights, b.svs_window)
}

fn traj_term<'t>(f: &FieldVars<'t>, b: &TrainBatch, which: usize) -> Result<Var<'t>> {
    let fr = render_frame(f, &b.rays, b.t0 as f64)?;
    let terms = traj_reg_loss(
        &b.ndc,
        &TrajInputs {
            positions: fr.positions,
            neighbors: vec![corresponded(f, &fr, 1.0)?, corresponded(f, &fr, 3.0)?],
            at_t1: corresponded(f, &fr, b.t1 as f64)?,
            p_empty: p_empty_var(fr.sigma),
            rays: b.rays.num_rays(),
            samples: b.rays.samples(),
        },
    )?;
    Ok(terms[which])
}

fn traj_flow_smooth<'t>(f: &FieldVars<'t>, b: &TrainBatch) -> Result<Var<'t>> {
    traj_term(f, b, 0)
}

fn traj_rigid<'t>(f: &FieldVars<'t>, b: &TrainBatch) -> Result<Var<'t>> {
    traj_term(f, b, 1)
}

fn traj_magnitude<'t>(f: &FieldVars<'t>, b: &TrainBatch) -> Result<Var<'t>> {
    traj_term(f, b, 2)
}

/// Two rays always admit an exact affine fit, so this term gets a third.
fn depth<'t>(f: &FieldVars<'t>, b: &TrainBatch) -> Result<Var<'t>> {
    let cam = Camera::new(intrinsics(), Pose::identity(), 1.0, 5.0)?;
    let rays =
        trajfield_core::camera::generate_rays(&cam, &b.ndc, &[(1, 2), (4, 5), (2, 7)], b.t0)?;
    let depths = [
        0.11, 0.36, 0.6, 0.87, 0.14, 0.4, 0.62, 0.9, 0.2, 0.3, 0.55, 0.8,
    ];
    let rays = RayBatch::new(rays, depths.to_vec(), 4)?;
    let fr = render_frame(f, &rays, b.t0 as f64)?;
    depth_loss(fr.depth, &[0.3, 0.8, 0.45])?
        .ok_or_else(|| Error::Degenerate("constant reference".into()))
}

fn flow<'t>(f: &FieldVars<'t>, b: &TrainBatch) -> Result<Var<'t>> {
    let fr = render_frame(f, &b.rays, b.t0 as f64)?;
    let pixels: Vec<_> = b.rays.rays().iter().map(|r| r.pixel).collect();
    let ft = &b.flows[1];
    flow_loss(
        &b.ndc,
        fr.weights,
        corresponded(f, &fr, ft.frame as f64)?,
        &pixels,
        ft,
    )
}

fn total<'t>(f: &FieldVars<'t>, b: &TrainBatch) -> Result<Var<'t>> {
    Ok(total_loss(f, b, &LossWeights::initial(), RenderOptions::default())?.0)
}

pub fn terms() -> Vec<(&'static str, Term)> {
    vec![
        ("photo", photo),
        ("warped_photo", warped_photo),
        ("cycle", cycle),
        ("svs", svs),
        ("traj_flow_smooth", traj_flow_smooth),
        ("traj_rigid", traj_rigid),
        ("traj_magnitude", traj_magnitude),
        ("depth", depth),
        ("flow", flow),
        ("total", total),
    ]
}

/// Largest relative error of `term`'s parameter gradients.
pub fn check(term: Term, tolerance: f64) -> trajfield_core::GradCheckReport {
    let params = params();
    let batch = batch();
    let cfg = config();
    trajfield_core::gradient_check(
        |_, vars| {
            let field = FieldVars::from_vars(cfg.clone(), vars.to_vec())?;
            term(&field, &batch)
        },
        params.tensors(),
        1e-5,
        tolerance,
    )
    .unwrap()
}
