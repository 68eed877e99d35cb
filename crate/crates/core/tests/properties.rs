mod common;

use proptest::prelude::*;
use trajfield_core::losses::{svs_loss, total_loss, LossWeights};
use trajfield_core::optim::{Adam, AdamConfig};
use trajfield_core::render::{
    composite, p_empty, p_occlusion, render_frame, render_warped, RenderOptions,
};
use trajfield_core::trajectory::{displacement_matrix, TrajectoryCoeffs};
use trajfield_core::{Tape, Tensor};

proptest! {
    #[test]
    fn quadrature_weights_are_bounded(
        sigmas in proptest::collection::vec(0.0f64..50.0, 2..40),
    ) {
        let n = sigmas.len();
        let depths: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let c = composite(&sigmas, &vec![[0.5; 3]; n], &depths).unwrap();
        let total: f64 = c.weights.iter().sum();
        prop_assert!(c.weights.iter().all(|&w| w >= 0.0));
        prop_assert!(total <= 1.0 + 1e-12);
        if total > 0.0 {
            prop_assert!((c.normalized.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn emptiness_is_decreasing(a in 0.0f64..20.0, b in 0.0f64..20.0) {
        prop_assume!((a - b).abs() > 1e-9);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(p_empty(lo) > p_empty(hi) || p_empty(hi) == 0.0);
        let occ = p_occlusion(a, b);
        prop_assert!((0.0..1.0).contains(&occ));
        prop_assert!(occ <= p_empty(a));
    }

    #[test]
    fn svs_stays_in_unit_range(
        w in proptest::collection::vec(0.0f64..1.0, 8),
        window in 1usize..=8,
    ) {
        let total: f64 = w.iter().sum();
        let w: Vec<f64> = w.iter().map(|v| v / (total + 1.0)).collect();
        let tape = Tape::new();
        let v = svs_loss(tape.constant(Tensor::new([1, 8], w).unwrap()), window).unwrap().item();
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn displacement_matrix_is_antisymmetric(t0 in 0.0f64..4.0, t1 in 0.0f64..4.0) {
        let a = displacement_matrix(5, 4, t0, t1);
        let b = displacement_matrix(5, 4, t1, t0);
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x + y).abs() < 1e-15);
        }
        let c = TrajectoryCoeffs::new(5, 4, (0..12).map(|i| i as f64 * 0.1).collect()).unwrap();
        prop_assert!(c.displacement(t0, t0).iter().all(|v| *v == 0.0));
    }
}

#[test]
fn every_term_is_nonnegative_and_accounted() {
    let params = common::params();
    let batch = common::batch();
    let tape = Tape::new();
    let f = params.bind_const(&tape);
    let w = LossWeights::initial();
    let (total, b) = total_loss(&f, &batch, &w, RenderOptions::default()).unwrap();
    for (name, v) in b.terms() {
        assert!(v >= 0.0, "{name} = {v}");
    }
    assert!((b.total - (b.photometric() + b.regularization(&w))).abs() < 1e-12);
    assert!((total.item() - b.total).abs() < 1e-12);
    let (_, p) = total_loss(
        &f,
        &batch,
        &LossWeights::photometric_only(),
        RenderOptions::default(),
    )
    .unwrap();
    assert_eq!(p.total, p.photometric());
}

#[test]
fn static_fixed_point() {
    let mut params = common::params();
    let cfg = common::config();
    // no trajectory, no time dependence
    let pl = trajfield_core::encoding::encoded_len(3, cfg.pos_freqs, true);
    for (i, name) in params.names().to_vec().iter().enumerate() {
        let t = &mut params.tensors_mut()[i];
        if name.starts_with("phi.") {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        } else if name == "trunk.0.weight" || name == "trunk.2.weight" {
            let width = t.shape()[1];
            for r in pl..cfg.input_len() {
                t.data_mut()[r * width..(r + 1) * width]
                    .iter_mut()
                    .for_each(|v| *v = 0.0);
            }
        }
    }
    let batch = common::batch();
    let tape = Tape::new();
    let f = params.bind_const(&tape);
    let (_, b) = total_loss(
        &f,
        &batch,
        &LossWeights::initial(),
        RenderOptions::default(),
    )
    .unwrap();
    assert_eq!(b.cycle, 0.0);
    assert_eq!(b.photo_t1, b.photo_t0);
    assert_eq!(b.photo_neighbors, 2.0 * b.photo_t0);
    assert_eq!(b.traj(), 0.0);
    let fr = render_frame(&f, &batch.rays, 2.0).unwrap();
    for t1 in 0..5 {
        let w = render_warped(&f, &batch.rays, &fr, t1 as f64, RenderOptions::default()).unwrap();
        assert_eq!(w.color.value(), fr.color.value());
    }
}

#[test]
fn one_small_step_lowers_the_total() {
    let mut params = common::params();
    let batch = common::batch();
    let w = LossWeights::initial();
    let eval = |p: &trajfield_core::field::NetworkParams| {
        let tape = Tape::new();
        let f = p.bind(&tape, |_| true);
        let (total, b) = total_loss(&f, &batch, &w, RenderOptions::default()).unwrap();
        total.backward().unwrap();
        let grads: Vec<_> = f.vars().iter().map(|v| v.grad()).collect();
        (b.total, grads)
    };
    let (before, grads) = eval(&params);
    let mut opt = Adam::new(AdamConfig::default(), params.tensors());
    opt.update(params.tensors_mut(), &grads, 1e-4).unwrap();
    let (after, _) = eval(&params);
    assert!(after < before, "{after} !< {before}");
}

#[test]
fn forward_is_bitwise_repeatable() {
    let params = common::params();
    let batch = common::batch();
    let run = || {
        let tape = Tape::new();
        let f = params.bind_const(&tape);
        total_loss(
            &f,
            &batch,
            &LossWeights::initial(),
            RenderOptions::default(),
        )
        .unwrap()
        .1
    };
    assert_eq!(run(), run());
}
