mod common;

use trajfield_core::losses::photo_loss;
use trajfield_core::{gradient_check, Tape, Tensor};

#[test]
fn every_objective_matches_finite_differences() {
    for (name, term) in common::terms() {
        let report = common::check(term, 1e-4);
        assert!(
            report.passed,
            "{name}: worst relative error {}",
            report.worst()
        );
    }
}

#[test]
fn photo_gradient_is_the_scaled_residual() {
    let c = Tensor::new([2, 3], vec![0.2, 0.4, 0.9, 0.0, 1.0, 0.5]).unwrap();
    let g = Tensor::new([2, 3], vec![0.1, 0.4, 0.3, 0.6, 0.6, 0.6]).unwrap();
    let tape = Tape::new();
    let cv = tape.param(c.clone());
    photo_loss(cv, tape.constant(g.clone()))
        .unwrap()
        .backward()
        .unwrap();
    let grad = cv.grad().unwrap();
    for i in 0..6 {
        let want = 2.0 * (c.data()[i] - g.data()[i]) / 2.0;
        assert!((grad.data()[i] - want).abs() < 1e-15);
    }
    let report = gradient_check(
        |t, v| photo_loss(v[0], t.constant(g.clone())),
        &[c],
        1e-5,
        1e-6,
    )
    .unwrap();
    assert!(report.passed);
}

#[test]
fn color_head_reaches_the_trunk() {
    let report = common::check(
        |f, b| {
            let fr = trajfield_core::render::render_frame(f, &b.rays, 2.0)?;
            Ok(fr.rgb.sum())
        },
        1e-4,
    );
    assert!(report.passed);
    assert!(report.max_abs_error.len() == common::params().tensors().len());
}
