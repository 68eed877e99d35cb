use alloc::format;
use alloc::vec::Vec;

use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Gradients smaller than this are compared on an absolute scale.
const MAGNITUDE_FLOOR: f64 = 1e-6;

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest relative error per input tensor.
    pub max_rel_error: Vec<f64>,
    /// Largest absolute error per input tensor.
    pub max_abs_error: Vec<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.max_rel_error.iter().copied().fold(0.0, f64::max)
    }
}

fn eval_scalar<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let out = f(&tape, &vars)?;
    let v = out.item();
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("gradient_check objective ({v})")));
    }
    Ok(v)
}

/// Compares the tape's gradients of the scalar `f` against central finite
/// differences with the given `step`.
///
/// The relative error of one entry is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check<F>(
    f: F,
    inputs: &[Tensor],
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    if inputs.iter().any(|t| !t.all_finite()) {
        return Err(Error::NonFinite("gradient_check inputs".into()));
    }
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let root = f(&tape, &vars)?;
    if !root.item().is_finite() {
        return Err(Error::NonFinite(format!(
            "gradient_check objective ({})",
            root.item()
        )));
    }
    tape.backward(root)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| {
            v.grad()
                .unwrap_or_else(|| Tensor::zeros(t.shape().to_vec()))
        })
        .collect();

    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut max_rel = Vec::with_capacity(inputs.len());
    let mut max_abs = Vec::with_capacity(inputs.len());
    for k in 0..inputs.len() {
        let (mut worst_rel, mut worst_abs) = (0.0f64, 0.0f64);
        for i in 0..inputs[k].len() {
            let orig = inputs[k].data()[i];
            work[k].data_mut()[i] = orig + step;
            let plus = eval_scalar(&f, &work)?;
            work[k].data_mut()[i] = orig - step;
            let minus = eval_scalar(&f, &work)?;
            work[k].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[k].data()[i];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR);
            worst_rel = worst_rel.max(rel);
            worst_abs = worst_abs.max(abs);
        }
        max_rel.push(worst_rel);
        max_abs.push(worst_abs);
    }
    let passed = max_rel.iter().all(|&e| e < tolerance);
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        max_abs_error: max_abs,
        tolerance,
        passed,
    })
}
