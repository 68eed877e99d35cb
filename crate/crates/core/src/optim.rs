//! Adam.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for a list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[Tensor]) -> Self {
        let zeros = |_: ()| -> Vec<Tensor> {
            params
                .iter()
                .map(|p| Tensor::zeros(p.shape().to_vec()))
                .collect()
        };
        Adam {
            config,
            step: 0,
            m: zeros(()),
            v: zeros(()),
        }
    }

    /// One update. `grads[i] == None` leaves parameter `i` and its moments
    /// untouched.
    pub fn update(
        &mut self,
        params: &mut [Tensor],
        grads: &[Option<Tensor>],
        lr: f64,
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::invalid(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.shape() != params[i].shape() {
                    return Err(Error::ShapeMismatch {
                        op: "adam",
                        lhs: params[i].shape().to_vec(),
                        rhs: g.shape().to_vec(),
                    });
                }
                if !g.all_finite() {
                    return Err(Error::NonFinite(format!("gradient of parameter {i}")));
                }
            }
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - math::powi(beta1, self.step.min(i32::MAX as u64) as i32);
        let bc2 = 1.0 - math::powi(beta2, self.step.min(i32::MAX as u64) as i32);
        for (i, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (j, (p, &gj)) in params[i].data_mut().iter_mut().zip(g.data()).enumerate() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                *p -= lr * mh / (math::sqrt(vh) + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_lr_keeps_params() {
        let mut p = vec![Tensor::from_vec(vec![1.0, -2.0])];
        let before = p.clone();
        let mut opt = Adam::new(AdamConfig::default(), &p);
        opt.update(&mut p, &[Some(Tensor::from_vec(vec![0.3, 0.4]))], 0.0)
            .unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![Tensor::from_vec(vec![1.0, -2.0])];
        let mut opt = Adam::new(AdamConfig::default(), &p);
        opt.update(&mut p, &[Some(Tensor::from_vec(vec![0.3, -5.0]))], 0.1)
            .unwrap();
        assert!((p[0].data()[0] - 0.9).abs() < 1e-7);
        assert!((p[0].data()[1] + 1.9).abs() < 1e-7);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = vec![Tensor::from_vec(vec![3.0])];
        let mut opt = Adam::new(AdamConfig::default(), &p);
        for _ in 0..2000 {
            let g = Tensor::from_vec(vec![2.0 * p[0].data()[0]]);
            opt.update(&mut p, &[Some(g)], 0.05).unwrap();
        }
        assert!(p[0].data()[0].abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_gradients() {
        let mut p = vec![Tensor::from_vec(vec![1.0])];
        let mut opt = Adam::new(AdamConfig::default(), &p);
        assert!(opt
            .update(&mut p, &[Some(Tensor::from_vec(vec![f64::NAN]))], 0.1)
            .is_err());
        assert!(opt
            .update(&mut p, &[Some(Tensor::from_vec(vec![1.0, 2.0]))], 0.1)
            .is_err());
        assert_eq!(opt.step, 0);
    }
}
