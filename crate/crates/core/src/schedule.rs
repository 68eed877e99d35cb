//! Epoch-indexed schedules for the temporal radius, loss weights and
//! learning rate.

use crate::losses::LossWeights;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleConfig {
    pub initial_radius: usize,
    /// Epochs between radius doublings.
    pub radius_period: usize,
    /// Epochs between weight changes.
    pub weight_period: usize,
    pub depth_init: f64,
    pub flow_init: f64,
    pub svs_init: f64,
    pub svs_max: f64,
    pub lr: f64,
    pub lr_decay_epoch: usize,
    pub lr_decay: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            initial_radius: 2,
            radius_period: 10,
            weight_period: 7,
            depth_init: 0.04,
            flow_init: 0.02,
            svs_init: 1e-5,
            svs_max: 1e-2,
            lr: 5e-4,
            lr_decay_epoch: 70,
            lr_decay: 0.1,
        }
    }
}

/// `min(r0 * 2^(epoch / period), T - 1)`, never below 1.
pub fn temporal_radius(epoch: usize, num_frames: usize, cfg: &ScheduleConfig) -> usize {
    let cap = num_frames.saturating_sub(1).max(1);
    let doublings = epoch / cfg.radius_period.max(1);
    let r = if doublings >= usize::BITS as usize {
        usize::MAX
    } else {
        cfg.initial_radius.saturating_mul(1usize << doublings)
    };
    r.min(cap).max(1)
}

pub fn weight_schedule(epoch: usize, cfg: &ScheduleConfig) -> LossWeights {
    let steps = (epoch / cfg.weight_period.max(1)) as i32;
    LossWeights {
        depth: cfg.depth_init * math::powi(0.1, steps),
        flow: cfg.flow_init * math::powi(0.1, steps),
        svs: (cfg.svs_init * math::powi(10.0, steps)).min(cfg.svs_max),
        ..LossWeights::initial()
    }
}

pub fn learning_rate(epoch: usize, cfg: &ScheduleConfig) -> f64 {
    if epoch < cfg.lr_decay_epoch {
        cfg.lr
    } else {
        cfg.lr * cfg.lr_decay
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_doubles_and_caps() {
        let c = ScheduleConfig::default();
        let got: alloc::vec::Vec<usize> = [0, 9, 10, 20, 30, 40, 1000]
            .iter()
            .map(|&e| temporal_radius(e, 24, &c))
            .collect();
        assert_eq!(got, [2, 2, 4, 8, 16, 23, 23]);
        assert_eq!(temporal_radius(0, 2, &c), 1);
    }

    #[test]
    fn weights_follow_the_steps() {
        let c = ScheduleConfig::default();
        let w0 = weight_schedule(0, &c);
        assert_eq!((w0.depth, w0.flow, w0.svs), (0.04, 0.02, 1e-5));
        let w7 = weight_schedule(7, &c);
        assert!((w7.depth - 0.004).abs() < 1e-18 && (w7.flow - 0.002).abs() < 1e-18);
        assert!((w7.svs - 1e-4).abs() < 1e-18);
        assert_eq!(weight_schedule(28, &c).svs, 1e-2);
        assert_eq!(weight_schedule(700, &c).svs, 1e-2);
    }

    #[test]
    fn lr_drops_once() {
        let c = ScheduleConfig::default();
        assert_eq!(learning_rate(69, &c), 5e-4);
        assert!((learning_rate(70, &c) - 5e-5).abs() < 1e-20);
    }
}
