//! DCT trajectories and spacetime point correspondence.
//!
//! A trajectory over a `T`-frame sequence is a sum of `K` cosine bases per
//! axis, `x(t) = sqrt(2/T) Σ_{k=1..K} φ_{x,k} cos(π (2t+1) k / (2T))`. The
//! constant (k = 0) basis is left out, so only relative displacements are
//! meaningful. Coefficients are stored axis-major: all `x` coefficients,
//! then `y`, then `z`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{self, PI};
use crate::tensor::Tensor;

/// Coefficient count per axis used when none is configured.
pub fn default_num_coeffs(num_frames: usize) -> usize {
    if num_frames <= 32 {
        num_frames.saturating_sub(1).max(1)
    } else {
        16
    }
}

/// Value of the k-th scaled cosine basis at (possibly fractional) time `t`.
#[inline]
pub fn basis(num_frames: usize, k: usize, t: f64) -> f64 {
    let n = num_frames as f64;
    math::sqrt(2.0 / n) * math::cos(PI * (2.0 * t + 1.0) * k as f64 / (2.0 * n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryCoeffs {
    num_frames: usize,
    num_coeffs: usize,
    coeffs: Vec<f64>,
}

fn check_dims(num_frames: usize, num_coeffs: usize) -> Result<()> {
    if num_coeffs == 0 || num_coeffs + 1 > num_frames {
        return Err(Error::invalid(format!(
            "need 1 <= K <= T-1, got K={num_coeffs}, T={num_frames}"
        )));
    }
    Ok(())
}

impl TrajectoryCoeffs {
    pub fn new(num_frames: usize, num_coeffs: usize, coeffs: Vec<f64>) -> Result<Self> {
        check_dims(num_frames, num_coeffs)?;
        if coeffs.len() != 3 * num_coeffs {
            return Err(Error::invalid(format!(
                "expected {} coefficients, got {}",
                3 * num_coeffs,
                coeffs.len()
            )));
        }
        Ok(TrajectoryCoeffs {
            num_frames,
            num_coeffs,
            coeffs,
        })
    }

    pub fn zeros(num_frames: usize, num_coeffs: usize) -> Result<Self> {
        Self::new(num_frames, num_coeffs, vec![0.0; 3 * num_coeffs])
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn num_coeffs(&self) -> usize {
        self.num_coeffs
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient `k` (1-based, as in the basis index) of `axis`.
    pub fn get(&self, axis: usize, k: usize) -> f64 {
        self.coeffs[axis * self.num_coeffs + k - 1]
    }

    pub fn set(&mut self, axis: usize, k: usize, v: f64) {
        self.coeffs[axis * self.num_coeffs + k - 1] = v;
    }

    /// Per-axis coefficient rows `[x, y, z]`.
    pub fn axes(&self) -> [&[f64]; 3] {
        let k = self.num_coeffs;
        [
            &self.coeffs[..k],
            &self.coeffs[k..2 * k],
            &self.coeffs[2 * k..],
        ]
    }

    pub fn idct_eval(&self, t: f64) -> [f64; 3] {
        let mut p = [0.0; 3];
        for k in 1..=self.num_coeffs {
            let b = basis(self.num_frames, k, t);
            for (axis, v) in p.iter_mut().enumerate() {
                *v += self.get(axis, k) * b;
            }
        }
        p
    }

    pub fn displacement(&self, t0: f64, t1: f64) -> [f64; 3] {
        let a = self.idct_eval(t0);
        let b = self.idct_eval(t1);
        [b[0] - a[0], b[1] - a[1], b[2] - a[2]]
    }

    /// Position at every integer frame.
    pub fn track(&self) -> Vec<[f64; 3]> {
        (0..self.num_frames)
            .map(|t| self.idct_eval(t as f64))
            .collect()
    }
}

/// `p + T(t1) - T(t0)`.
pub fn correspond(p: [f64; 3], c: &TrajectoryCoeffs, t0: f64, t1: f64) -> [f64; 3] {
    let d = c.displacement(t0, t1);
    [p[0] + d[0], p[1] + d[1], p[2] + d[2]]
}

/// `[3K, 3]` matrix `B` with `φ_row · B = T(t1) - T(t0)` for axis-major
/// coefficient rows.
pub fn displacement_matrix(num_frames: usize, num_coeffs: usize, t0: f64, t1: f64) -> Tensor {
    let mut m = vec![0.0; 3 * num_coeffs * 3];
    for axis in 0..3 {
        for k in 1..=num_coeffs {
            let row = axis * num_coeffs + k - 1;
            m[row * 3 + axis] = basis(num_frames, k, t1) - basis(num_frames, k, t0);
        }
    }
    Tensor::new([3 * num_coeffs, 3], m).expect("static shape")
}

/// `[3K, 3]` matrix evaluating `T(t)` from axis-major coefficient rows.
pub fn position_matrix(num_frames: usize, num_coeffs: usize, t: f64) -> Tensor {
    let mut m = vec![0.0; 3 * num_coeffs * 3];
    for axis in 0..3 {
        for k in 1..=num_coeffs {
            m[(axis * num_coeffs + k - 1) * 3 + axis] = basis(num_frames, k, t);
        }
    }
    Tensor::new([3 * num_coeffs, 3], m).expect("static shape")
}

/// Solves the square system `a x = b` by Gaussian elimination with partial
/// pivoting. `a` is row-major `n x n`.
pub(crate) fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .unwrap();
        if a[piv * n + col].abs() <= 1e-12 * scale {
            return Err(Error::Degenerate(format!("singular pivot in column {col}")));
        }
        if piv != col {
            for j in 0..n {
                a.swap(piv * n + j, col * n + j);
            }
            b.swap(piv, col);
        }
        for r in col + 1..n {
            let f = a[r * n + col] / a[col * n + col];
            if f != 0.0 {
                for j in col..n {
                    a[r * n + j] -= f * a[col * n + j];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut s = b[r];
        for j in r + 1..n {
            s -= a[r * n + j] * x[j];
        }
        x[r] = s / a[r * n + r];
    }
    Ok(x)
}

/// Least-squares fit of `K` coefficients per axis (plus a free per-axis
/// offset standing in for the dropped constant basis) to a track sampled
/// at frames `0..T`.
pub fn fit_dct(samples: &[[f64; 3]], num_coeffs: usize) -> Result<TrajectoryCoeffs> {
    let num_frames = samples.len();
    check_dims(num_frames, num_coeffs)?;
    let n = num_coeffs + 1;
    // design columns: [1, b_1(t), ..., b_K(t)]
    let design: Vec<Vec<f64>> = (0..num_frames)
        .map(|t| {
            let mut row = Vec::with_capacity(n);
            row.push(1.0);
            row.extend((1..=num_coeffs).map(|k| basis(num_frames, k, t as f64)));
            row
        })
        .collect();
    let mut normal = vec![0.0; n * n];
    for row in &design {
        for i in 0..n {
            for j in 0..n {
                normal[i * n + j] += row[i] * row[j];
            }
        }
    }
    let mut coeffs = vec![0.0; 3 * num_coeffs];
    for axis in 0..3 {
        let mut rhs = vec![0.0; n];
        for (row, s) in design.iter().zip(samples) {
            for i in 0..n {
                rhs[i] += row[i] * s[axis];
            }
        }
        let x = solve_dense(normal.clone(), rhs, n)?;
        coeffs[axis * num_coeffs..(axis + 1) * num_coeffs].copy_from_slice(&x[1..]);
    }
    TrajectoryCoeffs::new(num_frames, num_coeffs, coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_coeffs_stay_at_origin() {
        let c = TrajectoryCoeffs::zeros(24, 23).unwrap();
        for t in 0..24 {
            assert_eq!(c.idct_eval(t as f64), [0.0; 3]);
        }
        assert_eq!(c.displacement(0.0, 17.5), [0.0; 3]);
        assert_eq!(correspond([0.1, 0.2, 0.3], &c, 3.0, 20.0), [0.1, 0.2, 0.3]);
    }

    #[test]
    fn single_coefficient_value() {
        // sqrt(2/24) * cos(pi/48), evaluated independently
        let mut c = TrajectoryCoeffs::zeros(24, 1).unwrap();
        c.set(0, 1, 1.0);
        let x0 = c.idct_eval(0.0)[0];
        assert!((x0 - 0.2880570589725389).abs() < 1e-15);
    }

    #[test]
    fn k_bounds() {
        assert!(TrajectoryCoeffs::zeros(24, 24).is_err());
        assert!(TrajectoryCoeffs::zeros(24, 0).is_err());
        assert!(TrajectoryCoeffs::new(24, 2, vec![0.0; 5]).is_err());
        assert_eq!(default_num_coeffs(24), 23);
        assert_eq!(default_num_coeffs(32), 31);
        assert_eq!(default_num_coeffs(60), 16);
    }

    #[test]
    fn constant_track_fits_to_zero() {
        let samples = vec![[0.5, -1.0, 2.0]; 12];
        let c = fit_dct(&samples, 11).unwrap();
        assert!(c.as_slice().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn linear_track_correspondence() {
        // a point translating at constant velocity, fitted with the full basis
        let t_len = 16;
        let samples: Vec<[f64; 3]> = (0..t_len)
            .map(|t| [0.02 * t as f64, -0.01 * t as f64, 0.0])
            .collect();
        let c = fit_dct(&samples, t_len - 1).unwrap();
        let p = correspond(samples[3], &c, 3.0, 11.0);
        for a in 0..3 {
            assert!((p[a] - samples[11][a]).abs() < 1e-9);
        }
    }

    #[test]
    fn matrices_match_scalar_eval() {
        let c = TrajectoryCoeffs::new(8, 2, vec![0.1, -0.2, 0.3, 0.05, -0.4, 0.7]).unwrap();
        let dm = displacement_matrix(8, 2, 1.0, 6.0);
        let pm = position_matrix(8, 2, 2.5);
        let d = c.displacement(1.0, 6.0);
        let p = c.idct_eval(2.5);
        for axis in 0..3 {
            let dv: f64 = (0..6)
                .map(|r| c.as_slice()[r] * dm.data()[r * 3 + axis])
                .sum();
            let pv: f64 = (0..6)
                .map(|r| c.as_slice()[r] * pm.data()[r * 3 + axis])
                .sum();
            assert!((dv - d[axis]).abs() < 1e-14);
            assert!((pv - p[axis]).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn displacement_antisymmetric(
            coeffs in proptest::collection::vec(-2.0f64..2.0, 9),
            a in 0.0f64..9.0,
            b in 0.0f64..9.0,
        ) {
            let c = TrajectoryCoeffs::new(10, 3, coeffs).unwrap();
            let ab = c.displacement(a, b);
            let ba = c.displacement(b, a);
            for i in 0..3 {
                prop_assert!((ab[i] + ba[i]).abs() < 1e-12);
            }
            prop_assert_eq!(c.displacement(a, a), [0.0; 3]);
        }

        #[test]
        fn idct_is_linear(
            c1 in proptest::collection::vec(-2.0f64..2.0, 15),
            c2 in proptest::collection::vec(-2.0f64..2.0, 15),
            s in -3.0f64..3.0,
            r in -3.0f64..3.0,
            t in 0.0f64..5.0,
        ) {
            let mix: Vec<f64> = c1.iter().zip(&c2).map(|(x, y)| s * x + r * y).collect();
            let a = TrajectoryCoeffs::new(6, 5, c1).unwrap().idct_eval(t);
            let b = TrajectoryCoeffs::new(6, 5, c2).unwrap().idct_eval(t);
            let m = TrajectoryCoeffs::new(6, 5, mix).unwrap().idct_eval(t);
            for i in 0..3 {
                prop_assert!((m[i] - (s * a[i] + r * b[i])).abs() < 1e-12);
            }
        }

        #[test]
        fn velocity_bounded_by_coefficients(
            coeffs in proptest::collection::vec(-2.0f64..2.0, 3 * 7),
            t in 0.0f64..6.9,
        ) {
            let n = 8;
            let c = TrajectoryCoeffs::new(n, 7, coeffs).unwrap();
            let eps = 1e-3;
            let (a, b) = (c.idct_eval(t), c.idct_eval(t + eps));
            for (axis, row) in c.axes().iter().enumerate() {
                let bound: f64 = math::sqrt(2.0 / n as f64)
                    * row.iter().enumerate().map(|(i, v)| v.abs() * PI * (i + 1) as f64 / n as f64).sum::<f64>();
                prop_assert!(((b[axis] - a[axis]) / eps).abs() <= bound + 1e-9);
            }
        }
    }
}
