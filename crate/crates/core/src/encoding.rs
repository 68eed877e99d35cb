//! Sinusoidal positional encoding.
//!
//! Layout: optional raw input, then for each frequency `2^f π` the sines of
//! every component followed by their cosines.

use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{concat, Var};
use crate::error::Result;
use crate::math::{self, PI};
use crate::tensor::Tensor;

pub fn encoded_len(dim: usize, num_freqs: usize, include_input: bool) -> usize {
    dim * (2 * num_freqs + include_input as usize)
}

pub fn positional_encode(x: &[f64], num_freqs: usize, include_input: bool) -> Vec<f64> {
    let mut out = Vec::with_capacity(encoded_len(x.len(), num_freqs, include_input));
    if include_input {
        out.extend_from_slice(x);
    }
    let mut scale = PI;
    for _ in 0..num_freqs {
        out.extend(x.iter().map(|&v| math::sin(scale * v)));
        out.extend(x.iter().map(|&v| math::cos(scale * v)));
        scale *= 2.0;
    }
    out
}

/// Row-wise encoding of a `[rows, dim]` tensor.
pub fn encode_rows(x: &Tensor, num_freqs: usize, include_input: bool) -> Tensor {
    let dim = *x.shape().last().unwrap_or(&1);
    let rows = x.len().checked_div(dim).unwrap_or(0);
    let width = encoded_len(dim, num_freqs, include_input);
    let mut data = Vec::with_capacity(rows * width);
    for r in 0..rows {
        data.extend(positional_encode(
            &x.data()[r * dim..(r + 1) * dim],
            num_freqs,
            include_input,
        ));
    }
    Tensor::new([rows, width], data).expect("encoded width is consistent")
}

/// Differentiable encoding of a `[rows, dim]` variable.
pub fn encode_var<'t>(x: Var<'t>, num_freqs: usize, include_input: bool) -> Result<Var<'t>> {
    let shape = x.shape();
    let dim = shape[1];
    // [dim, dim * F] block matrix with 2^f π on the diagonals
    let mut freq = vec![0.0; dim * dim * num_freqs];
    let mut scale = PI;
    for f in 0..num_freqs {
        for j in 0..dim {
            freq[j * dim * num_freqs + f * dim + j] = scale;
        }
        scale *= 2.0;
    }
    let tape = x.tape();
    let fm = tape.constant(Tensor::new([dim, dim * num_freqs], freq)?);
    let scaled = x.matmul(fm)?;
    let (s, c) = (scaled.sin(), scaled.cos());
    let mut parts = Vec::with_capacity(2 * num_freqs + 1);
    if include_input {
        parts.push(x);
    }
    for f in 0..num_freqs {
        parts.push(s.slice(1, f * dim, (f + 1) * dim)?);
        parts.push(c.slice(1, f * dim, (f + 1) * dim)?);
    }
    concat(&parts, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;

    #[test]
    fn zero_input_two_freqs() {
        assert_eq!(
            positional_encode(&[0.0], 2, true),
            vec![0.0, 0.0, 1.0, 0.0, 1.0]
        );
    }

    #[test]
    fn encoded_lengths() {
        assert_eq!(positional_encode(&[0.1, 0.2, 0.3, 0.4], 10, true).len(), 84);
        assert_eq!(encoded_len(4, 10, true), 84);
        assert_eq!(encoded_len(4, 4, true), 36);
        assert_eq!(encoded_len(3, 4, false), 24);
    }

    #[test]
    fn graph_matches_plain() {
        let x = Tensor::new([2, 3], vec![0.1, -0.7, 0.33, 0.9, 0.0, -0.25]).unwrap();
        let tape = Tape::new();
        let v = encode_var(tape.constant(x.clone()), 3, true).unwrap();
        let plain = encode_rows(&x, 3, true);
        assert_eq!(v.shape(), vec![2, 21]);
        for (a, b) in v.value().data().iter().zip(plain.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
