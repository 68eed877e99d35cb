//! Dense row-major `f64` arrays and the broadcasting rules shared by the
//! autodiff engine.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// A dense row-major array of `f64`.
///
/// A scalar has shape `[]`. The product of the shape always equals the data
/// length.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::invalid(alloc::format!(
                "shape {:?} holds {} values, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![v],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn full(shape: impl Into<Vec<usize>>, v: f64) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![v; n],
        }
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        Tensor::new(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Row `r` of a rank-2 tensor.
    pub fn row(&self, r: usize) -> &[f64] {
        let cols = *self.shape.last().unwrap_or(&1);
        &self.data[r * cols..(r + 1) * cols]
    }
}

/// Numpy-style broadcast of two shapes (right-aligned).
pub fn broadcast_shapes(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank {
            a[i + a.len() - rank]
        } else {
            1
        };
        let db = if i + b.len() >= rank {
            b[i + b.len() - rank]
        } else {
            1
        };
        out[i] = if da == db {
            da
        } else if da == 1 {
            db
        } else if db == 1 {
            da
        } else {
            return Err(Error::ShapeMismatch {
                op,
                lhs: a.to_vec(),
                rhs: b.to_vec(),
            });
        };
    }
    Ok(out)
}

/// Input strides aligned to `out`, with zero stride on broadcast axes.
fn aligned_strides(input: &[usize], out: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let mut strides = vec![0; rank];
    let mut acc = 1;
    for i in (0..input.len()).rev() {
        let oi = i + rank - input.len();
        strides[oi] = if input[i] == 1 { 0 } else { acc };
        acc *= input[i];
    }
    strides
}

/// Calls `f(out_index, in_index)` for every output element of a broadcast
/// from `input` to `out`.
fn for_each_broadcast(input: &[usize], out: &[usize], mut f: impl FnMut(usize, usize)) {
    let n: usize = out.iter().product();
    if n == 0 {
        return;
    }
    let in_n: usize = input.iter().product();
    if in_n == n {
        (0..n).for_each(|i| f(i, i));
        return;
    }
    if in_n == 1 {
        (0..n).for_each(|i| f(i, 0));
        return;
    }
    let rank = out.len();
    let strides = aligned_strides(input, out);
    let inner = out[rank - 1];
    let inner_stride = strides[rank - 1];
    let mut idx = vec![0usize; rank];
    let mut base = 0usize;
    let mut o = 0usize;
    while o < n {
        let mut off = base;
        for _ in 0..inner {
            f(o, off);
            o += 1;
            off += inner_stride;
        }
        // advance the odometer on the outer axes
        let mut ax = rank - 1;
        loop {
            if ax == 0 {
                break;
            }
            ax -= 1;
            idx[ax] += 1;
            base += strides[ax];
            if idx[ax] < out[ax] {
                break;
            }
            base -= strides[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
}

/// Common broadcast layouts with contiguous fast paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    /// The input is the trailing block of `out`, repeated.
    Tile,
    /// Every input element is repeated this many times in a row.
    Repeat(usize),
    General,
}

fn layout(input: &[usize], out: &[usize]) -> Layout {
    let rank = out.len();
    let padded = |i: usize| {
        if i + input.len() >= rank {
            input[i + input.len() - rank]
        } else {
            1
        }
    };
    // Tile: ones then a suffix equal to out's suffix.
    let mut j = 0;
    while j < rank && padded(j) == 1 && out[j] != 1 {
        j += 1;
    }
    if (j..rank).all(|i| padded(i) == out[i]) {
        return Layout::Tile;
    }
    // Repeat: a prefix equal to out's prefix then ones.
    let mut j = rank;
    while j > 0 && padded(j - 1) == 1 {
        j -= 1;
    }
    if (0..j).all(|i| padded(i) == out[i]) {
        return Layout::Repeat(out[j..].iter().product());
    }
    Layout::General
}

/// Materializes `data` (of shape `input`) broadcast to `out`.
pub fn broadcast_to(data: &[f64], input: &[usize], out: &[usize]) -> Vec<f64> {
    let n: usize = out.iter().product();
    if data.len() == n {
        return data.to_vec();
    }
    if n == 0 || data.is_empty() {
        return vec![0.0; n];
    }
    match layout(input, out) {
        Layout::Tile => return data.repeat(n / data.len()),
        Layout::Repeat(r) => {
            let mut res = Vec::with_capacity(n);
            for &v in data {
                res.extend(core::iter::repeat_n(v, r));
            }
            return res;
        }
        Layout::General => {}
    }
    let mut res = vec![0.0; n];
    for_each_broadcast(input, out, |o, i| res[o] = data[i]);
    res
}

/// Sums `grad` (of shape `out`) back down to the broadcast source shape.
pub fn reduce_to(grad: &[f64], out: &[usize], input: &[usize]) -> Vec<f64> {
    let in_n: usize = input.iter().product();
    if in_n == grad.len() {
        return grad.to_vec();
    }
    let mut res = vec![0.0; in_n];
    if grad.is_empty() || in_n == 0 {
        return res;
    }
    match layout(input, out) {
        Layout::Tile => {
            for chunk in grad.chunks_exact(in_n) {
                res.iter_mut().zip(chunk).for_each(|(r, g)| *r += g);
            }
        }
        Layout::Repeat(r) => {
            for (v, chunk) in res.iter_mut().zip(grad.chunks_exact(r)) {
                *v = chunk.iter().sum();
            }
        }
        Layout::General => for_each_broadcast(input, out, |o, i| res[i] += grad[o]),
    }
    res
}

/// Elementwise binary op with broadcasting.
pub fn zip_broadcast(
    a: &[f64],
    sa: &[usize],
    b: &[f64],
    sb: &[usize],
    out: &[usize],
    f: impl Fn(f64, f64) -> f64,
) -> Vec<f64> {
    let n: usize = out.iter().product();
    if a.len() == n && b.len() == n {
        return a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect();
    }
    if a.len() == n && b.len() == 1 {
        let y = b[0];
        return a.iter().map(|&x| f(x, y)).collect();
    }
    if b.len() == n && a.len() == 1 {
        let x = a[0];
        return b.iter().map(|&y| f(x, y)).collect();
    }
    if a.len() == n && !b.is_empty() {
        match layout(sb, out) {
            Layout::Tile => {
                let mut res = Vec::with_capacity(n);
                for chunk in a.chunks_exact(b.len()) {
                    res.extend(chunk.iter().zip(b).map(|(&x, &y)| f(x, y)));
                }
                return res;
            }
            Layout::Repeat(r) => {
                let mut res = Vec::with_capacity(n);
                for (chunk, &y) in a.chunks_exact(r).zip(b) {
                    res.extend(chunk.iter().map(|&x| f(x, y)));
                }
                return res;
            }
            Layout::General => {}
        }
    }
    let ea = broadcast_to(a, sa, out);
    let eb = broadcast_to(b, sb, out);
    ea.iter().zip(&eb).map(|(&x, &y)| f(x, y)).collect()
}

/// Splits a shape around `axis` into (outer, axis length, inner) extents.
pub fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_checks_length() {
        assert!(Tensor::new([2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::new([2, 3], vec![0.0; 5]).is_err());
        assert_eq!(Tensor::scalar(2.0).shape(), &[] as &[usize]);
    }

    #[test]
    fn broadcast_rules() {
        assert_eq!(broadcast_shapes("t", &[4, 3], &[3]).unwrap(), vec![4, 3]);
        assert_eq!(broadcast_shapes("t", &[4, 1], &[1, 5]).unwrap(), vec![4, 5]);
        assert_eq!(broadcast_shapes("t", &[], &[2, 2]).unwrap(), vec![2, 2]);
        assert!(broadcast_shapes("t", &[4, 3], &[4]).is_err());
    }

    #[test]
    fn broadcast_and_reduce_are_adjoint() {
        // column vector into a 3-d shape
        let src = [1.0, 2.0];
        let out = broadcast_to(&src, &[2, 1], &[3, 2, 4]);
        assert_eq!(out.len(), 24);
        assert_eq!(&out[..8], &[1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0]);
        let back = reduce_to(&[1.0; 24], &[3, 2, 4], &[2, 1]);
        assert_eq!(back, vec![12.0, 12.0]);
        let row = broadcast_to(&[1.0, 2.0, 3.0], &[1, 3], &[2, 3]);
        assert_eq!(row, vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        assert_eq!(reduce_to(&row, &[2, 3], &[3]), vec![2.0, 4.0, 6.0]);
        let col = broadcast_to(&[1.0, 2.0], &[2, 1], &[2, 3]);
        assert_eq!(col, vec![1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
        assert_eq!(reduce_to(&col, &[2, 3], &[2, 1]), vec![3.0, 6.0]);
    }

    #[test]
    fn fast_paths_match_the_general_loop() {
        let dims = [1usize, 2, 3];
        let mut shapes: Vec<Vec<usize>> = vec![vec![]];
        for &a in &dims {
            shapes.push(vec![a]);
            for &b in &dims {
                shapes.push(vec![a, b]);
                for &c in &dims {
                    shapes.push(vec![a, b, c]);
                }
            }
        }
        for out in shapes.iter().filter(|s| s.len() == 3) {
            for input in &shapes {
                let Ok(b) = broadcast_shapes("t", input, out) else {
                    continue;
                };
                if &b != out {
                    continue;
                }
                let n: usize = out.iter().product();
                let in_n: usize = input.iter().product();
                let data: Vec<f64> = (0..in_n).map(|i| i as f64 + 1.0).collect();
                let mut expect = vec![0.0; n];
                for_each_broadcast(input, out, |o, i| expect[o] = data[i]);
                assert_eq!(
                    broadcast_to(&data, input, out),
                    expect,
                    "{input:?} -> {out:?}"
                );
                let grad: Vec<f64> = (0..n).map(|i| (i * i) as f64).collect();
                let mut back = vec![0.0; in_n];
                for_each_broadcast(input, out, |o, i| back[i] += grad[o]);
                assert_eq!(reduce_to(&grad, out, input), back, "{out:?} -> {input:?}");
                let full: Vec<f64> = (0..n).map(|i| i as f64 * 0.5).collect();
                let zipped = zip_broadcast(&full, out, &data, input, out, |x, y| x * 10.0 + y);
                let direct: Vec<f64> = full
                    .iter()
                    .zip(&expect)
                    .map(|(x, y)| x * 10.0 + y)
                    .collect();
                assert_eq!(zipped, direct, "{input:?} -> {out:?}");
            }
        }
    }
}
