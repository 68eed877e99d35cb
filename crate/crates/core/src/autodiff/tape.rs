use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::{broadcast_shapes, broadcast_to, reduce_to, split_axis, zip_broadcast, Tensor};

/// A primitive operation recorded on the tape.
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    MatMul,
    /// Sum over one axis (kept with extent 1) or over everything (scalar).
    Sum {
        axis: Option<usize>,
    },
    Mean {
        axis: Option<usize>,
    },
    /// Largest sum of `window` consecutive entries along the last axis.
    MaxOverWindow {
        window: usize,
    },
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
    Sigmoid,
    Softplus,
    Relu,
    Abs,
    Concat {
        axis: usize,
    },
    Slice {
        axis: usize,
        start: usize,
        end: usize,
    },
    Broadcast {
        shape: Vec<usize>,
    },
    Power {
        exponent: f64,
    },
    Reshape {
        shape: Vec<usize>,
    },
    Clamp {
        min: f64,
        max: f64,
    },
    Scale {
        factor: f64,
    },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::MatMul => "matmul",
            Op::Sum { .. } => "sum",
            Op::Mean { .. } => "mean",
            Op::MaxOverWindow { .. } => "max_over_window",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Sin => "sin",
            Op::Cos => "cos",
            Op::Sqrt => "sqrt",
            Op::Sigmoid => "sigmoid",
            Op::Softplus => "softplus",
            Op::Relu => "relu",
            Op::Abs => "abs",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::Broadcast { .. } => "broadcast",
            Op::Power { .. } => "power",
            Op::Reshape { .. } => "reshape",
            Op::Clamp { .. } => "clamp",
            Op::Scale { .. } => "scale",
        }
    }

    /// Parses a parameter-free op name. Parametric ops take their defaults:
    /// full reductions for `sum`/`mean`, axis 0 for `concat`.
    pub fn from_name(name: &str) -> Result<Op> {
        Ok(match name {
            "add" => Op::Add,
            "sub" => Op::Sub,
            "mul" => Op::Mul,
            "div" => Op::Div,
            "matmul" => Op::MatMul,
            "sum" => Op::Sum { axis: None },
            "mean" => Op::Mean { axis: None },
            "exp" => Op::Exp,
            "log" => Op::Log,
            "sin" => Op::Sin,
            "cos" => Op::Cos,
            "sqrt" => Op::Sqrt,
            "sigmoid" => Op::Sigmoid,
            "softplus" => Op::Softplus,
            "relu" => Op::Relu,
            "abs" => Op::Abs,
            "concat" => Op::Concat { axis: 0 },
            other => return Err(Error::UnknownOp(other.to_string())),
        })
    }
}

struct Node {
    op: Op,
    inputs: Vec<usize>,
    value: Tensor,
    requires_grad: bool,
    /// Op-specific bookkeeping (argmax window starts).
    aux: Vec<usize>,
}

/// Records operations on dense tensors and propagates gradients backward.
///
/// Each training step builds a fresh tape. Gradients of leaves accumulate
/// across `backward` calls until [`Tape::zero_grad`].
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    grads: RefCell<Vec<Option<Vec<f64>>>>,
}

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl core::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "Var({}, {:?})", self.id, self.shape())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        self.push(Op::Leaf, Vec::new(), value, requires_grad, Vec::new())
    }

    /// A leaf that receives gradients.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, true)
    }

    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, false)
    }

    pub fn scalar(&self, v: f64) -> Var<'_> {
        self.constant(Tensor::scalar(v))
    }

    fn push(
        &self,
        op: Op,
        inputs: Vec<usize>,
        value: Tensor,
        requires_grad: bool,
        aux: Vec<usize>,
    ) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op,
            inputs,
            value,
            requires_grad,
            aux,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn requires(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    /// Applies a primitive by name, e.g. `forward_op("add", &[a, b])`.
    pub fn forward_op<'t>(&'t self, name: &str, inputs: &[Var<'t>]) -> Result<Var<'t>> {
        self.apply(Op::from_name(name)?, inputs)
    }

    /// Evaluates `op` on `inputs` and records the result.
    pub fn apply<'t>(&'t self, op: Op, inputs: &[Var<'t>]) -> Result<Var<'t>> {
        let ids: Vec<usize> = inputs.iter().map(|v| v.id).collect();
        let arity = match op {
            Op::Leaf => return Err(Error::invalid("leaf is not an operation")),
            Op::Add | Op::Sub | Op::Mul | Op::Div | Op::MatMul => 2,
            Op::Concat { .. } => {
                if ids.is_empty() {
                    return Err(Error::invalid("concat of nothing"));
                }
                ids.len()
            }
            _ => 1,
        };
        if ids.len() != arity {
            return Err(Error::invalid(alloc::format!(
                "{} takes {} inputs, got {}",
                op.name(),
                arity,
                ids.len()
            )));
        }
        let (value, aux) = {
            let nodes = self.nodes.borrow();
            let vals: Vec<&Tensor> = ids.iter().map(|&i| &nodes[i].value).collect();
            forward(&op, &vals)?
        };
        let rg = self.requires(&ids);
        Ok(self.push(op, ids, value, rg, aux))
    }

    pub fn value(&self, v: Var<'_>) -> Tensor {
        self.nodes.borrow()[v.id].value.clone()
    }

    pub fn with_value<R>(&self, v: Var<'_>, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.nodes.borrow()[v.id].value)
    }

    /// Accumulated gradient of a leaf, if any was propagated to it.
    pub fn grad(&self, v: Var<'_>) -> Option<Tensor> {
        let grads = self.grads.borrow();
        let g = grads.get(v.id)?.as_ref()?;
        let shape = self.nodes.borrow()[v.id].value.shape().to_vec();
        Tensor::new(shape, g.clone()).ok()
    }

    pub fn zero_grad(&self) {
        self.grads.borrow_mut().clear();
    }

    /// Propagates d(root)/d(leaf) into every reachable leaf that requires
    /// grad, adding to whatever is already stored there.
    pub fn backward(&self, root: Var<'_>) -> Result<()> {
        let nodes = self.nodes.borrow();
        let rnode = &nodes[root.id];
        if rnode.value.len() != 1 {
            return Err(Error::NonScalarRoot(rnode.value.shape().to_vec()));
        }
        if !rnode.requires_grad {
            return Err(Error::Detached);
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::new();
        grads.resize_with(root.id + 1, || None);
        grads[root.id] = Some(vec![1.0]);
        let mut store = self.grads.borrow_mut();
        if store.len() < nodes.len() {
            store.resize_with(nodes.len(), || None);
        }
        for id in (0..=root.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            if node.op == Op::Leaf {
                match &mut store[id] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
                continue;
            }
            let ins: Vec<&Node> = node.inputs.iter().map(|&i| &nodes[i]).collect();
            let in_grads = backward_op(node, &ins, &g);
            for (k, ig) in in_grads.into_iter().enumerate() {
                let Some(ig) = ig else { continue };
                let target = node.inputs[k];
                if !nodes[target].requires_grad {
                    continue;
                }
                match &mut grads[target] {
                    Some(acc) => acc.iter_mut().zip(&ig).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(ig),
                }
            }
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn matmul_into(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    c: &mut [f64],
) {
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: strides describe in-bounds views of `a` ([m,k]), `b` ([k,n])
    // and the row-major output `c` ([m,n]); all three are distinct buffers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn shape_err(op: &'static str, a: &[usize], b: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    }
}

fn reduced_shape(shape: &[usize], axis: Option<usize>) -> Vec<usize> {
    match axis {
        None => Vec::new(),
        Some(a) => {
            let mut s = shape.to_vec();
            s[a] = 1;
            s
        }
    }
}

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(Error::invalid(alloc::format!(
            "{op}: axis {axis} out of range for shape {shape:?}"
        )));
    }
    Ok(())
}

fn sum_axis(x: &Tensor, axis: Option<usize>) -> Result<Tensor> {
    match axis {
        None => Ok(Tensor::scalar(x.data().iter().sum())),
        Some(a) => {
            check_axis("sum", x.shape(), a)?;
            let (outer, len, inner) = split_axis(x.shape(), a);
            let mut out = vec![0.0; outer * inner];
            let d = x.data();
            for o in 0..outer {
                for l in 0..len {
                    let src = &d[(o * len + l) * inner..(o * len + l + 1) * inner];
                    let dst = &mut out[o * inner..(o + 1) * inner];
                    dst.iter_mut().zip(src).for_each(|(y, v)| *y += v);
                }
            }
            Tensor::new(reduced_shape(x.shape(), axis), out)
        }
    }
}

fn unary(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    x.map(f)
}

fn forward(op: &Op, v: &[&Tensor]) -> Result<(Tensor, Vec<usize>)> {
    let none = Vec::new();
    let out = match op {
        Op::Leaf => unreachable!(),
        Op::Add | Op::Sub | Op::Mul | Op::Div => {
            let (a, b) = (v[0], v[1]);
            let shape = broadcast_shapes(op.name(), a.shape(), b.shape())?;
            let data = match op {
                Op::Add => {
                    zip_broadcast(a.data(), a.shape(), b.data(), b.shape(), &shape, |x, y| {
                        x + y
                    })
                }
                Op::Sub => {
                    zip_broadcast(a.data(), a.shape(), b.data(), b.shape(), &shape, |x, y| {
                        x - y
                    })
                }
                Op::Mul => {
                    zip_broadcast(a.data(), a.shape(), b.data(), b.shape(), &shape, |x, y| {
                        x * y
                    })
                }
                _ => zip_broadcast(a.data(), a.shape(), b.data(), b.shape(), &shape, |x, y| {
                    x / y
                }),
            };
            Tensor::new(shape, data)?
        }
        Op::MatMul => {
            let (a, b) = (v[0], v[1]);
            if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[0] {
                return Err(shape_err("matmul", a.shape(), b.shape()));
            }
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            let mut c = vec![0.0; m * n];
            matmul_into(
                m,
                k,
                n,
                a.data(),
                (k as isize, 1),
                b.data(),
                (n as isize, 1),
                &mut c,
            );
            Tensor::new([m, n], c)?
        }
        Op::Sum { axis } => sum_axis(v[0], *axis)?,
        Op::Mean { axis } => {
            let x = v[0];
            let count = match axis {
                None => x.len(),
                Some(a) => {
                    check_axis("mean", x.shape(), *a)?;
                    x.shape()[*a]
                }
            };
            if count == 0 {
                return Err(Error::invalid("mean over an empty axis"));
            }
            let s = sum_axis(x, *axis)?;
            s.map(|y| y / count as f64)
        }
        Op::MaxOverWindow { window } => {
            let x = v[0];
            let Some(&n) = x.shape().last() else {
                return Err(Error::invalid("max_over_window needs rank >= 1"));
            };
            if *window == 0 || *window > n {
                return Err(Error::invalid(alloc::format!(
                    "max_over_window: window {window} does not fit axis of length {n}"
                )));
            }
            let rows = x.len() / n;
            let mut out = Vec::with_capacity(rows);
            let mut aux = Vec::with_capacity(rows);
            for r in 0..rows {
                let row = &x.data()[r * n..(r + 1) * n];
                let (mut best, mut arg) = (f64::NEG_INFINITY, 0usize);
                for start in 0..=(n - window) {
                    // summed from scratch per window so equal windows compare equal
                    let s: f64 = row[start..start + window].iter().sum();
                    if s > best {
                        best = s;
                        arg = start;
                    }
                }
                out.push(best);
                aux.push(arg);
            }
            let mut shape = x.shape().to_vec();
            *shape.last_mut().unwrap() = 1;
            return Ok((Tensor::new(shape, out)?, aux));
        }
        Op::Exp => unary(v[0], math::exp),
        Op::Log => {
            if let Some(&bad) = v[0].data().iter().find(|&&x| x < 0.0) {
                return Err(Error::Domain {
                    op: "log",
                    value: bad,
                });
            }
            unary(v[0], math::ln)
        }
        Op::Sin => unary(v[0], math::sin),
        Op::Cos => unary(v[0], math::cos),
        Op::Sqrt => {
            if let Some(&bad) = v[0].data().iter().find(|&&x| x < 0.0) {
                return Err(Error::Domain {
                    op: "sqrt",
                    value: bad,
                });
            }
            unary(v[0], math::sqrt)
        }
        Op::Sigmoid => unary(v[0], math::sigmoid),
        Op::Softplus => unary(v[0], math::softplus),
        Op::Relu => unary(v[0], |x| if x > 0.0 { x } else { 0.0 }),
        Op::Abs => unary(v[0], f64::abs),
        Op::Power { exponent } => {
            let p = *exponent;
            let integral = p == math::floor(p) && p.abs() < 1e9;
            if !integral {
                if let Some(&bad) = v[0].data().iter().find(|&&x| x < 0.0) {
                    return Err(Error::Domain {
                        op: "power",
                        value: bad,
                    });
                }
            }
            if p == 2.0 {
                unary(v[0], |x| x * x)
            } else if integral {
                unary(v[0], |x| math::powi(x, p as i32))
            } else {
                unary(v[0], |x| math::powf(x, p))
            }
        }
        Op::Scale { factor } => {
            let f = *factor;
            unary(v[0], |x| x * f)
        }
        Op::Clamp { min, max } => {
            let (lo, hi) = (*min, *max);
            unary(v[0], |x| x.clamp(lo, hi))
        }
        Op::Concat { axis } => {
            let first = v[0].shape();
            check_axis("concat", first, *axis)?;
            let mut total = 0;
            for t in v {
                let s = t.shape();
                let ok = s.len() == first.len()
                    && s.iter()
                        .zip(first)
                        .enumerate()
                        .all(|(i, (a, b))| i == *axis || a == b);
                if !ok {
                    return Err(shape_err("concat", first, s));
                }
                total += s[*axis];
            }
            let (outer, _, inner) = split_axis(first, *axis);
            let mut data = Vec::with_capacity(outer * total * inner);
            for o in 0..outer {
                for t in v {
                    let len = t.shape()[*axis] * inner;
                    data.extend_from_slice(&t.data()[o * len..(o + 1) * len]);
                }
            }
            let mut shape = first.to_vec();
            shape[*axis] = total;
            Tensor::new(shape, data)?
        }
        Op::Slice { axis, start, end } => {
            let x = v[0];
            check_axis("slice", x.shape(), *axis)?;
            if start > end || *end > x.shape()[*axis] {
                return Err(Error::invalid(alloc::format!(
                    "slice {start}..{end} out of range for shape {:?}",
                    x.shape()
                )));
            }
            let (outer, len, inner) = split_axis(x.shape(), *axis);
            let w = (end - start) * inner;
            let mut data = Vec::with_capacity(outer * w);
            for o in 0..outer {
                let base = o * len * inner + start * inner;
                data.extend_from_slice(&x.data()[base..base + w]);
            }
            let mut shape = x.shape().to_vec();
            shape[*axis] = end - start;
            Tensor::new(shape, data)?
        }
        Op::Broadcast { shape } => {
            let x = v[0];
            let target = broadcast_shapes("broadcast", x.shape(), shape)?;
            if &target != shape {
                return Err(shape_err("broadcast", x.shape(), shape));
            }
            Tensor::new(shape.clone(), broadcast_to(x.data(), x.shape(), shape))?
        }
        Op::Reshape { shape } => {
            let n: usize = shape.iter().product();
            if n != v[0].len() {
                return Err(shape_err("reshape", v[0].shape(), shape));
            }
            Tensor::new(shape.clone(), v[0].data().to_vec())?
        }
    };
    Ok((out, none))
}

/// Gradients w.r.t. each input, given the output gradient `g`.
fn elementwise(g: &[f64], f: impl Fn(usize) -> f64) -> Vec<Option<Vec<f64>>> {
    vec![Some(
        g.iter().enumerate().map(|(i, &gi)| gi * f(i)).collect(),
    )]
}

fn backward_op(node: &Node, ins: &[&Node], g: &[f64]) -> Vec<Option<Vec<f64>>> {
    let out = &node.value;
    let wants = |k: usize| ins[k].requires_grad;
    let x = |k: usize| &ins[k].value;
    match &node.op {
        Op::Leaf => Vec::new(),
        Op::Add | Op::Sub => {
            let sign = if node.op == Op::Sub { -1.0 } else { 1.0 };
            let ga = wants(0).then(|| reduce_to(g, out.shape(), x(0).shape()));
            let gb = wants(1).then(|| {
                let mut r = reduce_to(g, out.shape(), x(1).shape());
                if sign < 0.0 {
                    r.iter_mut().for_each(|v| *v = -*v);
                }
                r
            });
            vec![ga, gb]
        }
        Op::Mul => {
            let (a, b) = (x(0), x(1));
            let ga = wants(0).then(|| {
                let t = zip_broadcast(g, out.shape(), b.data(), b.shape(), out.shape(), |u, w| {
                    u * w
                });
                reduce_to(&t, out.shape(), a.shape())
            });
            let gb = wants(1).then(|| {
                let t = zip_broadcast(g, out.shape(), a.data(), a.shape(), out.shape(), |u, w| {
                    u * w
                });
                reduce_to(&t, out.shape(), b.shape())
            });
            vec![ga, gb]
        }
        Op::Div => {
            let (a, b) = (x(0), x(1));
            let ga = wants(0).then(|| {
                let t = zip_broadcast(g, out.shape(), b.data(), b.shape(), out.shape(), |u, w| {
                    u / w
                });
                reduce_to(&t, out.shape(), a.shape())
            });
            let gb = wants(1).then(|| {
                // d(a/b)/db = -out / b
                let eb = broadcast_to(b.data(), b.shape(), out.shape());
                let t: Vec<f64> = (0..g.len())
                    .map(|i| -g[i] * out.data()[i] / eb[i])
                    .collect();
                reduce_to(&t, out.shape(), b.shape())
            });
            vec![ga, gb]
        }
        Op::MatMul => {
            let (a, b) = (x(0), x(1));
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            let ga = wants(0).then(|| {
                // g [m,n] @ b^T [n,k]
                let mut c = vec![0.0; m * k];
                matmul_into(
                    m,
                    n,
                    k,
                    g,
                    (n as isize, 1),
                    b.data(),
                    (1, n as isize),
                    &mut c,
                );
                c
            });
            let gb = wants(1).then(|| {
                // a^T [k,m] @ g [m,n]
                let mut c = vec![0.0; k * n];
                matmul_into(
                    k,
                    m,
                    n,
                    a.data(),
                    (1, k as isize),
                    g,
                    (n as isize, 1),
                    &mut c,
                );
                c
            });
            vec![ga, gb]
        }
        Op::Sum { .. } => vec![Some(broadcast_to(g, out.shape(), x(0).shape()))],
        Op::Mean { axis } => {
            let count = match axis {
                None => x(0).len(),
                Some(a) => x(0).shape()[*a],
            } as f64;
            let mut r = broadcast_to(g, out.shape(), x(0).shape());
            r.iter_mut().for_each(|v| *v /= count);
            vec![Some(r)]
        }
        Op::MaxOverWindow { window } => {
            let xs = x(0);
            let n = *xs.shape().last().unwrap();
            let mut r = vec![0.0; xs.len()];
            for (row, &start) in node.aux.iter().enumerate() {
                for i in start..start + window {
                    r[row * n + i] = g[row];
                }
            }
            vec![Some(r)]
        }
        Op::Exp => elementwise(g, |i| out.data()[i]),
        Op::Log => elementwise(g, |i| 1.0 / x(0).data()[i]),
        Op::Sin => elementwise(g, |i| math::cos(x(0).data()[i])),
        Op::Cos => elementwise(g, |i| -math::sin(x(0).data()[i])),
        Op::Sqrt => elementwise(g, |i| 0.5 / out.data()[i]),
        Op::Sigmoid => elementwise(g, |i| {
            let s = out.data()[i];
            s * (1.0 - s)
        }),
        Op::Softplus => elementwise(g, |i| math::sigmoid(x(0).data()[i])),
        Op::Relu => elementwise(g, |i| if x(0).data()[i] > 0.0 { 1.0 } else { 0.0 }),
        Op::Abs => elementwise(g, |i| {
            let v = x(0).data()[i];
            if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            }
        }),
        Op::Power { exponent } => {
            let p = *exponent;
            if p == 2.0 {
                elementwise(g, |i| 2.0 * x(0).data()[i])
            } else {
                elementwise(g, |i| p * math::powf(x(0).data()[i], p - 1.0))
            }
        }
        Op::Scale { factor } => elementwise(g, |_| *factor),
        Op::Clamp { min, max } => elementwise(g, |i| {
            let v = x(0).data()[i];
            if v >= *min && v <= *max {
                1.0
            } else {
                0.0
            }
        }),
        Op::Concat { axis } => {
            let (outer, total, inner) = split_axis(out.shape(), *axis);
            let mut offset = 0;
            let mut res = Vec::with_capacity(ins.len());
            for inp in ins {
                let len = inp.value.shape()[*axis];
                if inp.requires_grad {
                    let mut r = Vec::with_capacity(outer * len * inner);
                    for o in 0..outer {
                        let base = (o * total + offset) * inner;
                        r.extend_from_slice(&g[base..base + len * inner]);
                    }
                    res.push(Some(r));
                } else {
                    res.push(None);
                }
                offset += len;
            }
            res
        }
        Op::Slice { axis, start, end } => {
            let xs = x(0);
            let (outer, len, inner) = split_axis(xs.shape(), *axis);
            let w = (end - start) * inner;
            let mut r = vec![0.0; xs.len()];
            for o in 0..outer {
                let base = o * len * inner + start * inner;
                r[base..base + w].copy_from_slice(&g[o * w..(o + 1) * w]);
            }
            vec![Some(r)]
        }
        Op::Broadcast { .. } => vec![Some(reduce_to(g, out.shape(), x(0).shape()))],
        Op::Reshape { .. } => vec![Some(g.to_vec())],
    }
}

// Graph ops, not operator traits: each returns a Result.
#[allow(clippy::should_implement_trait)]
impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.with_value(*self, |t| t.shape().to_vec())
    }

    pub fn value(&self) -> Tensor {
        self.tape.value(*self)
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f64 {
        self.tape.with_value(*self, |t| t.data()[0])
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    pub fn grad(&self) -> Option<Tensor> {
        self.tape.grad(*self)
    }

    pub fn backward(&self) -> Result<()> {
        self.tape.backward(*self)
    }

    fn un(self, op: Op) -> Var<'t> {
        self.tape
            .apply(op, &[self])
            .expect("unary op on a valid tensor cannot fail")
    }

    fn bin(self, op: Op, rhs: Var<'t>) -> Result<Var<'t>> {
        self.tape.apply(op, &[self, rhs])
    }

    pub fn add(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.bin(Op::Add, rhs)
    }

    pub fn sub(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.bin(Op::Sub, rhs)
    }

    pub fn mul(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.bin(Op::Mul, rhs)
    }

    pub fn div(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.bin(Op::Div, rhs)
    }

    pub fn matmul(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.bin(Op::MatMul, rhs)
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        let s = self.tape.scalar(c);
        self.add(s).expect("scalar broadcasts")
    }

    pub fn scale(self, factor: f64) -> Var<'t> {
        self.un(Op::Scale { factor })
    }

    pub fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }

    /// `c - self`
    pub fn rsub_scalar(self, c: f64) -> Var<'t> {
        self.neg().add_scalar(c)
    }

    pub fn sum(self) -> Var<'t> {
        self.un(Op::Sum { axis: None })
    }

    pub fn sum_axis(self, axis: usize) -> Result<Var<'t>> {
        self.tape.apply(Op::Sum { axis: Some(axis) }, &[self])
    }

    pub fn mean(self) -> Result<Var<'t>> {
        self.tape.apply(Op::Mean { axis: None }, &[self])
    }

    pub fn mean_axis(self, axis: usize) -> Result<Var<'t>> {
        self.tape.apply(Op::Mean { axis: Some(axis) }, &[self])
    }

    pub fn max_over_window(self, window: usize) -> Result<Var<'t>> {
        self.tape.apply(Op::MaxOverWindow { window }, &[self])
    }

    pub fn exp(self) -> Var<'t> {
        self.un(Op::Exp)
    }

    pub fn ln(self) -> Result<Var<'t>> {
        self.tape.apply(Op::Log, &[self])
    }

    pub fn sin(self) -> Var<'t> {
        self.un(Op::Sin)
    }

    pub fn cos(self) -> Var<'t> {
        self.un(Op::Cos)
    }

    pub fn sqrt(self) -> Result<Var<'t>> {
        self.tape.apply(Op::Sqrt, &[self])
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.un(Op::Sigmoid)
    }

    pub fn softplus(self) -> Var<'t> {
        self.un(Op::Softplus)
    }

    pub fn relu(self) -> Var<'t> {
        self.un(Op::Relu)
    }

    pub fn abs(self) -> Var<'t> {
        self.un(Op::Abs)
    }

    pub fn powf(self, exponent: f64) -> Result<Var<'t>> {
        self.tape.apply(Op::Power { exponent }, &[self])
    }

    pub fn square(self) -> Var<'t> {
        self.un(Op::Power { exponent: 2.0 })
    }

    pub fn clamp(self, min: f64, max: f64) -> Var<'t> {
        self.un(Op::Clamp { min, max })
    }

    pub fn slice(self, axis: usize, start: usize, end: usize) -> Result<Var<'t>> {
        self.tape.apply(Op::Slice { axis, start, end }, &[self])
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        self.tape.apply(
            Op::Reshape {
                shape: shape.to_vec(),
            },
            &[self],
        )
    }

    pub fn broadcast_to(self, shape: &[usize]) -> Result<Var<'t>> {
        self.tape.apply(
            Op::Broadcast {
                shape: shape.to_vec(),
            },
            &[self],
        )
    }
}

/// Concatenates along `axis`.
pub fn concat<'t>(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
    let Some(first) = parts.first() else {
        return Err(Error::invalid("concat of nothing"));
    };
    first.tape.apply(Op::Concat { axis }, parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn add_elementwise() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::from_vec(vec![1.0, 2.0]));
        let b = tape.constant(Tensor::from_vec(vec![3.0, 4.0]));
        let c = tape.forward_op("add", &[a, b]).unwrap();
        assert_eq!(c.value().data(), &[4.0, 6.0]);
    }

    #[test]
    fn matmul_identity() {
        let tape = Tape::new();
        let eye = tape.constant(t(&[3, 3], &[1., 0., 0., 0., 1., 0., 0., 0., 1.]));
        let v = tape.constant(t(&[3, 1], &[0.5, -2.0, 7.0]));
        let r = eye.matmul(v).unwrap();
        assert_eq!(r.value().data(), &[0.5, -2.0, 7.0]);
    }

    #[test]
    fn sigmoid_at_zero() {
        let tape = Tape::new();
        let x = tape.param(Tensor::scalar(0.0));
        let s = tape.forward_op("sigmoid", &[x]).unwrap();
        assert_eq!(s.item(), 0.5);
        s.backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), &[0.25]);
    }

    #[test]
    fn sum_of_squares_gradient() {
        let tape = Tape::new();
        let x = tape.param(Tensor::from_vec(vec![1.0, 2.0, 3.0]));
        let root = x.square().sum();
        root.backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn backward_twice_doubles() {
        let tape = Tape::new();
        let x = tape.param(Tensor::from_vec(vec![0.3, -1.1]));
        let root = x.sin().mul(x).unwrap().sum();
        root.backward().unwrap();
        let once = x.grad().unwrap();
        root.backward().unwrap();
        let twice = x.grad().unwrap();
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert_eq!(2.0 * a, *b);
        }
        tape.zero_grad();
        assert!(x.grad().is_none());
    }

    #[test]
    fn shape_mismatch_names_op_and_shapes() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::zeros([2, 3]));
        let b = tape.constant(Tensor::zeros([4]));
        let err = a.add(b).unwrap_err();
        assert_eq!(
            err,
            Error::ShapeMismatch {
                op: "add",
                lhs: vec![2, 3],
                rhs: vec![4]
            }
        );
        let msg = alloc::format!("{err}");
        assert!(msg.contains("add") && msg.contains("[2, 3]") && msg.contains("[4]"));
        assert!(a.matmul(tape.constant(Tensor::zeros([2, 2]))).is_err());
    }

    #[test]
    fn domain_errors() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::from_vec(vec![1.0, -1.0]));
        assert!(matches!(a.ln(), Err(Error::Domain { op: "log", .. })));
        assert!(matches!(a.sqrt(), Err(Error::Domain { op: "sqrt", .. })));
        assert!(matches!(a.powf(0.5), Err(Error::Domain { .. })));
        assert!(a.powf(3.0).is_ok());
    }

    #[test]
    fn backward_errors() {
        let tape = Tape::new();
        let x = tape.param(Tensor::from_vec(vec![1.0, 2.0]));
        assert!(matches!(x.exp().backward(), Err(Error::NonScalarRoot(_))));
        let c = tape.constant(Tensor::from_vec(vec![1.0, 2.0])).sum();
        assert_eq!(c.backward(), Err(Error::Detached));
        assert!(matches!(
            tape.forward_op("nope", &[x]),
            Err(Error::UnknownOp(_))
        ));
    }

    #[test]
    fn max_over_window_picks_first_of_ties() {
        let tape = Tape::new();
        let x = tape.param(t(&[2, 5], &[1., 0., 0., 1., 0., 0., 3., 1., 0., 2.]));
        let m = x.max_over_window(2).unwrap();
        assert_eq!(m.value().data(), &[1.0, 4.0]);
        m.sum().backward().unwrap();
        assert_eq!(
            x.grad().unwrap().data(),
            &[1., 1., 0., 0., 0., 0., 1., 1., 0., 0.]
        );
        assert!(x.max_over_window(6).is_err());
    }

    #[test]
    fn concat_slice_roundtrip() {
        let tape = Tape::new();
        let a = tape.param(t(&[2, 2], &[1., 2., 3., 4.]));
        let b = tape.param(t(&[2, 1], &[5., 6.]));
        let c = concat(&[a, b], 1).unwrap();
        assert_eq!(c.value().data(), &[1., 2., 5., 3., 4., 6.]);
        let s = c.slice(1, 1, 3).unwrap();
        assert_eq!(s.value().data(), &[2., 5., 4., 6.]);
        s.sum().backward().unwrap();
        assert_eq!(a.grad().unwrap().data(), &[0., 1., 0., 1.]);
        assert_eq!(b.grad().unwrap().data(), &[1., 1.]);
    }

    #[test]
    fn broadcast_gradients_reduce() {
        let tape = Tape::new();
        let x = tape.param(t(&[3, 2], &[1., 2., 3., 4., 5., 6.]));
        let bias = tape.param(t(&[1, 2], &[0.5, -0.5]));
        let col = tape.param(t(&[3, 1], &[1., 2., 3.]));
        let y = x.add(bias).unwrap().mul(col).unwrap().sum();
        y.backward().unwrap();
        assert_eq!(bias.grad().unwrap().data(), &[6.0, 6.0]);
        assert_eq!(col.grad().unwrap().data(), &[3.0, 7.0, 11.0]);
    }
}
