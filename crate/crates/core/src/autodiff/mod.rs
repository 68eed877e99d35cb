//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records every primitive applied to its [`Var`]s. Calling
//! [`Tape::backward`] on a scalar walks the record in reverse and accumulates
//! gradients into the leaves created with [`Tape::param`].
//!
//! ```
//! use trajfield_core::{Tape, Tensor};
//!
//! let tape = Tape::new();
//! let x = tape.param(Tensor::from_vec(vec![1.0, 2.0, 3.0]));
//! let y = x.square().sum();
//! y.backward().unwrap();
//! assert_eq!(x.grad().unwrap().data(), &[2.0, 4.0, 6.0]);
//! ```

mod gradcheck;
mod tape;

pub use gradcheck::{gradient_check, GradCheckReport};
pub use tape::{concat, Op, Tape, Var};
