//! Spacetime trajectory fields for dynamic novel view synthesis.
//!
//! The crate is `no_std` (with `alloc`) and carries everything that is pure
//! computation: a reverse-mode autodiff engine over dense `f64` arrays, the
//! spacetime field network, DCT trajectories, the occlusion-aware volumetric
//! renderer, every training objective, the weight/radius schedules and the
//! Adam optimizer. IO, scene generation and the training driver live in the
//! `trajfield` companion crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod camera;
pub mod encoding;
pub mod error;
pub mod field;
pub mod losses;
pub mod math;
pub mod optim;
pub mod render;
pub mod schedule;
pub mod tensor;
pub mod trajectory;

pub use autodiff::{gradient_check, GradCheckReport, Op, Tape, Var};
pub use error::{Error, Result};
pub use tensor::Tensor;
