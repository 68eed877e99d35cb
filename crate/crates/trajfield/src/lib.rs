//! Synthetic dynamic scenes, dataset IO, training, rendering and evaluation
//! for spacetime trajectory fields. The numerical core lives in
//! [`trajfield_core`].

pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod export;
pub mod image;
pub mod metrics;
pub mod scene;
pub mod train;

pub use error::{Error, Result};
pub use trajfield_core as core;
