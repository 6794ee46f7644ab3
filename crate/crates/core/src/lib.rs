//! Facial-region feature-point descriptors (FFR_FD) for DeepFake detection.

pub mod bench;
pub mod error;
pub mod eval;
pub mod features;
pub mod ffrfd;
pub mod forest;
pub mod image;
pub mod pipeline;
pub mod regions;
pub mod synth;

pub use error::{Error, Result};
