//! Statistical microstructure analysis of woven-composite CT segmentations:
//! two-point correlation descriptors, layer nesting estimation, segmentation
//! metrics, overlapping-patch stitching and synthetic plain-weave volumes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;
mod fft;
mod sum;

pub mod cli;
pub mod descriptors;
pub mod io;
pub mod metrics;
pub mod nesting;
pub mod patching;
pub mod synth;
pub mod volume;

pub use error::{Error, Result};
