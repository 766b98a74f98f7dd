//! VBM3D video denoising.
//!
//! The two-step collaborative filter (hard thresholding, then empirical
//! Wiener filtering) over groups of similar patches found by a predictive
//! temporal block-matching search, with three optional extensions:
//! optical-flow guided search windows, spatio-temporal (`8x8x2`) patches, and
//! a black-box multiscale wrapper built on DCT or Lanczos pyramids.

pub mod error;
pub mod filter;
pub mod flow;
pub mod msdenoise;
pub mod pipeline;
pub mod search;
pub mod vidio;
pub mod xform;

pub use error::{Error, Result};
