//! Learned processing of extreme low-light raw sensor data.
//!
//! The crate covers the whole path from a short-exposure raw mosaic to a
//! display-referred RGB image:
//!
//! - [`raw`]: sensor data model, black-level normalization, amplification and
//!   CFA-aware packing for Bayer and X-Trans sensors.
//! - [`sim`]: a seeded sensor simulator producing paired short-exposure raw
//!   input and clean long-exposure references.
//! - [`isp`]: the traditional processing baseline, fairness adjustments and the
//!   idealized burst-median denoiser.
//! - [`nn`]: reverse-mode differentiable tensor kernels and the Adam optimizer.
//! - [`models`]: U-net and context aggregation network builders, the weights
//!   file format and the end-to-end forward pipeline.
//! - [`metrics`] and [`train`]: PSNR/SSIM, training loop, evaluation reports and
//!   the controlled-experiment (ablation) harness.

pub mod error;
pub mod image;
pub mod io;
pub mod isp;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod raw;
pub mod sim;
pub mod train;

pub use error::{Error, Result};
pub use image::RgbImage;
