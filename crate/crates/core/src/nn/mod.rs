//! Reverse-mode differentiable tensor operations sufficient for the U-net and
//! the context aggregation network.
//!
//! Network code is written once against [`Backend`]. [`Tape`] records every
//! operation for a later backward pass; [`Eager`] evaluates and drops
//! intermediates immediately, which keeps full-sensor inference within memory.

mod adam;
mod eager;
pub mod gradcheck;
pub mod kernels;
mod scalar;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use eager::Eager;
pub use gradcheck::{grad_check, gradient_suite, GradCheckReport, GRADCHECK_STEP, GRADCHECK_THRESHOLD};
pub use kernels::ConvParams;
pub use scalar::Scalar;
pub use tape::{Tape, Var};
pub use tensor::Tensor;

use crate::error::Result;

/// Slope of the negative branch of every LeakyReLU in the networks.
pub const LEAKY_SLOPE: f64 = 0.2;

/// The operations a network forward pass needs.
pub trait Backend<T: Scalar> {
    type Value: Clone;

    fn conv2d(&mut self, x: &Self::Value, w: &Self::Value, b: &Self::Value, p: ConvParams) -> Result<Self::Value>;

    fn conv_transpose2(&mut self, x: &Self::Value, w: &Self::Value, b: &Self::Value) -> Result<Self::Value>;

    fn maxpool2(&mut self, x: &Self::Value) -> Result<Self::Value>;

    fn leaky_relu(&mut self, x: &Self::Value, slope: f64) -> Result<Self::Value>;

    fn concat_channels(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;

    fn pixel_shuffle(&mut self, x: &Self::Value, r: usize) -> Result<Self::Value>;

    fn shape(&self, x: &Self::Value) -> Vec<usize>;
}
