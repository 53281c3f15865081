use std::rc::Rc;

use crate::error::{Error, Result};
use crate::nn::kernels::{self as k, ConvParams};
use crate::nn::{Backend, Scalar, Tensor};

/// Immediate evaluation without recording; intermediates are freed as soon as
/// the network code drops them.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eager;

fn finite<T: Scalar>(name: &'static str, t: Tensor<T>) -> Result<Rc<Tensor<T>>> {
    if !t.all_finite() {
        return Err(Error::NonFinite(name));
    }
    Ok(Rc::new(t))
}

impl<T: Scalar> Backend<T> for Eager {
    type Value = Rc<Tensor<T>>;

    fn conv2d(&mut self, x: &Self::Value, w: &Self::Value, b: &Self::Value, p: ConvParams) -> Result<Self::Value> {
        finite("conv2d", k::conv2d_forward(x, w, b, p)?)
    }

    fn conv_transpose2(&mut self, x: &Self::Value, w: &Self::Value, b: &Self::Value) -> Result<Self::Value> {
        finite("conv_transpose2", k::conv_transpose2_forward(x, w, b)?)
    }

    fn maxpool2(&mut self, x: &Self::Value) -> Result<Self::Value> {
        finite("maxpool2", k::maxpool2_forward(x)?.0)
    }

    fn leaky_relu(&mut self, x: &Self::Value, slope: f64) -> Result<Self::Value> {
        finite("leaky_relu", k::leaky_relu_forward(x, slope))
    }

    fn concat_channels(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value> {
        finite("concat", k::concat_channels_forward(a, b)?)
    }

    fn pixel_shuffle(&mut self, x: &Self::Value, r: usize) -> Result<Self::Value> {
        finite("pixel_shuffle", k::pixel_shuffle(x, r)?)
    }

    fn shape(&self, x: &Self::Value) -> Vec<usize> {
        x.shape().to_vec()
    }
}
