//! Forward and backward kernels. Each is a pure function over tensors; the
//! tape and eager backends are thin wrappers around them.

mod conv;
mod layout;
mod loss;
mod ssim;

pub use conv::{
    conv2d_backward, conv2d_forward, conv_transpose2_backward, conv_transpose2_forward, ConvParams,
};
pub use layout::{
    concat_channels_forward, leaky_relu_backward, leaky_relu_forward, maxpool2_backward, maxpool2_forward,
    pixel_shuffle, space_to_depth, split_channels,
};
pub use loss::{l1_backward, l1_forward, l2_backward, l2_forward, weighted_sum_forward};
pub use ssim::{
    gaussian_taps, ssim_loss_backward, ssim_loss_forward, ssim_plane, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW,
};
