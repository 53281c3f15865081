//! Pooling, activation and pure data-movement kernels.

use crate::error::{Error, Result};
use crate::nn::{Scalar, Tensor};

/// 2x2 max pooling with stride 2. Also returns, per output element, the flat
/// input index of the selected value. Ties keep the first candidate in
/// row-major window order.
pub fn maxpool2_forward<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    let (n, c, h, w) = x.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!("maxpool2 needs even spatial dims, got {h}x{w}")));
    }
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut arg = Vec::with_capacity(n * c * ho * wo);
    let xd = x.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..ho {
            for j in 0..wo {
                let mut best = base + 2 * i * w + 2 * j;
                for idx in [
                    base + 2 * i * w + 2 * j + 1,
                    base + (2 * i + 1) * w + 2 * j,
                    base + (2 * i + 1) * w + 2 * j + 1,
                ] {
                    if xd[idx] > xd[best] {
                        best = idx;
                    }
                }
                out.push(xd[best]);
                arg.push(best as u32);
            }
        }
    }
    Ok((Tensor::new(&[n, c, ho, wo], out)?, arg))
}

pub fn maxpool2_backward<T: Scalar>(input_shape: &[usize], argmax: &[u32], gout: &Tensor<T>) -> Result<Tensor<T>> {
    if argmax.len() != gout.len() {
        return Err(Error::Shape("maxpool2 backward: gradient/argmax length mismatch".into()));
    }
    let mut gx = Tensor::zeros(input_shape);
    let d = gx.data_mut();
    for (&i, &g) in argmax.iter().zip(gout.data()) {
        d[i as usize] += g;
    }
    Ok(gx)
}

pub fn leaky_relu_forward<T: Scalar>(x: &Tensor<T>, slope: f64) -> Tensor<T> {
    let s = T::of(slope);
    x.map(|v| if v >= T::zero() { v } else { s * v })
}

/// The subgradient at zero is taken from the positive branch.
pub fn leaky_relu_backward<T: Scalar>(x: &Tensor<T>, gout: &Tensor<T>, slope: f64) -> Tensor<T> {
    let s = T::of(slope);
    let data = x
        .data()
        .iter()
        .zip(gout.data())
        .map(|(&v, &g)| if v >= T::zero() { g } else { s * g })
        .collect();
    Tensor::new(x.shape(), data).expect("same shape")
}

pub fn concat_channels_forward<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, ca, h, w) = a.dims4()?;
    let (nb, cb, hb, wb) = b.dims4()?;
    if (n, h, w) != (nb, hb, wb) {
        return Err(Error::Shape(format!(
            "concat: {:?} and {:?} differ outside the channel axis",
            a.shape(),
            b.shape()
        )));
    }
    let (la, lb) = (ca * h * w, cb * h * w);
    let mut out = Vec::with_capacity(n * (la + lb));
    for ni in 0..n {
        out.extend_from_slice(&a.data()[ni * la..(ni + 1) * la]);
        out.extend_from_slice(&b.data()[ni * lb..(ni + 1) * lb]);
    }
    Tensor::new(&[n, ca + cb, h, w], out)
}

/// Splits a channel-concatenated gradient back into its two parts.
pub fn split_channels<T: Scalar>(g: &Tensor<T>, ca: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let (n, c, h, w) = g.dims4()?;
    if ca > c {
        return Err(Error::Shape(format!("split at {ca} exceeds {c} channels")));
    }
    let cb = c - ca;
    let (la, lb) = (ca * h * w, cb * h * w);
    let mut a = Vec::with_capacity(n * la);
    let mut b = Vec::with_capacity(n * lb);
    for ni in 0..n {
        let s = &g.data()[ni * (la + lb)..(ni + 1) * (la + lb)];
        a.extend_from_slice(&s[..la]);
        b.extend_from_slice(&s[la..]);
    }
    Ok((Tensor::new(&[n, ca, h, w], a)?, Tensor::new(&[n, cb, h, w], b)?))
}

/// Sub-pixel rearrangement `(N, C*r*r, H, W) -> (N, C, r*H, r*W)` with
/// `out[c, y*r + i, x*r + j] = in[c*r*r + i*r + j, y, x]`.
pub fn pixel_shuffle<T: Scalar>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    if r == 0 || c % (r * r) != 0 {
        return Err(Error::Shape(format!(
            "pixel_shuffle: {c} channels not divisible by r^2 = {}",
            r * r
        )));
    }
    let co = c / (r * r);
    let (oh, ow) = (h * r, w * r);
    let mut out = vec![T::zero(); x.len()];
    let xd = x.data();
    for ni in 0..n {
        for o in 0..co {
            for i in 0..r {
                for j in 0..r {
                    let src = &xd[((ni * c + o * r * r + i * r + j) * h) * w..][..h * w];
                    let dst_base = (ni * co + o) * oh * ow;
                    for y in 0..h {
                        for xx in 0..w {
                            out[dst_base + (y * r + i) * ow + xx * r + j] = src[y * w + xx];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[n, co, oh, ow], out)
}

/// Inverse of [`pixel_shuffle`] (depth-to-space reversed).
pub fn space_to_depth<T: Scalar>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    if r == 0 || h % r != 0 || w % r != 0 {
        return Err(Error::Shape(format!(
            "space_to_depth: {h}x{w} not divisible by {r}"
        )));
    }
    let (oh, ow, oc) = (h / r, w / r, c * r * r);
    let mut out = vec![T::zero(); x.len()];
    let xd = x.data();
    for ni in 0..n {
        for ci in 0..c {
            let src = &xd[(ni * c + ci) * h * w..][..h * w];
            for i in 0..r {
                for j in 0..r {
                    let dst = &mut out[((ni * oc + ci * r * r + i * r + j) * oh) * ow..][..oh * ow];
                    for y in 0..oh {
                        for xx in 0..ow {
                            dst[y * ow + xx] = src[(y * r + i) * w + xx * r + j];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[n, oc, oh, ow], out)
}
