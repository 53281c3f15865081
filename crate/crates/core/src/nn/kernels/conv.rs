//! 2-D convolution (cross-correlation) and the stride-2, kernel-2 transposed
//! convolution used by the U-net decoder. Both lower to GEMM; convolution goes
//! through an im2col buffer that is filled in row chunks so memory stays
//! bounded on full-sensor inputs. Chunks are visited in a fixed order, so
//! results are bit-reproducible.

use crate::error::{Error, Result};
use crate::nn::scalar::{matmul, Mat};
use crate::nn::{Scalar, Tensor};

/// Upper bound on im2col buffer elements.
const CHUNK_ELEMS: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvParams {
    pub stride: usize,
    pub pad: usize,
    pub dilation: usize,
}

impl ConvParams {
    pub const fn new(stride: usize, pad: usize, dilation: usize) -> Self {
        ConvParams {
            stride,
            pad,
            dilation,
        }
    }

    /// Resolution-preserving 3x3 convolution at the given dilation.
    pub const fn same3(dilation: usize) -> Self {
        ConvParams::new(1, dilation, dilation)
    }

    pub const fn pointwise() -> Self {
        ConvParams::new(1, 0, 1)
    }

    pub fn output_dim(&self, input: usize, kernel: usize) -> Option<usize> {
        let span = self.dilation * (kernel - 1) + 1;
        let padded = input + 2 * self.pad;
        if self.stride == 0 || kernel == 0 || padded < span {
            return None;
        }
        Some((padded - span) / self.stride + 1)
    }

    fn is_pointwise(&self, kh: usize, kw: usize) -> bool {
        kh == 1 && kw == 1 && self.stride == 1 && self.pad == 0
    }
}

struct ConvGeometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    co: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeometry {
    fn k(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn rows_per_chunk(&self) -> usize {
        (CHUNK_ELEMS / (self.k() * self.wo).max(1)).clamp(1, self.ho)
    }
}

fn geometry<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, p: ConvParams) -> Result<ConvGeometry> {
    let (n, c, h, wd) = x.dims4()?;
    let (co, ci, kh, kw) = w.dims4()?;
    if ci != c {
        return Err(Error::Shape(format!(
            "conv2d: input has {c} channels, weight expects {ci}"
        )));
    }
    let (ho, wo) = match (p.output_dim(h, kh), p.output_dim(wd, kw)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::Shape(format!(
                "conv2d: {kh}x{kw} kernel with {p:?} does not fit a {h}x{wd} input"
            )))
        }
    };
    Ok(ConvGeometry {
        n,
        c,
        h,
        w: wd,
        co,
        kh,
        kw,
        ho,
        wo,
    })
}

/// Fills `cols[(ci, ky, kx), (oy - oy0, ox)]` for output rows `oy0..oy0 + rows`.
fn im2col<T: Scalar>(x: &[T], g: &ConvGeometry, p: ConvParams, oy0: usize, rows: usize, cols: &mut [T]) {
    let px = rows * g.wo;
    let mut r = 0;
    for ci in 0..g.c {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let dst = &mut cols[r * px..(r + 1) * px];
                let off_x = (kx * p.dilation) as isize - p.pad as isize;
                for (ry, oy) in (oy0..oy0 + rows).enumerate() {
                    let iy = (oy * p.stride + ky * p.dilation) as isize - p.pad as isize;
                    let drow = &mut dst[ry * g.wo..(ry + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        drow.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, d) in drow.iter_mut().enumerate() {
                        let ix = (ox * p.stride) as isize + off_x;
                        *d = if ix >= 0 && ix < g.w as isize {
                            src[ix as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
                r += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates column gradients back into the input.
fn col2im<T: Scalar>(cols: &[T], g: &ConvGeometry, p: ConvParams, oy0: usize, rows: usize, gx: &mut [T]) {
    let px = rows * g.wo;
    let mut r = 0;
    for ci in 0..g.c {
        let plane = &mut gx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let src = &cols[r * px..(r + 1) * px];
                let off_x = (kx * p.dilation) as isize - p.pad as isize;
                for (ry, oy) in (oy0..oy0 + rows).enumerate() {
                    let iy = (oy * p.stride + ky * p.dilation) as isize - p.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, &v) in src[ry * g.wo..(ry + 1) * g.wo].iter().enumerate() {
                        let ix = (ox * p.stride) as isize + off_x;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
                r += 1;
            }
        }
    }
}

fn check_bias<T: Scalar>(b: &Tensor<T>, co: usize, op: &str) -> Result<()> {
    if b.len() != co {
        return Err(Error::Shape(format!(
            "{op}: bias has {} elements, expected {co}",
            b.len()
        )));
    }
    Ok(())
}

/// `y[n, o] = b[o] + sum_{c,ky,kx} w[o, c, ky, kx] * x[n, c, oy*s + ky*d - p, ox*s + kx*d - p]`,
/// zero padded.
pub fn conv2d_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, p: ConvParams) -> Result<Tensor<T>> {
    let g = geometry(x, w, p)?;
    check_bias(b, g.co, "conv2d")?;
    let k = g.k();
    let (in_len, out_len) = (g.c * g.h * g.w, g.co * g.ho * g.wo);
    let mut out = vec![T::zero(); g.n * out_len];
    let wm = Mat::row_major(w.data(), g.co, k);
    let pointwise = p.is_pointwise(g.kh, g.kw);
    let rows_per_chunk = g.rows_per_chunk();
    let mut cols = if pointwise {
        Vec::new()
    } else {
        vec![T::zero(); k * rows_per_chunk * g.wo]
    };
    for ni in 0..g.n {
        let xs = &x.data()[ni * in_len..(ni + 1) * in_len];
        let ys = &mut out[ni * out_len..(ni + 1) * out_len];
        if pointwise {
            matmul(wm, Mat::row_major(xs, g.c, g.h * g.w), T::zero(), ys, g.ho * g.wo);
        } else {
            let mut oy0 = 0;
            while oy0 < g.ho {
                let rows = rows_per_chunk.min(g.ho - oy0);
                let px = rows * g.wo;
                im2col(xs, &g, p, oy0, rows, &mut cols);
                matmul(
                    wm,
                    Mat::row_major(&cols[..k * px], k, px),
                    T::zero(),
                    &mut ys[oy0 * g.wo..],
                    g.ho * g.wo,
                );
                oy0 += rows;
            }
        }
        for (o, plane) in ys.chunks_exact_mut(g.ho * g.wo).enumerate() {
            let bias = b.data()[o];
            plane.iter_mut().for_each(|v| *v += bias);
        }
    }
    Tensor::new(&[g.n, g.co, g.ho, g.wo], out)
}

/// Gradients of [`conv2d_forward`] with respect to input, weight and bias.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gout: &Tensor<T>,
    p: ConvParams,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let g = geometry(x, w, p)?;
    if gout.shape() != [g.n, g.co, g.ho, g.wo] {
        return Err(Error::Shape(format!(
            "conv2d backward: gradient shape {:?} does not match output",
            gout.shape()
        )));
    }
    let k = g.k();
    let (in_len, out_len, opx) = (g.c * g.h * g.w, g.co * g.ho * g.wo, g.ho * g.wo);
    let mut gx = vec![T::zero(); g.n * in_len];
    let mut gw = vec![T::zero(); g.co * k];
    let mut gb = vec![T::zero(); g.co];
    let wm = Mat::row_major(w.data(), g.co, k);
    let pointwise = p.is_pointwise(g.kh, g.kw);
    let rows_per_chunk = g.rows_per_chunk();
    let chunk_len = if pointwise { 0 } else { k * rows_per_chunk * g.wo };
    let mut cols = vec![T::zero(); chunk_len];
    let mut gcols = vec![T::zero(); chunk_len];
    for ni in 0..g.n {
        let xs = &x.data()[ni * in_len..(ni + 1) * in_len];
        let gs = &gout.data()[ni * out_len..(ni + 1) * out_len];
        let gxs = &mut gx[ni * in_len..(ni + 1) * in_len];
        for (o, plane) in gs.chunks_exact(opx).enumerate() {
            let mut s = T::zero();
            for &v in plane {
                s += v;
            }
            gb[o] += s;
        }
        if pointwise {
            let gm = Mat::row_major(gs, g.co, opx);
            matmul(gm, Mat::row_major(xs, g.c, opx).t(), T::one(), &mut gw, k);
            matmul(wm.t(), gm, T::zero(), gxs, opx);
            continue;
        }
        let mut oy0 = 0;
        while oy0 < g.ho {
            let rows = rows_per_chunk.min(g.ho - oy0);
            let px = rows * g.wo;
            im2col(xs, &g, p, oy0, rows, &mut cols);
            let gm = Mat {
                data: &gs[oy0 * g.wo..],
                rows: g.co,
                cols: px,
                rs: opx as isize,
                cs: 1,
            };
            matmul(gm, Mat::row_major(&cols[..k * px], k, px).t(), T::one(), &mut gw, k);
            matmul(wm.t(), gm, T::zero(), &mut gcols[..k * px], px);
            col2im(&gcols[..k * px], &g, p, oy0, rows, gxs);
            oy0 += rows;
        }
    }
    Ok((
        Tensor::new(x.shape(), gx)?,
        Tensor::new(w.shape(), gw)?,
        Tensor::new(&[g.co], gb)?,
    ))
}

fn convt_dims<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>) -> Result<(usize, usize, usize, usize, usize)> {
    let (n, c, h, wd) = x.dims4()?;
    let (ci, co, kh, kw) = w.dims4()?;
    if ci != c || kh != 2 || kw != 2 {
        return Err(Error::Shape(format!(
            "conv_transpose2: weight {:?} incompatible with {c}-channel input (need [{c}, C_out, 2, 2])",
            w.shape()
        )));
    }
    Ok((n, c, h, wd, co))
}

/// Transposed convolution with a 2x2 kernel and stride 2; doubles height and width.
/// Weight layout is `[C_in, C_out, 2, 2]`, so with the same weight it is the
/// adjoint of a stride-2 [`conv2d_forward`] mapping `C_out` to `C_in` channels.
pub fn conv_transpose2_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, wd, co) = convt_dims(x, w)?;
    check_bias(b, co, "conv_transpose2")?;
    let (hw, ow) = (h * wd, 2 * wd);
    let mut tmp = vec![T::zero(); co * 4 * hw];
    let mut out = vec![T::zero(); n * co * 4 * hw];
    let wt = Mat::row_major(w.data(), c, co * 4).t();
    for ni in 0..n {
        let xs = &x.data()[ni * c * hw..(ni + 1) * c * hw];
        matmul(wt, Mat::row_major(xs, c, hw), T::zero(), &mut tmp, hw);
        let ys = &mut out[ni * co * 4 * hw..(ni + 1) * co * 4 * hw];
        for o in 0..co {
            let bias = b.data()[o];
            let plane = &mut ys[o * 4 * hw..(o + 1) * 4 * hw];
            for a in 0..2 {
                for bb in 0..2 {
                    let src = &tmp[(o * 4 + a * 2 + bb) * hw..(o * 4 + a * 2 + bb + 1) * hw];
                    for i in 0..h {
                        for j in 0..wd {
                            plane[(2 * i + a) * ow + 2 * j + bb] = src[i * wd + j] + bias;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[n, co, 2 * h, 2 * wd], out)
}

pub fn conv_transpose2_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gout: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, c, h, wd, co) = convt_dims(x, w)?;
    if gout.shape() != [n, co, 2 * h, 2 * wd] {
        return Err(Error::Shape(format!(
            "conv_transpose2 backward: gradient shape {:?} does not match output",
            gout.shape()
        )));
    }
    let (hw, ow) = (h * wd, 2 * wd);
    let mut gtmp = vec![T::zero(); co * 4 * hw];
    let mut gx = vec![T::zero(); n * c * hw];
    let mut gw = vec![T::zero(); c * co * 4];
    let mut gb = vec![T::zero(); co];
    let wm = Mat::row_major(w.data(), c, co * 4);
    for ni in 0..n {
        let gs = &gout.data()[ni * co * 4 * hw..(ni + 1) * co * 4 * hw];
        for o in 0..co {
            let plane = &gs[o * 4 * hw..(o + 1) * 4 * hw];
            let mut s = T::zero();
            for &v in plane {
                s += v;
            }
            gb[o] += s;
            for a in 0..2 {
                for bb in 0..2 {
                    let dst = &mut gtmp[(o * 4 + a * 2 + bb) * hw..(o * 4 + a * 2 + bb + 1) * hw];
                    for i in 0..h {
                        for j in 0..wd {
                            dst[i * wd + j] = plane[(2 * i + a) * ow + 2 * j + bb];
                        }
                    }
                }
            }
        }
        let xs = &x.data()[ni * c * hw..(ni + 1) * c * hw];
        let gm = Mat::row_major(&gtmp, co * 4, hw);
        matmul(wm, gm, T::zero(), &mut gx[ni * c * hw..(ni + 1) * c * hw], hw);
        matmul(Mat::row_major(xs, c, hw), gm.t(), T::one(), &mut gw, co * 4);
    }
    Ok((
        Tensor::new(x.shape(), gx)?,
        Tensor::new(w.shape(), gw)?,
        Tensor::new(&[co], gb)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop convolution, independent of the im2col path.
    fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, p: ConvParams) -> Tensor<f64> {
        let (n, c, h, wd) = x.dims4().unwrap();
        let (co, _, kh, kw) = w.dims4().unwrap();
        let ho = p.output_dim(h, kh).unwrap();
        let wo = p.output_dim(wd, kw).unwrap();
        let mut out = Tensor::zeros(&[n, co, ho, wo]);
        for ni in 0..n {
            for o in 0..co {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut s = b.data()[o];
                        for ci in 0..c {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = (oy * p.stride + ky * p.dilation) as isize - p.pad as isize;
                                    let ix = (ox * p.stride + kx * p.dilation) as isize - p.pad as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                        s += w.data()[((o * c + ci) * kh + ky) * kw + kx]
                                            * x.data()[((ni * c + ci) * h + iy as usize) * wd + ix as usize];
                                    }
                                }
                            }
                        }
                        out.data_mut()[((ni * co + o) * ho + oy) * wo + ox] = s;
                    }
                }
            }
        }
        out
    }

    fn ramp(shape: &[usize], scale: f64) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        Tensor::new(shape, (0..n).map(|i| ((i * 37 % 23) as f64 - 11.0) * scale).collect()).unwrap()
    }

    #[test]
    fn identity_pointwise() {
        let x = ramp(&[1, 3, 4, 5], 0.1);
        let mut w = Tensor::zeros(&[3, 3, 1, 1]);
        for c in 0..3 {
            w.data_mut()[c * 3 + c] = 1.0;
        }
        let y = conv2d_forward(&x, &w, &Tensor::zeros(&[3]), ConvParams::pointwise()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn ones_kernel_counts_neighbours() {
        let x = Tensor::<f32>::full(&[1, 1, 5, 5], 1.0);
        let w = Tensor::full(&[1, 1, 3, 3], 1.0);
        let y = conv2d_forward(&x, &w, &Tensor::zeros(&[1]), ConvParams::same3(1)).unwrap();
        assert_eq!(y.shape(), &[1, 1, 5, 5]);
        assert_eq!(y.data()[12], 9.0);
        assert_eq!(y.data()[0], 4.0);
        assert_eq!(y.data()[2], 6.0);
    }

    #[test]
    fn matches_naive_for_strides_and_dilations() {
        let x = ramp(&[2, 3, 9, 7], 0.05);
        let b = ramp(&[4], 0.3);
        for (k, p) in [
            (3, ConvParams::same3(1)),
            (3, ConvParams::same3(2)),
            (3, ConvParams::new(2, 1, 1)),
            (2, ConvParams::new(2, 0, 1)),
            (1, ConvParams::pointwise()),
            (3, ConvParams::new(1, 0, 3)),
        ] {
            let w = ramp(&[4, 3, k, k], 0.07);
            let got = conv2d_forward(&x, &w, &b, p).unwrap();
            let want = naive_conv(&x, &w, &b, p);
            assert_eq!(got.shape(), want.shape(), "{p:?}");
            for (a, e) in got.data().iter().zip(want.data()) {
                assert!((a - e).abs() < 1e-12, "{p:?}: {a} vs {e}");
            }
        }
    }

    #[test]
    fn output_dims_formula() {
        let p = ConvParams::new(2, 1, 1);
        assert_eq!(p.output_dim(8, 3), Some(4));
        assert_eq!(ConvParams::same3(4).output_dim(10, 3), Some(10));
        assert_eq!(ConvParams::new(1, 0, 1).output_dim(2, 3), None);
    }

    #[test]
    fn shape_errors() {
        let x = Tensor::<f32>::zeros(&[1, 3, 4, 4]);
        let w = Tensor::zeros(&[2, 4, 3, 3]);
        assert!(conv2d_forward(&x, &w, &Tensor::zeros(&[2]), ConvParams::same3(1)).is_err());
        let w = Tensor::zeros(&[2, 3, 3, 3]);
        assert!(conv2d_forward(&x, &w, &Tensor::zeros(&[3]), ConvParams::same3(1)).is_err());
        let wt = Tensor::zeros(&[3, 2, 3, 3]);
        assert!(conv_transpose2_forward(&x, &wt, &Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn transpose_doubles_and_places_kernel() {
        let x = Tensor::<f64>::new(&[1, 1, 1, 2], vec![1.0, 2.0]).unwrap();
        let w = Tensor::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = conv_transpose2_forward(&x, &w, &Tensor::full(&[1], 0.5)).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 4]);
        assert_eq!(y.data(), &[1.5, 2.5, 2.5, 4.5, 3.5, 4.5, 6.5, 8.5]);
    }
}
