//! Structural similarity with an 11x11 Gaussian window (sigma 1.5) evaluated
//! over "valid" window positions only, plus its exact gradient.
//!
//! Per position, with `mx = G*x`, `exx = G*(x^2)`, `exy = G*(x*y)`:
//!
//! ```text
//! A1 = 2 mx my + C1        B1 = mx^2 + my^2 + C1
//! A2 = 2 (exy - mx my) + C2 B2 = (exx - mx^2) + (eyy - my^2) + C2
//! S  = A1 A2 / (B1 B2)
//! ```

use crate::error::{Error, Result};
use crate::nn::{Scalar, Tensor};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Separable valid filtering of an `h x w` plane.
fn filter_valid<T: Scalar>(src: &[T], h: usize, w: usize, taps: &[T]) -> Vec<T> {
    let k = taps.len();
    let (ho, wo) = (h - k + 1, w - k + 1);
    let mut tmp = vec![T::zero(); h * wo];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..wo {
            let mut s = T::zero();
            for (t, &g) in taps.iter().enumerate() {
                s += g * row[x + t];
            }
            tmp[y * wo + x] = s;
        }
    }
    let mut out = vec![T::zero(); ho * wo];
    for y in 0..ho {
        for x in 0..wo {
            let mut s = T::zero();
            for (t, &g) in taps.iter().enumerate() {
                s += g * tmp[(y + t) * wo + x];
            }
            out[y * wo + x] = s;
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: spreads an `(h-k+1) x (w-k+1)` map back to `h x w`.
fn filter_valid_adjoint<T: Scalar>(g: &[T], h: usize, w: usize, taps: &[T]) -> Vec<T> {
    let k = taps.len();
    let (ho, wo) = (h - k + 1, w - k + 1);
    let mut tmp = vec![T::zero(); h * wo];
    for y in 0..ho {
        for x in 0..wo {
            let v = g[y * wo + x];
            for (t, &gt) in taps.iter().enumerate() {
                tmp[(y + t) * wo + x] += gt * v;
            }
        }
    }
    let mut out = vec![T::zero(); h * w];
    for y in 0..h {
        for x in 0..wo {
            let v = tmp[y * wo + x];
            for (t, &gt) in taps.iter().enumerate() {
                out[y * w + x + t] += gt * v;
            }
        }
    }
    out
}

struct Stats<T> {
    mx: Vec<T>,
    my: Vec<T>,
    exx: Vec<T>,
    eyy: Vec<T>,
    exy: Vec<T>,
}

fn stats<T: Scalar>(x: &[T], y: &[T], h: usize, w: usize, taps: &[T]) -> Stats<T> {
    let xx: Vec<T> = x.iter().map(|&v| v * v).collect();
    let yy: Vec<T> = y.iter().map(|&v| v * v).collect();
    let xy: Vec<T> = x.iter().zip(y).map(|(&a, &b)| a * b).collect();
    Stats {
        mx: filter_valid(x, h, w, taps),
        my: filter_valid(y, h, w, taps),
        exx: filter_valid(&xx, h, w, taps),
        eyy: filter_valid(&yy, h, w, taps),
        exy: filter_valid(&xy, h, w, taps),
    }
}

fn constants<T: Scalar>(peak: f64) -> (T, T) {
    (
        T::of((SSIM_K1 * peak).powi(2)),
        T::of((SSIM_K2 * peak).powi(2)),
    )
}

fn taps<T: Scalar>() -> Vec<T> {
    gaussian_taps().iter().map(|&v| T::of(v)).collect()
}

fn check_plane(h: usize, w: usize) -> Result<()> {
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Shape(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    Ok(())
}

/// Mean SSIM of one `h x w` plane pair with dynamic range `peak`.
pub fn ssim_plane<T: Scalar>(x: &[T], y: &[T], h: usize, w: usize, peak: f64) -> Result<T> {
    check_plane(h, w)?;
    let (c1, c2) = constants::<T>(peak);
    let s = stats(x, y, h, w, &taps::<T>());
    let two = T::of(2.0);
    let mut total = T::zero();
    for i in 0..s.mx.len() {
        let (mx, my) = (s.mx[i], s.my[i]);
        let a1 = two * mx * my + c1;
        let a2 = two * (s.exy[i] - mx * my) + c2;
        let b1 = mx * mx + my * my + c1;
        let b2 = (s.exx[i] - mx * mx) + (s.eyy[i] - my * my) + c2;
        total += a1 * a2 / (b1 * b2);
    }
    Ok(total / T::of(s.mx.len() as f64))
}

/// Gradients of the plane mean SSIM with respect to `x` and `y`, scaled by `gout`.
fn ssim_plane_backward<T: Scalar>(x: &[T], y: &[T], h: usize, w: usize, gout: T) -> (Vec<T>, Vec<T>) {
    let (c1, c2) = constants::<T>(1.0);
    let taps = taps::<T>();
    let s = stats(x, y, h, w, &taps);
    let n = s.mx.len();
    let two = T::of(2.0);
    let scale = gout / T::of(n as f64);
    let mut dmx = vec![T::zero(); n];
    let mut dmy = vec![T::zero(); n];
    let mut dexx = vec![T::zero(); n];
    let mut deyy = vec![T::zero(); n];
    let mut dexy = vec![T::zero(); n];
    for i in 0..n {
        let (mx, my) = (s.mx[i], s.my[i]);
        let a1 = two * mx * my + c1;
        let a2 = two * (s.exy[i] - mx * my) + c2;
        let b1 = mx * mx + my * my + c1;
        let b2 = (s.exx[i] - mx * mx) + (s.eyy[i] - my * my) + c2;
        let den = b1 * b2;
        let ssim = a1 * a2 / den;
        let inv = T::one() / b1 - T::one() / b2;
        dmx[i] = scale * (two * my * (a2 - a1) / den - two * mx * ssim * inv);
        dmy[i] = scale * (two * mx * (a2 - a1) / den - two * my * ssim * inv);
        dexx[i] = -scale * ssim / b2;
        deyy[i] = dexx[i];
        dexy[i] = scale * two * a1 / den;
    }
    let gmx = filter_valid_adjoint(&dmx, h, w, &taps);
    let gmy = filter_valid_adjoint(&dmy, h, w, &taps);
    let gexx = filter_valid_adjoint(&dexx, h, w, &taps);
    let geyy = filter_valid_adjoint(&deyy, h, w, &taps);
    let gexy = filter_valid_adjoint(&dexy, h, w, &taps);
    let gx = (0..h * w)
        .map(|i| gmx[i] + two * x[i] * gexx[i] + y[i] * gexy[i])
        .collect();
    let gy = (0..h * w)
        .map(|i| gmy[i] + two * y[i] * geyy[i] + x[i] * gexy[i])
        .collect();
    (gx, gy)
}

/// `1 - mean SSIM`, averaged over every `(n, c)` plane independently.
pub fn ssim_loss_forward<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    let (n, c, h, w) = pred.dims4()?;
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "ssim loss: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    check_plane(h, w)?;
    let hw = h * w;
    let mut total = T::zero();
    for p in 0..n * c {
        total += ssim_plane(&pred.data()[p * hw..(p + 1) * hw], &target.data()[p * hw..(p + 1) * hw], h, w, 1.0)?;
    }
    Ok(T::one() - total / T::of((n * c) as f64))
}

pub fn ssim_loss_backward<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, gout: T) -> Result<(Tensor<T>, Tensor<T>)> {
    let (n, c, h, w) = pred.dims4()?;
    let hw = h * w;
    let per_plane = -gout / T::of((n * c) as f64);
    let mut gp = Vec::with_capacity(pred.len());
    let mut gt = Vec::with_capacity(pred.len());
    for p in 0..n * c {
        let (a, b) = ssim_plane_backward(
            &pred.data()[p * hw..(p + 1) * hw],
            &target.data()[p * hw..(p + 1) * hw],
            h,
            w,
            per_plane,
        );
        gp.extend(a);
        gt.extend(b);
    }
    Ok((Tensor::new(pred.shape(), gp)?, Tensor::new(pred.shape(), gt)?))
}
