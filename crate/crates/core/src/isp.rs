//! Traditional processing baseline: normalize, amplify, demosaic, white
//! balance and gamma. Also the fairness adjustment used when comparing
//! baselines (channel-mean matching), the idealized burst median and a
//! percentile histogram stretch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::raw::{amplify, normalize, AmplificationRatio, Mosaic, RawMosaic};

pub const DEFAULT_DISPLAY_GAMMA: f64 = 2.2;
pub const STRETCH_LO_PCT: f64 = 0.1;
pub const STRETCH_HI_PCT: f64 = 99.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IspParams {
    pub wb_gains: [f64; 3],
    /// Encoding applies `v^(1 / display_gamma)`.
    pub display_gamma: f64,
}

impl IspParams {
    pub fn new(wb_gains: [f64; 3]) -> Self {
        IspParams {
            wb_gains,
            display_gamma: DEFAULT_DISPLAY_GAMMA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_gains(self.wb_gains)?;
        if !(self.display_gamma.is_finite() && self.display_gamma > 0.0) {
            return Err(Error::InvalidParam(format!(
                "display gamma must be positive, got {}",
                self.display_gamma
            )));
        }
        Ok(())
    }
}

fn check_gains(gains: [f64; 3]) -> Result<()> {
    if gains.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
        return Err(Error::InvalidParam(format!("white balance gains must be positive, got {gains:?}")));
    }
    Ok(())
}

/// Interpolates each channel from its CFA sites.
///
/// A missing sample is the mean of the same-color sites in the surrounding
/// 3x3 neighbourhood; on Bayer this is exactly bilinear interpolation. Where
/// the 3x3 neighbourhood has no site of a color (possible on X-Trans and at
/// borders) the 5x5 neighbourhood is used instead. Native sites keep their
/// value.
pub fn demosaic_bilinear(m: &Mosaic<f32>) -> Result<RgbImage> {
    let (w, h) = (m.width, m.height);
    m.cfa.check_dims(w, h)?;
    let mut out = RgbImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let native = m.cfa.color_at(y, x).index();
            let mut px = [0.0f32; 3];
            for (c, slot) in px.iter_mut().enumerate() {
                *slot = if c == native {
                    m.get(y, x)
                } else {
                    neighbourhood_mean(m, y, x, c, 1).or_else(|| neighbourhood_mean(m, y, x, c, 2)).unwrap_or(0.0)
                };
            }
            out.set_pixel(y, x, px.map(|v| v.clamp(0.0, 1.0)));
        }
    }
    Ok(out)
}

fn neighbourhood_mean(m: &Mosaic<f32>, y: usize, x: usize, c: usize, radius: usize) -> Option<f32> {
    let (mut sum, mut n) = (0.0f32, 0u32);
    for yy in y.saturating_sub(radius)..(y + radius + 1).min(m.height) {
        for xx in x.saturating_sub(radius)..(x + radius + 1).min(m.width) {
            if m.cfa.color_at(yy, xx).index() == c {
                sum += m.get(yy, xx);
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f32)
}

/// `out_c = min(gain_c * in_c, 1)`.
pub fn white_balance(img: &RgbImage, gains: [f64; 3]) -> Result<RgbImage> {
    check_gains(gains)?;
    let mut out = img.clone();
    for (c, &g) in gains.iter().enumerate() {
        for v in out.channel_mut(c) {
            *v = (*v * g as f32).min(1.0);
        }
    }
    Ok(out)
}

/// `out = in^(1 / display_gamma)` on values clamped to `[0, 1]`.
pub fn gamma_encode(img: &RgbImage, display_gamma: f64) -> RgbImage {
    let e = 1.0 / display_gamma;
    img.map(|v| (v.clamp(0.0, 1.0) as f64).powf(e) as f32)
}

/// normalize -> amplify -> demosaic -> white balance -> gamma.
pub fn classic_pipeline(raw: &RawMosaic, ratio: AmplificationRatio, params: &IspParams) -> Result<RgbImage> {
    render_amplified(&amplify(&normalize(raw), ratio), params)
}

/// The stages of [`classic_pipeline`] after amplification.
pub fn render_amplified(amplified: &Mosaic<f32>, params: &IspParams) -> Result<RgbImage> {
    params.validate()?;
    let linear = demosaic_bilinear(amplified)?;
    Ok(gamma_encode(&white_balance(&linear, params.wb_gains)?, params.display_gamma))
}

/// Scales each channel so its mean equals the reference channel mean, then
/// clamps to `[0, 1]`. Channels with zero mean are left unchanged.
pub fn match_channel_means(img: &RgbImage, reference: &RgbImage) -> Result<RgbImage> {
    if !img.same_dims(reference) {
        return Err(Error::Shape(format!(
            "image {}x{} vs reference {}x{}",
            img.width(),
            img.height(),
            reference.width(),
            reference.height()
        )));
    }
    let mut out = img.clone();
    for c in 0..3 {
        let m = img.channel_mean(c);
        if m == 0.0 {
            continue;
        }
        let s = reference.channel_mean(c) / m;
        for v in out.channel_mut(c) {
            *v = ((*v as f64 * s) as f32).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

/// Median of a slice that is sorted in place; an even count averages the two
/// middle values.
fn median_in_place(v: &mut [f32]) -> f32 {
    v.sort_unstable_by(f32::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Per-pixel, per-channel median over pre-aligned frames.
pub fn burst_median(frames: &[RgbImage]) -> Result<RgbImage> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidParam("burst needs at least one frame".into()))?;
    if frames.iter().any(|f| !f.same_dims(first)) {
        return Err(Error::Shape("burst frames differ in size".into()));
    }
    let mut out = RgbImage::new(first.width(), first.height());
    let mut buf = vec![0.0f32; frames.len()];
    for (i, o) in out.data_mut().iter_mut().enumerate() {
        for (b, f) in buf.iter_mut().zip(frames) {
            *b = f.data()[i];
        }
        *o = median_in_place(&mut buf);
    }
    Ok(out)
}

/// Linearly interpolated percentile (`pct` in `[0, 100]`) of sorted data.
fn percentile(sorted: &[f32], pct: f64) -> f64 {
    let pos = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let t = pos - lo as f64;
    sorted[lo] as f64 * (1.0 - t) + sorted[hi] as f64 * t
}

/// Maps the `lo_pct` and `hi_pct` luminance percentiles to 0 and 1 with one
/// affine map shared by all channels, then clamps. Images whose percentile
/// spread is below 1e-6 are returned unchanged.
pub fn histogram_stretch(img: &RgbImage, lo_pct: f64, hi_pct: f64) -> Result<RgbImage> {
    if !(0.0..=100.0).contains(&lo_pct) || !(0.0..=100.0).contains(&hi_pct) || lo_pct >= hi_pct {
        return Err(Error::InvalidParam(format!("bad percentiles {lo_pct}, {hi_pct}")));
    }
    if img.plane_len() == 0 {
        return Ok(img.clone());
    }
    let mut lum = img.luminance();
    lum.sort_unstable_by(f32::total_cmp);
    let (p_lo, p_hi) = (percentile(&lum, lo_pct), percentile(&lum, hi_pct));
    if p_hi - p_lo < 1e-6 {
        return Ok(img.clone());
    }
    let inv = 1.0 / (p_hi - p_lo);
    Ok(img.map(|v| ((v as f64 - p_lo) * inv).clamp(0.0, 1.0) as f32))
}
