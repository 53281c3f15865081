//! Image quality metrics and the `PSNR/SSIM` table formatting.

use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::nn::kernels::ssim_plane;

/// Peak signal-to-noise ratio in dB over all channels. Identical images give
/// `f64::INFINITY`.
pub fn psnr(pred: &RgbImage, target: &RgbImage, peak: f64) -> Result<f64> {
    check_dims(pred, target)?;
    psnr_slices(pred.data(), target.data(), peak)
}

pub fn psnr_slices(pred: &[f32], target: &[f32], peak: f64) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!("psnr over {} vs {} samples", pred.len(), target.len())));
    }
    Ok(psnr_from_mse(mse(pred, target), peak))
}

pub fn mse(pred: &[f32], target: &[f32]) -> f64 {
    let s: f64 = pred.iter().zip(target).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum();
    s / pred.len() as f64
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// Mean SSIM of the BT.601 luminance planes (11x11 Gaussian window, sigma 1.5,
/// K1 0.01, K2 0.03, dynamic range 1). Both sides need at least 11x11 pixels.
pub fn ssim(pred: &RgbImage, target: &RgbImage) -> Result<f64> {
    check_dims(pred, target)?;
    let a: Vec<f64> = pred.luminance().into_iter().map(f64::from).collect();
    let b: Vec<f64> = target.luminance().into_iter().map(f64::from).collect();
    ssim_plane(&a, &b, pred.height(), pred.width(), 1.0)
}

fn check_dims(a: &RgbImage, b: &RgbImage) -> Result<()> {
    if !a.same_dims(b) {
        return Err(Error::Shape(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Table cell in the `28.88/0.787` style; infinite PSNR prints as `inf`.
pub fn format_cell(psnr_db: f64, ssim: f64) -> String {
    if psnr_db.is_infinite() {
        format!("inf/{ssim:.3}")
    } else {
        format!("{psnr_db:.2}/{ssim:.3}")
    }
}

/// Arithmetic mean of a set of PSNR values; any infinite entry makes the mean
/// infinite.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_cases() {
        let a = RgbImage::from_fn(4, 4, |y, x| [0.1 * y as f32, 0.2, 0.05 * x as f32]);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        assert!((psnr_from_mse(0.01, 1.0) - 20.0).abs() < 1e-12);
        assert!(psnr(&a, &RgbImage::new(3, 4), 1.0).is_err());
    }

    #[test]
    fn formatting() {
        assert_eq!(format_cell(28.8812, 0.78712), "28.88/0.787");
        assert_eq!(format_cell(f64::INFINITY, 1.0), "inf/1.000");
    }

    #[test]
    fn ssim_identity_and_small_image() {
        let a = RgbImage::from_fn(16, 16, |y, x| [((y * 16 + x) as f32 * 0.013).fract(); 3]);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        assert!(ssim(&RgbImage::new(8, 8), &RgbImage::new(8, 8)).is_err());
    }
}
