use std::rc::Rc;

use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::isp::{render_amplified, IspParams};
use crate::models::network::{forward, Weights};
use crate::models::spec::{InputLayout, ModelSpec};
use crate::nn::{Eager, Tensor};
use crate::raw::{amplify, normalize, pack, AmplificationRatio, Mosaic, RawMosaic};

/// Network input `[1, C, h, w]` for an amplified mosaic. The sRGB layout runs
/// the classic pipeline stages with the sensor white balance `wb_gains`.
pub fn network_input(amplified: &Mosaic<f32>, wb_gains: [f64; 3], layout: InputLayout) -> Result<Tensor> {
    match layout {
        InputLayout::Raw(arrangement) => {
            let p = pack(amplified, arrangement)?;
            Tensor::new(&[1, p.channels, p.height, p.width], p.data)
        }
        InputLayout::Srgb => {
            let img = render_amplified(amplified, &IspParams::new(wb_gains))?;
            let (w, h) = (img.width(), img.height());
            Tensor::new(&[1, 3, h, w], img.into_data())
        }
    }
}

/// Replicates the last row/column so height and width become multiples of `m`.
pub fn pad_to_multiple(x: &Tensor, m: usize) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    let (hp, wp) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
    if (hp, wp) == (h, w) {
        return Ok(x.clone());
    }
    let src = x.data();
    let mut out = Vec::with_capacity(n * c * hp * wp);
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..hp {
            let row = &src[base + y.min(h - 1) * w..base + y.min(h - 1) * w + w];
            out.extend_from_slice(row);
            out.extend(std::iter::repeat_n(row[w - 1], wp - w));
        }
    }
    Tensor::new(&[n, c, hp, wp], out)
}

fn check_cfa(raw: &RawMosaic, spec: &ModelSpec) -> Result<()> {
    if let Some(cfa) = spec.input.cfa() {
        if cfa != raw.meta.cfa {
            return Err(Error::SpecMismatch(format!(
                "model input {} needs a {} sensor, raw is {}",
                spec.input.name(),
                cfa.name(),
                raw.meta.cfa.name()
            )));
        }
    }
    Ok(())
}

/// normalize -> amplify -> pack -> network -> sub-pixel layer -> clamp.
///
/// Packed inputs whose size is not a multiple of the U-net's pooling factor
/// are edge-padded and the output is cropped back to the raw size.
pub fn forward_pipeline(raw: &RawMosaic, ratio: AmplificationRatio, spec: &ModelSpec, weights: &Weights) -> Result<RgbImage> {
    spec.validate()?;
    weights.check_spec(spec)?;
    check_cfa(raw, spec)?;
    let amplified = amplify(&normalize(raw), ratio);
    let x = network_input(&amplified, raw.meta.wb_gains, spec.input)?;
    let x = pad_to_multiple(&x, spec.spatial_multiple())?;
    let params: Vec<Rc<Tensor>> = weights.tensors().iter().cloned().map(Rc::new).collect();
    let y = forward(spec, &mut Eager, &params, &Rc::new(x))?;
    drop(params);
    let y = Rc::try_unwrap(y).unwrap_or_else(|rc| (*rc).clone());
    crop_to_image(&y, raw.width, raw.height)
}

/// Takes the top-left `width x height` window of `[1, 3, H, W]` and clamps it.
pub fn crop_to_image(y: &Tensor, width: usize, height: usize) -> Result<RgbImage> {
    let (n, c, h, w) = y.dims4()?;
    if n != 1 || c != 3 || h < height || w < width {
        return Err(Error::Shape(format!(
            "network output {:?} cannot cover a {width}x{height} image",
            y.shape()
        )));
    }
    let mut data = Vec::with_capacity(3 * width * height);
    for ch in 0..3 {
        for row in 0..height {
            let start = (ch * h + row) * w;
            data.extend(y.data()[start..start + width].iter().map(|v| v.clamp(0.0, 1.0)));
        }
    }
    RgbImage::from_planar(width, height, data)
}
