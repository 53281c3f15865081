use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::isp::{histogram_stretch, STRETCH_HI_PCT, STRETCH_LO_PCT};
use crate::models::{forward, network_input, ModelSpec, Weights};
use crate::nn::{Adam, AdamConfig, Tape, Tensor, Var};
use crate::raw::{amplify, normalize, Mosaic};
use crate::train::augment::{dihedral, transform_mosaic, Dihedral};
use crate::train::dataset::Dataset;
use crate::train::{LossKind, TrainConfig};

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: Weights,
    /// Training loss of every iteration, in order.
    pub losses: Vec<f64>,
}

pub fn train(dataset: &Dataset, spec: &ModelSpec, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_progress(dataset, spec, cfg, |_, _| {})
}

struct Prepared {
    amplified: Mosaic<f32>,
    wb_gains: [f64; 3],
    target: RgbImage,
}

fn image_tensor(img: &RgbImage) -> Result<Tensor> {
    Tensor::new(&[1, 3, img.height(), img.width()], img.data().to_vec())
}

/// Top-left `size x size` window of `[1, C, H, W]` at `(y0, x0)`.
fn window(t: &Tensor, y0: usize, x0: usize, size: usize) -> Result<Tensor> {
    let (n, c, h, w) = t.dims4()?;
    let mut out = Vec::with_capacity(n * c * size * size);
    for plane in 0..n * c {
        for y in y0..y0 + size {
            let start = (plane * h + y) * w + x0;
            out.extend_from_slice(&t.data()[start..start + size]);
        }
    }
    Tensor::new(&[n, c, size, size], out)
}

/// Concatenates `[1, C, H, W]` tensors along the batch axis.
fn stack(items: &[Tensor]) -> Result<Tensor> {
    if items.len() == 1 {
        return Ok(items[0].clone());
    }
    let mut shape = items[0].shape().to_vec();
    shape[0] = items.len();
    let data = items.iter().flat_map(|t| t.data().iter().copied()).collect();
    Tensor::new(&shape, data)
}

/// Draws one training pair. A region one CFA period larger than the crop is
/// cut out, flipped/rotated together with its target, and the crop is then
/// taken at an origin where the CFA phase matches the original layout, so
/// every packed channel keeps its color and sub-pixel position.
fn sample_crop(p: &Prepared, crop: usize, d: Dihedral, rng: &mut ChaCha8Rng, spec: &ModelSpec) -> Result<(Tensor, Tensor)> {
    let m = &p.amplified;
    let period = m.cfa.period();
    let (rh, rw) = ((crop + period).min(m.height), (crop + period).min(m.width));
    let y0 = period * rng.random_range(0..=(m.height - rh) / period);
    let x0 = period * rng.random_range(0..=(m.width - rw) / period);
    let region = m.crop(y0, x0, rh, rw)?;
    let target = image_tensor(&p.target.crop(y0, x0, rh, rw)?)?;

    let (tm, (oy, ox), d) = match transform_mosaic(&region, d) {
        Some((tm, (oy, ox))) if oy + crop <= tm.height && ox + crop <= tm.width => (tm, (oy, ox), d),
        // the realigned crop does not fit; keep the region untransformed
        _ => (region, (0, 0), Dihedral::IDENTITY),
    };
    let sy = oy + period * rng.random_range(0..=(tm.height - oy - crop) / period);
    let sx = ox + period * rng.random_range(0..=(tm.width - ox - crop) / period);
    let mut data = Vec::with_capacity(crop * crop);
    for y in sy..sy + crop {
        data.extend_from_slice(&tm.data[y * tm.width + sx..y * tm.width + sx + crop]);
    }
    let cropped = Mosaic::new(crop, crop, m.cfa, data)?;
    let x = network_input(&cropped, p.wb_gains, spec.input)?;
    let t = window(&dihedral(&target, d)?, sy, sx, crop)?;
    Ok((x, t))
}

/// Trains from scratch. Every epoch visits each scene once in a shuffled
/// order, `batch` scenes per iteration, with a random CFA-aligned crop and, if enabled, a random flip or
/// rotation applied identically to raw crop and target. `progress` is
/// called with the iteration index and its loss.
pub fn train_with_progress(
    dataset: &Dataset,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    spec.validate()?;
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Dataset("no training scenes".into()));
    }
    let factor = spec.input.shuffle_factor();
    let mult = spec.spatial_multiple();
    if !cfg.crop.is_multiple_of(factor) || !(cfg.crop / factor).is_multiple_of(mult) {
        return Err(Error::InvalidParam(format!(
            "crop {} must be a multiple of {} for {spec}",
            cfg.crop,
            factor * mult
        )));
    }

    let mut prepared = Vec::with_capacity(dataset.len());
    for s in &dataset.samples {
        if let Some(cfa) = spec.input.cfa() {
            if cfa != s.input.meta.cfa {
                return Err(Error::SpecMismatch(format!(
                    "scene {} is {}, model input {} needs {}",
                    s.id,
                    s.input.meta.cfa.name(),
                    spec.input.name(),
                    cfa.name()
                )));
            }
        }
        if cfg.crop > s.input.width || cfg.crop > s.input.height {
            return Err(Error::InvalidParam(format!(
                "crop {} exceeds scene {} of {}x{}",
                cfg.crop, s.id, s.input.width, s.input.height
            )));
        }
        let target = if cfg.stretch_targets {
            histogram_stretch(&s.reference, STRETCH_LO_PCT, STRETCH_HI_PCT)?
        } else {
            s.reference.clone()
        };
        prepared.push(Prepared {
            amplified: amplify(&normalize(&s.input), s.ratio),
            wb_gains: s.input.meta.wb_gains,
            target,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut weights = Weights::init(spec, rng.random())?;
    let mut adam = Adam::new(AdamConfig {
        lr: cfg.lr_initial,
        ..AdamConfig::default()
    });
    let mut losses = Vec::with_capacity(cfg.epochs * prepared.len().div_ceil(cfg.batch));
    let mut order: Vec<usize> = (0..prepared.len()).collect();

    for epoch in 0..cfg.epochs {
        adam.set_lr(cfg.lr_at(epoch));
        order.shuffle(&mut rng);
        for group in order.chunks(cfg.batch) {
            let mut xs = Vec::with_capacity(group.len());
            let mut ts = Vec::with_capacity(group.len());
            for &i in group {
                let d = if cfg.augment {
                    Dihedral::from_index(rng.random_range(0..8))
                } else {
                    Dihedral::IDENTITY
                };
                let (x, t) = sample_crop(&prepared[i], cfg.crop, d, &mut rng, spec)?;
                xs.push(x);
                ts.push(t);
            }
            let (x, t) = (stack(&xs)?, stack(&ts)?);

            let mut tape = Tape::new();
            let params: Vec<Var> = weights.tensors().iter().map(|w| tape.leaf(w.clone(), true)).collect();
            let xv = tape.leaf(x, false);
            let tv = tape.leaf(t, false);
            let out = forward(spec, &mut tape, &params, &xv)?;
            let loss = match cfg.loss {
                LossKind::L1 => tape.l1_loss(out, tv)?,
                LossKind::L2 => tape.l2_loss(out, tv)?,
                LossKind::Ssim => tape.ssim_loss(out, tv)?,
            };
            let value = tape.value(loss).item() as f64;
            tape.backward(loss)?;
            let grads: Vec<Tensor> = params
                .iter()
                .zip(weights.tensors())
                .map(|(&v, w)| tape.take_grad(v).unwrap_or_else(|| Tensor::zeros(w.shape())))
                .collect();
            drop(tape);
            adam.step(weights.tensors_mut(), &grads)?;
            progress(losses.len(), value);
            losses.push(value);
        }
    }
    Ok(TrainOutcome { weights, losses })
}
