//! Finite-difference verification of the analytic gradients, run in `f64`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::{Backend, ConvParams, Tape, Tensor, Var, LEAKY_SLOPE};

/// Central difference step.
pub const GRADCHECK_STEP: f64 = 1e-3;
/// Largest accepted relative error.
pub const GRADCHECK_THRESHOLD: f64 = 1e-4;
/// Gradients smaller than this are compared in absolute terms.
const DENOM_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub name: String,
    pub max_rel_error: f64,
    /// Number of scalar inputs perturbed.
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRADCHECK_THRESHOLD
    }
}

/// Compares the tape gradient of the scalar returned by `f` with central
/// differences over every element of every input.
///
/// Per element the error is `|a - n| / max(|a|, |n|, 1e-3)`; the report holds
/// the worst one.
pub fn grad_check<F>(name: &str, f: F, inputs: &[Tensor<f64>], h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| tape.grad(*v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let eval = |ins: &[Tensor<f64>]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = ins.iter().map(|x| t.leaf(x.clone(), false)).collect();
        let l = f(&mut t, &vs)?;
        Ok(t.value(l).item())
    };

    let mut work = inputs.to_vec();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (i, grad) in analytic.iter().enumerate() {
        for j in 0..inputs[i].len() {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let up = eval(&work)?;
            work[i].data_mut()[j] = orig - h;
            let down = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = grad.data()[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(DENOM_FLOOR);
            worst = worst.max(err);
            checked += 1;
        }
    }
    Ok(GradCheckReport {
        name: name.to_string(),
        max_rel_error: worst,
        checked,
    })
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("shape")
}

/// Values bounded away from zero: magnitude in `[min_abs, 1]`, random sign.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize], min_abs: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(min_abs..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape, data).expect("shape")
}

/// Smooth field in `[0.2, 0.8]` with a little texture.
fn smooth(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let mut data = Vec::with_capacity(n * c * h * w);
    for _ in 0..n * c {
        let (fx, fy, ph): (f64, f64, f64) = (rng.random_range(0.1..0.5), rng.random_range(0.1..0.5), rng.random_range(0.0..std::f64::consts::TAU));
        for y in 0..h {
            for x in 0..w {
                let base = 0.5 + 0.2 * (fx * x as f64 + fy * y as f64 + ph).sin();
                data.push(base + rng.random_range(-0.08..0.08));
            }
        }
    }
    Tensor::new(shape, data).expect("shape")
}

/// Runs the gradient check for every differentiable operation on small random
/// tensors. Non-smooth points (pooling ties, activation kink, L1 at zero
/// residual) are avoided by construction.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradCheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = GRADCHECK_STEP;
    let mut reports = Vec::new();

    for (name, k, p, in_hw) in [
        ("conv2d 3x3", 3, ConvParams::same3(1), 8),
        ("conv2d 3x3 dilation 2", 3, ConvParams::same3(2), 8),
        ("conv2d 3x3 stride 2", 3, ConvParams::new(2, 1, 1), 8),
        ("conv2d 1x1", 1, ConvParams::pointwise(), 8),
    ] {
        let x = uniform(&mut rng, &[2, 3, in_hw, in_hw], -1.0, 1.0);
        let w = uniform(&mut rng, &[4, 3, k, k], -0.5, 0.5);
        let b = uniform(&mut rng, &[4], -0.5, 0.5);
        let out_hw = p.output_dim(in_hw, k).expect("fits");
        let proj = uniform(&mut rng, &[2, 4, out_hw, out_hw], -1.0, 1.0);
        reports.push(grad_check(
            name,
            |t, v| {
                let y = t.conv2d(&v[0], &v[1], &v[2], p)?;
                t.weighted_sum(y, proj.clone())
            },
            &[x, w, b],
            h,
        )?);
    }

    {
        let x = uniform(&mut rng, &[2, 3, 4, 4], -1.0, 1.0);
        let w = uniform(&mut rng, &[3, 2, 2, 2], -0.5, 0.5);
        let b = uniform(&mut rng, &[2], -0.5, 0.5);
        let proj = uniform(&mut rng, &[2, 2, 8, 8], -1.0, 1.0);
        reports.push(grad_check(
            "conv_transpose2",
            |t, v| {
                let y = t.conv_transpose2(&v[0], &v[1], &v[2])?;
                t.weighted_sum(y, proj.clone())
            },
            &[x, w, b],
            h,
        )?);
    }

    {
        // distinct values spaced 0.01 apart, so no window has a near tie
        let shape = [2, 3, 8, 8];
        let mut vals: Vec<f64> = (0..384).map(|i| i as f64 * 0.01 - 1.9).collect();
        vals.shuffle(&mut rng);
        let x = Tensor::new(&shape, vals)?;
        let proj = uniform(&mut rng, &[2, 3, 4, 4], -1.0, 1.0);
        reports.push(grad_check(
            "maxpool2",
            |t, v| {
                let y = t.maxpool2(&v[0])?;
                t.weighted_sum(y, proj.clone())
            },
            &[x],
            h,
        )?);
    }

    {
        let x = away_from_zero(&mut rng, &[2, 3, 6, 6], 0.05);
        let proj = uniform(&mut rng, &[2, 3, 6, 6], -1.0, 1.0);
        reports.push(grad_check(
            "leaky_relu",
            |t, v| {
                let y = t.leaky_relu(&v[0], LEAKY_SLOPE)?;
                t.weighted_sum(y, proj.clone())
            },
            &[x],
            h,
        )?);
    }

    {
        let a = uniform(&mut rng, &[2, 2, 4, 4], -1.0, 1.0);
        let b = uniform(&mut rng, &[2, 3, 4, 4], -1.0, 1.0);
        let proj = uniform(&mut rng, &[2, 5, 4, 4], -1.0, 1.0);
        reports.push(grad_check(
            "concat_channels",
            |t, v| {
                let y = t.concat_channels(&v[0], &v[1])?;
                t.weighted_sum(y, proj.clone())
            },
            &[a, b],
            h,
        )?);
    }

    {
        let x = uniform(&mut rng, &[2, 12, 4, 4], -1.0, 1.0);
        let proj = uniform(&mut rng, &[2, 3, 8, 8], -1.0, 1.0);
        reports.push(grad_check(
            "pixel_shuffle",
            |t, v| {
                let y = t.pixel_shuffle(&v[0], 2)?;
                t.weighted_sum(y, proj.clone())
            },
            &[x],
            h,
        )?);
    }

    {
        let target = uniform(&mut rng, &[2, 3, 8, 8], 0.0, 1.0);
        let offset = away_from_zero(&mut rng, &[2, 3, 8, 8], 0.05);
        let mut pred = target.clone();
        pred.add_assign(&offset);
        reports.push(grad_check("l1_loss", |t, v| t.l1_loss(v[0], v[1]), &[pred, target], h)?);
    }

    {
        let pred = uniform(&mut rng, &[2, 3, 8, 8], 0.0, 1.0);
        let target = uniform(&mut rng, &[2, 3, 8, 8], 0.0, 1.0);
        reports.push(grad_check("l2_loss", |t, v| t.l2_loss(v[0], v[1]), &[pred, target], h)?);
    }

    {
        let pred = smooth(&mut rng, &[1, 2, 13, 13]);
        let target = smooth(&mut rng, &[1, 2, 13, 13]);
        reports.push(grad_check("ssim_loss", |t, v| t.ssim_loss(v[0], v[1]), &[pred, target], h)?);
    }

    Ok(reports)
}
