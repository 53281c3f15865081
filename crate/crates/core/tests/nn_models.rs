use std::rc::Rc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nightraw::models::{
    can_receptive_field, decode_weights, encode_weights, forward, forward_pipeline, InputLayout, ModelKind, ModelSpec,
    Preset, Weights,
};
use nightraw::nn::kernels::{
    concat_channels_forward, conv2d_backward, conv2d_forward, conv_transpose2_backward, conv_transpose2_forward,
    l1_forward, l2_forward, leaky_relu_forward, maxpool2_forward, pixel_shuffle, ssim_loss_forward,
};
use nightraw::nn::{grad_check, Adam, AdamConfig, ConvParams, Eager, Tape, Tensor};
use nightraw::raw::{AmplificationRatio, Arrangement, Cfa, RawMosaic, SensorMeta};
use nightraw::Error;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn bayer4(width: usize, depth: usize) -> ModelSpec {
    ModelSpec {
        kind: ModelKind::UNet,
        input: InputLayout::Raw(Arrangement::BayerPacked4),
        base_width: width,
        depth,
        preset: Preset::Desk,
    }
}

#[test]
fn conv_backward_is_the_adjoint_of_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for p in [ConvParams::same3(1), ConvParams::same3(2), ConvParams::new(2, 1, 1), ConvParams::pointwise()] {
        let k = if p == ConvParams::pointwise() { 1 } else { 3 };
        let x = rand_tensor(&mut rng, &[2, 3, 9, 8]);
        let w = rand_tensor(&mut rng, &[4, 3, k, k]);
        let zero = Tensor::zeros(&[4]);
        let y = conv2d_forward(&x, &w, &zero, p).unwrap();
        let g = rand_tensor(&mut rng, y.shape());
        let (gx, gw, _) = conv2d_backward(&x, &w, &g, p).unwrap();
        // linear in x and in w, so <conv(x, w), g> equals both inner products
        let lhs = dot(&y, &g);
        assert!((lhs - dot(&x, &gx)).abs() < 1e-5 * lhs.abs().max(1.0), "{p:?}");
        assert!((lhs - dot(&w, &gw)).abs() < 1e-5 * lhs.abs().max(1.0), "{p:?}");
    }
}

#[test]
fn transposed_conv_backward_is_the_adjoint_of_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = rand_tensor(&mut rng, &[1, 5, 4, 3]);
    let w = rand_tensor(&mut rng, &[5, 2, 2, 2]);
    let y = conv_transpose2_forward(&x, &w, &Tensor::zeros(&[2])).unwrap();
    assert_eq!(y.shape(), &[1, 2, 8, 6]);
    let g = rand_tensor(&mut rng, y.shape());
    let (gx, gw, gb) = conv_transpose2_backward(&x, &w, &g).unwrap();
    let lhs = dot(&y, &g);
    assert!((lhs - dot(&x, &gx)).abs() < 1e-5 * lhs.abs().max(1.0));
    assert!((lhs - dot(&w, &gw)).abs() < 1e-5 * lhs.abs().max(1.0));
    // bias gradient is the per-channel sum of the upstream gradient
    for c in 0..2 {
        let s: f64 = g.data()[c * 48..(c + 1) * 48].iter().sum();
        assert!((gb.data()[c] - s).abs() < 1e-9);
    }
}

#[test]
fn maxpool_picks_the_maximum_and_the_first_tie() {
    let x = Tensor::new(&[1, 1, 2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
    let (y, arg) = maxpool2_forward(&x).unwrap();
    assert_eq!(y.data(), &[4.0]);
    assert_eq!(arg, vec![3]);
    let tie = Tensor::new(&[1, 1, 2, 2], vec![0.0f32, 7.0, 7.0, 7.0]).unwrap();
    assert_eq!(maxpool2_forward(&tie).unwrap().1, vec![1]);
    assert!(maxpool2_forward(&Tensor::<f32>::zeros(&[1, 1, 3, 2])).is_err());
}

#[test]
fn leaky_relu_values() {
    let x = Tensor::new(&[4], vec![1.0f64, -1.0, 0.0, -2.5]).unwrap();
    assert_eq!(leaky_relu_forward(&x, 0.2).data(), &[1.0, -0.2, 0.0, -0.5]);
}

#[test]
fn loss_examples() {
    let p = Tensor::new(&[1, 1, 1, 2], vec![0.5f64, 1.0]).unwrap();
    let t = Tensor::new(&[1, 1, 1, 2], vec![0.0f64, 0.5]).unwrap();
    assert_eq!(l1_forward(&p, &t).unwrap(), 0.5);
    assert_eq!(l2_forward(&p, &t).unwrap(), 0.25);
    assert!(l1_forward(&p, &Tensor::zeros(&[2])).is_err());
}

#[test]
fn ssim_loss_is_zero_on_identity_and_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = rand_tensor(&mut rng, &[1, 3, 14, 13]).map(|v| 0.5 + 0.4 * v);
    let b = rand_tensor(&mut rng, &[1, 3, 14, 13]).map(|v| 0.5 + 0.4 * v);
    assert!(ssim_loss_forward(&a, &a).unwrap().abs() < 1e-12);
    let (ab, ba) = (ssim_loss_forward(&a, &b).unwrap(), ssim_loss_forward(&b, &a).unwrap());
    assert!(ab > 0.0);
    assert!((ab - ba).abs() < 1e-12);
}

#[test]
fn adam_first_step_moves_by_the_learning_rate() {
    let cfg = AdamConfig::default();
    let mut adam = Adam::<f64>::new(cfg);
    let mut params = vec![Tensor::new(&[1], vec![0.0]).unwrap()];
    let grads = vec![Tensor::new(&[1], vec![1.0]).unwrap()];
    adam.step(&mut params, &grads).unwrap();
    // bias correction makes m_hat = 1, v_hat = 1, so the step is lr / (1 + eps)
    let oracle = -cfg.lr / (1.0 + cfg.eps);
    assert!((params[0].data()[0] - oracle).abs() < 1e-15);
    adam.step(&mut params, &grads).unwrap();
    assert!((params[0].data()[0] - 2.0 * oracle).abs() < 1e-15);
    assert_eq!(adam.steps(), 2);
    assert!(adam.step(&mut params, &[]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn layout_ops_conserve_absolute_sum(seed in any::<u64>(), r in 1usize..4, c in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_tensor(&mut rng, &[2, 3 * r * r, 3, 2]);
        let y = pixel_shuffle(&x, r).unwrap();
        prop_assert_eq!(y.shape(), &[2, 3, 3 * r, 2 * r]);
        let abs = |t: &Tensor<f64>| t.data().iter().map(|v| v.abs()).sum::<f64>();
        prop_assert!((abs(&x) - abs(&y)).abs() < 1e-9);
        let b = rand_tensor(&mut rng, &[2, c, 3, 2]);
        let cat = concat_channels_forward(&x, &b).unwrap();
        prop_assert!((abs(&cat) - abs(&x) - abs(&b)).abs() < 1e-9);
    }

    #[test]
    fn weights_round_trip_through_bytes(seed in any::<u64>(), width in 1usize..5, depth in 1usize..3) {
        let spec = bayer4(width, depth);
        let w = Weights::init(&spec, seed).unwrap();
        let (spec2, w2) = decode_weights(&encode_weights(&spec, &w).unwrap()).unwrap();
        prop_assert_eq!(spec2, spec);
        prop_assert_eq!(w2, w);
    }
}

/// Independent count: each conv is `cout * (cin * k * k + 1)`.
fn unet_params_closed_form(cin: usize, cout: usize, w: usize, depth: usize) -> usize {
    let conv = |ci: usize, co: usize, k: usize| co * (ci * k * k + 1);
    let mut total = 0;
    for l in 0..=depth {
        let prev = if l == 0 { cin } else { w << (l - 1) };
        total += conv(prev, w << l, 3) + conv(w << l, w << l, 3);
    }
    for l in 0..depth {
        total += conv(w << (l + 1), w << l, 2) + conv(2 * (w << l), w << l, 3) + conv(w << l, w << l, 3);
    }
    total + conv(w, cout, 1)
}

#[test]
fn parameter_counts_match_a_closed_form() {
    for (layout, cin, cout) in [
        (InputLayout::Raw(Arrangement::BayerPacked4), 4, 12),
        (InputLayout::Raw(Arrangement::BayerMasked), 4, 3),
        (InputLayout::Raw(Arrangement::XTrans9), 9, 27),
        (InputLayout::Raw(Arrangement::XTrans36), 36, 108),
        (InputLayout::Srgb, 3, 3),
    ] {
        for preset in [Preset::Desk, Preset::Paper] {
            let spec = ModelSpec::preset(ModelKind::UNet, layout, preset);
            let oracle = unet_params_closed_form(cin, cout, spec.base_width, spec.depth);
            assert_eq!(spec.param_count(), oracle, "{spec}");
            if preset == Preset::Desk {
                assert_eq!(Weights::<f32>::init(&spec, 0).unwrap().param_count(), oracle);
            }
        }
    }
    assert_eq!(ModelSpec::preset(ModelKind::UNet, InputLayout::Raw(Arrangement::BayerPacked4), Preset::Desk).param_count(), 482_364);
}

#[test]
fn structural_hash_tracks_the_layer_table() {
    let a = bayer4(4, 2);
    let w = Weights::<f32>::init(&a, 0).unwrap();
    assert_eq!(w.structural_hash(), a.structural_hash());
    assert_eq!(Weights::<f32>::init(&a, 9).unwrap().structural_hash(), a.structural_hash());
    assert_ne!(bayer4(4, 1).structural_hash(), a.structural_hash());
    assert_ne!(bayer4(8, 2).structural_hash(), a.structural_hash());
    assert!(matches!(w.check_spec(&bayer4(8, 2)), Err(Error::SpecMismatch(_))));
}

#[test]
fn decode_rejects_damaged_files() {
    let spec = bayer4(2, 1);
    let bytes = encode_weights(&spec, &Weights::init(&spec, 0).unwrap()).unwrap();
    assert!(matches!(decode_weights(&bytes[..bytes.len() - 1]), Err(Error::MalformedWeights(_))));
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(decode_weights(&magic), Err(Error::MalformedWeights(_))));
    let mut trailing = bytes.clone();
    trailing.push(0);
    assert!(decode_weights(&trailing).is_err());
    assert!(decode_weights(&[]).is_err());
}

#[test]
fn unet_gradients_match_finite_differences() {
    // two scales, so pooling, the transposed conv and the skip concat are all on the path
    let spec = bayer4(4, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let weights = Weights::<f64>::init(&spec, 5).unwrap();
    let mut inputs: Vec<Tensor<f64>> = weights.tensors().to_vec();
    for t in &mut inputs {
        for v in t.data_mut() {
            *v += rng.random_range(-0.05..0.05);
        }
    }
    let n_params = inputs.len();
    inputs.push(rand_tensor(&mut rng, &[1, 4, 4, 4]).map(|v| 0.5 + 0.4 * v));
    inputs.push(rand_tensor(&mut rng, &[1, 3, 8, 8]).map(|v| 0.5 + 0.4 * v));
    let report = grad_check(
        "unet",
        |tape: &mut Tape<f64>, vars| {
            let y = forward(&spec, tape, &vars[..n_params], &vars[n_params])?;
            tape.l2_loss(y, vars[n_params + 1])
        },
        &inputs,
        // small step so no perturbation crosses a LeakyReLU kink or a pooling switch
        1e-6,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-3, "{report:?}");
    assert_eq!(report.checked, spec.param_count() + 64 + 192);
}

fn raw(cfa: Cfa, w: usize, h: usize, seed: u64) -> RawMosaic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let meta = SensorMeta {
        cfa,
        black_level: 512,
        white_level: 16383,
        exposure_s: 0.1,
        wb_gains: [2.0, 1.0, 1.6],
    };
    RawMosaic::new(w, h, (0..w * h).map(|_| rng.random_range(512..700)).collect(), meta).unwrap()
}

#[test]
fn zero_weights_give_a_zero_image() {
    let spec = bayer4(4, 2);
    let out = forward_pipeline(&raw(Cfa::Bayer, 24, 16, 0), AmplificationRatio::new(100.0).unwrap(), &spec, &Weights::zeros(&spec)).unwrap();
    assert!(out.data().iter().all(|&v| v == 0.0));
}

#[test]
fn ratio_changes_the_output_with_the_same_weights() {
    let spec = bayer4(4, 2);
    let w = Weights::init(&spec, 1).unwrap();
    let r = raw(Cfa::Bayer, 32, 32, 2);
    let a = forward_pipeline(&r, AmplificationRatio::new(50.0).unwrap(), &spec, &w).unwrap();
    let b = forward_pipeline(&r, AmplificationRatio::new(200.0).unwrap(), &spec, &w).unwrap();
    assert_ne!(a, b);
    assert_eq!(a, forward_pipeline(&r, AmplificationRatio::new(50.0).unwrap(), &spec, &w).unwrap());
}

#[test]
fn pipeline_rejects_the_wrong_cfa() {
    let spec = ModelSpec::preset(ModelKind::UNet, InputLayout::Raw(Arrangement::XTrans9), Preset::Desk);
    let w = Weights::zeros(&spec);
    assert!(forward_pipeline(&raw(Cfa::Bayer, 24, 24, 0), AmplificationRatio::new(1.0).unwrap(), &spec, &w).is_err());
}

#[test]
fn can_receptive_field_grows_with_dilation() {
    let spec = ModelSpec::preset(ModelKind::Can, InputLayout::Raw(Arrangement::BayerPacked4), Preset::Desk);
    let dil = spec.can_dilations();
    assert_eq!(dil, vec![1, 2, 4, 8, 16, 32, 1]);
    assert_eq!(can_receptive_field(&spec), 1 + 2 * 64);

    // empirical: perturb one packed pixel and look at the extent of the change
    let spec = ModelSpec {
        base_width: 3,
        depth: 3,
        ..spec
    };
    let mut w = Weights::<f64>::init(&spec, 4).unwrap();
    for t in w.tensors_mut() {
        *t = t.map(|v| v + 0.05);
    }
    let params: Vec<Rc<Tensor<f64>>> = w.tensors().iter().cloned().map(Rc::new).collect();
    let n = 40;
    let base = Tensor::full(&[1, 4, n, n], 0.3);
    let mut poked = base.clone();
    poked.data_mut()[(n / 2) * n + n / 2] = 1.3;
    let ya = forward(&spec, &mut Eager, &params, &Rc::new(base)).unwrap();
    let yb = forward(&spec, &mut Eager, &params, &Rc::new(poked)).unwrap();
    // output is pixel-shuffled by 2; measure the changed span in packed coordinates
    let (_, _, oh, ow) = ya.dims4().unwrap();
    let mut cols = Vec::new();
    for y in 0..oh {
        for x in 0..ow {
            if (ya.data()[y * ow + x] - yb.data()[y * ow + x]).abs() > 0.0 {
                cols.push(x / 2);
            }
        }
    }
    let span = cols.iter().max().unwrap() - cols.iter().min().unwrap() + 1;
    assert_eq!(span, can_receptive_field(&spec));
}

#[test]
fn eager_forward_is_deterministic() {
    let spec = bayer4(4, 2);
    let w = Weights::init(&spec, 3).unwrap();
    let r = raw(Cfa::Bayer, 40, 24, 5);
    let ratio = AmplificationRatio::new(30.0).unwrap();
    assert_eq!(forward_pipeline(&r, ratio, &spec, &w).unwrap(), forward_pipeline(&r, ratio, &spec, &w).unwrap());
}
