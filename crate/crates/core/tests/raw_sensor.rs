use proptest::prelude::*;

use nightraw::raw::{
    amplify, normalize, pack, unpack, AmplificationRatio, Arrangement, Cfa, Mosaic, RawMosaic, SensorMeta, XTRANS_EXCHANGE,
};
use nightraw::sim::{linearize, render_scene, sensor_mosaic, simulate_burst, simulate_pair, SimConfig, DEFAULT_WB_GAINS};

fn meta(cfa: Cfa, black: u16, white: u16) -> SensorMeta {
    SensorMeta {
        cfa,
        black_level: black,
        white_level: white,
        exposure_s: 0.1,
        wb_gains: [1.0; 3],
    }
}

fn ratio(r: f64) -> AmplificationRatio {
    AmplificationRatio::new(r).unwrap()
}

#[test]
fn normalize_closed_form() {
    let raw = RawMosaic::new(2, 2, vec![600, 100, 50, 1100], meta(Cfa::Bayer, 100, 1100)).unwrap();
    let n = normalize(&raw);
    let expect = [(600.0 - 100.0) / 1000.0, 0.0, 0.0, 1.0];
    for (got, want) in n.data.iter().zip(expect) {
        assert!((*got as f64 - want).abs() < 1e-7, "{got} vs {want}");
    }
}

#[test]
fn amplify_closed_form() {
    let m = Mosaic::new(2, 2, Cfa::Bayer, vec![0.002f32, 0.0, 0.004, 0.5]).unwrap();
    let a = amplify(&m, ratio(300.0));
    assert!((a.data[0] as f64 - 0.002 * 300.0).abs() < 1e-6);
    assert_eq!(a.data[1], 0.0);
    assert_eq!(a.data[3], 1.0);
}

#[test]
fn full_sony_frame_packs_to_half_resolution() {
    let m = Mosaic::new(4240, 2832, Cfa::Bayer, vec![0u16; 4240 * 2832]).unwrap();
    let p = pack(&m, Arrangement::BayerPacked4).unwrap();
    assert_eq!((p.channels, p.height, p.width), (4, 1416, 2120));
}

#[test]
fn fuji_frame_must_be_cropped_to_a_multiple_of_six() {
    assert!(Cfa::XTrans.check_dims(6000, 4000).is_err());
    assert!(Cfa::XTrans.check_dims(6000, 3996).is_ok());
    let m = Mosaic::new(60, 36, Cfa::XTrans, vec![0u16; 60 * 36]).unwrap();
    let p = pack(&m, Arrangement::XTrans9).unwrap();
    assert_eq!((p.channels, p.height, p.width), (9, 12, 20));
}

#[test]
fn exchange_table_is_an_adjacent_involution() {
    let mut seen = std::collections::HashSet::new();
    for &((ay, ax), (by, bx)) in XTRANS_EXCHANGE.iter() {
        let d = (ay as i32 - by as i32).abs() + (ax as i32 - bx as i32).abs();
        assert_eq!(d, 1, "swap {:?} <-> {:?} is not 4-adjacent", (ay, ax), (by, bx));
        assert!(seen.insert((ay, ax)) && seen.insert((by, bx)), "position reused");
    }
}

#[test]
fn xtrans_packing_preserves_each_tile_multiset() {
    let (w, h) = (12, 12);
    let data: Vec<u16> = (0..(w * h) as u16).collect();
    let m = Mosaic::new(w, h, Cfa::XTrans, data).unwrap();
    let p = pack(&m, Arrangement::XTrans9).unwrap();
    let mut packed = p.data.clone();
    let mut orig = m.data.clone();
    packed.sort_unstable();
    orig.sort_unstable();
    assert_eq!(packed, orig);
}

fn arrangement() -> impl Strategy<Value = Arrangement> {
    prop_oneof![
        Just(Arrangement::BayerPacked4),
        Just(Arrangement::BayerMasked),
        Just(Arrangement::XTrans9),
        Just(Arrangement::XTrans36),
    ]
}

fn mosaic_for(arr: Arrangement) -> impl Strategy<Value = Mosaic<u16>> {
    let step = match arr {
        Arrangement::BayerPacked4 | Arrangement::BayerMasked => 2,
        Arrangement::XTrans9 | Arrangement::XTrans36 => 6,
    };
    (1usize..5, 1usize..5).prop_flat_map(move |(th, tw)| {
        let (h, w) = (th * step, tw * step);
        proptest::collection::vec(any::<u16>(), h * w).prop_map(move |d| Mosaic::new(w, h, arr.cfa(), d).unwrap())
    })
}

proptest! {
    #[test]
    fn unpack_inverts_pack((arr, m) in arrangement().prop_flat_map(|a| (Just(a), mosaic_for(a)))) {
        let p = pack(&m, arr).unwrap();
        prop_assert_eq!(unpack(&p).unwrap(), m);
    }

    #[test]
    fn pack_commutes_with_normalize(
        (arr, m) in arrangement().prop_flat_map(|a| (Just(a), mosaic_for(a))),
        black in 0u16..1000,
    ) {
        let data = m.data.iter().map(|&v| v % 16384).collect();
        let raw = RawMosaic::new(m.width, m.height, data, meta(arr.cfa(), black, 16383)).unwrap();
        let lhs = pack(&normalize(&raw), arr).unwrap();
        let range = (16383 - black) as f32;
        let rhs = pack(&raw.mosaic(), arr).unwrap().map(|dn| (dn as f32 - black as f32).max(0.0) / range);
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn normalize_is_monotone(a in 0u16..=16383, b in 0u16..=16383, black in 0u16..2000) {
        let raw = RawMosaic::new(2, 2, vec![a.min(b), a.max(b), 0, 0], meta(Cfa::Bayer, black, 16383)).unwrap();
        let n = normalize(&raw);
        prop_assert!(n.data[0] <= n.data[1]);
    }

    #[test]
    fn amplify_is_monotone_in_value_and_ratio(
        v in proptest::collection::vec(0.0f32..1.0, 8),
        r1 in 1.0f64..400.0,
        dr in 0.0f64..400.0,
    ) {
        let m = Mosaic::new(4, 2, Cfa::Bayer, v.clone()).unwrap();
        let a1 = amplify(&m, ratio(r1));
        let a2 = amplify(&m, ratio(r1 + dr));
        for (x, y) in a1.data.iter().zip(&a2.data) {
            prop_assert!(x <= y);
        }
        let mean = |d: &[f32]| d.iter().map(|&x| x as f64).sum::<f64>();
        prop_assert!(mean(&a2.data) >= mean(&a1.data));
        let mut sorted = v.clone();
        sorted.sort_by(f32::total_cmp);
        let s = amplify(&Mosaic::new(4, 2, Cfa::Bayer, sorted).unwrap(), ratio(r1));
        prop_assert!(s.data.windows(2).all(|w| w[0] <= w[1]));
    }
}

fn noiseless(cfa: Cfa, r: f64, seed: u64) -> SimConfig {
    let mut cfg = SimConfig::desk(cfa, ratio(r), seed);
    cfg.read_noise_dn = 0.0;
    cfg.full_well_photons = 1e9;
    cfg.sensor.black_level = 0;
    cfg.sensor.white_level = 65535;
    cfg
}

#[test]
fn noiseless_limit_recovers_the_linear_mosaic() {
    for cfa in [Cfa::Bayer, Cfa::XTrans] {
        let scene = render_scene(21, 36, 24);
        let pair = simulate_pair(&scene, &noiseless(cfa, 10.0, 1)).unwrap();
        let got = amplify(&normalize(&pair.input), pair.ratio);
        let clean = sensor_mosaic(&scene, cfa, DEFAULT_WB_GAINS).unwrap();
        let worst = got.data.iter().zip(&clean.data).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
        assert!(worst < 1e-3, "{cfa:?}: max error {worst}");
    }
}

#[test]
fn linearize_inverts_the_display_gamma() {
    let scene = render_scene(2, 8, 8);
    let lin = linearize(&scene);
    for (s, l) in scene.data().iter().zip(lin.data()) {
        assert!(((*s as f64).powf(2.2) - *l as f64).abs() < 1e-6);
    }
}

/// Constant patch with read noise off: variance of the normalized input is
/// the Poisson variance `mean / (ratio * full_well)` scaled back to [0, 1].
#[test]
fn shot_noise_variance_matches_poisson() {
    let level = 0.5f32;
    let scene = nightraw::RgbImage::from_fn(128, 128, |_, _| [level; 3]);
    let r = 50.0;
    let mut cfg = SimConfig::desk(Cfa::Bayer, ratio(r), 4);
    cfg.read_noise_dn = 0.0;
    cfg.sensor.black_level = 0;
    cfg.sensor.white_level = 65535;
    cfg.full_well_photons = 5e5;
    let pair = simulate_pair(&scene, &cfg).unwrap();
    let n = normalize(&pair.input);
    let clean = sensor_mosaic(&scene, Cfa::Bayer, DEFAULT_WB_GAINS).unwrap();
    // green sites only, so every sample has the same expected value
    let green: Vec<f64> = (0..128)
        .flat_map(|y| (0..128).map(move |x| (y, x)))
        .filter(|&(y, x)| (y + x) % 2 == 1)
        .map(|(y, x)| n.get(y, x) as f64)
        .collect();
    assert!(green.len() >= 8192);
    let lin = clean.get(0, 1) as f64;
    let m = green.iter().sum::<f64>() / green.len() as f64;
    let var = green.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (green.len() - 1) as f64;
    let expected = lin / r / cfg.full_well_photons;
    assert!((var / expected - 1.0).abs() < 0.2, "variance {var:e} vs {expected:e}");
}

#[test]
fn amplified_input_is_unbiased_within_three_standard_errors() {
    let scene = render_scene(30, 32, 32);
    let r = 100.0;
    let mut cfg = SimConfig::desk(Cfa::Bayer, ratio(r), 77);
    cfg.sensor.black_level = 2048;
    cfg.sensor.white_level = 65535;
    let frames = simulate_burst(&scene, &cfg, 200).unwrap();
    let clean = sensor_mosaic(&scene, Cfa::Bayer, DEFAULT_WB_GAINS).unwrap();
    // keep the means away from the zero clip of normalize
    let mut within = 0;
    let mut total = 0;
    for i in 0..clean.data.len() {
        let xs: Vec<f64> = frames.iter().map(|f| (normalize(f).data[i] as f64) * r).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
        let se = sd / (xs.len() as f64).sqrt();
        total += 1;
        within += usize::from((m - clean.data[i] as f64).abs() <= 3.0 * se + 1e-3);
    }
    // about 99.7% expected inside 3 SE
    assert!(within as f64 / total as f64 > 0.98, "{within}/{total}");
}

#[test]
fn snr_falls_as_ratio_rises() {
    let scene = render_scene(40, 48, 48);
    let clean = sensor_mosaic(&scene, Cfa::Bayer, DEFAULT_WB_GAINS).unwrap();
    let snr = |r: f64| {
        let mut acc = 0.0;
        for seed in 0..4 {
            let pair = simulate_pair(&scene, &SimConfig::desk(Cfa::Bayer, ratio(r), seed)).unwrap();
            let n = normalize(&pair.input);
            let (mut sig, mut err) = (0.0f64, 0.0f64);
            for (v, c) in n.data.iter().zip(&clean.data) {
                let c = *c as f64 / r;
                sig += c * c;
                err += (*v as f64 - c).powi(2);
            }
            acc += 10.0 * (sig / err).log10();
        }
        acc / 4.0
    };
    let values: Vec<f64> = [1.0, 10.0, 50.0, 100.0, 300.0].iter().map(|&r| snr(r)).collect();
    assert!(values.windows(2).all(|w| w[0] > w[1]), "{values:?}");
}

#[test]
fn simulation_is_bit_deterministic_and_seeded() {
    let scene = render_scene(5, 24, 24);
    let cfg = SimConfig::desk(Cfa::XTrans, ratio(250.0), 3);
    assert_eq!(simulate_pair(&scene, &cfg).unwrap(), simulate_pair(&scene, &cfg).unwrap());
    let other = SimConfig { seed: 4, ..cfg.clone() };
    assert_ne!(simulate_pair(&scene, &cfg).unwrap().input, simulate_pair(&scene, &other).unwrap().input);
    assert_ne!(render_scene(5, 24, 24), render_scene(6, 24, 24));
}
