use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nightraw::models::{forward, InputLayout, ModelKind, ModelSpec, Preset, Weights};
use nightraw::nn::{Eager, Tensor};
use nightraw::raw::{AmplificationRatio, Arrangement, Cfa};
use nightraw::sim::{simulate_dataset, DatasetConfig};
use nightraw::train::{
    dihedral, train, AblationReport, AblationRow, Dataset, Dihedral, Split, TrainConfig, ABLATION_ROWS,
};

fn run(spec: &ModelSpec, w: &[Tensor<f64>], x: Tensor<f64>) -> Tensor<f64> {
    let params: Vec<Rc<Tensor<f64>>> = w.iter().cloned().map(Rc::new).collect();
    let y = forward(spec, &mut Eager, &params, &Rc::new(x)).unwrap();
    (*y).clone()
}

/// Transforming the input and every 3x3 kernel by the same flip or rotation
/// transforms the output the same way; the sRGB models have no sub-pixel
/// layer, so the check is direct.
fn assert_equivariant(spec: ModelSpec, size: usize, tol: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut w = Weights::<f64>::init(&spec, 2).unwrap();
    for t in w.tensors_mut() {
        for v in t.data_mut() {
            *v += rng.random_range(-0.05..0.05);
        }
    }
    let x = Tensor::new(&[1, 3, size, size], (0..3 * size * size).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
    let y = run(&spec, w.tensors(), x.clone());
    for t in Dihedral::all() {
        // conv weights are [out, in, k, k] and transposed ones [in, out, k, k]; both
        // carry the kernel in the last two dims
        let wt: Vec<Tensor<f64>> = w
            .tensors()
            .iter()
            .map(|p| if p.shape().len() == 4 { dihedral(p, t).unwrap() } else { p.clone() })
            .collect();
        let yt = run(&spec, &wt, dihedral(&x, t).unwrap());
        let expect = dihedral(&y, t).unwrap();
        let worst = yt.data().iter().zip(expect.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < tol, "{t:?}: {worst}");
    }
}

#[test]
fn can_is_equivariant_under_flips_and_rotations() {
    let spec = ModelSpec {
        base_width: 4,
        depth: 3,
        ..ModelSpec::preset(ModelKind::Can, InputLayout::Srgb, Preset::Desk)
    };
    assert_equivariant(spec, 12, 1e-12);
}

#[test]
fn unet_is_equivariant_under_flips_and_rotations() {
    // aligned 2x2 pooling windows map onto each other when the side is a multiple of 4
    let spec = ModelSpec {
        base_width: 3,
        depth: 2,
        ..ModelSpec::preset(ModelKind::UNet, InputLayout::Srgb, Preset::Desk)
    };
    assert_equivariant(spec, 8, 1e-12);
}

#[test]
fn learning_rate_switches_at_the_configured_epoch() {
    let desk = TrainConfig::desk(0);
    assert_eq!(desk.lr_at(0), desk.lr_initial);
    assert_eq!(desk.lr_at(desk.lr_switch_epoch - 1), desk.lr_initial);
    assert_eq!(desk.lr_at(desk.lr_switch_epoch), desk.lr_after);
    let paper = TrainConfig::paper(0);
    assert_eq!((paper.crop, paper.epochs, paper.batch), (512, 4000, 1));
    assert_eq!(paper.lr_at(1999), 1e-4);
    assert_eq!(paper.lr_at(2000), 1e-5);
    assert_eq!(paper.lr_at(3999), 1e-5);
    let mut bad = desk.clone();
    bad.batch = 0;
    assert!(bad.validate().is_err());
}

fn dataset_cfg(scenes: usize, test: usize, frames: usize, seed: u64) -> DatasetConfig {
    DatasetConfig {
        scenes,
        test_scenes: test,
        width: 32,
        height: 32,
        ratio: AmplificationRatio::new(100.0).unwrap(),
        cfa: Cfa::Bayer,
        frames,
        seed,
    }
}

#[test]
fn simulated_dataset_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let entries = simulate_dataset(dir.path(), &dataset_cfg(5, 2, 3, 7)).unwrap();
    assert_eq!(entries.len(), 5);
    assert_eq!(entries.iter().filter(|(_, s)| *s == Split::Test).count(), 2);
    let train_set = Dataset::load(dir.path(), Split::Train).unwrap();
    let test_set = Dataset::load(dir.path(), Split::Test).unwrap();
    assert_eq!((train_set.len(), test_set.len()), (3, 2));
    for s in train_set.samples.iter().chain(&test_set.samples) {
        assert_eq!(s.frames().count(), 3);
        assert_eq!(s.ratio.get(), 100.0);
        assert_eq!((s.input.width, s.input.height), (32, 32));
        assert_eq!((s.reference.width(), s.reference.height()), (32, 32));
    }
    // scene i does not depend on how many scenes the dataset holds
    let small = tempfile::tempdir().unwrap();
    simulate_dataset(small.path(), &dataset_cfg(2, 0, 3, 7)).unwrap();
    let small_set = Dataset::load(small.path(), Split::Train).unwrap();
    assert_eq!(small_set.samples[..2], train_set.samples[..2]);
}

#[test]
fn dataset_config_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    assert!(simulate_dataset(dir.path(), &dataset_cfg(2, 3, 1, 0)).is_err());
    assert!(simulate_dataset(dir.path(), &dataset_cfg(2, 0, 0, 0)).is_err());
    let mut odd = dataset_cfg(2, 0, 1, 0);
    odd.width = 33;
    assert!(simulate_dataset(dir.path(), &odd).is_err());
}

#[test]
fn training_runs_one_iteration_per_minibatch() {
    let dir = tempfile::tempdir().unwrap();
    simulate_dataset(dir.path(), &dataset_cfg(5, 0, 1, 3)).unwrap();
    let data = Dataset::load(dir.path(), Split::Train).unwrap();
    let spec = ModelSpec {
        base_width: 4,
        depth: 1,
        ..ModelSpec::preset(ModelKind::UNet, InputLayout::Raw(Arrangement::BayerPacked4), Preset::Desk)
    };
    let mut cfg = TrainConfig::desk(0);
    cfg.crop = 16;
    cfg.epochs = 3;
    cfg.lr_switch_epoch = 2;
    let single = train(&data, &spec, &cfg).unwrap();
    assert_eq!(single.losses.len(), 15);
    cfg.batch = 2;
    let paired = train(&data, &spec, &cfg).unwrap();
    assert_eq!(paired.losses.len(), 9);
    assert!(paired.losses.iter().chain(&single.losses).all(|l| l.is_finite() && *l >= 0.0));
    assert!(paired.weights.check_spec(&spec).is_ok());
}

#[test]
fn ablation_table_lists_every_condition() {
    assert_eq!(ABLATION_ROWS.len(), 8);
    let report = AblationReport {
        rows: ABLATION_ROWS
            .iter()
            .map(|&(name, sony, fuji)| AblationRow {
                name,
                spec: None,
                result: Ok((20.0, 0.5)),
                comparison: None,
                paper_sony: sony,
                paper_fuji: fuji,
            })
            .collect(),
    };
    assert!(report.all_finite());
    let text = report.to_text();
    for (name, sony, fuji) in ABLATION_ROWS {
        let line = text.lines().find(|l| l.starts_with(name)).unwrap();
        assert!(line.contains("20.00/0.500"));
        for cell in [sony, fuji].into_iter().flatten() {
            assert!(line.contains(cell), "{line}");
        }
    }
    assert!(text.contains("28.88/0.787"));
    assert_eq!(report.to_csv().lines().count(), 9);

    let mut broken = report.clone();
    broken.rows[2].result = Err("diverged".into());
    assert!(!broken.all_finite());
    assert!(broken.to_text().contains("FAILED (diverged)"));
}
