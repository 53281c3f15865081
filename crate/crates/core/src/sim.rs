//! Synthetic paired data: a clean rendered scene serves as the long-exposure
//! reference and a noisy short-exposure raw mosaic is produced from it by a
//! sensor forward model.
//!
//! Forward model per CFA site with color `c`:
//!
//! ```text
//! lin      = scene_c ^ 2.2 / wb_c          (sensor response, [0, 1])
//! photons ~ Poisson(lin / ratio * full_well)
//! dn       = photons / full_well * (white - black) + N(0, read_noise) + black
//! ```
//!
//! rounded and clamped to `[0, white]`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::raw::{AmplificationRatio, Cfa, Mosaic, RawMosaic, SensorMeta};
use crate::train::{write_manifest, write_scene, Split};

/// Display gamma assumed for the reference rendering; the simulator
/// linearizes with this power.
pub const SCENE_GAMMA: f64 = 2.2;
/// Sensor white balance gains. The sensor sees `lin / gain` per channel so the
/// gains restore a neutral rendering.
pub const DEFAULT_WB_GAINS: [f64; 3] = [2.0, 1.0, 1.6];
pub const DEFAULT_FULL_WELL: f64 = 5000.0;
pub const DEFAULT_READ_NOISE_DN: f64 = 4.0;
pub const DEFAULT_WHITE_LEVEL: u16 = 16383;
pub const DEFAULT_BLACK_LEVEL: u16 = 512;
/// Exposure time of the reference; inputs get `REFERENCE_EXPOSURE_S / ratio`.
pub const REFERENCE_EXPOSURE_S: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub ratio: AmplificationRatio,
    /// Photons collected at white level over the reference exposure.
    pub full_well_photons: f64,
    pub read_noise_dn: f64,
    pub sensor: SensorMeta,
    pub seed: u64,
}

impl SimConfig {
    /// Documented desk-scale defaults for the given sensor layout.
    pub fn desk(cfa: Cfa, ratio: AmplificationRatio, seed: u64) -> Self {
        SimConfig {
            ratio,
            full_well_photons: DEFAULT_FULL_WELL,
            read_noise_dn: DEFAULT_READ_NOISE_DN,
            sensor: SensorMeta {
                cfa,
                black_level: DEFAULT_BLACK_LEVEL,
                white_level: DEFAULT_WHITE_LEVEL,
                exposure_s: REFERENCE_EXPOSURE_S / ratio.get(),
                wb_gains: DEFAULT_WB_GAINS,
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sensor.validate()?;
        if !(self.full_well_photons.is_finite() && self.full_well_photons > 0.0) {
            return Err(Error::InvalidParam(format!(
                "full well must be positive, got {}",
                self.full_well_photons
            )));
        }
        if !(self.read_noise_dn.is_finite() && self.read_noise_dn >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "read noise must be non-negative, got {}",
                self.read_noise_dn
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenePair {
    pub reference: RgbImage,
    pub input: RawMosaic,
    pub ratio: AmplificationRatio,
}

/// Seed of burst frame `k`, decorrelated from neighbouring seeds.
pub fn frame_seed(seed: u64, k: usize) -> u64 {
    seed ^ (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn lerp3(a: [f32; 3], b: [f32; 3], t: f32) -> [f32; 3] {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

fn random_color(rng: &mut ChaCha8Rng, lo: f32, hi: f32) -> [f32; 3] {
    [rng.random_range(lo..hi), rng.random_range(lo..hi), rng.random_range(lo..hi)]
}

enum Shape {
    Rect { y0: f32, x0: f32, y1: f32, x1: f32 },
    Disc { cy: f32, cx: f32, r: f32 },
}

impl Shape {
    fn contains(&self, y: f32, x: f32) -> bool {
        match *self {
            Shape::Rect { y0, x0, y1, x1 } => y >= y0 && y < y1 && x >= x0 && x < x1,
            Shape::Disc { cy, cx, r } => (y - cy).powi(2) + (x - cx).powi(2) < r * r,
        }
    }
}

enum Fill {
    Flat([f32; 3]),
    /// Sinusoidal stripes between two colors.
    Stripes { a: [f32; 3], b: [f32; 3], fy: f32, fx: f32 },
}

/// Renders a deterministic test scene: a smooth four-corner color gradient,
/// overlaid with flat and striped rectangles and discs, plus one dark and one
/// bright patch so the value range covers at least `[0.05, 0.95]`.
pub fn render_scene(seed: u64, width: usize, height: usize) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corners: Vec<[f32; 3]> = (0..4).map(|_| random_color(&mut rng, 0.15, 0.85)).collect();
    let (wf, hf) = (width as f32, height as f32);
    let scale = wf.min(hf);

    let n_shapes = 6 + (width * height / 2048).min(24);
    let mut layers: Vec<(Shape, Fill)> = Vec::with_capacity(n_shapes + 2);
    for _ in 0..n_shapes {
        let shape = if rng.random_bool(0.5) {
            let (y0, x0) = (rng.random_range(0.0..hf), rng.random_range(0.0..wf));
            let (h, w) = (
                rng.random_range(0.1..0.45) * scale,
                rng.random_range(0.1..0.45) * scale,
            );
            Shape::Rect { y0, x0, y1: y0 + h, x1: x0 + w }
        } else {
            Shape::Disc {
                cy: rng.random_range(0.0..hf),
                cx: rng.random_range(0.0..wf),
                r: rng.random_range(0.05..0.25) * scale,
            }
        };
        let fill = if rng.random_bool(0.3) {
            Fill::Stripes {
                a: random_color(&mut rng, 0.05, 0.95),
                b: random_color(&mut rng, 0.05, 0.95),
                fy: rng.random_range(-0.8..0.8),
                fx: rng.random_range(-0.8..0.8),
            }
        } else {
            Fill::Flat(random_color(&mut rng, 0.05, 0.95))
        };
        layers.push((shape, fill));
    }

    let side = (scale / 8.0).max(2.0);
    for value in [0.02f32, 0.97] {
        let y0 = rng.random_range(0.0..(hf - side).max(1.0));
        let x0 = rng.random_range(0.0..(wf - side).max(1.0));
        layers.push((
            Shape::Rect { y0, x0, y1: y0 + side, x1: x0 + side },
            Fill::Flat([value; 3]),
        ));
    }

    RgbImage::from_fn(width, height, |y, x| {
        let (yf, xf) = (y as f32 + 0.5, x as f32 + 0.5);
        let (ty, tx) = (yf / hf, xf / wf);
        let top = lerp3(corners[0], corners[1], tx);
        let bottom = lerp3(corners[2], corners[3], tx);
        let mut px = lerp3(top, bottom, ty);
        for (shape, fill) in &layers {
            if shape.contains(yf, xf) {
                px = match *fill {
                    Fill::Flat(c) => c,
                    Fill::Stripes { a, b, fy, fx } => {
                        lerp3(a, b, 0.5 + 0.5 * (fy * yf + fx * xf).sin())
                    }
                };
            }
        }
        px
    })
}

/// Inverse of the reference display gamma.
pub fn linearize(scene: &RgbImage) -> RgbImage {
    scene.map(|v| (v.clamp(0.0, 1.0) as f64).powf(SCENE_GAMMA) as f32)
}

/// Clean sensor response at each CFA site, normalized so white level is 1,
/// for the reference exposure.
pub fn sensor_mosaic(scene: &RgbImage, cfa: Cfa, wb_gains: [f64; 3]) -> Result<Mosaic<f32>> {
    let (w, h) = (scene.width(), scene.height());
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let c = cfa.color_at(y, x).index();
            let lin = (scene.get(c, y, x).clamp(0.0, 1.0) as f64).powf(SCENE_GAMMA);
            data.push((lin / wb_gains[c]) as f32);
        }
    }
    Mosaic::new(w, h, cfa, data)
}

/// Renders the short-exposure raw input for `scene`; the scene itself is the
/// reference.
pub fn simulate_pair(scene: &RgbImage, cfg: &SimConfig) -> Result<ScenePair> {
    cfg.validate()?;
    let meta = &cfg.sensor;
    let clean = sensor_mosaic(scene, meta.cfa, meta.wb_gains)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let read = if cfg.read_noise_dn > 0.0 {
        Some(Normal::new(0.0, cfg.read_noise_dn).map_err(|e| Error::InvalidParam(e.to_string()))?)
    } else {
        None
    };
    let fw = cfg.full_well_photons;
    let range = (meta.white_level - meta.black_level) as f64;
    let black = meta.black_level as f64;
    let white = meta.white_level as f64;
    let inv_ratio = 1.0 / cfg.ratio.get();

    let mut data = Vec::with_capacity(clean.data.len());
    for &lin in &clean.data {
        let mean = lin as f64 * inv_ratio * fw;
        let photons = if mean > 0.0 {
            Poisson::new(mean)
                .map_err(|e| Error::InvalidParam(format!("photon mean {mean}: {e}")))?
                .sample(&mut rng)
        } else {
            0.0
        };
        let mut dn = photons / fw * range + black;
        if let Some(n) = &read {
            dn += n.sample(&mut rng);
        }
        data.push(dn.round().clamp(0.0, white) as u16);
    }
    Ok(ScenePair {
        reference: scene.clone(),
        input: RawMosaic::new(scene.width(), scene.height(), data, meta.clone())?,
        ratio: cfg.ratio,
    })
}

/// `k` independent short exposures of the same static scene.
pub fn simulate_burst(scene: &RgbImage, cfg: &SimConfig, k: usize) -> Result<Vec<RawMosaic>> {
    (0..k)
        .map(|i| {
            let frame_cfg = SimConfig { seed: frame_seed(cfg.seed, i), ..cfg.clone() };
            simulate_pair(scene, &frame_cfg).map(|p| p.input)
        })
        .collect()
}

/// A simulated dataset on disk: `scenes` pairs, the last `test_scenes` of them
/// marked as test, each with `frames` short exposures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub scenes: usize,
    pub test_scenes: usize,
    pub width: usize,
    pub height: usize,
    pub ratio: AmplificationRatio,
    pub cfa: Cfa,
    pub frames: usize,
    pub seed: u64,
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scenes == 0 {
            return Err(Error::InvalidParam("at least one scene is required".into()));
        }
        if self.test_scenes > self.scenes {
            return Err(Error::InvalidParam(format!(
                "{} test scenes requested out of {}",
                self.test_scenes, self.scenes
            )));
        }
        if self.frames == 0 {
            return Err(Error::InvalidParam("frames must be at least 1".into()));
        }
        self.cfa.check_dims(self.width, self.height)
    }
}

/// Scene `i` renders from `frame_seed(seed, 2i)` and its noise draws from
/// `frame_seed(seed, 2i + 1)`, so scenes are independent of the dataset size.
/// Returns the manifest entries.
pub fn simulate_dataset(root: &Path, cfg: &DatasetConfig) -> Result<Vec<(String, Split)>> {
    cfg.validate()?;
    let mut entries = Vec::with_capacity(cfg.scenes);
    for i in 0..cfg.scenes {
        let id = format!("{i:04}");
        let scene = render_scene(frame_seed(cfg.seed, 2 * i), cfg.width, cfg.height);
        let sim = SimConfig::desk(cfg.cfa, cfg.ratio, frame_seed(cfg.seed, 2 * i + 1));
        let pair = simulate_pair(&scene, &sim)?;
        let extra = simulate_burst(&scene, &sim, cfg.frames - 1)?;
        write_scene(root, &id, &pair.input, pair.ratio, &pair.reference, &extra)?;
        let split = if i + cfg.test_scenes >= cfg.scenes { Split::Test } else { Split::Train };
        entries.push((id, split));
    }
    write_manifest(root, &entries)?;
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raw::normalize;

    fn ratio(r: f64) -> AmplificationRatio {
        AmplificationRatio::new(r).unwrap()
    }

    #[test]
    fn scene_is_deterministic_and_seed_dependent() {
        let a = render_scene(1, 48, 32);
        assert_eq!(a, render_scene(1, 48, 32));
        assert_ne!(a, render_scene(2, 48, 32));
    }

    #[test]
    fn scene_range_covers_dark_and_bright() {
        for seed in 0..8 {
            let s = render_scene(seed, 64, 64);
            let lo = s.data().iter().cloned().fold(f32::INFINITY, f32::min);
            let hi = s.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            assert!(lo <= 0.05 && hi >= 0.95, "seed {seed}: [{lo}, {hi}]");
            assert!(s.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let scene = render_scene(3, 32, 32);
        let cfg = SimConfig::desk(Cfa::Bayer, ratio(100.0), 9);
        assert_eq!(simulate_pair(&scene, &cfg).unwrap(), simulate_pair(&scene, &cfg).unwrap());
    }

    #[test]
    fn unit_ratio_without_noise_matches_within_quantization() {
        let scene = render_scene(4, 24, 24);
        let mut cfg = SimConfig::desk(Cfa::XTrans, ratio(1.0), 0);
        cfg.read_noise_dn = 0.0;
        cfg.full_well_photons = 1e12;
        let pair = simulate_pair(&scene, &cfg).unwrap();
        let clean = sensor_mosaic(&scene, Cfa::XTrans, cfg.sensor.wb_gains).unwrap();
        let got = normalize(&pair.input);
        let half_dn = 0.5 / cfg.sensor.range() as f64;
        for (g, c) in got.data.iter().zip(&clean.data) {
            assert!(((*g - *c) as f64).abs() <= half_dn + 1e-6);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = SimConfig::desk(Cfa::Bayer, ratio(100.0), 0);
        cfg.full_well_photons = 0.0;
        assert!(simulate_pair(&render_scene(0, 8, 8), &cfg).is_err());
    }

    #[test]
    fn burst_frames_differ() {
        let scene = render_scene(5, 16, 16);
        let cfg = SimConfig::desk(Cfa::Bayer, ratio(100.0), 1);
        let frames = simulate_burst(&scene, &cfg, 3).unwrap();
        assert_ne!(frames[0], frames[1]);
        assert_ne!(frames[1], frames[2]);
    }
}
