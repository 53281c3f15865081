//! Raw sensor data model and the preprocessing front end: black-level
//! normalization, amplification and CFA-aware packing.

mod pack;

pub use pack::{
    mask_bayer, pack, pack_bayer, pack_xtrans36, pack_xtrans9, unpack, Arrangement, PackedPlanes,
    BAYER_CHANNEL_OFFSETS, XTRANS9_CHANNEL_COLORS, XTRANS_EXCHANGE,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Color {
    Red = 0,
    Green = 1,
    Blue = 2,
}

impl Color {
    pub fn index(self) -> usize {
        self as usize
    }
}

/// Standard X-Trans 6x6 layout, rows top to bottom.
pub const XTRANS_PATTERN: [[Color; 6]; 6] = {
    use Color::{Blue as B, Green as G, Red as R};
    [
        [G, B, G, G, R, G],
        [R, G, R, B, G, B],
        [G, B, G, G, R, G],
        [G, R, G, G, B, G],
        [B, G, B, R, G, R],
        [G, R, G, G, B, G],
    ]
};

/// Color filter array layout. Bayer is always RGGB phase; other phases are
/// cropped into RGGB at ingest with [`RawMosaic::from_bayer_phase`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cfa {
    Bayer,
    XTrans,
}

impl Cfa {
    /// Spatial period of the pattern in pixels.
    pub fn period(self) -> usize {
        match self {
            Cfa::Bayer => 2,
            Cfa::XTrans => 6,
        }
    }

    #[inline]
    pub fn color_at(self, y: usize, x: usize) -> Color {
        match self {
            Cfa::Bayer => match (y & 1, x & 1) {
                (0, 0) => Color::Red,
                (1, 1) => Color::Blue,
                _ => Color::Green,
            },
            Cfa::XTrans => XTRANS_PATTERN[y % 6][x % 6],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Cfa::Bayer => "bayer",
            Cfa::XTrans => "xtrans",
        }
    }

    pub fn parse(s: &str) -> Option<Cfa> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bayer" | "rggb" | "bayer_rggb" => Some(Cfa::Bayer),
            "xtrans" | "x-trans" => Some(Cfa::XTrans),
            _ => None,
        }
    }

    pub fn check_dims(self, width: usize, height: usize) -> Result<()> {
        let p = self.period();
        if width == 0 || height == 0 || !width.is_multiple_of(p) || !height.is_multiple_of(p) {
            return Err(Error::InvalidDims(format!(
                "{} mosaic needs width and height divisible by {p}, got {width}x{height}",
                self.name()
            )));
        }
        Ok(())
    }
}

/// Position of the red site inside the 2x2 Bayer cell of a source file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BayerPhase {
    Rggb,
    Grbg,
    Gbrg,
    Bggr,
}

impl BayerPhase {
    /// (row, column) offset of the first RGGB-aligned pixel.
    fn offset(self) -> (usize, usize) {
        match self {
            BayerPhase::Rggb => (0, 0),
            BayerPhase::Grbg => (0, 1),
            BayerPhase::Gbrg => (1, 0),
            BayerPhase::Bggr => (1, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorMeta {
    pub cfa: Cfa,
    pub black_level: u16,
    pub white_level: u16,
    pub exposure_s: f64,
    /// White balance gains (r, g, b) that map sensor response to neutral.
    pub wb_gains: [f64; 3],
}

impl SensorMeta {
    pub fn validate(&self) -> Result<()> {
        if self.black_level >= self.white_level {
            return Err(Error::InvalidMeta(format!(
                "black level {} must be below white level {}",
                self.black_level, self.white_level
            )));
        }
        if !(self.exposure_s.is_finite() && self.exposure_s > 0.0) {
            return Err(Error::InvalidMeta(format!(
                "exposure must be positive, got {}",
                self.exposure_s
            )));
        }
        if self.wb_gains.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::InvalidMeta(format!(
                "white balance gains must be positive, got {:?}",
                self.wb_gains
            )));
        }
        Ok(())
    }

    pub fn range(&self) -> f32 {
        (self.white_level - self.black_level) as f32
    }
}

/// Raw sensor readings in digital numbers, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMosaic {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u16>,
    pub meta: SensorMeta,
}

impl RawMosaic {
    pub fn new(width: usize, height: usize, data: Vec<u16>, meta: SensorMeta) -> Result<Self> {
        meta.validate()?;
        meta.cfa.check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "raw buffer of length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|&&v| v > meta.white_level) {
            return Err(Error::InvalidMeta(format!(
                "sample {v} exceeds white level {}",
                meta.white_level
            )));
        }
        Ok(RawMosaic {
            width,
            height,
            data,
            meta,
        })
    }

    /// Ingests a Bayer mosaic of any phase by cropping to the RGGB origin and
    /// trimming to even dimensions.
    pub fn from_bayer_phase(
        width: usize,
        height: usize,
        data: &[u16],
        phase: BayerPhase,
        meta: SensorMeta,
    ) -> Result<Self> {
        if meta.cfa != Cfa::Bayer {
            return Err(Error::WrongCfa("phase cropping applies to Bayer only".into()));
        }
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "raw buffer of length {} does not match {width}x{height}",
                data.len()
            )));
        }
        let (oy, ox) = phase.offset();
        let h = height.saturating_sub(oy) & !1;
        let w = width.saturating_sub(ox) & !1;
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h {
            let row = (y + oy) * width + ox;
            out.extend_from_slice(&data[row..row + w]);
        }
        RawMosaic::new(w, h, out, meta)
    }

    pub fn mosaic(&self) -> Mosaic<u16> {
        Mosaic {
            width: self.width,
            height: self.height,
            cfa: self.meta.cfa,
            data: self.data.clone(),
        }
    }
}

/// Single-plane CFA image with a value type of choice (raw DN or normalized float).
#[derive(Debug, Clone, PartialEq)]
pub struct Mosaic<T> {
    pub width: usize,
    pub height: usize,
    pub cfa: Cfa,
    pub data: Vec<T>,
}

impl<T: Copy> Mosaic<T> {
    pub fn new(width: usize, height: usize, cfa: Cfa, data: Vec<T>) -> Result<Self> {
        cfa.check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "mosaic buffer of length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Mosaic {
            width,
            height,
            cfa,
            data,
        })
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> T {
        self.data[y * self.width + x]
    }

    pub fn map<U>(&self, f: impl Fn(T) -> U) -> Mosaic<U> {
        Mosaic {
            width: self.width,
            height: self.height,
            cfa: self.cfa,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Copies an `h x w` window. The origin must sit on the CFA period so the
    /// crop keeps the same phase.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Mosaic<T>> {
        let p = self.cfa.period();
        if !y0.is_multiple_of(p) || !x0.is_multiple_of(p) {
            return Err(Error::InvalidDims(format!(
                "crop origin ({y0},{x0}) not aligned to CFA period {p}"
            )));
        }
        if y0 + h > self.height || x0 + w > self.width {
            return Err(Error::InvalidDims(format!(
                "crop {h}x{w} at ({y0},{x0}) exceeds mosaic {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + w]);
        }
        Mosaic::new(w, h, self.cfa, data)
    }
}

/// Exposure ratio between reference and input, applied as a gain.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct AmplificationRatio(f64);

impl AmplificationRatio {
    pub fn new(ratio: f64) -> Result<Self> {
        if !ratio.is_finite() || ratio < 1.0 {
            return Err(Error::InvalidRatio(ratio));
        }
        Ok(AmplificationRatio(ratio))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Black-level subtraction and scaling to `[0, 1]`. Values below the black
/// level clip to zero.
pub fn normalize(raw: &RawMosaic) -> Mosaic<f32> {
    let black = raw.meta.black_level as f32;
    let range = raw.meta.range();
    Mosaic {
        width: raw.width,
        height: raw.height,
        cfa: raw.meta.cfa,
        data: raw
            .data
            .iter()
            .map(|&dn| (dn as f32 - black).max(0.0) / range)
            .collect(),
    }
}

/// Scales normalized data by the amplification ratio, saturating at 1.
pub fn amplify(mosaic: &Mosaic<f32>, ratio: AmplificationRatio) -> Mosaic<f32> {
    let r = ratio.get() as f32;
    mosaic.map(|v| (v * r).min(1.0))
}
