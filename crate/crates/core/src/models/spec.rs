use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raw::{Arrangement, Cfa};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    UNet,
    Can,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::UNet => "unet",
            ModelKind::Can => "can",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "unet" => Some(ModelKind::UNet),
            "can" => Some(ModelKind::Can),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    Desk,
    Paper,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Desk => "desk",
            Preset::Paper => "paper",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "desk" => Some(Preset::Desk),
            "paper" => Some(Preset::Paper),
            _ => None,
        }
    }
}

/// What the network sees: one of the packed raw arrangements, or the
/// processed sRGB output of the classic pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InputLayout {
    Raw(Arrangement),
    Srgb,
}

impl InputLayout {
    pub fn in_channels(self) -> usize {
        match self {
            InputLayout::Raw(a) => a.channels(),
            InputLayout::Srgb => 3,
        }
    }

    /// Upscaling factor of the sub-pixel layer; 1 means no shuffle.
    pub fn shuffle_factor(self) -> usize {
        match self {
            InputLayout::Raw(a) => a.factor(),
            InputLayout::Srgb => 1,
        }
    }

    /// Channels of the last convolution: three colors per output sub-pixel.
    pub fn out_channels(self) -> usize {
        let r = self.shuffle_factor();
        3 * r * r
    }

    /// CFA the input raw must have; sRGB input accepts either.
    pub fn cfa(self) -> Option<Cfa> {
        match self {
            InputLayout::Raw(a) => Some(a.cfa()),
            InputLayout::Srgb => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InputLayout::Raw(a) => a.name(),
            InputLayout::Srgb => "srgb",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        if s == "srgb" {
            return Some(InputLayout::Srgb);
        }
        Arrangement::parse(s).map(InputLayout::Raw)
    }
}

/// Architecture descriptor. For the U-net `depth` counts pooling steps (the
/// bottleneck sits below the last one, at width `base_width << depth`); for
/// the CAN it counts dilated layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input: InputLayout,
    pub base_width: usize,
    pub depth: usize,
    pub preset: Preset,
}

/// One learnable tensor of the layer table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ModelSpec {
    /// Widths and depths of the presets (declared approximations).
    pub fn preset(kind: ModelKind, input: InputLayout, preset: Preset) -> Self {
        let (base_width, depth) = match (kind, preset) {
            (ModelKind::UNet, Preset::Desk) => (16, 3),
            (ModelKind::UNet, Preset::Paper) => (32, 5),
            (ModelKind::Can, Preset::Desk) => (24, 6),
            (ModelKind::Can, Preset::Paper) => (32, 8),
        };
        ModelSpec {
            kind,
            input,
            base_width,
            depth,
            preset,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_width == 0 {
            return Err(Error::InvalidParam("base width must be positive".into()));
        }
        let min_depth = match self.kind {
            ModelKind::UNet => 1,
            ModelKind::Can => 2,
        };
        if self.depth < min_depth {
            return Err(Error::InvalidParam(format!(
                "{} depth must be at least {min_depth}, got {}",
                self.kind.name(),
                self.depth
            )));
        }
        if self.kind == ModelKind::UNet && self.depth > 12 {
            return Err(Error::InvalidParam(format!("U-net depth {} is too large", self.depth)));
        }
        Ok(())
    }

    /// Spatial dims of the network input must be multiples of this.
    pub fn spatial_multiple(&self) -> usize {
        match self.kind {
            ModelKind::UNet => 1 << self.depth,
            ModelKind::Can => 1,
        }
    }

    /// Dilations of the CAN 3x3 layers in order, including the final
    /// dilation-1 layer.
    pub fn can_dilations(&self) -> Vec<usize> {
        let mut d: Vec<usize> = (0..self.depth).map(|l| 1 << l).collect();
        d.push(1);
        d
    }

    /// Ordered parameter names and shapes. Conv weights are
    /// `[out, in, k, k]`, transposed conv weights `[in, out, 2, 2]`.
    pub fn layer_table(&self) -> Vec<ParamInfo> {
        let mut t = Vec::new();
        let mut conv = |name: String, cin: usize, cout: usize, k: usize| {
            let shape = if name.ends_with(".up") {
                vec![cin, cout, k, k]
            } else {
                vec![cout, cin, k, k]
            };
            t.push(ParamInfo {
                name: format!("{name}.weight"),
                shape,
            });
            t.push(ParamInfo {
                name: format!("{name}.bias"),
                shape: vec![cout],
            });
        };
        let cin = self.input.in_channels();
        let w = self.base_width;
        match self.kind {
            ModelKind::UNet => {
                let width = |l: usize| w << l;
                for l in 0..=self.depth {
                    let prev = if l == 0 { cin } else { width(l - 1) };
                    conv(format!("enc{l}.conv1"), prev, width(l), 3);
                    conv(format!("enc{l}.conv2"), width(l), width(l), 3);
                }
                for l in (0..self.depth).rev() {
                    conv(format!("dec{l}.up"), width(l + 1), width(l), 2);
                    conv(format!("dec{l}.conv1"), 2 * width(l), width(l), 3);
                    conv(format!("dec{l}.conv2"), width(l), width(l), 3);
                }
                conv("head".into(), width(0), self.input.out_channels(), 1);
            }
            ModelKind::Can => {
                for l in 0..=self.depth {
                    let prev = if l == 0 { cin } else { w };
                    conv(format!("can{l}"), prev, w, 3);
                }
                conv("head".into(), w, self.input.out_channels(), 1);
            }
        }
        t
    }

    pub fn param_count(&self) -> usize {
        self.layer_table().iter().map(|p| p.shape.iter().product::<usize>()).sum()
    }

    /// FNV-1a over the layer table; equal hashes mean interchangeable weights.
    pub fn structural_hash(&self) -> u64 {
        structural_hash(self.layer_table().iter().map(|p| (p.name.as_str(), p.shape.as_slice())))
    }

    /// `kind=unet;input=bayer4;base_width=16;depth=3;preset=desk`
    pub fn descriptor(&self) -> String {
        format!(
            "kind={};input={};base_width={};depth={};preset={}",
            self.kind.name(),
            self.input.name(),
            self.base_width,
            self.depth,
            self.preset.name()
        )
    }

    pub fn parse_descriptor(s: &str) -> Result<Self> {
        let bad = |msg: String| Error::MalformedWeights(format!("spec descriptor {s:?}: {msg}"));
        let (mut kind, mut input, mut width, mut depth, mut preset) = (None, None, None, None, None);
        for field in s.split(';') {
            let (k, v) = field.split_once('=').ok_or_else(|| bad(format!("field {field:?} lacks '='")))?;
            match k {
                "kind" => kind = Some(ModelKind::parse(v).ok_or_else(|| bad(format!("unknown kind {v:?}")))?),
                "input" => input = Some(InputLayout::parse(v).ok_or_else(|| bad(format!("unknown input {v:?}")))?),
                "base_width" => width = Some(v.parse().map_err(|_| bad(format!("bad base_width {v:?}")))?),
                "depth" => depth = Some(v.parse().map_err(|_| bad(format!("bad depth {v:?}")))?),
                "preset" => preset = Some(Preset::parse(v).ok_or_else(|| bad(format!("unknown preset {v:?}")))?),
                _ => return Err(bad(format!("unknown key {k:?}"))),
            }
        }
        let spec = ModelSpec {
            kind: kind.ok_or_else(|| bad("missing kind".into()))?,
            input: input.ok_or_else(|| bad("missing input".into()))?,
            base_width: width.ok_or_else(|| bad("missing base_width".into()))?,
            depth: depth.ok_or_else(|| bad("missing depth".into()))?,
            preset: preset.ok_or_else(|| bad("missing preset".into()))?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.descriptor())
    }
}

pub(crate) fn structural_hash<'a>(entries: impl Iterator<Item = (&'a str, &'a [usize])>) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    for (name, shape) in entries {
        feed(name.as_bytes());
        feed(&[0]);
        for &d in shape {
            feed(&(d as u64).to_le_bytes());
        }
        feed(&[0xff]);
    }
    h
}
