//! On-disk layout:
//!
//! ```text
//! DIR/manifest.txt              "NNNN train" or "NNNN test" per line
//! DIR/scenes/NNNN/input.pgm     short exposure, 16-bit PGM
//! DIR/scenes/NNNN/input.meta    sensor sidecar (key=value)
//! DIR/scenes/NNNN/input_K.pgm   optional extra burst frames, K = 1, 2, ...
//! DIR/scenes/NNNN/ref.ppm       reference, 8-bit PPM
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::io::{decode_pgm, read_ppm, read_raw, write_ppm, write_raw};
use crate::raw::{AmplificationRatio, RawMosaic};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const SCENES_DIR: &str = "scenes";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
    All,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::All => "all",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            "all" => Some(Split::All),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub input: RawMosaic,
    pub ratio: AmplificationRatio,
    pub reference: RgbImage,
    /// Additional exposures of the same scene (burst), excluding `input`.
    pub extra_frames: Vec<RawMosaic>,
}

impl Sample {
    pub fn frames(&self) -> impl Iterator<Item = &RawMosaic> {
        std::iter::once(&self.input).chain(&self.extra_frames)
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub split: Split,
    pub samples: Vec<Sample>,
}

fn scene_dir(root: &Path, id: &str) -> PathBuf {
    root.join(SCENES_DIR).join(id)
}

/// Writes one scene; `extra_frames` become `input_1.pgm`, `input_2.pgm`, ...
pub fn write_scene(
    root: &Path,
    id: &str,
    input: &RawMosaic,
    ratio: AmplificationRatio,
    reference: &RgbImage,
    extra_frames: &[RawMosaic],
) -> Result<()> {
    let dir = scene_dir(root, id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_raw(&dir.join("input.pgm"), &dir.join("input.meta"), input, ratio)?;
    for (k, f) in extra_frames.iter().enumerate() {
        let pgm = dir.join(format!("input_{}.pgm", k + 1));
        let bytes = crate::io::encode_pgm16(f.width, f.height, &f.data);
        fs::write(&pgm, bytes).map_err(|e| Error::io(&pgm, e))?;
    }
    write_ppm(&dir.join("ref.ppm"), reference)
}

pub fn write_manifest(root: &Path, entries: &[(String, Split)]) -> Result<()> {
    let mut text = String::new();
    for (id, split) in entries {
        text.push_str(&format!("{id} {}\n", split.name()));
    }
    let path = root.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn read_manifest(root: &Path) -> Result<Vec<(String, Split)>> {
    let path = root.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (id, split) = (parts.next(), parts.next().and_then(Split::parse));
        match (id, split, parts.next()) {
            (Some(id), Some(split), None) if split != Split::All => out.push((id.to_string(), split)),
            _ => {
                return Err(Error::Dataset(format!(
                    "{}:{}: expected \"<id> train|test\", got {line:?}",
                    path.display(),
                    n + 1
                )))
            }
        }
    }
    Ok(out)
}

fn load_sample(root: &Path, id: &str) -> Result<Sample> {
    let dir = scene_dir(root, id);
    let (input, ratio) = read_raw(&dir.join("input.pgm"), &dir.join("input.meta"))?;
    let reference = read_ppm(&dir.join("ref.ppm"))?;
    if reference.width() != input.width || reference.height() != input.height {
        return Err(Error::Dataset(format!(
            "scene {id}: reference {}x{} vs raw {}x{}",
            reference.width(),
            reference.height(),
            input.width,
            input.height
        )));
    }
    let mut extra_frames = Vec::new();
    for k in 1.. {
        let pgm = dir.join(format!("input_{k}.pgm"));
        if !pgm.exists() {
            break;
        }
        let bytes = fs::read(&pgm).map_err(|e| Error::io(&pgm, e))?;
        let (w, h, data) = decode_pgm(&bytes, &pgm)?;
        extra_frames.push(RawMosaic::new(w, h, data, input.meta.clone())?);
    }
    Ok(Sample {
        id: id.to_string(),
        input,
        ratio,
        reference,
        extra_frames,
    })
}

impl Dataset {
    /// Loads the scenes of `split` listed in the manifest, in manifest order.
    pub fn load(root: &Path, split: Split) -> Result<Self> {
        let entries = read_manifest(root)?;
        let samples = entries
            .iter()
            .filter(|(_, s)| split == Split::All || *s == split)
            .map(|(id, _)| load_sample(root, id))
            .collect::<Result<Vec<_>>>()?;
        if samples.is_empty() {
            return Err(Error::Dataset(format!(
                "{} lists no {} scenes",
                root.join(MANIFEST_FILE).display(),
                split.name()
            )));
        }
        Ok(Dataset {
            root: root.to_path_buf(),
            split,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}
