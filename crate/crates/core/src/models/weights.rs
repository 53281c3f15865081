//! Binary weights file:
//!
//! ```text
//! "SIDW" | version u32 | len u32 | spec descriptor (UTF-8)
//! repeated until EOF: len u32 | name | rank u32 | dims u32 x rank | f32 x prod(dims)
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::network::Weights;
use crate::models::spec::ModelSpec;
use crate::nn::Tensor;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"SIDW";
pub const WEIGHTS_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode_weights(spec: &ModelSpec, weights: &Weights) -> Result<Vec<u8>> {
    weights.check_spec(spec)?;
    let mut out = Vec::with_capacity(64 + 4 * weights.param_count());
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    let desc = spec.descriptor();
    put_u32(&mut out, desc.len());
    out.extend_from_slice(desc.as_bytes());
    for (name, t) in weights.names().iter().zip(weights.tensors()) {
        put_u32(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.shape().len());
        for &d in t.shape() {
            put_u32(&mut out, d);
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::MalformedWeights(format!("truncated while reading {what} at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn text(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)?;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::MalformedWeights(format!("{what} is not UTF-8")))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

/// Parses a weights file and checks the tensors against its own spec.
pub fn decode_weights(bytes: &[u8]) -> Result<(ModelSpec, Weights)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != WEIGHTS_MAGIC {
        return Err(Error::MalformedWeights("missing SIDW magic".into()));
    }
    let version = r.u32("version")?;
    if version != WEIGHTS_VERSION as usize {
        return Err(Error::MalformedWeights(format!("unsupported version {version}")));
    }
    let spec = ModelSpec::parse_descriptor(&r.text("spec descriptor")?)?;
    let (mut names, mut tensors) = (Vec::new(), Vec::new());
    while !r.done() {
        let name = r.text("parameter name")?;
        let rank = r.u32("rank")?;
        if rank > 8 {
            return Err(Error::MalformedWeights(format!("{name}: rank {rank}")));
        }
        let dims = (0..rank).map(|_| r.u32("dims")).collect::<Result<Vec<_>>>()?;
        let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n
            .filter(|&n| n.checked_mul(4).is_some_and(|b| b <= bytes.len()))
            .ok_or_else(|| Error::MalformedWeights(format!("{name}: dims {dims:?} exceed file size")))?;
        let raw = r.take(4 * n, &name)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        tensors.push(Tensor::new(&dims, data)?);
        names.push(name);
    }
    let weights = Weights::from_parts(names, tensors)?;
    weights.check_spec(&spec)?;
    Ok((spec, weights))
}

pub fn save_weights(path: &Path, spec: &ModelSpec, weights: &Weights) -> Result<()> {
    fs::write(path, encode_weights(spec, weights)?).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: &Path) -> Result<(ModelSpec, Weights)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes)
}
