//! Netpbm image files and the `key=value` raw metadata sidecar.
//!
//! Raw mosaics are stored as binary PGM (P5) with 16-bit samples, most
//! significant byte first; references and outputs as binary PPM (P6) with
//! 8-bit samples.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::raw::{AmplificationRatio, Cfa, RawMosaic, SensorMeta};

/// Header fields plus the offset of the first sample byte.
struct PnmHeader {
    width: usize,
    height: usize,
    maxval: u32,
    data_offset: usize,
}

fn parse_header(bytes: &[u8], magic: &[u8; 2], path: &Path) -> Result<PnmHeader> {
    let bad = |msg: &str| Error::MalformedImage {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(bad(&format!("expected magic {}", String::from_utf8_lossy(magic))));
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(bad("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(bad("expected a number in header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("header number out of range"))?;
    }
    // exactly one whitespace byte before the raster
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(bad("missing whitespace after maxval"));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(bad("invalid width, height or maxval"));
    }
    Ok(PnmHeader {
        width: width as usize,
        height: height as usize,
        maxval,
        data_offset: pos,
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes 16-bit samples with maxval 65535.
pub fn encode_pgm16(width: usize, height: usize, data: &[u16]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.reserve(data.len() * 2);
    for &v in data {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

/// Returns `(width, height, samples)`; 8-bit files are widened.
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let h = parse_header(bytes, b"P5", path)?;
    let n = h.width * h.height;
    let raster = &bytes[h.data_offset..];
    let data = if h.maxval > 255 {
        if raster.len() < 2 * n {
            return Err(Error::MalformedImage {
                path: path.to_path_buf(),
                msg: format!("expected {} raster bytes, found {}", 2 * n, raster.len()),
            });
        }
        raster[..2 * n]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]))
            .collect()
    } else {
        if raster.len() < n {
            return Err(Error::MalformedImage {
                path: path.to_path_buf(),
                msg: format!("expected {n} raster bytes, found {}", raster.len()),
            });
        }
        raster[..n].iter().map(|&b| b as u16).collect()
    };
    Ok((h.width, h.height, data))
}

pub fn encode_ppm8(img: &RgbImage) -> Vec<u8> {
    let (w, h) = (img.width(), img.height());
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(3 * w * h);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                out.push(quantize8(img.get(c, y, x)));
            }
        }
    }
    out
}

#[inline]
pub fn quantize8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn decode_ppm(bytes: &[u8], path: &Path) -> Result<RgbImage> {
    let h = parse_header(bytes, b"P6", path)?;
    if h.maxval > 255 {
        return Err(Error::MalformedImage {
            path: path.to_path_buf(),
            msg: "only 8-bit PPM is supported".into(),
        });
    }
    let raster = &bytes[h.data_offset..];
    let n = h.width * h.height;
    if raster.len() < 3 * n {
        return Err(Error::MalformedImage {
            path: path.to_path_buf(),
            msg: format!("expected {} raster bytes, found {}", 3 * n, raster.len()),
        });
    }
    let scale = 1.0 / h.maxval as f32;
    let mut img = RgbImage::new(h.width, h.height);
    for (i, px) in raster[..3 * n].chunks_exact(3).enumerate() {
        let (y, x) = (i / h.width, i % h.width);
        img.set_pixel(y, x, [px[0] as f32 * scale, px[1] as f32 * scale, px[2] as f32 * scale]);
    }
    Ok(img)
}

pub fn write_ppm(path: &Path, img: &RgbImage) -> Result<()> {
    write_file(path, &encode_ppm8(img))
}

pub fn read_ppm(path: &Path) -> Result<RgbImage> {
    decode_ppm(&read_file(path)?, path)
}

/// Sidecar contents: sensor metadata plus the amplification ratio of the pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSidecar {
    pub meta: SensorMeta,
    pub ratio: AmplificationRatio,
}

pub fn encode_sidecar(s: &RawSidecar) -> String {
    let m = &s.meta;
    let mut out = String::new();
    let _ = writeln!(out, "cfa={}", m.cfa.name());
    let _ = writeln!(out, "black_level={}", m.black_level);
    let _ = writeln!(out, "white_level={}", m.white_level);
    let _ = writeln!(out, "exposure_s={}", m.exposure_s);
    let _ = writeln!(out, "ratio={}", s.ratio.get());
    let _ = writeln!(out, "wb_r={}", m.wb_gains[0]);
    let _ = writeln!(out, "wb_g={}", m.wb_gains[1]);
    let _ = writeln!(out, "wb_b={}", m.wb_gains[2]);
    out
}

pub fn decode_sidecar(text: &str, path: &Path) -> Result<RawSidecar> {
    let bad = |msg: String| Error::MalformedMeta {
        path: path.to_path_buf(),
        msg,
    };
    let mut cfa = None;
    let mut black = None;
    let mut white = None;
    let mut exposure = None;
    let mut ratio = None;
    let mut wb = [None; 3];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("line {}: expected key=value", lineno + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        let num = |v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| bad(format!("line {}: `{key}` is not a number", lineno + 1)))
        };
        let int = |v: &str| -> Result<u16> {
            v.parse::<u16>()
                .map_err(|_| bad(format!("line {}: `{key}` is not a 16-bit integer", lineno + 1)))
        };
        match key {
            "cfa" => cfa = Some(Cfa::parse(value).ok_or_else(|| bad(format!("unknown cfa `{value}`")))?),
            "black_level" => black = Some(int(value)?),
            "white_level" => white = Some(int(value)?),
            "exposure_s" => exposure = Some(num(value)?),
            "ratio" => ratio = Some(num(value)?),
            "wb_r" => wb[0] = Some(num(value)?),
            "wb_g" => wb[1] = Some(num(value)?),
            "wb_b" => wb[2] = Some(num(value)?),
            other => return Err(bad(format!("unknown key `{other}`"))),
        }
    }
    let missing = |k: &str| bad(format!("missing key `{k}`"));
    let meta = SensorMeta {
        cfa: cfa.ok_or_else(|| missing("cfa"))?,
        black_level: black.ok_or_else(|| missing("black_level"))?,
        white_level: white.ok_or_else(|| missing("white_level"))?,
        exposure_s: exposure.ok_or_else(|| missing("exposure_s"))?,
        wb_gains: [
            wb[0].ok_or_else(|| missing("wb_r"))?,
            wb[1].ok_or_else(|| missing("wb_g"))?,
            wb[2].ok_or_else(|| missing("wb_b"))?,
        ],
    };
    meta.validate().map_err(|e| bad(e.to_string()))?;
    let ratio = AmplificationRatio::new(ratio.ok_or_else(|| missing("ratio"))?)
        .map_err(|e| bad(e.to_string()))?;
    Ok(RawSidecar { meta, ratio })
}

/// Writes `<stem>.pgm` and `<stem>.meta` next to each other.
pub fn write_raw(pgm: &Path, meta_path: &Path, raw: &RawMosaic, ratio: AmplificationRatio) -> Result<()> {
    write_file(pgm, &encode_pgm16(raw.width, raw.height, &raw.data))?;
    let sidecar = RawSidecar {
        meta: raw.meta.clone(),
        ratio,
    };
    write_file(meta_path, encode_sidecar(&sidecar).as_bytes())
}

pub fn read_sidecar(path: &Path) -> Result<RawSidecar> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::MalformedMeta {
        path: path.to_path_buf(),
        msg: "not UTF-8 text".into(),
    })?;
    decode_sidecar(&text, path)
}

pub fn read_raw(pgm: &Path, meta_path: &Path) -> Result<(RawMosaic, AmplificationRatio)> {
    let sidecar = read_sidecar(meta_path)?;
    let (w, h, data) = decode_pgm(&read_file(pgm)?, pgm)?;
    let raw = RawMosaic::new(w, h, data, sidecar.meta).map_err(|e| Error::MalformedImage {
        path: pgm.to_path_buf(),
        msg: e.to_string(),
    })?;
    Ok((raw, sidecar.ratio))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("test")
    }

    #[test]
    fn pgm_header_and_byte_order() {
        let bytes = encode_pgm16(2, 1, &[0x0102, 0xfffe]);
        assert_eq!(&bytes[..15], b"P5\n2 1\n65535\n\x01\x02");
        assert_eq!(&bytes[15..], &[0xff, 0xfe]);
    }

    #[test]
    fn pgm_accepts_comments_and_8bit() {
        let mut bytes = b"P5\n# made by hand\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 1, 2, 255]);
        let (w, h, d) = decode_pgm(&bytes, p()).unwrap();
        assert_eq!((w, h), (2, 2));
        assert_eq!(d, vec![0, 1, 2, 255]);
    }

    #[test]
    fn truncated_files_are_rejected() {
        let bytes = encode_pgm16(4, 4, &[7; 16]);
        assert!(decode_pgm(&bytes[..bytes.len() - 1], p()).is_err());
        assert!(decode_pgm(b"P6\n1 1\n255\n\0\0\0", p()).is_err());
        assert!(decode_ppm(b"P6\n2 1\n255\n\0\0\0", p()).is_err());
    }

    #[test]
    fn ppm_quantizes() {
        let img = RgbImage::from_fn(2, 1, |_, x| [x as f32, 0.5, 2.0]);
        let bytes = encode_ppm8(&img);
        let back = decode_ppm(&bytes, p()).unwrap();
        assert_eq!(back.pixel(0, 1), [1.0, 128.0 / 255.0, 1.0]);
        assert_eq!(back.pixel(0, 0)[0], 0.0);
    }

    #[test]
    fn sidecar_errors_are_specific() {
        let ok = "cfa=bayer\nblack_level=512\nwhite_level=16383\nexposure_s=0.1\nratio=100\nwb_r=2\nwb_g=1\nwb_b=1.5\n";
        let s = decode_sidecar(ok, p()).unwrap();
        assert_eq!(s.meta.wb_gains, [2.0, 1.0, 1.5]);
        let missing = ok.replace("ratio=100\n", "");
        assert!(decode_sidecar(&missing, p()).unwrap_err().to_string().contains("missing key `ratio`"));
        let unknown = format!("{ok}iso=800\n");
        assert!(decode_sidecar(&unknown, p()).unwrap_err().to_string().contains("unknown key"));
        let bad_ratio = ok.replace("ratio=100", "ratio=0.5");
        assert!(decode_sidecar(&bad_ratio, p()).is_err());
        let bad_cfa = ok.replace("cfa=bayer", "cfa=foveon");
        assert!(decode_sidecar(&bad_cfa, p()).is_err());
    }

    proptest! {
        #[test]
        fn pgm_roundtrip(data in proptest::collection::vec(any::<u16>(), 12)) {
            let bytes = encode_pgm16(4, 3, &data);
            let (w, h, back) = decode_pgm(&bytes, p()).unwrap();
            prop_assert_eq!((w, h), (4, 3));
            prop_assert_eq!(back, data);
        }

        #[test]
        fn sidecar_roundtrip(
            black in 0u16..1000, span in 1u16..60000, exposure in 1e-4f64..100.0,
            ratio in 1.0f64..1000.0, wb in proptest::array::uniform3(0.01f64..10.0), xtrans in any::<bool>(),
        ) {
            let s = RawSidecar {
                meta: SensorMeta {
                    cfa: if xtrans { Cfa::XTrans } else { Cfa::Bayer },
                    black_level: black,
                    white_level: black.saturating_add(span).max(black + 1),
                    exposure_s: exposure,
                    wb_gains: wb,
                },
                ratio: AmplificationRatio::new(ratio).unwrap(),
            };
            let back = decode_sidecar(&encode_sidecar(&s), p()).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
