use crate::error::Result;
use crate::nn::{Scalar, Tensor};
use crate::raw::{Cfa, Mosaic};

/// One of the eight flips/rotations of a square: optional horizontal flip,
/// then `rot` quarter turns counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dihedral {
    pub flip: bool,
    pub rot: u8,
}

impl Dihedral {
    pub const IDENTITY: Dihedral = Dihedral { flip: false, rot: 0 };

    pub fn all() -> impl Iterator<Item = Dihedral> {
        (0..8u8).map(Dihedral::from_index)
    }

    pub fn from_index(i: u8) -> Dihedral {
        Dihedral {
            flip: i >= 4,
            rot: i % 4,
        }
    }

    /// Output dims for an `h x w` input.
    pub fn output_dims(self, h: usize, w: usize) -> (usize, usize) {
        if self.rot % 2 == 1 {
            (w, h)
        } else {
            (h, w)
        }
    }

    /// Input coordinate that lands on output `(y, x)`, for an `h x w` input.
    pub fn source(self, h: usize, w: usize, y: usize, x: usize) -> (usize, usize) {
        let (mut cy, mut cx) = (y, x);
        for step in (0..self.rot % 4).rev() {
            // width of the image entering this quarter turn
            let wp = if step % 2 == 0 { w } else { h };
            (cy, cx) = (cx, wp - 1 - cy);
        }
        if self.flip {
            cx = w - 1 - cx;
        }
        (cy, cx)
    }
}

/// Transforms a mosaic and finds where its CFA phase matches the original
/// layout again. Returns the transformed values (with the original CFA
/// label, valid only from the returned offset on) and the offset `(oy, ox)`
/// within one period, or `None` if no offset restores the layout.
pub fn transform_mosaic(m: &Mosaic<f32>, t: Dihedral) -> Option<(Mosaic<f32>, (usize, usize))> {
    let (h, w) = (m.height, m.width);
    let (th, tw) = t.output_dims(h, w);
    let p = m.cfa.period();
    let color = |y: usize, x: usize| {
        let (sy, sx) = t.source(h, w, y, x);
        m.cfa.color_at(sy, sx)
    };
    let offset = (0..p)
        .flat_map(|oy| (0..p).map(move |ox| (oy, ox)))
        .find(|&(oy, ox)| {
            oy + p <= th
                && ox + p <= tw
                && (0..p).all(|y| (0..p).all(|x| color(y + oy, x + ox) == m.cfa.color_at(y, x)))
        })?;
    let mut data = Vec::with_capacity(h * w);
    for y in 0..th {
        for x in 0..tw {
            let (sy, sx) = t.source(h, w, y, x);
            data.push(m.get(sy, sx));
        }
    }
    let out = Mosaic {
        width: tw,
        height: th,
        cfa: m.cfa,
        data,
    };
    Some((out, offset))
}

/// Whether every transform maps the layout onto itself up to a shift.
pub fn cfa_closed_under_dihedral(cfa: Cfa) -> bool {
    let p = cfa.period();
    let m = Mosaic {
        width: 2 * p,
        height: 2 * p,
        cfa,
        data: vec![0.0; 4 * p * p],
    };
    Dihedral::all().all(|t| transform_mosaic(&m, t).is_some())
}

fn flip_h<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    let mut out = Vec::with_capacity(x.len());
    for row in x.data().chunks_exact(w) {
        out.extend(row.iter().rev());
    }
    Tensor::new(&[n, c, h, w], out)
}

/// Quarter turn counter-clockwise: `out[y][x] = in[x][w - 1 - y]`.
fn rot90<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    let src = x.data();
    let mut out = Vec::with_capacity(x.len());
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..w {
            for xo in 0..h {
                out.push(src[base + xo * w + (w - 1 - y)]);
            }
        }
    }
    Tensor::new(&[n, c, w, h], out)
}

/// Applies the transform to every plane of `[N, C, H, W]`; channels keep
/// their order.
pub fn dihedral<T: Scalar>(x: &Tensor<T>, t: Dihedral) -> Result<Tensor<T>> {
    let mut y = if t.flip { flip_h(x)? } else { x.clone() };
    for _ in 0..t.rot % 4 {
        y = rot90(&y)?;
    }
    Ok(y)
}
