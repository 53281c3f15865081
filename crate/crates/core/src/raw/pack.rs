use serde::{Deserialize, Serialize};

use super::{Cfa, Color, Mosaic};
use crate::error::{Error, Result};

/// How CFA samples are laid out as network input channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arrangement {
    /// RGGB cells packed into 4 channels at half resolution.
    BayerPacked4,
    /// 4 full-resolution channels, zero where a site belongs to another channel.
    BayerMasked,
    /// X-Trans tiles exchanged into a 3x3-periodic pattern, 9 channels at 1/3 resolution.
    XTrans9,
    /// X-Trans 6x6 tiles packed as-is into 36 channels at 1/6 resolution.
    XTrans36,
}

impl Arrangement {
    pub fn channels(self) -> usize {
        match self {
            Arrangement::BayerPacked4 | Arrangement::BayerMasked => 4,
            Arrangement::XTrans9 => 9,
            Arrangement::XTrans36 => 36,
        }
    }

    /// Spatial reduction factor from mosaic to planes.
    pub fn factor(self) -> usize {
        match self {
            Arrangement::BayerPacked4 => 2,
            Arrangement::BayerMasked => 1,
            Arrangement::XTrans9 => 3,
            Arrangement::XTrans36 => 6,
        }
    }

    pub fn cfa(self) -> Cfa {
        match self {
            Arrangement::BayerPacked4 | Arrangement::BayerMasked => Cfa::Bayer,
            Arrangement::XTrans9 | Arrangement::XTrans36 => Cfa::XTrans,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Arrangement::BayerPacked4 => "bayer4",
            Arrangement::BayerMasked => "bayer-masked",
            Arrangement::XTrans9 => "xtrans9",
            Arrangement::XTrans36 => "xtrans36",
        }
    }

    pub fn parse(s: &str) -> Option<Arrangement> {
        match s {
            "bayer4" => Some(Arrangement::BayerPacked4),
            "bayer-masked" => Some(Arrangement::BayerMasked),
            "xtrans9" => Some(Arrangement::XTrans9),
            "xtrans36" => Some(Arrangement::XTrans36),
            _ => None,
        }
    }
}

/// (row, column) offsets of the R, G1, G2, B channels inside an RGGB cell.
pub const BAYER_CHANNEL_OFFSETS: [(usize, usize); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];

/// Pairs of 4-adjacent positions swapped inside every X-Trans 6x6 tile. The
/// swaps are disjoint, so applying the table twice is the identity. After the
/// exchange the tile reads RGG/GBG/BGR repeated 2x2.
pub const XTRANS_EXCHANGE: [((usize, usize), (usize, usize)); 16] = [
    ((0, 0), (1, 0)),
    ((0, 1), (1, 1)),
    ((0, 3), (0, 4)),
    ((1, 2), (2, 2)),
    ((1, 3), (2, 3)),
    ((1, 4), (1, 5)),
    ((2, 0), (2, 1)),
    ((2, 4), (2, 5)),
    ((3, 0), (3, 1)),
    ((3, 3), (4, 3)),
    ((3, 4), (4, 4)),
    ((4, 0), (5, 0)),
    ((4, 1), (4, 2)),
    ((4, 5), (5, 5)),
    ((5, 1), (5, 2)),
    ((5, 3), (5, 4)),
];

/// Color carried by each XTrans9 channel (3x3 cell position, row-major).
pub const XTRANS9_CHANNEL_COLORS: [Color; 9] = {
    use Color::{Blue as B, Green as G, Red as R};
    [R, G, G, G, B, G, B, G, R]
};

/// For each tile position, the tile position whose sample lands there after the exchange.
fn xtrans_exchange_map() -> [[(usize, usize); 6]; 6] {
    let mut map = [[(0, 0); 6]; 6];
    for (r, row) in map.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            *cell = (r, c);
        }
    }
    for &(a, b) in XTRANS_EXCHANGE.iter() {
        map[a.0][a.1] = b;
        map[b.0][b.1] = a;
    }
    map
}

/// Multi-channel, reduced-resolution view of a mosaic. Data is channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedPlanes<T = f32> {
    pub arrangement: Arrangement,
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Copy> PackedPlanes<T> {
    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn map<U>(&self, f: impl Fn(T) -> U) -> PackedPlanes<U> {
        PackedPlanes {
            arrangement: self.arrangement,
            channels: self.channels,
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

fn require_cfa<T>(m: &Mosaic<T>, cfa: Cfa) -> Result<()> {
    if m.cfa != cfa {
        return Err(Error::WrongCfa(format!(
            "expected a {} mosaic, got {}",
            cfa.name(),
            m.cfa.name()
        )));
    }
    m.cfa.check_dims(m.width, m.height)
}

pub fn pack<T: Copy + Default>(m: &Mosaic<T>, arrangement: Arrangement) -> Result<PackedPlanes<T>> {
    match arrangement {
        Arrangement::BayerPacked4 => pack_bayer(m),
        Arrangement::BayerMasked => mask_bayer(m),
        Arrangement::XTrans9 => pack_xtrans9(m),
        Arrangement::XTrans36 => pack_xtrans36(m),
    }
}

pub fn pack_bayer<T: Copy + Default>(m: &Mosaic<T>) -> Result<PackedPlanes<T>> {
    require_cfa(m, Cfa::Bayer)?;
    let (h, w) = (m.height / 2, m.width / 2);
    let mut data = Vec::with_capacity(m.data.len());
    for &(dy, dx) in BAYER_CHANNEL_OFFSETS.iter() {
        for i in 0..h {
            for j in 0..w {
                data.push(m.get(2 * i + dy, 2 * j + dx));
            }
        }
    }
    Ok(PackedPlanes {
        arrangement: Arrangement::BayerPacked4,
        channels: 4,
        width: w,
        height: h,
        data,
    })
}

pub fn mask_bayer<T: Copy + Default>(m: &Mosaic<T>) -> Result<PackedPlanes<T>> {
    require_cfa(m, Cfa::Bayer)?;
    let n = m.width * m.height;
    let mut data = vec![T::default(); 4 * n];
    for y in 0..m.height {
        for x in 0..m.width {
            let c = (y & 1) * 2 + (x & 1);
            data[c * n + y * m.width + x] = m.get(y, x);
        }
    }
    Ok(PackedPlanes {
        arrangement: Arrangement::BayerMasked,
        channels: 4,
        width: m.width,
        height: m.height,
        data,
    })
}

pub fn pack_xtrans9<T: Copy + Default>(m: &Mosaic<T>) -> Result<PackedPlanes<T>> {
    require_cfa(m, Cfa::XTrans)?;
    let map = xtrans_exchange_map();
    let (h, w) = (m.height / 3, m.width / 3);
    let plane = h * w;
    let mut data = vec![T::default(); 9 * plane];
    for y in 0..m.height {
        let (ty, r) = (y / 6, y % 6);
        for x in 0..m.width {
            let (tx, c) = (x / 6, x % 6);
            let (sr, sc) = map[r][c];
            let ch = (r % 3) * 3 + c % 3;
            let (oy, ox) = (2 * ty + r / 3, 2 * tx + c / 3);
            data[ch * plane + oy * w + ox] = m.get(6 * ty + sr, 6 * tx + sc);
        }
    }
    Ok(PackedPlanes {
        arrangement: Arrangement::XTrans9,
        channels: 9,
        width: w,
        height: h,
        data,
    })
}

pub fn pack_xtrans36<T: Copy + Default>(m: &Mosaic<T>) -> Result<PackedPlanes<T>> {
    require_cfa(m, Cfa::XTrans)?;
    let (h, w) = (m.height / 6, m.width / 6);
    let mut data = Vec::with_capacity(m.data.len());
    for r in 0..6 {
        for c in 0..6 {
            for ty in 0..h {
                for tx in 0..w {
                    data.push(m.get(6 * ty + r, 6 * tx + c));
                }
            }
        }
    }
    Ok(PackedPlanes {
        arrangement: Arrangement::XTrans36,
        channels: 36,
        width: w,
        height: h,
        data,
    })
}

/// Exact inverse of [`pack`] for every arrangement.
pub fn unpack<T: Copy + Default>(p: &PackedPlanes<T>) -> Result<Mosaic<T>> {
    let expected = p.arrangement.channels();
    if p.channels != expected || p.data.len() != p.channels * p.width * p.height {
        return Err(Error::Shape(format!(
            "{} planes need {expected} channels of {}x{}",
            p.arrangement.name(),
            p.height,
            p.width
        )));
    }
    let f = p.arrangement.factor();
    let (height, width) = (p.height * f, p.width * f);
    let mut data = vec![T::default(); width * height];
    match p.arrangement {
        Arrangement::BayerPacked4 => {
            for (c, &(dy, dx)) in BAYER_CHANNEL_OFFSETS.iter().enumerate() {
                for i in 0..p.height {
                    for j in 0..p.width {
                        data[(2 * i + dy) * width + 2 * j + dx] = p.get(c, i, j);
                    }
                }
            }
        }
        Arrangement::BayerMasked => {
            for y in 0..height {
                for x in 0..width {
                    data[y * width + x] = p.get((y & 1) * 2 + (x & 1), y, x);
                }
            }
        }
        Arrangement::XTrans9 => {
            let map = xtrans_exchange_map();
            for y in 0..height {
                let (ty, r) = (y / 6, y % 6);
                for x in 0..width {
                    let (tx, c) = (x / 6, x % 6);
                    let (sr, sc) = map[r][c];
                    let ch = (r % 3) * 3 + c % 3;
                    data[(6 * ty + sr) * width + 6 * tx + sc] = p.get(ch, 2 * ty + r / 3, 2 * tx + c / 3);
                }
            }
        }
        Arrangement::XTrans36 => {
            for r in 0..6 {
                for c in 0..6 {
                    for ty in 0..p.height {
                        for tx in 0..p.width {
                            data[(6 * ty + r) * width + 6 * tx + c] = p.get(r * 6 + c, ty, tx);
                        }
                    }
                }
            }
        }
    }
    Mosaic::new(width, height, p.arrangement.cfa(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raw::XTRANS_PATTERN;
    use proptest::prelude::*;

    fn mosaic(w: usize, h: usize, cfa: Cfa) -> Mosaic<u16> {
        Mosaic::new(w, h, cfa, (0..(w * h) as u16).collect()).unwrap()
    }

    #[test]
    fn bayer_2x2_layout() {
        let m = Mosaic::new(2, 2, Cfa::Bayer, vec![1u16, 2, 3, 4]).unwrap();
        let p = pack_bayer(&m).unwrap();
        assert_eq!((p.channels, p.height, p.width), (4, 1, 1));
        assert_eq!(p.data, vec![1, 2, 3, 4]);
        assert_eq!(unpack(&p).unwrap(), m);
    }

    #[test]
    fn bayer_full_sensor_dims() {
        let m = Mosaic::new(4240, 2832, Cfa::Bayer, vec![0u16; 4240 * 2832]).unwrap();
        let p = pack_bayer(&m).unwrap();
        assert_eq!((p.channels, p.width, p.height), (4, 2120, 1416));
    }

    #[test]
    fn bayer_rejects_odd_and_wrong_cfa() {
        let odd = Mosaic {
            width: 3,
            height: 2,
            cfa: Cfa::Bayer,
            data: vec![0u16; 6],
        };
        assert!(pack_bayer(&odd).is_err());
        assert!(pack_bayer(&mosaic(6, 6, Cfa::XTrans)).is_err());
        assert!(mask_bayer(&mosaic(6, 6, Cfa::XTrans)).is_err());
        assert!(pack_xtrans9(&mosaic(6, 6, Cfa::Bayer)).is_err());
    }

    #[test]
    fn masked_layout() {
        let m = Mosaic::new(2, 2, Cfa::Bayer, vec![1u16, 2, 3, 4]).unwrap();
        let p = mask_bayer(&m).unwrap();
        assert_eq!(p.plane(0), &[1, 0, 0, 0]);
        assert_eq!(p.plane(3), &[0, 0, 0, 4]);
        let big = mosaic(8, 6, Cfa::Bayer);
        let p = mask_bayer(&big).unwrap();
        for y in 0..6 {
            for x in 0..8 {
                let s: u32 = (0..4).map(|c| p.get(c, y, x) as u32).sum();
                assert_eq!(s, big.get(y, x) as u32);
            }
        }
        let zero = Mosaic::new(4, 4, Cfa::Bayer, vec![0.0f32; 16]).unwrap();
        assert!(mask_bayer(&zero).unwrap().data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn exchange_table_is_adjacent_and_disjoint() {
        let mut seen = std::collections::HashSet::new();
        for &(a, b) in XTRANS_EXCHANGE.iter() {
            let d = a.0.abs_diff(b.0) + a.1.abs_diff(b.1);
            assert_eq!(d, 1, "{a:?} {b:?} not 4-adjacent");
            assert!(seen.insert(a) && seen.insert(b));
        }
    }

    #[test]
    fn exchange_makes_pattern_3x3_periodic() {
        let map = xtrans_exchange_map();
        for r in 0..6 {
            for c in 0..6 {
                let (sr, sc) = map[r][c];
                // involution
                assert_eq!(map[sr][sc], (r, c));
                let color = XTRANS_PATTERN[sr][sc];
                assert_eq!(color, XTRANS9_CHANNEL_COLORS[(r % 3) * 3 + c % 3]);
            }
        }
    }

    #[test]
    fn xtrans9_channels_carry_one_color() {
        // Encode each site's color as its value; every channel must be uniform.
        let (w, h) = (12, 18);
        let m = Mosaic::new(
            w,
            h,
            Cfa::XTrans,
            (0..h)
                .flat_map(|y| (0..w).map(move |x| Cfa::XTrans.color_at(y, x).index() as u8))
                .collect(),
        )
        .unwrap();
        let p = pack_xtrans9(&m).unwrap();
        assert_eq!((p.channels, p.height, p.width), (9, 6, 4));
        for (c, color) in XTRANS9_CHANNEL_COLORS.iter().enumerate() {
            let want = color.index() as u8;
            assert!(p.plane(c).iter().all(|&v| v == want), "channel {c}");
        }
    }

    #[test]
    fn xtrans_tile_multiset_preserved() {
        let m = mosaic(12, 6, Cfa::XTrans);
        for p in [pack_xtrans9(&m).unwrap(), pack_xtrans36(&m).unwrap()] {
            let mut a = m.data.clone();
            let mut b = p.data.clone();
            a.sort_unstable();
            b.sort_unstable();
            assert_eq!(a, b);
        }
        // per tile for the 9-channel packing: tile (0,1) occupies packed cols 2..4
        let p = pack_xtrans9(&m).unwrap();
        let mut tile: Vec<u16> = (0..6).flat_map(|y| (6..12).map(move |x| (y, x))).map(|(y, x)| m.get(y, x)).collect();
        let mut packed: Vec<u16> = (0..9)
            .flat_map(|c| (0..2).flat_map(move |i| (2..4).map(move |j| (c, i, j))))
            .map(|(c, i, j)| p.get(c, i, j))
            .collect();
        tile.sort_unstable();
        packed.sort_unstable();
        assert_eq!(tile, packed);
    }

    #[test]
    fn xtrans36_dims() {
        let p = pack_xtrans36(&mosaic(18, 12, Cfa::XTrans)).unwrap();
        assert_eq!((p.channels, p.height, p.width), (36, 2, 3));
        assert_eq!(p.get(7, 0, 0), 19); // tile position (1,1), value y*w + x
    }

    #[test]
    fn unpack_rejects_bad_planes() {
        let mut p = pack_bayer(&mosaic(4, 4, Cfa::Bayer)).unwrap();
        p.channels = 3;
        assert!(unpack(&p).is_err());
    }

    fn arb_mosaic(cfa: Cfa) -> impl Strategy<Value = Mosaic<f32>> {
        let p = cfa.period();
        (1usize..5, 1usize..5).prop_flat_map(move |(a, b)| {
            let (w, h) = (a * p, b * p);
            proptest::collection::vec(-1.0e3f32..1.0e3, w * h)
                .prop_map(move |data| Mosaic::new(w, h, cfa, data).unwrap())
        })
    }

    proptest! {
        #[test]
        fn bayer_roundtrips(m in arb_mosaic(Cfa::Bayer)) {
            for a in [Arrangement::BayerPacked4, Arrangement::BayerMasked] {
                let back = unpack(&pack(&m, a).unwrap()).unwrap();
                prop_assert!(back.data.iter().zip(&m.data).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }

        #[test]
        fn xtrans_roundtrips(m in arb_mosaic(Cfa::XTrans)) {
            for a in [Arrangement::XTrans9, Arrangement::XTrans36] {
                let p = pack(&m, a).unwrap();
                prop_assert_eq!(p.width * a.factor(), m.width);
                let back = unpack(&p).unwrap();
                prop_assert!(back.data.iter().zip(&m.data).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
    }
}
