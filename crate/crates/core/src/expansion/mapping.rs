use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::numerics::SeededRng;
use crate::{Error, Result};

/// Index map from `d_tgt` target positions onto `d_src` source positions.
///
/// Zero-based. The first `d_src` entries are the identity; the tail reuses
/// source positions. `counts[x]` is how many target positions map to `x`,
/// always at least one.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MappingFn {
    src: usize,
    map: Vec<usize>,
    counts: Vec<usize>,
}

impl MappingFn {
    pub fn identity(n: usize) -> Self {
        Self {
            src: n,
            map: (0..n).collect(),
            counts: vec![1; n],
        }
    }

    /// Identity prefix, tail entries drawn by `draw(d_src)` (which must
    /// return a value in `0..d_src`).
    pub fn from_draws(d_src: usize, d_tgt: usize, mut draw: impl FnMut(usize) -> Result<usize>) -> Result<Self> {
        if d_src > d_tgt {
            return Err(Error::InvalidMapping(format!("cannot shrink {d_src} -> {d_tgt}")));
        }
        if d_src == 0 && d_tgt > 0 {
            return Err(Error::InvalidMapping("empty source dimension".into()));
        }
        let mut map: Vec<usize> = (0..d_src).collect();
        for _ in d_src..d_tgt {
            map.push(draw(d_src)?);
        }
        Self::from_map(d_src, map)
    }

    /// Identity prefix, tail drawn uniformly with replacement.
    pub fn sample(d_src: usize, d_tgt: usize, rng: &mut SeededRng) -> Result<Self> {
        Self::from_draws(d_src, d_tgt, |n| rng.sample_index(n))
    }

    /// Identity prefix, tail entry `i` maps to `i mod d_src`. When `d_tgt` is
    /// a multiple of `d_src` every source index is used equally often.
    pub fn cyclic(d_src: usize, d_tgt: usize) -> Result<Self> {
        let mut next = 0usize;
        Self::from_draws(d_src, d_tgt, |n| {
            let v = next % n;
            next += 1;
            Ok(v)
        })
    }

    /// Validates an explicit map.
    pub fn from_map(d_src: usize, map: Vec<usize>) -> Result<Self> {
        if map.len() < d_src {
            return Err(Error::InvalidMapping(format!(
                "map of length {} shorter than source {d_src}",
                map.len()
            )));
        }
        let mut counts = vec![0usize; d_src];
        for (i, &x) in map.iter().enumerate() {
            if i < d_src && x != i {
                return Err(Error::InvalidMapping(format!("entry {i} maps to {x}, identity prefix required")));
            }
            if x >= d_src {
                return Err(Error::InvalidMapping(format!("entry {i} maps to {x} >= {d_src}")));
            }
            counts[x] += 1;
        }
        Ok(Self { src: d_src, map, counts })
    }

    /// Lifts a map over blocks (e.g. heads) to a map over the coordinates of
    /// those blocks, `block` coordinates each.
    pub fn lift(&self, block: usize) -> Self {
        let map: Vec<usize> = self
            .map
            .iter()
            .flat_map(|&h| (0..block).map(move |c| h * block + c))
            .collect();
        Self::from_map(self.src * block, map).expect("lifting preserves the identity prefix")
    }

    #[inline]
    pub fn src_len(&self) -> usize {
        self.src
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.map.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> usize {
        self.map[i]
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// `C` of the source index that target position `i` maps to.
    #[inline]
    pub fn count_at(&self, i: usize) -> usize {
        self.counts[self.map[i]]
    }

    pub fn is_identity(&self) -> bool {
        self.map.len() == self.src
    }

    /// True when every source index is used the same number of times.
    pub fn is_uniform(&self) -> bool {
        self.counts.windows(2).all(|w| w[0] == w[1])
    }

    /// FNV-1a over the little-endian `u32` entries, for reports.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &x in core::iter::once(&self.src).chain(&self.map) {
            for b in (x as u32).to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// Uniform-with-replacement mapping `{0..d_src} <- {0..d_tgt}`.
pub fn build_mapping(d_src: usize, d_tgt: usize, rng: &mut SeededRng) -> Result<MappingFn> {
    MappingFn::sample(d_src, d_tgt, rng)
}
