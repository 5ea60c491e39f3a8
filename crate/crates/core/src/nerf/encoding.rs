use super::ModelConfig;
use crate::geometry::Vec3;

pub const CORNER_COUNT: usize = 8;

// Spatial hash primes; the first axis uses 1 so coherent rows stay local.
const PRIMES: [u32; 3] = [1, 2_654_435_761, 805_459_861];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelInfo {
    pub resolution: u32,
    /// First table entry of this level in the concatenated table.
    pub offset: usize,
    /// Number of entries (each `features_per_level` wide).
    pub size: usize,
    /// Dense levels index vertices directly instead of hashing.
    pub dense: bool,
}

/// Layout of the multi-level feature tables and the corner lookup rule.
#[derive(Debug, Clone, PartialEq)]
pub struct HashEncoding {
    pub levels: Vec<LevelInfo>,
    pub features: usize,
    pub total_entries: usize,
}

impl HashEncoding {
    pub fn new(config: &ModelConfig) -> Self {
        let table = 1usize << config.table_size_log2;
        let mut offset = 0;
        let levels = config
            .level_resolutions()
            .into_iter()
            .map(|resolution| {
                let side = resolution as usize + 1;
                let dense_size = side.checked_mul(side).and_then(|s| s.checked_mul(side));
                let (size, dense) = match dense_size {
                    Some(d) if d <= table => (d, true),
                    _ => (table, false),
                };
                let info = LevelInfo {
                    resolution,
                    offset,
                    size,
                    dense,
                };
                offset += size;
                info
            })
            .collect();
        Self {
            levels,
            features: config.features_per_level,
            total_entries: offset,
        }
    }

    pub fn output_width(&self) -> usize {
        self.levels.len() * self.features
    }

    /// Table index (in entries, including the level offset) of a grid vertex.
    #[inline]
    pub fn vertex_slot(&self, level: &LevelInfo, v: [u32; 3]) -> usize {
        let local = if level.dense {
            let side = level.resolution as usize + 1;
            v[0] as usize + side * (v[1] as usize + side * v[2] as usize)
        } else {
            let h = v[0].wrapping_mul(PRIMES[0]) ^ v[1].wrapping_mul(PRIMES[1]) ^ v[2].wrapping_mul(PRIMES[2]);
            (h as usize) & (level.size - 1)
        };
        level.offset + local
    }

    /// The 8 corner slots of the cell containing `x` and their trilinear
    /// weights. Corner `c` has offset bits `(c & 1, c >> 1 & 1, c >> 2 & 1)`.
    #[inline]
    pub fn corners(&self, level: &LevelInfo, x: &Vec3) -> ([usize; CORNER_COUNT], [f64; CORNER_COUNT]) {
        let n = level.resolution;
        let mut base = [0u32; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let s = x[a].clamp(0.0, 1.0) * n as f64;
            let cell = (s.floor() as u32).min(n - 1);
            base[a] = cell;
            frac[a] = s - cell as f64;
        }
        let mut slots = [0usize; CORNER_COUNT];
        let mut weights = [0.0f64; CORNER_COUNT];
        for c in 0..CORNER_COUNT {
            let mut v = base;
            let mut w = 1.0;
            for a in 0..3 {
                if (c >> a) & 1 == 1 {
                    v[a] += 1;
                    w *= frac[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            slots[c] = self.vertex_slot(level, v);
            weights[c] = w;
        }
        (slots, weights)
    }

    /// Writes the concatenated per-level features of `x` into `out`.
    pub fn encode_into(&self, tables: &[f64], x: &Vec3, out: &mut [f64]) {
        let f = self.features;
        for (l, level) in self.levels.iter().enumerate() {
            let (slots, weights) = self.corners(level, x);
            let dst = &mut out[l * f..(l + 1) * f];
            dst.iter_mut().for_each(|d| *d = 0.0);
            for c in 0..CORNER_COUNT {
                let src = &tables[slots[c] * f..(slots[c] + 1) * f];
                for k in 0..f {
                    dst[k] += weights[c] * src[k];
                }
            }
        }
    }
}
