//! Uniform local binary patterns over the MFSC image.
//!
//! Rows of the MFSC matrix are mel filters (low to high frequency) and
//! columns are frames. With frequency drawn upward and time to the right,
//! neighbor `p` of pixel `(row, col)` is
//!
//! ```text
//!   p=3 (r+1,c-1)   p=2 (r+1,c)   p=1 (r+1,c+1)
//!   p=4 (r,  c-1)      centre     p=0 (r,  c+1)
//!   p=5 (r-1,c-1)   p=6 (r-1,c)   p=7 (r-1,c+1)
//! ```
//!
//! i.e. east first, then counter-clockwise. Bit `p` is set when the
//! neighbor is greater than or equal to the centre.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::AudioCycle;
use crate::spectral::{mfsc, FrameConfig, MelFilterbank, MfscMatrix, SpectralError};

/// Number of uniform patterns for 8 neighbors.
pub const UNIFORM_BINS: usize = 58;

/// Code assigned to patterns with more than two circular transitions.
pub const NON_UNIFORM: u8 = u8::MAX;

/// Row offsets (frequency) and column offsets (time) for p = 0..8.
const NEIGHBOR_OFFSETS: [(isize, isize); 8] = [
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
];

#[derive(Debug, Error, PartialEq)]
pub enum TextureError {
    #[error("MFSC matrix of {rows}x{cols} has no interior pixel; need at least 3x3")]
    TooSmall { rows: usize, cols: usize },
    #[error("unsupported LBP parameters P={p}, R={r}; only (8, 1) is implemented")]
    UnsupportedParams { p: usize, r: usize },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LbpParams {
    pub p: usize,
    pub r: usize,
}

impl Default for LbpParams {
    fn default() -> Self {
        Self { p: 8, r: 1 }
    }
}

/// Packs the step-function comparisons into an 8-bit pattern.
pub fn lbp_code(center: f64, neighbors: &[f64; 8]) -> u8 {
    neighbors
        .iter()
        .enumerate()
        .fold(0u8, |code, (p, &n)| if n - center >= 0.0 { code | (1 << p) } else { code })
}

/// Circular count of 0->1 and 1->0 transitions in an 8-bit pattern.
pub fn transitions(pattern: u8) -> u32 {
    (pattern ^ pattern.rotate_right(1)).count_ones()
}

/// Maps each 8-bit pattern to its uniform bin, or [`NON_UNIFORM`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UniformTable {
    code_to_bin: [u8; 256],
}

impl UniformTable {
    pub fn bin(&self, pattern: u8) -> u8 {
        self.code_to_bin[pattern as usize]
    }

    pub fn uniform_count(&self) -> usize {
        self.code_to_bin.iter().filter(|&&b| b != NON_UNIFORM).count()
    }
}

impl Default for UniformTable {
    fn default() -> Self {
        build_uniform_table()
    }
}

/// Bins are assigned in ascending pattern value.
pub fn build_uniform_table() -> UniformTable {
    let mut code_to_bin = [NON_UNIFORM; 256];
    let mut next = 0u8;
    for pattern in 0..=255u8 {
        if transitions(pattern) <= 2 {
            code_to_bin[pattern as usize] = next;
            next += 1;
        }
    }
    UniformTable { code_to_bin }
}

/// Uniform-bin codes of the interior MFSC pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Textrogram {
    /// (Q-2) x (T-2) bin indices or [`NON_UNIFORM`].
    pub codes: Array2<u8>,
    pub source_config: FrameConfig,
}

pub fn textrogram(
    m: &MfscMatrix,
    params: LbpParams,
    table: &UniformTable,
) -> Result<Textrogram, TextureError> {
    if params != LbpParams::default() {
        return Err(TextureError::UnsupportedParams {
            p: params.p,
            r: params.r,
        });
    }
    let (rows, cols) = m.values.dim();
    if rows < 3 || cols < 3 {
        return Err(TextureError::TooSmall { rows, cols });
    }
    let v = &m.values;
    let codes = Array2::from_shape_fn((rows - 2, cols - 2), |(i, j)| {
        let (r, c) = (i + 1, j + 1);
        let mut neighbors = [0.0; 8];
        for (n, &(dr, dc)) in neighbors.iter_mut().zip(&NEIGHBOR_OFFSETS) {
            *n = v[[(r as isize + dr) as usize, (c as isize + dc) as usize]];
        }
        table.bin(lbp_code(v[[r, c]], &neighbors))
    });
    Ok(Textrogram {
        codes,
        source_config: m.config,
    })
}

/// Stacked per-filter histograms of uniform codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbpFeature {
    /// (Q-2) * 58 values; each 58-block sums to one or is all zero.
    pub values: Vec<f64>,
    /// Number of uniform codes counted in each filter row.
    pub counts_per_filter: Vec<usize>,
}

impl LbpFeature {
    /// Indices of filter rows that produced no uniform code (all-zero blocks).
    pub fn empty_rows(&self) -> Vec<usize> {
        self.counts_per_filter
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn featurize(t: &Textrogram) -> LbpFeature {
    let rows = t.codes.nrows();
    let mut values = vec![0.0; rows * UNIFORM_BINS];
    let mut counts_per_filter = Vec::with_capacity(rows);
    for (r, row) in t.codes.rows().into_iter().enumerate() {
        let block = &mut values[r * UNIFORM_BINS..(r + 1) * UNIFORM_BINS];
        let mut total = 0usize;
        for &code in row {
            if code != NON_UNIFORM {
                block[code as usize] += 1.0;
                total += 1;
            }
        }
        if total > 0 {
            block.iter_mut().for_each(|b| *b /= total as f64);
        }
        counts_per_filter.push(total);
    }
    LbpFeature {
        values,
        counts_per_filter,
    }
}

/// Full chain for one prepared cycle: MFSC, textrogram, histograms.
pub fn extract_lbp_feature(
    cycle: &AudioCycle,
    config: &FrameConfig,
    bank: &MelFilterbank,
) -> Result<LbpFeature, TextureError> {
    let m = mfsc(cycle, config, bank)?;
    let t = textrogram(&m, LbpParams::default(), &build_uniform_table())?;
    Ok(featurize(&t))
}
