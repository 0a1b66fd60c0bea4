//! Comparison features: db8 wavelet statistics, MFCC/MFSC frame means and
//! time-domain morphological statistics.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::AudioCycle;
use crate::spectral::{mfcc_from_mfsc, mfsc, FrameConfig, MelFilterbank, SpectralError};

/// Decomposition depth of the wavelet baseline.
pub const WAVELET_LEVELS: usize = 6;
/// Cepstral coefficients kept for the MFCC-mean baseline.
pub const MFCC_COEFFS: usize = 20;
/// Gliding-box width (samples) for lacunarity.
pub const LACUNARITY_BOX: usize = 50;
/// Embedding dimension for sample entropy.
pub const SAMPEN_M: usize = 2;
/// Sample entropy tolerance as a fraction of the signal std.
pub const SAMPEN_R: f64 = 0.2;
/// Shortest cycle accepted by the morphological extractor.
pub const MORPH_MIN_LEN: usize = 100;

const RATIO_FLOOR: f64 = 1e-12;

/// Daubechies-8 decomposition low-pass filter (16 taps).
pub const DB8_DEC_LO: [f64; 16] = [
    -0.00011747678412476953,
    0.0006754494064505693,
    -0.00039174037337694705,
    -0.004870352993451574,
    0.008746094047405777,
    0.013981027917398282,
    -0.044088253930794755,
    -0.017369301001807547,
    0.12874742662047847,
    0.0004724845739132828,
    -0.2840155429615469,
    -0.015829105256349306,
    0.5853546836542067,
    0.6756307362972898,
    0.31287159091429995,
    0.05441584224310401,
];

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("cycle of {len} samples is too short for a {levels}-level db8 decomposition (need {needed})")]
    TooShortForWavelet {
        len: usize,
        levels: usize,
        needed: usize,
    },
    #[error("cycle of {len} samples is too short; need at least {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("cycle has zero variance")]
    ZeroVariance,
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Wavelet27,
    MfccMean,
    MfscMean,
    Morphological,
}

impl BaselineKind {
    pub fn expected_len(self, n_filters: usize) -> usize {
        match self {
            BaselineKind::Wavelet27 => 27,
            BaselineKind::MfccMean => n_filters.min(MFCC_COEFFS),
            BaselineKind::MfscMean => n_filters,
            BaselineKind::Morphological => 4,
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineKind::Wavelet27 => "wavelet27",
            BaselineKind::MfccMean => "mfcc-mean",
            BaselineKind::MfscMean => "mfsc-mean",
            BaselineKind::Morphological => "morph",
        })
    }
}

impl FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "wavelet27" => Ok(BaselineKind::Wavelet27),
            "mfcc-mean" => Ok(BaselineKind::MfccMean),
            "mfsc-mean" => Ok(BaselineKind::MfscMean),
            "morph" | "morphological" => Ok(BaselineKind::Morphological),
            other => Err(format!("unknown baseline feature `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineFeature {
    pub kind: BaselineKind,
    pub values: Vec<f64>,
}

/// Orthogonal two-channel filter bank derived from a decomposition low-pass.
#[derive(Debug, Clone)]
pub struct Wavelet {
    pub dec_lo: Vec<f64>,
    pub dec_hi: Vec<f64>,
    pub rec_lo: Vec<f64>,
    pub rec_hi: Vec<f64>,
}

impl Wavelet {
    pub fn from_dec_lo(dec_lo: &[f64]) -> Self {
        let n = dec_lo.len();
        let rec_lo: Vec<f64> = dec_lo.iter().rev().copied().collect();
        let rec_hi: Vec<f64> = (0..n)
            .map(|k| if k % 2 == 0 { dec_lo[k] } else { -dec_lo[k] })
            .collect();
        let dec_hi: Vec<f64> = rec_hi.iter().rev().copied().collect();
        Self {
            dec_lo: dec_lo.to_vec(),
            dec_hi,
            rec_lo,
            rec_hi,
        }
    }

    pub fn db8() -> Self {
        Self::from_dec_lo(&DB8_DEC_LO)
    }

    pub fn len(&self) -> usize {
        self.dec_lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dec_lo.is_empty()
    }

    /// Deepest level at which the coarsest band still spans the filter.
    pub fn max_level(&self, signal_len: usize) -> usize {
        let f = self.len();
        if signal_len < f - 1 {
            return 0;
        }
        ((signal_len as f64) / (f as f64 - 1.0)).log2().floor() as usize
    }
}

/// Half-point symmetric extension: x[-1] = x[0], x[N] = x[N-1].
fn symmetric(x: &[f64], mut n: isize) -> f64 {
    let len = x.len() as isize;
    loop {
        if n < 0 {
            n = -1 - n;
        } else if n >= len {
            n = 2 * len - 1 - n;
        } else {
            return x[n as usize];
        }
    }
}

/// Single-level analysis; returns (approximation, detail), each of
/// length floor((N + F - 1) / 2).
pub fn dwt_step(x: &[f64], w: &Wavelet) -> (Vec<f64>, Vec<f64>) {
    let f = w.len();
    let out = (x.len() + f - 1) / 2;
    let mut approx = Vec::with_capacity(out);
    let mut detail = Vec::with_capacity(out);
    for o in 0..out {
        let mut a = 0.0;
        let mut d = 0.0;
        for j in 0..f {
            let v = symmetric(x, (2 * o + 1) as isize - j as isize);
            a += w.dec_lo[j] * v;
            d += w.dec_hi[j] * v;
        }
        approx.push(a);
        detail.push(d);
    }
    (approx, detail)
}

/// Single-level synthesis of `2 * len - F + 2` samples.
pub fn idwt_step(approx: &[f64], detail: &[f64], w: &Wavelet) -> Vec<f64> {
    let f = w.len();
    let l = approx.len();
    let n_out = 2 * l + 2 - f;
    (0..n_out)
        .map(|n| {
            let mut s = 0.0;
            for k in 0..l {
                let idx = n as isize + f as isize - 2 - 2 * k as isize;
                if (0..f as isize).contains(&idx) {
                    s += approx[k] * w.rec_lo[idx as usize] + detail[k] * w.rec_hi[idx as usize];
                }
            }
            s
        })
        .collect()
}

/// Multi-level decomposition. Bands are ordered fine to coarse:
/// `[d1, d2, ..., d_levels, a_levels]`.
pub fn wavedec(x: &[f64], w: &Wavelet, levels: usize) -> Vec<Vec<f64>> {
    let mut bands = Vec::with_capacity(levels + 1);
    let mut approx = x.to_vec();
    for _ in 0..levels {
        let (a, d) = dwt_step(&approx, w);
        bands.push(d);
        approx = a;
    }
    bands.push(approx);
    bands
}

/// Inverse of [`wavedec`]; `len` trims the result to the original length.
pub fn waverec(bands: &[Vec<f64>], w: &Wavelet, len: usize) -> Vec<f64> {
    let levels = bands.len() - 1;
    let mut approx = bands[levels].clone();
    for detail in bands[..levels].iter().rev() {
        approx.truncate(detail.len());
        approx = idwt_step(&approx, detail, w);
    }
    approx.truncate(len);
    approx
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn std_dev(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

/// 27 values: mean |c| per band (7), std per band (7), mean power per
/// band (7), then ratios of adjacent band means, fine over coarse (6).
pub fn wavelet_feature(cycle: &AudioCycle) -> Result<BaselineFeature, BaselineError> {
    let w = Wavelet::db8();
    let needed = (w.len() - 1) << WAVELET_LEVELS;
    if w.max_level(cycle.samples.len()) < WAVELET_LEVELS {
        return Err(BaselineError::TooShortForWavelet {
            len: cycle.samples.len(),
            levels: WAVELET_LEVELS,
            needed,
        });
    }
    let bands = wavedec(&cycle.samples, &w, WAVELET_LEVELS);
    let means: Vec<f64> = bands
        .iter()
        .map(|b| b.iter().map(|v| v.abs()).sum::<f64>() / b.len() as f64)
        .collect();
    let stds: Vec<f64> = bands.iter().map(|b| std_dev(b)).collect();
    let powers: Vec<f64> = bands
        .iter()
        .map(|b| b.iter().map(|v| v * v).sum::<f64>() / b.len() as f64)
        .collect();
    let ratios: Vec<f64> = means
        .windows(2)
        .map(|p| p[0] / p[1].max(RATIO_FLOOR))
        .collect();
    let values = [means, stds, powers, ratios].concat();
    Ok(BaselineFeature {
        kind: BaselineKind::Wavelet27,
        values,
    })
}

/// Mean of each row across columns (frames).
pub fn mean_over_frames(m: &Array2<f64>) -> Vec<f64> {
    m.mean_axis(Axis(1))
        .map(|a| a.to_vec())
        .unwrap_or_else(|| vec![0.0; m.nrows()])
}

pub fn mfcc_mean_feature(
    cycle: &AudioCycle,
    config: &FrameConfig,
    bank: &MelFilterbank,
) -> Result<BaselineFeature, BaselineError> {
    let m = mfsc(cycle, config, bank)?;
    let c = mfcc_from_mfsc(&m, m.n_filters().min(MFCC_COEFFS))?;
    Ok(BaselineFeature {
        kind: BaselineKind::MfccMean,
        values: mean_over_frames(&c),
    })
}

pub fn mfsc_mean_feature(
    cycle: &AudioCycle,
    config: &FrameConfig,
    bank: &MelFilterbank,
) -> Result<BaselineFeature, BaselineError> {
    let m = mfsc(cycle, config, bank)?;
    Ok(BaselineFeature {
        kind: BaselineKind::MfscMean,
        values: mean_over_frames(&m.values),
    })
}

/// Standardized fourth moment (not excess).
pub fn kurtosis(x: &[f64]) -> f64 {
    let m = mean(x);
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / x.len() as f64;
    m4 / (m2 * m2)
}

pub fn skewness(x: &[f64]) -> f64 {
    let m = mean(x);
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64;
    let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / x.len() as f64;
    m3 / m2.powf(1.5)
}

/// Gliding-box lacunarity of |x|: var(S)/mean(S)^2 + 1 over all box sums S.
pub fn lacunarity(x: &[f64], box_len: usize) -> f64 {
    let mass: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    let mut sums = Vec::with_capacity(mass.len() + 1 - box_len);
    let mut s: f64 = mass[..box_len].iter().sum();
    sums.push(s);
    for i in box_len..mass.len() {
        s += mass[i] - mass[i - box_len];
        sums.push(s);
    }
    let mu = mean(&sums);
    let var = sums.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / sums.len() as f64;
    var / (mu * mu) + 1.0
}

/// Sample entropy -ln(A/B) with Chebyshev matching at tolerance `r`.
///
/// When no template of length m+1 matches, the result is the largest
/// value the estimator can take, ln((N-m)(N-m-1)/2).
pub fn sample_entropy(x: &[f64], m: usize, r: f64) -> f64 {
    let n = x.len();
    let templates = n - m;
    let mut b = 0u64;
    let mut a = 0u64;
    for i in 0..templates {
        for j in i + 1..templates {
            if (0..m).all(|k| (x[i + k] - x[j + k]).abs() <= r) {
                b += 1;
                if i + m < n && j + m < n && (x[i + m] - x[j + m]).abs() <= r {
                    a += 1;
                }
            }
        }
    }
    if a == 0 || b == 0 {
        let t = templates as f64;
        return (t * (t - 1.0) / 2.0).ln();
    }
    -(a as f64 / b as f64).ln()
}

/// [kurtosis, skewness, lacunarity, sample entropy].
pub fn morphological_feature(cycle: &AudioCycle) -> Result<BaselineFeature, BaselineError> {
    let x = &cycle.samples;
    if x.len() < MORPH_MIN_LEN {
        return Err(BaselineError::TooShort {
            len: x.len(),
            needed: MORPH_MIN_LEN,
        });
    }
    // exact constancy; the float mean of a constant can leave a tiny std
    if x.iter().all(|&v| v == x[0]) {
        return Err(BaselineError::ZeroVariance);
    }
    let sd = std_dev(x);
    Ok(BaselineFeature {
        kind: BaselineKind::Morphological,
        values: vec![
            kurtosis(x),
            skewness(x),
            lacunarity(x, LACUNARITY_BOX),
            sample_entropy(x, SAMPEN_M, SAMPEN_R * sd),
        ],
    })
}

pub fn extract_baseline(
    kind: BaselineKind,
    cycle: &AudioCycle,
    config: &FrameConfig,
    bank: &MelFilterbank,
) -> Result<BaselineFeature, BaselineError> {
    match kind {
        BaselineKind::Wavelet27 => wavelet_feature(cycle),
        BaselineKind::MfccMean => mfcc_mean_feature(cycle, config, bank),
        BaselineKind::MfscMean => mfsc_mean_feature(cycle, config, bank),
        BaselineKind::Morphological => morphological_feature(cycle),
    }
}
