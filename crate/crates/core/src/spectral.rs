//! Short-term spectral analysis: framing, power spectra, mel filterbank,
//! log filterbank energies (MFSC) and the DCT that turns them into MFCC.

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::sync::Arc;

use ndarray::{Array2, ArrayView1};
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::AudioCycle;

/// Floor applied to filterbank energies before the log.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("frame length must be positive, got {0} ms")]
    BadFrameLength(f64),
    #[error("overlap must lie in [0, 95] percent, got {0}")]
    BadOverlap(f64),
    #[error("hop size rounds to zero samples")]
    ZeroHop,
    #[error("n_fft {n_fft} must be a power of two no smaller than the frame ({frame} samples)")]
    BadFftLength { n_fft: usize, frame: usize },
    #[error("frame of {frame} samples exceeds n_fft {n_fft}")]
    FrameTooLong { frame: usize, n_fft: usize },
    #[error("cycle of {len} samples is shorter than one frame ({frame} samples)")]
    CycleTooShort { len: usize, frame: usize },
    #[error("negative frequency {0} Hz")]
    NegativeFrequency(f64),
    #[error("filterbank needs at least 3 filters, got {0}")]
    TooFewFilters(usize),
    #[error("invalid band {f_low}..{f_high} Hz for sample rate {rate} Hz")]
    BadBand { f_low: f64, f_high: f64, rate: u32 },
    #[error("mel filter {filter} has zero bandwidth at n_fft {n_fft}; use more FFT points or fewer filters")]
    CollapsedFilter { filter: usize, n_fft: usize },
    #[error("filterbank built for {bank_rate} Hz / n_fft {bank_fft} but input is {rate} Hz / n_fft {fft}")]
    BankMismatch {
        bank_rate: u32,
        bank_fft: usize,
        rate: u32,
        fft: usize,
    },
    #[error("requested {requested} cepstral coefficients from {available} filters")]
    TooManyCoefficients { requested: usize, available: usize },
    #[error("malformed MFSC dump: {0}")]
    BadDump(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Hamming,
}

/// Framing parameters. Sample counts are derived per sample rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub frame_len_ms: f64,
    pub overlap_pct: f64,
    /// `None` picks the smallest power of two covering the frame.
    pub n_fft: Option<usize>,
    pub window: Window,
}

impl FrameConfig {
    pub fn new(frame_len_ms: f64, overlap_pct: f64) -> Result<Self, SpectralError> {
        let config = Self {
            frame_len_ms,
            overlap_pct,
            n_fft: None,
            window: Window::Hamming,
        };
        if !(frame_len_ms > 0.0) || !frame_len_ms.is_finite() {
            return Err(SpectralError::BadFrameLength(frame_len_ms));
        }
        if !(0.0..=95.0).contains(&overlap_pct) {
            return Err(SpectralError::BadOverlap(overlap_pct));
        }
        Ok(config)
    }

    pub fn with_fft(mut self, n_fft: usize) -> Self {
        self.n_fft = Some(n_fft);
        self
    }

    /// Window length L_w in samples.
    pub fn frame_len(&self, rate: u32) -> usize {
        (self.frame_len_ms * rate as f64 / 1000.0).round() as usize
    }

    pub fn hop(&self, rate: u32) -> usize {
        (self.frame_len(rate) as f64 * (1.0 - self.overlap_pct / 100.0)).round() as usize
    }

    pub fn fft_len(&self, rate: u32) -> usize {
        self.n_fft
            .unwrap_or_else(|| self.frame_len(rate).max(1).next_power_of_two())
    }

    pub fn validate(&self, rate: u32) -> Result<(), SpectralError> {
        if !(self.frame_len_ms > 0.0) || self.frame_len(rate) == 0 {
            return Err(SpectralError::BadFrameLength(self.frame_len_ms));
        }
        if !(0.0..=95.0).contains(&self.overlap_pct) {
            return Err(SpectralError::BadOverlap(self.overlap_pct));
        }
        if self.hop(rate) == 0 {
            return Err(SpectralError::ZeroHop);
        }
        let n_fft = self.fft_len(rate);
        if !n_fft.is_power_of_two() || n_fft < self.frame_len(rate) {
            return Err(SpectralError::BadFftLength {
                n_fft,
                frame: self.frame_len(rate),
            });
        }
        Ok(())
    }

    /// Number of complete frames for a signal of `len` samples.
    pub fn frame_count(&self, len: usize, rate: u32) -> usize {
        let l = self.frame_len(rate);
        if len < l {
            0
        } else {
            (len - l) / self.hop(rate) + 1
        }
    }
}

/// Symmetric Hamming window of length `len`.
pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Splits a cycle into Hamming-windowed frames. A trailing partial frame is dropped.
pub fn frame_signal(cycle: &AudioCycle, config: &FrameConfig) -> Result<Vec<Vec<f64>>, SpectralError> {
    config.validate(cycle.sample_rate)?;
    let len = config.frame_len(cycle.sample_rate);
    let hop = config.hop(cycle.sample_rate);
    if cycle.samples.len() < len {
        return Err(SpectralError::CycleTooShort {
            len: cycle.samples.len(),
            frame: len,
        });
    }
    let window = hamming(len);
    let count = config.frame_count(cycle.samples.len(), cycle.sample_rate);
    Ok((0..count)
        .map(|t| {
            cycle.samples[t * hop..t * hop + len]
                .iter()
                .zip(&window)
                .map(|(x, w)| x * w)
                .collect()
        })
        .collect())
}

/// Reusable one-sided power spectrum for a fixed FFT size.
#[derive(Clone)]
pub struct PowerSpectrum {
    fft: Arc<dyn Fft<f64>>,
    n_fft: usize,
}

impl PowerSpectrum {
    pub fn new(n_fft: usize) -> Self {
        Self {
            fft: FftPlanner::new().plan_fft_forward(n_fft),
            n_fft,
        }
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    /// |Y(k)|^2 for k = 0..=n_fft/2 of the zero-padded frame.
    pub fn compute(&self, frame: &[f64]) -> Result<Vec<f64>, SpectralError> {
        if frame.len() > self.n_fft {
            return Err(SpectralError::FrameTooLong {
                frame: frame.len(),
                n_fft: self.n_fft,
            });
        }
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        for (b, &x) in buf.iter_mut().zip(frame) {
            b.re = x;
        }
        self.fft.process(&mut buf);
        Ok(buf[..self.n_fft / 2 + 1].iter().map(|c| c.norm_sqr()).collect())
    }
}

/// One-sided, unscaled squared-magnitude spectrum of a zero-padded frame.
pub fn power_spectrum(frame: &[f64], n_fft: usize) -> Result<Vec<f64>, SpectralError> {
    PowerSpectrum::new(n_fft).compute(frame)
}

/// Hz to mel: 2595 log10(1 + f/700).
pub fn mel_scale(f: f64) -> Result<f64, SpectralError> {
    if f < 0.0 {
        return Err(SpectralError::NegativeFrequency(f));
    }
    Ok(2595.0 * (1.0 + f / 700.0).log10())
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters with apexes equally spaced on the mel axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelFilterbank {
    pub n_filters: usize,
    pub sample_rate: u32,
    pub n_fft: usize,
    pub f_low: f64,
    pub f_high: f64,
    /// Apex frequency of each filter in Hz.
    pub apex_hz: Vec<f64>,
    /// Q x (n_fft/2 + 1) weights.
    pub responses: Array2<f64>,
}

impl MelFilterbank {
    /// Bank covering 0 Hz to Nyquist for the given framing.
    pub fn for_config(n_filters: usize, rate: u32, config: &FrameConfig) -> Result<Self, SpectralError> {
        config.validate(rate)?;
        build_filterbank(n_filters, rate, config.fft_len(rate), 0.0, rate as f64 / 2.0)
    }

    pub fn n_bins(&self) -> usize {
        self.responses.ncols()
    }
}

pub fn build_filterbank(
    n_filters: usize,
    sample_rate: u32,
    n_fft: usize,
    f_low: f64,
    f_high: f64,
) -> Result<MelFilterbank, SpectralError> {
    if n_filters < 3 {
        return Err(SpectralError::TooFewFilters(n_filters));
    }
    if !(f_low >= 0.0 && f_low < f_high && f_high <= sample_rate as f64 / 2.0) {
        return Err(SpectralError::BadBand {
            f_low,
            f_high,
            rate: sample_rate,
        });
    }
    let mel_lo = mel_scale(f_low)?;
    let mel_hi = mel_scale(f_high)?;
    let step = (mel_hi - mel_lo) / (n_filters + 1) as f64;
    let edges: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(mel_lo + step * i as f64))
        .collect();
    let n_bins = n_fft / 2 + 1;
    let bin_hz = sample_rate as f64 / n_fft as f64;
    let mut responses = Array2::zeros((n_filters, n_bins));
    for i in 0..n_filters {
        let (left, apex, right) = (edges[i], edges[i + 1], edges[i + 2]);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = if f > left && f <= apex {
                (f - left) / (apex - left)
            } else if f > apex && f < right {
                (right - f) / (right - apex)
            } else {
                0.0
            };
            responses[[i, k]] = w;
        }
        if responses.row(i).iter().all(|&w| w <= 0.0) {
            return Err(SpectralError::CollapsedFilter { filter: i, n_fft });
        }
    }
    Ok(MelFilterbank {
        n_filters,
        sample_rate,
        n_fft,
        f_low,
        f_high,
        apex_hz: edges[1..=n_filters].to_vec(),
        responses,
    })
}

/// Log mel filterbank energies, filters in rows and frames in columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfscMatrix {
    pub values: Array2<f64>,
    /// Start time of each frame in seconds.
    pub frame_times: Vec<f64>,
    pub config: FrameConfig,
    pub sample_rate: u32,
}

impl MfscMatrix {
    pub fn n_filters(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.values.ncols()
    }

    /// Row-major CSV dump preceded by a `# q=..,t=..` header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "# q={},t={},rate={},frame_ms={},overlap_pct={},n_fft={}",
            self.n_filters(),
            self.n_frames(),
            self.sample_rate,
            self.config.frame_len_ms,
            self.config.overlap_pct,
            self.config.fft_len(self.sample_rate)
        )?;
        for row in self.values.rows() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, SpectralError> {
        let bad = |m: &str| SpectralError::BadDump(m.to_string());
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| bad("empty"))?
            .map_err(|e| bad(&e.to_string()))?;
        let header = header.strip_prefix("# ").ok_or_else(|| bad("missing header"))?;
        let field = |key: &str| -> Result<f64, SpectralError> {
            header
                .split(',')
                .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
                .ok_or_else(|| bad(&format!("missing {key}")))?
                .parse::<f64>()
                .map_err(|_| bad(&format!("bad {key}")))
        };
        let q = field("q")? as usize;
        let t = field("t")? as usize;
        let rate = field("rate")? as u32;
        let config = FrameConfig::new(field("frame_ms")?, field("overlap_pct")?)?
            .with_fft(field("n_fft")? as usize);
        let mut data = Vec::with_capacity(q * t);
        for line in lines {
            let line = line.map_err(|e| bad(&e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            for v in line.split(',') {
                data.push(v.parse::<f64>().map_err(|_| bad("bad value"))?);
            }
        }
        let values = Array2::from_shape_vec((q, t), data).map_err(|e| bad(&e.to_string()))?;
        let hop = config.hop(rate) as f64 / rate as f64;
        Ok(Self {
            values,
            frame_times: (0..t).map(|i| i as f64 * hop).collect(),
            config,
            sample_rate: rate,
        })
    }
}

/// Computes ln(max(e_i, 1e-10)) with e_i = sum_k |Y(k)|^2 psi_i(k) per frame.
pub fn mfsc(cycle: &AudioCycle, config: &FrameConfig, bank: &MelFilterbank) -> Result<MfscMatrix, SpectralError> {
    let rate = cycle.sample_rate;
    config.validate(rate)?;
    let n_fft = config.fft_len(rate);
    if bank.sample_rate != rate || bank.n_fft != n_fft {
        return Err(SpectralError::BankMismatch {
            bank_rate: bank.sample_rate,
            bank_fft: bank.n_fft,
            rate,
            fft: n_fft,
        });
    }
    let frames = frame_signal(cycle, config)?;
    let spectrum = PowerSpectrum::new(n_fft);
    let mut values = Array2::zeros((bank.n_filters, frames.len()));
    for (t, frame) in frames.iter().enumerate() {
        let power = spectrum.compute(frame)?;
        let power = ArrayView1::from(&power);
        for (i, filter) in bank.responses.rows().into_iter().enumerate() {
            values[[i, t]] = filter.dot(&power).max(LOG_FLOOR).ln();
        }
    }
    let hop = config.hop(rate) as f64 / rate as f64;
    Ok(MfscMatrix {
        values,
        frame_times: (0..frames.len()).map(|t| t as f64 * hop).collect(),
        config: *config,
        sample_rate: rate,
    })
}

/// Orthonormal DCT-II basis, `n_out` x `n_in`.
pub(crate) fn dct_basis(n_out: usize, n_in: usize) -> Array2<f64> {
    let n = n_in as f64;
    Array2::from_shape_fn((n_out, n_in), |(k, i)| {
        let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        scale * (PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)).cos()
    })
}

/// Orthonormal DCT-II of each frame column; keeps coefficients 0..n_coeffs.
pub fn mfcc_from_mfsc(m: &MfscMatrix, n_coeffs: usize) -> Result<Array2<f64>, SpectralError> {
    let q = m.n_filters();
    if n_coeffs > q {
        return Err(SpectralError::TooManyCoefficients {
            requested: n_coeffs,
            available: q,
        });
    }
    Ok(dct_basis(n_coeffs, q).dot(&m.values))
}
