//! Loading, resampling and amplitude normalization of segmented cycles.
//!
//! Input audio is RIFF WAV, 16-bit PCM, mono. Datasets are described by a
//! CSV manifest with the header `path,label,subject_id,cycle_id`; relative
//! paths are resolved against the directory holding the manifest.

use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Header line every manifest must start with.
pub const MANIFEST_HEADER: [&str; 4] = ["path", "label", "subject_id", "cycle_id"];

/// Taps of the anti-alias filter used for integer-factor decimation.
pub const ANTI_ALIAS_TAPS: usize = 63;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("cannot read {path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },
    #[error("{path}: expected mono audio, found {channels} channels")]
    NotMono { path: PathBuf, channels: u16 },
    #[error("{path}: unsupported encoding ({encoding}); only 16-bit PCM is accepted")]
    UnsupportedEncoding { path: PathBuf, encoding: String },
    #[error("{path}: sample rate {found} Hz is below the required {expected} Hz")]
    RateTooLow {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("empty cycle")]
    EmptyCycle,
    #[error("silent cycle")]
    SilentCycle,
    #[error("upsampling from {from} Hz to {to} Hz is not supported")]
    Upsampling { from: u32, to: u32 },
    #[error("sample rate must be positive")]
    ZeroRate,
    #[error("empty manifest")]
    EmptyManifest,
    #[error("manifest header must be `path,label,subject_id,cycle_id`, found `{0}`")]
    BadHeader(String),
    #[error("manifest row {row}: {reason}")]
    BadRow { row: usize, reason: String },
    #[error("manifest row {row}: unknown label `{token}`")]
    UnknownLabel { row: usize, token: String },
    #[error("duplicate cycle_id `{0}`")]
    DuplicateCycle(String),
    #[error("subject `{0}` appears with conflicting labels")]
    ConflictingLabels(String),
    #[error("manifest row {row}: missing file {path}")]
    MissingFile { row: usize, path: PathBuf },
    #[error("cannot write {path}: {reason}")]
    Write { path: PathBuf, reason: String },
}

/// Binary class of a cycle. Abnormal is the positive class for metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Abnormal,
}

impl Label {
    /// +1 for abnormal, -1 for normal.
    pub fn sign(self) -> i8 {
        match self {
            Label::Normal => -1,
            Label::Abnormal => 1,
        }
    }

    pub fn from_sign(sign: i8) -> Label {
        if sign > 0 {
            Label::Abnormal
        } else {
            Label::Normal
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Abnormal => "abnormal",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "0" | "normal" => Ok(Label::Normal),
            "1" | "abnormal" => Ok(Label::Abnormal),
            _ => Err(()),
        }
    }
}

/// One segmented respiration cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioCycle {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub label: Label,
    pub subject_id: String,
    pub cycle_id: String,
}

impl AudioCycle {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
            label: Label::Normal,
            subject_id: String::new(),
            cycle_id: String::new(),
        }
    }

    pub fn with_meta(mut self, label: Label, subject_id: &str, cycle_id: &str) -> Self {
        self.label = label;
        self.subject_id = subject_id.to_string();
        self.cycle_id = cycle_id.to_string();
        self
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    fn with_samples(&self, samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
            label: self.label,
            subject_id: self.subject_id.clone(),
            cycle_id: self.cycle_id.clone(),
        }
    }
}

/// Reads a 16-bit PCM mono WAV file. Samples are scaled by 1/32768.
///
/// The cycle id defaults to the file stem; label and subject are left for
/// the caller (usually the manifest) to fill in.
pub fn load_cycle(path: &Path, expected_rate: u32) -> Result<AudioCycle, AudioError> {
    let unreadable = |e: hound::Error| AudioError::Unreadable {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::Unsupported => AudioError::UnsupportedEncoding {
            path: path.to_path_buf(),
            encoding: "unsupported WAV format".into(),
        },
        other => unreadable(other),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(AudioError::NotMono {
            path: path.to_path_buf(),
            channels: spec.channels,
        });
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        let kind = match spec.sample_format {
            hound::SampleFormat::Int => "PCM",
            hound::SampleFormat::Float => "float",
        };
        return Err(AudioError::UnsupportedEncoding {
            path: path.to_path_buf(),
            encoding: format!("{}-bit {kind}", spec.bits_per_sample),
        });
    }
    if spec.sample_rate == 0 {
        return Err(AudioError::ZeroRate);
    }
    if spec.sample_rate < expected_rate {
        return Err(AudioError::RateTooLow {
            path: path.to_path_buf(),
            found: spec.sample_rate,
            expected: expected_rate,
        });
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<Result<Vec<_>, _>>()
        .map_err(unreadable)?;
    if samples.is_empty() {
        return Err(AudioError::EmptyCycle);
    }
    if samples.iter().all(|&s| s == 0.0) {
        return Err(AudioError::SilentCycle);
    }
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(AudioCycle::new(samples, spec.sample_rate).with_meta(Label::Normal, &stem, &stem))
}

/// Writes samples in [-1, 1] as 16-bit PCM mono. Values are clipped.
pub fn write_cycle(path: &Path, cycle: &AudioCycle) -> Result<(), AudioError> {
    let err = |e: hound::Error| AudioError::Write {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: cycle.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(err)?;
    for &s in &cycle.samples {
        let v = (s * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        writer.write_sample(v).map_err(err)?;
    }
    writer.finalize().map_err(err)
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Hamming-windowed sinc low-pass with `2 * half + 1` taps, unit DC gain.
pub(crate) fn windowed_sinc(half: usize, cutoff: f64) -> Vec<f64> {
    let taps = 2 * half + 1;
    let mut h: Vec<f64> = (0..taps)
        .map(|k| {
            let t = k as f64 - half as f64;
            let sinc = if t == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * t).sin() / (PI * t)
            };
            let w = 0.54 - 0.46 * (2.0 * PI * k as f64 / (taps - 1) as f64).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

/// Downsamples to `target_rate` after a linear-phase anti-alias low-pass
/// with cutoff `0.9 * target_rate / 2`.
///
/// Integer factors use the 63-tap filter directly; other ratios go through
/// a polyphase up/down scheme with 63 taps per phase. The filter is
/// applied centered so the output is not delayed.
pub fn resample(cycle: &AudioCycle, target_rate: u32) -> Result<AudioCycle, AudioError> {
    let source = cycle.sample_rate;
    if source == 0 || target_rate == 0 {
        return Err(AudioError::ZeroRate);
    }
    if target_rate > source {
        return Err(AudioError::Upsampling {
            from: source,
            to: target_rate,
        });
    }
    if target_rate == source {
        return Ok(cycle.clone());
    }
    let g = gcd(source, target_rate);
    let up = (target_rate / g) as usize;
    let down = (source / g) as usize;
    let half = (ANTI_ALIAS_TAPS / 2) * up;
    let cutoff = 0.9 * target_rate as f64 / 2.0 / (source as f64 * up as f64);
    let mut h = windowed_sinc(half, cutoff);
    h.iter_mut().for_each(|v| *v *= up as f64);

    let x = &cycle.samples;
    let out_len =
        ((x.len() as f64) * target_rate as f64 / source as f64).round() as usize;
    let taps = h.len() as i64;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let centre = (n * down + half) as i64;
        // input j sits at upsampled position j * up; tap index is centre - j * up
        let lo = (centre - taps + 1).max(0);
        let j_start = (lo + up as i64 - 1) / up as i64;
        let j_end = (centre / up as i64).min(x.len() as i64 - 1);
        let mut acc = 0.0;
        let mut j = j_start;
        while j <= j_end {
            acc += h[(centre - j * up as i64) as usize] * x[j as usize];
            j += 1;
        }
        out.push(acc);
    }
    Ok(cycle.with_samples(out, target_rate))
}

/// Divides every sample by the peak absolute value.
pub fn normalize_amplitude(cycle: &AudioCycle) -> Result<AudioCycle, AudioError> {
    if cycle.samples.is_empty() {
        return Err(AudioError::EmptyCycle);
    }
    let peak = cycle.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak == 0.0 {
        return Err(AudioError::SilentCycle);
    }
    let samples = cycle.samples.iter().map(|s| s / peak).collect();
    Ok(cycle.with_samples(samples, cycle.sample_rate))
}

/// One row of a dataset manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: Label,
    pub subject_id: String,
    pub cycle_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub name: String,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Checks the cycle-id uniqueness and subject-label consistency rules.
    pub fn validate(&self) -> Result<(), AudioError> {
        if self.entries.is_empty() {
            return Err(AudioError::EmptyManifest);
        }
        let mut cycles = HashSet::new();
        let mut subjects: HashMap<&str, Label> = HashMap::new();
        for e in &self.entries {
            if !cycles.insert(e.cycle_id.as_str()) {
                return Err(AudioError::DuplicateCycle(e.cycle_id.clone()));
            }
            match subjects.get(e.subject_id.as_str()) {
                Some(&l) if l != e.label => {
                    return Err(AudioError::ConflictingLabels(e.subject_id.clone()))
                }
                _ => {
                    subjects.insert(&e.subject_id, e.label);
                }
            }
        }
        Ok(())
    }

    pub fn count(&self, label: Label) -> usize {
        self.entries.iter().filter(|e| e.label == label).count()
    }

    /// Distinct subjects in first-appearance order.
    pub fn subjects(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.entries
            .iter()
            .filter(|e| seen.insert(e.subject_id.as_str()))
            .map(|e| e.subject_id.as_str())
            .collect()
    }
}

fn manifest_dir(path: &Path) -> PathBuf {
    path.parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Reads and validates a manifest CSV.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, AudioError> {
    let text = std::fs::read_to_string(path).map_err(|e| AudioError::Unreadable {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    if text.trim().is_empty() {
        return Err(AudioError::EmptyManifest);
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| AudioError::BadHeader(e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(AudioError::BadHeader(header.iter().collect::<Vec<_>>().join(",")));
    }
    let dir = manifest_dir(path);
    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // row numbers count the header as row 1
        let row = i + 2;
        let record = record.map_err(|e| AudioError::BadRow {
            row,
            reason: e.to_string(),
        })?;
        if record.len() != 4 {
            return Err(AudioError::BadRow {
                row,
                reason: format!("expected 4 fields, found {}", record.len()),
            });
        }
        let label = record[1].parse::<Label>().map_err(|_| AudioError::UnknownLabel {
            row,
            token: record[1].to_string(),
        })?;
        if record[2].is_empty() || record[3].is_empty() {
            return Err(AudioError::BadRow {
                row,
                reason: "subject_id and cycle_id must be non-empty".into(),
            });
        }
        let raw = Path::new(&record[0]);
        let file = if raw.is_absolute() {
            raw.to_path_buf()
        } else {
            dir.join(raw)
        };
        if !file.is_file() {
            return Err(AudioError::MissingFile { row, path: file });
        }
        entries.push(ManifestEntry {
            path: file,
            label,
            subject_id: record[2].to_string(),
            cycle_id: record[3].to_string(),
        });
    }
    let manifest = DatasetManifest {
        name: path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        entries,
    };
    manifest.validate()?;
    Ok(manifest)
}

/// Writes a manifest; paths under the manifest directory are stored relative.
pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<(), AudioError> {
    manifest.validate()?;
    let err = |reason: String| AudioError::Write {
        path: path.to_path_buf(),
        reason,
    };
    let dir = manifest_dir(path);
    let mut writer = csv::Writer::from_path(path).map_err(|e| err(e.to_string()))?;
    writer
        .write_record(MANIFEST_HEADER)
        .map_err(|e| err(e.to_string()))?;
    for e in &manifest.entries {
        let rel = e.path.strip_prefix(&dir).unwrap_or(&e.path);
        writer
            .write_record([
                rel.to_string_lossy().as_ref(),
                e.label.as_str(),
                &e.subject_id,
                &e.cycle_id,
            ])
            .map_err(|e| err(e.to_string()))?;
    }
    writer.flush().map_err(|e| err(e.to_string()))
}

/// Loads one manifest entry and brings it to `rate` with unit peak amplitude.
pub fn prepare_entry(entry: &ManifestEntry, rate: u32) -> Result<AudioCycle, AudioError> {
    let cycle = load_cycle(&entry.path, rate)?.with_meta(
        entry.label,
        &entry.subject_id,
        &entry.cycle_id,
    );
    normalize_amplitude(&resample(&cycle, rate)?)
}
