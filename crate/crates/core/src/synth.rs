//! Synthetic lung-sound cycles.
//!
//! These are caricatures built to be separable, not clinically faithful
//! recordings. They exist so the whole pipeline can be exercised without
//! access to clinical databases:
//!
//! * normal: pink-like noise low-passed at 300 Hz under a breath envelope;
//! * wheeze: normal plus one or two sustained tones between 200 and 800 Hz
//!   with slow vibrato;
//! * crackle: normal plus Poisson-timed damped sinusoids between 600 and
//!   1500 Hz.
//!
//! All randomness comes from a ChaCha8 stream seeded by the spec.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::audio_io::{save_manifest, windowed_sinc, write_cycle, AudioCycle, DatasetManifest, Label, ManifestEntry};
use crate::{Error, Result};

/// Rate of generated WAV files.
pub const SYNTH_RATE: u32 = 8000;
pub const MIN_DURATION_S: f64 = 0.5;
/// Cutoff of the breath-noise low-pass.
pub const BREATH_CUTOFF_HZ: f64 = 300.0;
const BREATH_HALF_TAPS: usize = 127;
/// Level of the white sensor-noise floor relative to the breath noise.
const FLOOR_DB: f64 = -40.0;
/// Mean number of crackles per second.
const CRACKLE_RATE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthClass {
    Normal,
    Wheeze,
    Crackle,
}

impl SynthClass {
    pub fn label(self) -> Label {
        match self {
            SynthClass::Normal => Label::Normal,
            _ => Label::Abnormal,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SynthClass::Normal => "normal",
            SynthClass::Wheeze => "wheeze",
            SynthClass::Crackle => "crackle",
        }
    }
}

impl fmt::Display for SynthClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SynthClass {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "normal" => Ok(SynthClass::Normal),
            "wheeze" => Ok(SynthClass::Wheeze),
            "crackle" => Ok(SynthClass::Crackle),
            other => Err(format!("unknown synthetic class `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub class: SynthClass,
    pub duration_s: f64,
    pub seed: u64,
    /// Level of the adventitious component over the breath noise (RMS for
    /// tones, peak for crackles).
    pub snr_db: f64,
}

impl SynthSpec {
    pub fn new(class: SynthClass, seed: u64) -> Self {
        Self {
            class,
            duration_s: 2.0,
            seed,
            snr_db: 10.0,
        }
    }
}

fn convolve_same(x: &[f64], h: &[f64]) -> Vec<f64> {
    let half = h.len() / 2;
    (0..x.len())
        .map(|n| {
            let lo = (n + half + 1).saturating_sub(h.len());
            let hi = (n + half).min(x.len() - 1);
            (lo..=hi).map(|j| h[n + half - j] * x[j]).sum()
        })
        .collect()
}

/// Zero-phase FIR low-pass at `cutoff_hz`.
pub fn lowpass(x: &[f64], cutoff_hz: f64, rate: u32) -> Vec<f64> {
    convolve_same(x, &windowed_sinc(BREATH_HALF_TAPS, cutoff_hz / rate as f64))
}

/// Complement of [`lowpass`].
pub fn highpass(x: &[f64], cutoff_hz: f64, rate: u32) -> Vec<f64> {
    lowpass(x, cutoff_hz, rate).iter().zip(x).map(|(l, v)| v - l).collect()
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

/// Pink-like noise from a three-pole filtered white sequence.
fn pink_noise(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    (0..n)
        .map(|_| {
            let w: f64 = rng.sample(StandardNormal);
            b0 = 0.99765 * b0 + w * 0.0990460;
            b1 = 0.96300 * b1 + w * 0.2965164;
            b2 = 0.57000 * b2 + w * 1.0526913;
            b0 + b1 + b2 + w * 0.1848
        })
        .collect()
}

/// Smooth raised-sine gate that is one on `[start, end)` with `ramp` samples
/// of fade at each edge.
fn gate(n: usize, start: usize, end: usize, ramp: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i < start || i >= end {
                0.0
            } else {
                let d = (i - start).min(end - 1 - i);
                if d >= ramp {
                    1.0
                } else {
                    (0.5 - 0.5 * (PI * d as f64 / ramp as f64).cos()).max(0.0)
                }
            }
        })
        .collect()
}

fn add_wheeze(x: &mut [f64], level: f64, rate: u32, rng: &mut ChaCha8Rng) {
    let n = x.len();
    let fs = rate as f64;
    let len = (n as f64 * rng.gen_range(0.5..0.8)) as usize;
    let start = rng.gen_range(0..=n - len);
    let g = gate(n, start, start + len, (0.05 * fs) as usize);
    let tones = if rng.gen_bool(0.5) { 2 } else { 1 };
    for t in 0..tones {
        let f0 = rng.gen_range(250.0..700.0);
        let depth = rng.gen_range(0.005..0.015) * f0;
        let vib = rng.gen_range(2.0..6.0);
        let amp = level * std::f64::consts::SQRT_2 * if t == 0 { 1.0 } else { 0.5 };
        let mut phase = rng.gen_range(0.0..2.0 * PI);
        for (i, v) in x.iter_mut().enumerate() {
            let f = f0 + depth * (2.0 * PI * vib * i as f64 / fs).sin();
            phase += 2.0 * PI * f / fs;
            *v += amp * g[i] * phase.sin();
        }
    }
}

fn add_crackles(x: &mut [f64], level: f64, rate: u32, rng: &mut ChaCha8Rng) {
    let fs = rate as f64;
    let n = x.len();
    let gap = Exp::new(CRACKLE_RATE).expect("positive rate");
    let mut onsets = Vec::new();
    let mut t = gap.sample(rng);
    while t < n as f64 / fs {
        onsets.push((t * fs) as usize);
        t += gap.sample(rng);
    }
    // a crackle cycle always carries a few events
    while onsets.len() < 3 {
        onsets.push(rng.gen_range(0..n));
    }
    for onset in onsets {
        let f = rng.gen_range(600.0..1500.0);
        let tau = rng.gen_range(0.001..0.003) * fs;
        let amp = level * rng.gen_range(0.7..1.3) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let len = ((6.0 * tau) as usize).min(n - onset);
        for k in 0..len {
            let kt = k as f64;
            x[onset + k] += amp * (-kt / tau).exp() * (2.0 * PI * f * kt / fs).sin();
        }
    }
}

/// One labeled cycle with peak amplitude 0.8.
pub fn generate(spec: &SynthSpec, rate: u32) -> Result<AudioCycle> {
    if rate < 4000 {
        return Err(Error::Config(format!("synthesis rate must be at least 4000 Hz, got {rate}")));
    }
    if !(spec.duration_s >= MIN_DURATION_S) {
        return Err(Error::Config(format!(
            "duration must be at least {MIN_DURATION_S} s, got {}",
            spec.duration_s
        )));
    }
    if !spec.snr_db.is_finite() {
        return Err(Error::Config("snr_db must be finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = (spec.duration_s * rate as f64).round() as usize;
    let breath = lowpass(&pink_noise(n, &mut rng), BREATH_CUTOFF_HZ, rate);
    // inspiration then expiration, the latter softer
    let split = rng.gen_range(0.35..0.5);
    let mut x: Vec<f64> = breath
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let u = i as f64 / n as f64;
            let env = if u < split {
                (PI * u / split).sin()
            } else {
                0.6 * (PI * (u - split) / (1.0 - split)).sin()
            };
            b * (0.1 + 0.9 * env)
        })
        .collect();
    let base = rms(&x);
    let floor = base * 10f64.powf(FLOOR_DB / 20.0);
    for v in x.iter_mut() {
        *v += floor * rng.sample::<f64, _>(StandardNormal);
    }
    let level = base * 10f64.powf(spec.snr_db / 20.0);
    match spec.class {
        SynthClass::Normal => {}
        SynthClass::Wheeze => add_wheeze(&mut x, level, rate, &mut rng),
        SynthClass::Crackle => add_crackles(&mut x, level, rate, &mut rng),
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    x.iter_mut().for_each(|v| *v *= 0.8 / peak);
    let id = format!("{}-{}", spec.class, spec.seed);
    Ok(AudioCycle::new(x, rate).with_meta(spec.class.label(), &id, &id))
}

fn write_all(
    specs: Vec<(SynthSpec, String, String)>,
    out_dir: &Path,
    name: &str,
) -> Result<DatasetManifest> {
    std::fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let mut entries = Vec::with_capacity(specs.len());
    for (spec, subject, cycle_id) in specs {
        let cycle = generate(&spec, SYNTH_RATE)?;
        let path = out_dir.join(format!("{cycle_id}.wav"));
        write_cycle(&path, &cycle)?;
        entries.push(ManifestEntry {
            path,
            label: spec.class.label(),
            subject_id: subject,
            cycle_id,
        });
    }
    let manifest = DatasetManifest {
        name: name.to_string(),
        entries,
    };
    save_manifest(&manifest, &out_dir.join("manifest.csv"))?;
    Ok(manifest)
}

fn durations(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(1.5..3.0)
}

/// `n_per_class` cycles each of normal, wheeze and crackle, written as WAV
/// files plus `manifest.csv` in `out_dir`. Every cycle is its own subject.
pub fn generate_dataset(n_per_class: usize, seed: u64, out_dir: &Path) -> Result<DatasetManifest> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut specs = Vec::with_capacity(3 * n_per_class);
    for class in [SynthClass::Normal, SynthClass::Wheeze, SynthClass::Crackle] {
        for i in 0..n_per_class {
            let spec = SynthSpec {
                duration_s: durations(&mut rng),
                seed: rng.gen(),
                ..SynthSpec::new(class, 0)
            };
            let id = format!("{class}_{i:03}");
            specs.push((spec, id.clone(), id));
        }
    }
    write_all(specs, out_dir, "synthetic")
}

/// Subject-grouped corpus: the first half of the subjects are normal, the
/// rest have crackles in every cycle.
pub fn generate_subject_dataset(
    subjects: usize,
    cycles_per_subject: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut specs = Vec::with_capacity(subjects * cycles_per_subject);
    for s in 0..subjects {
        let class = if s < subjects / 2 {
            SynthClass::Normal
        } else {
            SynthClass::Crackle
        };
        let subject = format!("subject_{s:02}");
        for c in 0..cycles_per_subject {
            let spec = SynthSpec {
                duration_s: durations(&mut rng),
                seed: rng.gen(),
                ..SynthSpec::new(class, 0)
            };
            specs.push((spec, subject.clone(), format!("{subject}_c{c}")));
        }
    }
    write_all(specs, out_dir, "synthetic-subjects")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio_io::load_manifest;
    use crate::baselines::kurtosis;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn psd(x: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
        buf[..x.len() / 2].iter().map(|c| c.norm_sqr()).collect()
    }

    fn peak_to_median(x: &[f64], rate: u32) -> f64 {
        let p = psd(x);
        let hz = rate as f64 / x.len() as f64;
        let mut band: Vec<f64> = p
            .iter()
            .enumerate()
            .filter(|(k, _)| (200.0..=800.0).contains(&(*k as f64 * hz)))
            .map(|(_, &v)| v)
            .collect();
        let peak = band.iter().cloned().fold(0.0, f64::max);
        band.sort_by(f64::total_cmp);
        peak / band[band.len() / 2]
    }

    fn short(class: SynthClass, seed: u64) -> SynthSpec {
        SynthSpec {
            duration_s: 1.0,
            ..SynthSpec::new(class, seed)
        }
    }

    #[test]
    fn wheeze_has_sharp_peak() {
        let c = generate(&SynthSpec::new(SynthClass::Wheeze, 1), SYNTH_RATE).unwrap();
        assert!(peak_to_median(&c.samples, SYNTH_RATE) > 10.0);
    }

    #[test]
    fn crackle_is_impulsive_above_600_hz() {
        let c = generate(&SynthSpec::new(SynthClass::Crackle, 1), SYNTH_RATE).unwrap();
        assert!(kurtosis(&highpass(&c.samples, 600.0, SYNTH_RATE)) > 6.0);
    }

    #[test]
    fn class_properties_hold_over_seeds() {
        let (mut w, mut c) = (0, 0);
        for seed in 0..100 {
            let x = generate(&short(SynthClass::Wheeze, seed), SYNTH_RATE).unwrap();
            w += (peak_to_median(&x.samples, SYNTH_RATE) > 10.0) as usize;
            let x = generate(&short(SynthClass::Crackle, seed), SYNTH_RATE).unwrap();
            c += (kurtosis(&highpass(&x.samples, 600.0, SYNTH_RATE)) > 6.0) as usize;
        }
        assert!(w >= 95, "wheeze property held for {w}/100 seeds");
        assert!(c >= 95, "crackle property held for {c}/100 seeds");
    }

    #[test]
    fn normal_is_band_limited() {
        let x = generate(&SynthSpec::new(SynthClass::Normal, 5), SYNTH_RATE).unwrap();
        let p = psd(&x.samples);
        let hz = SYNTH_RATE as f64 / x.samples.len() as f64;
        let low: f64 = p.iter().enumerate().filter(|(k, _)| (*k as f64 * hz) < 300.0).map(|(_, v)| v).sum();
        let high: f64 = p.iter().enumerate().filter(|(k, _)| (*k as f64 * hz) > 600.0).map(|(_, v)| v).sum();
        assert!(high < 1e-2 * low);
    }

    #[test]
    fn deterministic() {
        let s = SynthSpec::new(SynthClass::Crackle, 9);
        assert_eq!(generate(&s, 4000).unwrap(), generate(&s, 4000).unwrap());
        let other = SynthSpec { seed: 10, ..s };
        assert_ne!(generate(&s, 4000).unwrap(), generate(&other, 4000).unwrap());
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = SynthSpec::new(SynthClass::Normal, 0);
        assert!(generate(&s, 3999).is_err());
        s.duration_s = 0.4;
        assert!(generate(&s, 8000).is_err());
    }

    #[test]
    fn dataset_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(2, 42, dir.path()).unwrap();
        assert_eq!(m.count(Label::Normal), 2);
        assert_eq!(m.count(Label::Abnormal), 4);
        let loaded = load_manifest(&dir.path().join("manifest.csv")).unwrap();
        assert_eq!(loaded.entries.len(), 6);

        let dir = tempfile::tempdir().unwrap();
        let m = generate_subject_dataset(4, 5, 7, dir.path()).unwrap();
        assert_eq!(m.entries.len(), 20);
        assert_eq!(m.subjects().len(), 4);
        assert!(load_manifest(&dir.path().join("manifest.csv")).is_ok());
    }
}
