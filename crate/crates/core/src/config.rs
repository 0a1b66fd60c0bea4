//! Run configuration shared by evaluation, sweeps and the command line.
//!
//! Every report embeds the [`RunConfig`] that produced it, so a run can be
//! repeated from its own output.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineKind;
use crate::classifiers::{KernelKind, KernelSpec, MlpConfig, SvmConfig};
use crate::spectral::{FrameConfig, MelFilterbank};
use crate::{Error, Result};

/// Which feature vector represents a cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    Lbp,
    Wavelet27,
    MfccMean,
    MfscMean,
    Morph,
}

impl FeatureKind {
    pub fn baseline(self) -> Option<BaselineKind> {
        match self {
            FeatureKind::Lbp => None,
            FeatureKind::Wavelet27 => Some(BaselineKind::Wavelet27),
            FeatureKind::MfccMean => Some(BaselineKind::MfccMean),
            FeatureKind::MfscMean => Some(BaselineKind::MfscMean),
            FeatureKind::Morph => Some(BaselineKind::Morphological),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Lbp => "lbp",
            FeatureKind::Wavelet27 => "wavelet27",
            FeatureKind::MfccMean => "mfcc-mean",
            FeatureKind::MfscMean => "mfsc-mean",
            FeatureKind::Morph => "morph",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "lbp" => Ok(FeatureKind::Lbp),
            "wavelet27" => Ok(FeatureKind::Wavelet27),
            "mfcc-mean" => Ok(FeatureKind::MfccMean),
            "mfsc-mean" => Ok(FeatureKind::MfscMean),
            "morph" => Ok(FeatureKind::Morph),
            other => Err(format!("unknown feature `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Knn,
    Svm,
    Mlp,
}

impl FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "knn" => Ok(ClassifierKind::Knn),
            "svm" => Ok(ClassifierKind::Svm),
            "mlp" | "ann" => Ok(ClassifierKind::Mlp),
            other => Err(format!("unknown classifier `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    /// One fold per cycle.
    Cycle,
    /// One fold per subject; all of its cycles are held out together.
    Subject,
}

impl FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cycle" => Ok(Granularity::Cycle),
            "subject" => Ok(Granularity::Subject),
            other => Err(format!("unknown granularity `{other}`")),
        }
    }
}

/// Named starting points for the framing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// 40 ms frames, 90% overlap, 20 filters.
    Optimized,
    /// 20 ms frames, 50% overlap, 20 filters.
    SpeechDefault,
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "optimized" => Ok(Profile::Optimized),
            "speech-default" => Ok(Profile::SpeechDefault),
            other => Err(format!("unknown profile `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub profile: Profile,
    pub rate: u32,
    pub frame_ms: f64,
    pub overlap_pct: f64,
    pub n_filters: usize,
    pub n_fft: Option<usize>,
    pub feature: FeatureKind,
    pub classifier: ClassifierKind,
    pub kernel: KernelKind,
    pub gamma: Option<f64>,
    pub k: usize,
    pub c: f64,
    pub epochs: usize,
    pub hidden: usize,
    /// Seeded MLP runs averaged per evaluation.
    pub repeats: usize,
    pub seed: u64,
    pub granularity: Granularity,
    /// mRMR feature count applied inside each training fold.
    pub select: Option<usize>,
    /// Discretization width for mRMR, in standard deviations.
    pub sigma: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_profile(Profile::Optimized)
    }
}

impl RunConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let (frame_ms, overlap_pct) = match profile {
            Profile::Optimized => (40.0, 90.0),
            Profile::SpeechDefault => (20.0, 50.0),
        };
        Self {
            profile,
            rate: 4000,
            frame_ms,
            overlap_pct,
            n_filters: 20,
            n_fft: None,
            feature: FeatureKind::Lbp,
            classifier: ClassifierKind::Svm,
            kernel: KernelKind::Bhattacharyya,
            gamma: None,
            k: 3,
            c: 1.0,
            epochs: 500,
            hidden: 40,
            repeats: 25,
            seed: 0,
            granularity: Granularity::Cycle,
            select: None,
            sigma: 1.0,
        }
    }

    pub fn frame_config(&self) -> Result<FrameConfig> {
        let mut frame = FrameConfig::new(self.frame_ms, self.overlap_pct)?;
        frame.n_fft = self.n_fft;
        frame.validate(self.rate)?;
        Ok(frame)
    }

    pub fn filterbank(&self) -> Result<MelFilterbank> {
        Ok(MelFilterbank::for_config(self.n_filters, self.rate, &self.frame_config()?)?)
    }

    pub fn kernel_spec(&self) -> KernelSpec {
        KernelSpec {
            kind: self.kernel,
            gamma: self.gamma,
        }
    }

    pub fn svm_config(&self) -> SvmConfig {
        SvmConfig {
            c: self.c,
            ..SvmConfig::default()
        }
    }

    pub fn mlp_config(&self, repeat: usize) -> MlpConfig {
        MlpConfig {
            hidden: self.hidden,
            epochs: self.epochs,
            seed: self.seed.wrapping_add(repeat as u64),
            ..MlpConfig::default()
        }
    }

    /// MLP results are averaged over seeds; the other back-ends are deterministic.
    pub fn effective_repeats(&self) -> usize {
        match self.classifier {
            ClassifierKind::Mlp => self.repeats,
            _ => 1,
        }
    }

    /// Checks every parameter against the stage preconditions.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.rate == 0 {
            return bad("rate must be positive".into());
        }
        self.frame_config()?;
        if self.n_filters < 3 {
            return bad(format!("need at least 3 filters, got {}", self.n_filters));
        }
        if self.feature != FeatureKind::Wavelet27 && self.feature != FeatureKind::Morph {
            self.filterbank()?;
        }
        if self.k == 0 || self.k % 2 == 0 {
            return bad(format!("k must be odd, got {}", self.k));
        }
        if !(self.c > 0.0) {
            return bad(format!("C must be positive, got {}", self.c));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0) {
                return bad(format!("gamma must be positive, got {g}"));
            }
        }
        if self.hidden == 0 || self.repeats == 0 {
            return bad("hidden units and repeats must be positive".into());
        }
        if self.select == Some(0) {
            return bad("selected feature count must be positive".into());
        }
        if !(self.sigma >= 0.0) {
            return bad(format!("sigma must be non-negative, got {}", self.sigma));
        }
        Ok(())
    }
}
