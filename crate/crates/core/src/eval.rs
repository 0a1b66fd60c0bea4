//! Leave-one-out evaluation, metrics and parameter sweeps.
//!
//! Features are computed once per cycle (every extractor is a pure function
//! of a single cycle), then each fold trains on its training rows and
//! predicts its held-out rows. Anything fitted on data, such as the mRMR
//! discretization thresholds, only ever sees the training rows of a fold.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::{prepare_entry, AudioCycle, DatasetManifest, Label};
use crate::baselines::extract_baseline;
use crate::classifiers::mlp::mlp_train_with;
use crate::classifiers::svm::svm_train_with;
use crate::classifiers::{ClassifierError, KnnModel, LabeledSet, TrainedModel};
use crate::config::{ClassifierKind, FeatureKind, Granularity, RunConfig};
use crate::selection::{mrmr_select, DiscretizedSet, SelectionError, Thresholds};
use crate::spectral::{FrameConfig, MelFilterbank};
use crate::texture::{extract_lbp_feature, UNIFORM_BINS};
use crate::{Error, Result};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset is empty")]
    Empty,
    #[error("subject-level evaluation needs at least 2 subjects, found {0}")]
    TooFewSubjects(usize),
    #[error("training set of fold {fold} lacks one class")]
    Degenerate { fold: usize },
    #[error("cycle {cycle_id}: {source}")]
    Cycle {
        cycle_id: String,
        #[source]
        source: Box<Error>,
    },
    #[error("fold {fold}: {source}")]
    Training {
        fold: usize,
        #[source]
        source: ClassifierError,
    },
    #[error("fold {fold}: {source}")]
    Selection {
        fold: usize,
        #[source]
        source: SelectionError,
    },
    #[error("invalid sweep value {value} for {param}")]
    BadSweepValue { param: SweepParam, value: f64 },
}

/// Row indices of one train/test split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub granularity: Granularity,
    pub folds: Vec<Fold>,
}

/// Leave-one-out plan from per-row labels and subjects.
pub fn plan_from_rows(labels: &[Label], subjects: &[&str], granularity: Granularity) -> Result<FoldPlan> {
    let n = labels.len();
    if n == 0 {
        return Err(EvalError::Empty.into());
    }
    let groups: Vec<Vec<usize>> = match granularity {
        Granularity::Cycle => (0..n).map(|i| vec![i]).collect(),
        Granularity::Subject => {
            let mut order: Vec<&str> = Vec::new();
            let mut seen = HashSet::new();
            for &s in subjects {
                if seen.insert(s) {
                    order.push(s);
                }
            }
            if order.len() < 2 {
                return Err(EvalError::TooFewSubjects(order.len()).into());
            }
            order
                .iter()
                .map(|s| (0..n).filter(|&i| subjects[i] == *s).collect())
                .collect()
        }
    };
    let mut folds = Vec::with_capacity(groups.len());
    for (fold, test) in groups.into_iter().enumerate() {
        let held: HashSet<usize> = test.iter().copied().collect();
        let train: Vec<usize> = (0..n).filter(|i| !held.contains(i)).collect();
        let normal = train.iter().any(|&i| labels[i] == Label::Normal);
        let abnormal = train.iter().any(|&i| labels[i] == Label::Abnormal);
        if !(normal && abnormal) {
            return Err(EvalError::Degenerate { fold }.into());
        }
        folds.push(Fold { train, test });
    }
    Ok(FoldPlan { granularity, folds })
}

/// One fold per cycle, or per subject with all of its cycles held out.
pub fn plan_loocv(manifest: &DatasetManifest, granularity: Granularity) -> Result<FoldPlan> {
    let labels: Vec<Label> = manifest.entries.iter().map(|e| e.label).collect();
    let subjects: Vec<&str> = manifest.entries.iter().map(|e| e.subject_id.as_str()).collect();
    plan_from_rows(&labels, &subjects, granularity)
}

/// Abnormal is the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fneg: usize,
}

impl Confusion {
    pub fn add(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Abnormal, Label::Abnormal) => self.tp += 1,
            (Label::Normal, Label::Normal) => self.tn += 1,
            (Label::Normal, Label::Abnormal) => self.fp += 1,
            (Label::Abnormal, Label::Normal) => self.fneg += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fneg
    }

    fn pct(num: usize, den: usize) -> f64 {
        if den == 0 {
            0.0
        } else {
            100.0 * num as f64 / den as f64
        }
    }

    pub fn spe(&self) -> f64 {
        Self::pct(self.tn, self.tn + self.fp)
    }

    pub fn sen(&self) -> f64 {
        Self::pct(self.tp, self.tp + self.fneg)
    }

    pub fn oaa(&self) -> f64 {
        Self::pct(self.tp + self.tn, self.total())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub fold: usize,
    pub repeat: usize,
    pub cycle_id: String,
    pub subject_id: String,
    pub truth: Label,
    pub predicted: Label,
    /// Higher means more abnormal; its scale depends on the classifier.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub spe: f64,
    pub sen: f64,
    pub oaa: f64,
    /// Summed over repeats, so percentages equal the mean over repeats.
    pub confusion: Confusion,
    pub per_fold: Vec<Prediction>,
    pub config: RunConfig,
    pub repeats: usize,
}

impl EvalReport {
    pub fn from_predictions(per_fold: Vec<Prediction>, config: RunConfig, repeats: usize) -> Self {
        let mut confusion = Confusion::default();
        for p in &per_fold {
            confusion.add(p.truth, p.predicted);
        }
        Self {
            spe: confusion.spe(),
            sen: confusion.sen(),
            oaa: confusion.oaa(),
            confusion,
            per_fold,
            config,
            repeats,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

/// Turns a prepared cycle into the configured feature vector.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    pub kind: FeatureKind,
    pub rate: u32,
    pub frame: FrameConfig,
    pub bank: MelFilterbank,
}

impl FeatureExtractor {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            kind: config.feature,
            rate: config.rate,
            frame: config.frame_config()?,
            bank: config.filterbank()?,
        })
    }

    pub fn dim(&self) -> usize {
        match self.kind.baseline() {
            None => (self.bank.n_filters - 2) * UNIFORM_BINS,
            Some(b) => b.expected_len(self.bank.n_filters),
        }
    }

    /// `cycle` must already be at the configured rate.
    pub fn extract(&self, cycle: &AudioCycle) -> Result<Vec<f64>> {
        if cycle.sample_rate != self.rate {
            return Err(Error::Config(format!(
                "cycle is at {} Hz, extractor expects {} Hz",
                cycle.sample_rate, self.rate
            )));
        }
        Ok(match self.kind.baseline() {
            None => extract_lbp_feature(cycle, &self.frame, &self.bank)?.values,
            Some(b) => extract_baseline(b, cycle, &self.frame, &self.bank)?.values,
        })
    }
}

fn cycle_error(cycle_id: &str, e: Error) -> Error {
    EvalError::Cycle {
        cycle_id: cycle_id.to_string(),
        source: Box::new(e),
    }
    .into()
}

/// Loads, resamples and normalizes every manifest cycle, in manifest order.
pub fn load_cycles(manifest: &DatasetManifest, rate: u32) -> Result<Vec<AudioCycle>> {
    if manifest.entries.is_empty() {
        return Err(EvalError::Empty.into());
    }
    manifest
        .entries
        .par_iter()
        .map(|e| prepare_entry(e, rate).map_err(|err| cycle_error(&e.cycle_id, err.into())))
        .collect()
}

/// Feature rows for a set of cycles, with their labels and subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub kind: FeatureKind,
    /// Row ids are cycle ids.
    pub set: LabeledSet,
    pub subjects: Vec<String>,
}

impl FeatureTable {
    pub fn labels(&self) -> Vec<Label> {
        self.set.labels.iter().map(|&s| Label::from_sign(s)).collect()
    }

    pub fn plan(&self, granularity: Granularity) -> Result<FoldPlan> {
        let subjects: Vec<&str> = self.subjects.iter().map(String::as_str).collect();
        plan_from_rows(&self.labels(), &subjects, granularity)
    }

    /// Writes `cycle_id,label,<kind>_0,...` rows in table order.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["cycle_id".to_string(), "label".to_string()];
        header.extend((0..self.set.dim()).map(|i| format!("{}_{i}", self.kind)));
        w.write_record(&header)?;
        for (i, row) in self.set.features.rows().into_iter().enumerate() {
            let mut rec = vec![
                self.set.ids[i].clone(),
                Label::from_sign(self.set.labels[i]).as_str().to_string(),
            ];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()
    }

    /// Reads what [`FeatureTable::write_csv`] wrote. Subjects are unknown in
    /// this format, so each cycle becomes its own subject.
    pub fn read_csv(path: &std::path::Path) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            path: path.display().to_string(),
            reason,
        };
        let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
        let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
        if header.len() < 3 || &header[0] != "cycle_id" || &header[1] != "label" {
            return Err(bad("header must start with cycle_id,label and list features".into()));
        }
        let kind: FeatureKind = header[2]
            .rsplit_once('_')
            .map(|(k, _)| k)
            .unwrap_or("")
            .parse()
            .map_err(bad)?;
        let d = header.len() - 2;
        let (mut flat, mut labels, mut ids) = (Vec::new(), Vec::new(), Vec::new());
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let label: Label = rec[1]
                .parse()
                .map_err(|_| bad(format!("row {}: unknown label `{}`", i + 2, &rec[1])))?;
            ids.push(rec[0].to_string());
            labels.push(label.sign());
            for v in rec.iter().skip(2) {
                flat.push(v.parse::<f64>().map_err(|e| bad(format!("row {}: {e}", i + 2)))?);
            }
        }
        if ids.is_empty() {
            return Err(EvalError::Empty.into());
        }
        let features =
            Array2::from_shape_vec((ids.len(), d), flat).map_err(|e| bad(e.to_string()))?;
        Ok(Self {
            kind,
            subjects: ids.clone(),
            set: LabeledSet::new(features, labels, ids)?,
        })
    }
}

/// Extracts features from prepared cycles in parallel; row order follows input.
pub fn extract_table(cycles: &[AudioCycle], config: &RunConfig) -> Result<FeatureTable> {
    if cycles.is_empty() {
        return Err(EvalError::Empty.into());
    }
    let extractor = FeatureExtractor::new(config)?;
    let rows: Vec<Vec<f64>> = cycles
        .par_iter()
        .map(|c| extractor.extract(c).map_err(|e| cycle_error(&c.cycle_id, e)))
        .collect::<Result<_>>()?;
    let d = extractor.dim();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let features = Array2::from_shape_vec((cycles.len(), d), flat)
        .map_err(|e| Error::Config(format!("feature length mismatch: {e}")))?;
    let set = LabeledSet::new(
        features,
        cycles.iter().map(|c| c.label.sign()).collect(),
        cycles.iter().map(|c| c.cycle_id.clone()).collect(),
    )?;
    Ok(FeatureTable {
        kind: config.feature,
        set,
        subjects: cycles.iter().map(|c| c.subject_id.clone()).collect(),
    })
}

/// Trains the configured back-end; `repeat` offsets the MLP seed.
pub fn train_model(data: &LabeledSet, config: &RunConfig, repeat: usize) -> std::result::Result<TrainedModel, ClassifierError> {
    match config.classifier {
        ClassifierKind::Knn => Ok(TrainedModel::Knn(KnnModel::new(data.clone(), config.k)?)),
        ClassifierKind::Svm => Ok(TrainedModel::Svm(svm_train_with(
            data,
            &config.kernel_spec(),
            &config.svm_config(),
        )?)),
        ClassifierKind::Mlp => Ok(TrainedModel::Mlp(mlp_train_with(data, &config.mlp_config(repeat))?.0)),
    }
}

/// Predictions of one fold for each requested feature count
/// (`None` means all features, no selection).
fn run_fold(
    table: &FeatureTable,
    fold_id: usize,
    fold: &Fold,
    config: &RunConfig,
    counts: &[Option<usize>],
) -> Result<Vec<Vec<Prediction>>> {
    let train = table.set.select(&fold.train);
    let test = table.set.select(&fold.test);
    let max_count = counts.iter().flatten().copied().max();
    let ranking = match max_count {
        Some(c) => {
            let thresholds = Thresholds::fit(&train.features, config.sigma);
            let states = DiscretizedSet {
                states: thresholds.apply(&train.features),
                thresholds,
            };
            mrmr_select(&states, &train.labels, c.min(train.dim()))
                .map_err(|source| EvalError::Selection { fold: fold_id, source })?
                .selected
        }
        None => Vec::new(),
    };
    let mut out = Vec::with_capacity(counts.len());
    for count in counts {
        let (tr, te) = match count {
            Some(c) => {
                let cols = &ranking[..(*c).min(ranking.len())];
                (train.select_features(cols), test.select_features(cols))
            }
            None => (train.clone(), test.clone()),
        };
        let mut preds = Vec::new();
        for repeat in 0..config.effective_repeats() {
            let model = train_model(&tr, config, repeat)
                .map_err(|source| EvalError::Training { fold: fold_id, source })?;
            for (j, row) in te.features.rows().into_iter().enumerate() {
                let x = row.to_vec();
                let (label, score) = model
                    .predict(&x)
                    .map_err(|source| EvalError::Training { fold: fold_id, source })?;
                let r = fold.test[j];
                preds.push(Prediction {
                    fold: fold_id,
                    repeat,
                    cycle_id: table.set.ids[r].clone(),
                    subject_id: table.subjects[r].clone(),
                    truth: Label::from_sign(table.set.labels[r]),
                    predicted: Label::from_sign(label),
                    score,
                });
            }
        }
        out.push(preds);
    }
    Ok(out)
}

fn evaluate_counts(
    table: &FeatureTable,
    plan: &FoldPlan,
    config: &RunConfig,
    counts: &[Option<usize>],
) -> Result<Vec<EvalReport>> {
    config.validate()?;
    let per_fold: Vec<Vec<Vec<Prediction>>> = plan
        .folds
        .par_iter()
        .enumerate()
        .map(|(i, f)| run_fold(table, i, f, config, counts))
        .collect::<Result<_>>()?;
    let repeats = config.effective_repeats();
    Ok(counts
        .iter()
        .enumerate()
        .map(|(c, count)| {
            let preds: Vec<Prediction> = per_fold.iter().flat_map(|f| f[c].iter().cloned()).collect();
            let mut cfg = config.clone();
            cfg.select = *count;
            EvalReport::from_predictions(preds, cfg, repeats)
        })
        .collect())
}

/// Runs every fold on precomputed features, applying `config.select`.
pub fn evaluate_table(table: &FeatureTable, plan: &FoldPlan, config: &RunConfig) -> Result<EvalReport> {
    let mut reports = evaluate_counts(table, plan, config, &[config.select])?;
    Ok(reports.remove(0))
}

/// One report per selected-feature count. mRMR runs once per fold with the
/// largest count; greedy selection makes smaller counts its prefixes.
pub fn selection_sweep(
    table: &FeatureTable,
    plan: &FoldPlan,
    config: &RunConfig,
    counts: &[usize],
) -> Result<Vec<EvalReport>> {
    let counts: Vec<Option<usize>> = counts.iter().map(|&c| Some(c)).collect();
    evaluate_counts(table, plan, config, &counts)
}

/// Full pipeline: load, extract, evaluate.
pub fn run_eval(manifest: &DatasetManifest, config: &RunConfig, plan: &FoldPlan) -> Result<EvalReport> {
    let cycles = load_cycles(manifest, config.rate)?;
    evaluate_table(&extract_table(&cycles, config)?, plan, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    FrameMs,
    OverlapPct,
    NFilters,
}

impl SweepParam {
    pub fn apply(self, config: &RunConfig, value: f64) -> Result<RunConfig> {
        let mut c = config.clone();
        match self {
            SweepParam::FrameMs => c.frame_ms = value,
            SweepParam::OverlapPct => c.overlap_pct = value,
            SweepParam::NFilters => {
                if value.fract() != 0.0 || value < 3.0 {
                    return Err(EvalError::BadSweepValue { param: self, value }.into());
                }
                c.n_filters = value as usize;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::FrameMs => "frame_ms",
            SweepParam::OverlapPct => "overlap_pct",
            SweepParam::NFilters => "n_filters",
        })
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "frame_ms" | "frame-ms" => Ok(SweepParam::FrameMs),
            "overlap_pct" | "overlap" => Ok(SweepParam::OverlapPct),
            "n_filters" | "filters" => Ok(SweepParam::NFilters),
            other => Err(format!("unknown sweep parameter `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub report: EvalReport,
}

/// One full evaluation per value; everything else stays at `base`.
/// Audio is loaded once and re-featurized per value.
pub fn sweep(
    manifest: &DatasetManifest,
    base: &RunConfig,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<SweepRow>> {
    let configs: Vec<RunConfig> = values
        .iter()
        .map(|&v| param.apply(base, v))
        .collect::<Result<_>>()?;
    let plan = plan_loocv(manifest, base.granularity)?;
    let cycles = load_cycles(manifest, base.rate)?;
    values
        .iter()
        .zip(configs)
        .map(|(&value, cfg)| {
            let table = extract_table(&cycles, &cfg)?;
            Ok(SweepRow {
                value,
                report: evaluate_table(&table, &plan, &cfg)?,
            })
        })
        .collect()
}

/// `<x>,spe,sen,oaa` rows.
pub fn write_metrics_csv<W: Write>(out: W, x_name: &str, rows: &[(f64, &EvalReport)]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([x_name, "spe", "sen", "oaa"])?;
    for (x, r) in rows {
        w.write_record([x.to_string(), r.spe.to_string(), r.sen.to_string(), r.oaa.to_string()])?;
    }
    w.flush()
}
