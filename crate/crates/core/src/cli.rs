//! Command-line front end.
//!
//! Stages talk through files: manifest CSV, feature CSV, model JSON and
//! report JSON. Exit codes are 0 on success, 1 when the pipeline fails and
//! 2 for usage errors.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::audio_io::load_manifest;
use crate::classifiers::KernelKind;
use crate::config::{ClassifierKind, FeatureKind, Granularity, Profile, RunConfig};
use crate::eval::{
    evaluate_table, extract_table, load_cycles, selection_sweep, sweep, train_model, write_metrics_csv,
    FeatureTable, SweepParam,
};
use crate::selection::{discretize, mrmr_select};
use crate::synth::{generate_dataset, generate_subject_dataset};

#[derive(Debug, Parser)]
#[command(name = "lungtex", version, about = "Lung-sound classification with LBP texture of mel spectra")]
pub struct Cli {
    /// Worker threads for folds and extraction (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus (WAV files plus manifest.csv).
    Synth(SynthArgs),
    /// Extract one feature row per cycle into a CSV.
    Extract(ExtractArgs),
    /// Train a classifier on a feature CSV and write the model as JSON.
    Train(TrainArgs),
    /// Leave-one-out evaluation; writes a JSON report.
    Eval(EvalArgs),
    /// Evaluate over a range of one framing parameter; writes CSV.
    Sweep(SweepArgs),
    /// mRMR feature selection, or accuracy versus selected-feature count.
    Select(SelectArgs),
    /// Emit the data series behind the parameter and selection plots.
    PlotData(PlotDataArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Cycles per class (normal, wheeze, crackle).
    #[arg(long, default_value_t = 24)]
    pub per_class: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Subject-grouped corpus with this many subjects (half normal, half crackle).
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Cycles per subject in the subject-grouped corpus.
    #[arg(long, default_value_t = 5)]
    pub cycles_per_subject: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Framing and feature options.
#[derive(Debug, Args, Clone)]
pub struct PipelineArgs {
    /// Parameter preset: optimized = 40 ms / 90% / 20 filters, speech-default = 20 ms / 50% / 20 filters.
    #[arg(long, default_value = "optimized", value_parser = parse_from_str::<Profile>)]
    pub profile: Profile,
    /// Processing sample rate in Hz; input files must be at least this fast.
    #[arg(long, default_value_t = 4000)]
    pub rate: u32,
    /// Frame length in ms (overrides the profile).
    #[arg(long)]
    pub frame_ms: Option<f64>,
    /// Frame overlap in percent (overrides the profile).
    #[arg(long)]
    pub overlap: Option<f64>,
    /// Number of mel filters.
    #[arg(long, default_value_t = 20)]
    pub filters: usize,
    /// FFT length (default: next power of two above the frame length).
    #[arg(long)]
    pub n_fft: Option<usize>,
    /// lbp | wavelet27 | mfcc-mean | mfsc-mean | morph. The baselines use
    /// db8 over 6 levels; lacunarity box 50; sample entropy m=2, r=0.2*std.
    #[arg(long, default_value = "lbp", value_parser = parse_from_str::<FeatureKind>)]
    pub feature: FeatureKind,
}

/// Classifier options.
#[derive(Debug, Args, Clone)]
pub struct ClassifierArgs {
    /// knn | svm | mlp
    #[arg(long, default_value = "svm", value_parser = parse_from_str::<ClassifierKind>)]
    pub classifier: ClassifierKind,
    /// linear | bhat | isect | rbf (SVM only)
    #[arg(long, default_value = "bhat", value_parser = parse_from_str::<KernelKind>)]
    pub kernel: KernelKind,
    /// RBF width (default 1/d).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Neighbors for kNN (odd).
    #[arg(short, long, default_value_t = 3)]
    pub k: usize,
    /// SVM penalty.
    #[arg(short = 'C', long = "c", default_value_t = 1.0)]
    pub c: f64,
    /// MLP training epochs.
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    /// MLP hidden units.
    #[arg(long, default_value_t = 40)]
    pub hidden: usize,
    /// Seeded MLP runs averaged per evaluation.
    #[arg(long, default_value_t = 25)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Evaluation protocol options.
#[derive(Debug, Args, Clone)]
pub struct ProtocolArgs {
    /// cycle | subject
    #[arg(long, default_value = "cycle", value_parser = parse_from_str::<Granularity>)]
    pub granularity: Granularity,
    /// Keep this many mRMR-selected features inside each training fold.
    #[arg(long)]
    pub select: Option<usize>,
    /// mRMR discretization width in standard deviations.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Feature CSV written by `extract`.
    #[arg(long)]
    pub features: PathBuf,
    #[command(flatten)]
    pub classifier: ClassifierArgs,
    #[arg(long)]
    pub out: PathBuf,
}

/// Where evaluation data comes from: audio through the manifest, or an
/// already extracted feature CSV.
#[derive(Debug, Args, Clone)]
#[group(required = true, multiple = false)]
pub struct Source {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Feature CSV from `extract` (cycle granularity only).
    #[arg(long)]
    pub features: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub source: Source,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub classifier: ClassifierArgs,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SweepParamArg {
    FrameMs,
    Overlap,
    Filters,
}

impl From<SweepParamArg> for SweepParam {
    fn from(p: SweepParamArg) -> Self {
        match p {
            SweepParamArg::FrameMs => SweepParam::FrameMs,
            SweepParamArg::Overlap => SweepParam::OverlapPct,
            SweepParamArg::Filters => SweepParam::NFilters,
        }
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum)]
    pub param: SweepParamArg,
    /// Inclusive range `A..B`.
    #[arg(long, value_parser = parse_range)]
    pub range: (f64, f64),
    #[arg(long, default_value_t = 10.0)]
    pub step: f64,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub classifier: ClassifierArgs,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    /// CSV with columns value,spe,sen,oaa.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub source: Source,
    /// Select this many features on the whole set and write JSON.
    #[arg(long, conflicts_with = "sweep")]
    pub count: Option<usize>,
    /// Evaluate counts in the inclusive range `A..B` under leave-one-out.
    #[arg(long, value_parser = parse_count_range)]
    pub sweep: Option<(usize, usize)>,
    #[arg(long, default_value_t = 1)]
    pub step: usize,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub classifier: ClassifierArgs,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Figure {
    /// Frame length 20..200 ms in steps of 10.
    FrameLength,
    /// Overlap 10..90% in steps of 10.
    Overlap,
    /// Filter count 10..90 in steps of 10.
    Filters,
    /// OAA against a coarse grid of selected-feature counts.
    SelectedFeatures,
}

#[derive(Debug, Args)]
pub struct PlotDataArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum)]
    pub figure: Figure,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub classifier: ClassifierArgs,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_from_str<T: std::str::FromStr<Err = String>>(s: &str) -> Result<T, String> {
    s.parse()
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected A..B, got `{s}`"))?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if b < a {
        return Err(format!("empty range `{s}`"));
    }
    Ok((a, b))
}

fn parse_count_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = parse_range(s)?;
    if a < 1.0 || a.fract() != 0.0 || b.fract() != 0.0 {
        return Err(format!("counts must be positive integers, got `{s}`"));
    }
    Ok((a as usize, b as usize))
}

/// Inclusive grid from `a` to `b`; tolerant to rounding in the last step.
pub fn grid(a: f64, b: f64, step: f64) -> anyhow::Result<Vec<f64>> {
    if !(step > 0.0) {
        bail!("step must be positive");
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| a + i as f64 * step).collect())
}

impl PipelineArgs {
    fn apply(&self, c: &mut RunConfig) {
        let preset = RunConfig::for_profile(self.profile);
        c.profile = self.profile;
        c.rate = self.rate;
        c.frame_ms = self.frame_ms.unwrap_or(preset.frame_ms);
        c.overlap_pct = self.overlap.unwrap_or(preset.overlap_pct);
        c.n_filters = self.filters;
        c.n_fft = self.n_fft;
        c.feature = self.feature;
    }
}

impl ClassifierArgs {
    fn apply(&self, c: &mut RunConfig) {
        c.classifier = self.classifier;
        c.kernel = self.kernel;
        c.gamma = self.gamma;
        c.k = self.k;
        c.c = self.c;
        c.epochs = self.epochs;
        c.hidden = self.hidden;
        c.repeats = self.repeats;
        c.seed = self.seed;
    }
}

impl ProtocolArgs {
    fn apply(&self, c: &mut RunConfig) {
        c.granularity = self.granularity;
        c.select = self.select;
        c.sigma = self.sigma;
    }
}

fn build_config(
    pipeline: &PipelineArgs,
    classifier: Option<&ClassifierArgs>,
    protocol: Option<&ProtocolArgs>,
) -> anyhow::Result<RunConfig> {
    let mut c = RunConfig::default();
    pipeline.apply(&mut c);
    if let Some(a) = classifier {
        a.apply(&mut c);
    }
    if let Some(p) = protocol {
        p.apply(&mut c);
    }
    c.validate()?;
    Ok(c)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    serde_json::to_writer_pretty(create(path)?, value)?;
    Ok(())
}

/// Features for every cycle, sorted by cycle id.
fn load_table(source: &Source, config: &RunConfig) -> anyhow::Result<FeatureTable> {
    match (&source.manifest, &source.features) {
        (Some(m), _) => {
            let manifest = load_manifest(m)?;
            let mut cycles = load_cycles(&manifest, config.rate)?;
            cycles.sort_by(|a, b| a.cycle_id.cmp(&b.cycle_id));
            Ok(extract_table(&cycles, config)?)
        }
        (None, Some(f)) => {
            if config.granularity == Granularity::Subject {
                bail!("feature CSVs carry no subject ids; use --manifest for subject granularity");
            }
            let table = FeatureTable::read_csv(f)?;
            if table.kind != config.feature {
                bail!("{} holds {} features but --feature is {}", f.display(), table.kind, config.feature);
            }
            Ok(table)
        }
        (None, None) => bail!("either --manifest or --features is required"),
    }
}

fn cmd_synth(a: &SynthArgs) -> anyhow::Result<()> {
    let manifest = match a.subjects {
        Some(s) => generate_subject_dataset(s, a.cycles_per_subject, a.seed, &a.out)?,
        None => generate_dataset(a.per_class, a.seed, &a.out)?,
    };
    eprintln!(
        "wrote {} cycles and {}",
        manifest.entries.len(),
        a.out.join("manifest.csv").display()
    );
    Ok(())
}

fn cmd_extract(a: &ExtractArgs) -> anyhow::Result<()> {
    let config = build_config(&a.pipeline, None, None)?;
    let source = Source {
        manifest: Some(a.manifest.clone()),
        features: None,
    };
    let table = load_table(&source, &config)?;
    table.write_csv(create(&a.out)?)?;
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> anyhow::Result<()> {
    let table = FeatureTable::read_csv(&a.features)?;
    let mut config = RunConfig::default();
    a.classifier.apply(&mut config);
    config.feature = table.kind;
    config.validate()?;
    let model = train_model(&table.set, &config, 0)?;
    std::fs::write(&a.out, model.to_json()).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> anyhow::Result<()> {
    let config = build_config(&a.pipeline, Some(&a.classifier), Some(&a.protocol))?;
    let table = load_table(&a.source, &config)?;
    let report = evaluate_table(&table, &table.plan(config.granularity)?, &config)?;
    write_json(&a.out, &report)?;
    eprintln!("SPE {:.2}  SEN {:.2}  OAA {:.2}", report.spe, report.sen, report.oaa);
    Ok(())
}

fn run_sweep(
    manifest: &Path,
    config: &RunConfig,
    param: SweepParam,
    values: &[f64],
    out: &Path,
) -> anyhow::Result<()> {
    let manifest = load_manifest(manifest)?;
    let rows = sweep(&manifest, config, param, values)?;
    let series: Vec<(f64, _)> = rows.iter().map(|r| (r.value, &r.report)).collect();
    write_metrics_csv(create(out)?, &param.to_string(), &series)?;
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> anyhow::Result<()> {
    let config = build_config(&a.pipeline, Some(&a.classifier), Some(&a.protocol))?;
    let values = grid(a.range.0, a.range.1, a.step)?;
    run_sweep(&a.manifest, &config, a.param.into(), &values, &a.out)
}

fn run_selection_sweep(table: &FeatureTable, config: &RunConfig, counts: &[usize], out: &Path) -> anyhow::Result<()> {
    let reports = selection_sweep(table, &table.plan(config.granularity)?, config, counts)?;
    let series: Vec<(f64, _)> = counts.iter().map(|&c| c as f64).zip(reports.iter()).collect();
    write_metrics_csv(create(out)?, "n_selected", &series)?;
    Ok(())
}

fn cmd_select(a: &SelectArgs) -> anyhow::Result<()> {
    let config = build_config(&a.pipeline, Some(&a.classifier), Some(&a.protocol))?;
    let table = load_table(&a.source, &config)?;
    match (a.count, a.sweep) {
        (Some(count), None) => {
            let states = discretize(&table.set.features, config.sigma);
            let mut result = mrmr_select(&states, &table.set.labels, count)?;
            if table.kind == FeatureKind::Lbp {
                result = result.with_filter_counts(config.n_filters)?;
            }
            write_json(&a.out, &result)
        }
        (None, Some((lo, hi))) => {
            if a.step == 0 {
                bail!("step must be positive");
            }
            let hi = hi.min(table.set.dim());
            let counts: Vec<usize> = (lo..=hi).step_by(a.step).collect();
            if counts.is_empty() {
                bail!("no counts in {lo}..{hi}");
            }
            run_selection_sweep(&table, &config, &counts, &a.out)
        }
        _ => bail!("give exactly one of --count or --sweep"),
    }
}

/// Coarse, roughly logarithmic count grid up to `d`.
pub fn selection_grid(d: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = [1, 2, 5, 10, 20, 35, 50, 75, 100, 150, 200, 300, 400, 500, 600, 800]
        .into_iter()
        .filter(|&c| c < d)
        .collect();
    counts.push(d);
    counts
}

fn cmd_plot_data(a: &PlotDataArgs) -> anyhow::Result<()> {
    let config = build_config(&a.pipeline, Some(&a.classifier), Some(&a.protocol))?;
    match a.figure {
        Figure::FrameLength => run_sweep(&a.manifest, &config, SweepParam::FrameMs, &grid(20.0, 200.0, 10.0)?, &a.out),
        Figure::Overlap => run_sweep(&a.manifest, &config, SweepParam::OverlapPct, &grid(10.0, 90.0, 10.0)?, &a.out),
        Figure::Filters => run_sweep(&a.manifest, &config, SweepParam::NFilters, &grid(10.0, 90.0, 10.0)?, &a.out),
        Figure::SelectedFeatures => {
            let source = Source {
                manifest: Some(a.manifest.clone()),
                features: None,
            };
            let table = load_table(&source, &config)?;
            run_selection_sweep(&table, &config, &selection_grid(table.set.dim()), &a.out)
        }
    }
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    let go = || match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Select(a) => cmd_select(a),
        Command::PlotData(a) => cmd_plot_data(a),
    };
    match cli.jobs {
        Some(0) => bail!("--jobs must be positive"),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(go),
        None => go(),
    }
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
