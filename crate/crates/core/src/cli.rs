//! `skyirr` command-line front end.
//!
//! Every command writes its outputs plus a `manifest.json` into `--out`.
//! The manifest lists the command, its arguments, the seed, the tool
//! version and SHA-256 digests of inputs and outputs; it leaves out the
//! worker count and output directory so reruns compare equal.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use chrono::{NaiveDate, NaiveTime};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::clearsky::{self, clear_sky_at, clear_sky_profile, daily_extraterrestrial, ClearSkyConstants};
use crate::evaluate::{self, parse_fraction_grid, split_study, Quartiles, DEFAULT_BIN_WIDTH, DEFAULT_REPEATS, WITHIN_BAND};
use crate::geometry::solar_position;
use crate::ingest::{
    filter_daylight, format_timestamp, load_irradiance_series, load_pairs, load_sky_image,
    pair_luminance, save_pairs, IrradianceSeries, MetadataSource, PairedSample, Sidecar, DEFAULT_MAX_GAP_S,
};
use crate::luminance::{image_luminance_pipeline, read_records, write_records, LuminanceRecord, PipelineConfig};
use crate::plot::{self, Series};
use crate::regress::benchmark::{benchmark_estimate, disaggregate, BenchmarkInputs, BenchmarkKind, BenchmarkParams};
use crate::regress::{
    fit_polynomial, load_model, model_selection_table, normalize_series, predict, save_model, NormalizationMode,
    MAX_DEGREE, MIN_DEGREE,
};
use crate::render::{self, DatasetConfig, DayProfile, ProfileShape};
use crate::site::{Location, SiteConfig, DEFAULT_SEED};
use crate::sundetect::DEFAULT_SUN_THRESHOLD;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const MANIFEST_FILE: &str = "manifest.json";

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "jpg", "jpeg", "tif", "tiff"];

#[derive(Debug, Parser)]
#[command(name = "skyirr", version, about = "Solar irradiance from whole-sky camera images")]
pub struct Cli {
    /// Site description (TOML): location, lens and sampling settings.
    #[arg(long, global = true)]
    pub site: Option<PathBuf>,
    /// Random seed; defaults to the site's `rng_seed`, then 20160901.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Per-image luminance, optionally paired with sensor readings.
    Luminance(LuminanceArgs),
    /// Fit a luminance-to-irradiance polynomial.
    Fit(FitArgs),
    /// Apply a fitted model to luminance records.
    Predict(PredictArgs),
    /// RMSE, Spearman correlation and difference histogram of a model.
    Evaluate(EvaluateArgs),
    /// Repeated random train/test splits over training fractions.
    Study(StudyArgs),
    /// Clear-sky irradiance over one local day.
    Clearsky(ClearskyArgs),
    /// Temperature-based daily estimators against measured irradiance.
    Benchmark(BenchmarkArgs),
    /// Synthetic image set with known irradiance.
    Render(RenderArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Luminance(_) => "luminance",
            Command::Fit(_) => "fit",
            Command::Predict(_) => "predict",
            Command::Evaluate(_) => "evaluate",
            Command::Study(_) => "study",
            Command::Clearsky(_) => "clearsky",
            Command::Benchmark(_) => "benchmark",
            Command::Render(_) => "render",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct LuminanceArgs {
    /// Directory of sky images.
    #[arg(long)]
    pub images: PathBuf,
    /// Metadata CSV; `<images>/sidecar.csv` is used when present.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    /// Sensor series to pair with; writes `pairs.csv`.
    #[arg(long)]
    pub weather: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_GAP_S)]
    pub max_gap: f64,
    /// Local daylight window for pairing, `HH:MM-HH:MM`.
    #[arg(long, default_value = "07:00-19:00")]
    pub window: String,
    #[arg(long, default_value_t = DEFAULT_SUN_THRESHOLD)]
    pub threshold: u8,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub degree: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// `luminance.csv` from the luminance command.
    #[arg(long)]
    pub luminance: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizeArg {
    Global,
    PerDay,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub pairs: PathBuf,
    /// Label the pairs as held out from training (default: in-sample).
    #[arg(long)]
    pub holdout: bool,
    #[arg(long, default_value_t = DEFAULT_BIN_WIDTH)]
    pub bin_width: f64,
    /// Also write luminance scaled onto measured irradiance.
    #[arg(long, value_enum)]
    pub normalize: Option<NormalizeArg>,
}

#[derive(Debug, Args, Serialize)]
pub struct StudyArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    /// Training fractions, `start:stop:step` or a single value.
    #[arg(long, default_value = "0.1:0.9:0.1")]
    pub fractions: String,
    #[arg(long, default_value_t = DEFAULT_REPEATS)]
    pub repeats: usize,
    #[arg(long, default_value_t = 3)]
    pub degree: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ClearskyArgs {
    /// Local calendar date, `YYYY-MM-DD`.
    #[arg(long)]
    pub date: NaiveDate,
    /// Seconds between samples.
    #[arg(long, default_value_t = 120)]
    pub step: u32,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchmarkArgs {
    /// Sensor series with `tmax_c`, `tmin_c` and, for Hunt, `rain_mm`.
    #[arg(long)]
    pub weather: PathBuf,
    /// Models to run: hs, dc, bc, hunt; all by default.
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct RenderArgs {
    #[arg(long, default_value_t = 200)]
    pub images: usize,
    #[arg(long, default_value = "2016-09-01")]
    pub date: NaiveDate,
    /// Irradiance noise, W/m².
    #[arg(long, default_value_t = 20.0)]
    pub noise: f64,
    /// Pixel noise, 8-bit code values.
    #[arg(long, default_value_t = 0.0)]
    pub pixel_noise: f64,
    #[arg(long, default_value_t = render::DEFAULT_IMAGE_SIZE)]
    pub size: u32,
    /// Highest true cosine-weighted luminance of the day.
    #[arg(long, default_value_t = 60000.0)]
    pub peak: f64,
}

/// Error raised for bad invocations rather than bad data.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Parses arguments, runs the command and maps failures to exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(EXIT_DATA)
            }
        }
    }
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cli.jobs {
            if n == 0 {
                return Err(usage("--jobs must be at least 1"));
            }
            b = b.num_threads(n);
        }
        b.build().context("starting worker pool")?
    };
    pool.install(|| dispatch(cli))
}

struct RunState {
    site: Option<SiteConfig>,
    seed: u64,
    out: PathBuf,
    inputs: Vec<PathBuf>,
    outputs: Vec<String>,
}

impl RunState {
    fn site(&self, command: &str) -> anyhow::Result<&SiteConfig> {
        self.site
            .as_ref()
            .ok_or_else(|| usage(format!("`{command}` needs --site")))
    }

    fn location(&self) -> Location {
        self.site.as_ref().map_or(Location::DEFAULT, SiteConfig::location)
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.out.join(name)
    }

    fn input(&mut self, path: &Path) -> PathBuf {
        self.inputs.push(path.to_path_buf());
        path.to_path_buf()
    }

    fn write_svg(&mut self, name: &str, svg: &str) -> anyhow::Result<()> {
        let p = self.path(name);
        plot::save(&p, svg).with_context(|| format!("writing {}", p.display()))
    }

    fn csv(&mut self, name: &str, header: &[&str]) -> anyhow::Result<csv::Writer<File>> {
        let p = self.path(name);
        let mut w = csv::Writer::from_path(&p).with_context(|| format!("creating {}", p.display()))?;
        w.write_record(header)?;
        Ok(w)
    }
}

fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    let site = match &cli.site {
        Some(p) => Some(SiteConfig::load(p).with_context(|| format!("reading site {}", p.display()))?),
        None => None,
    };
    let seed = cli
        .seed
        .or_else(|| site.as_ref().map(|s| s.rng_seed))
        .unwrap_or(DEFAULT_SEED);
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let mut ctx = RunState {
        site,
        seed,
        out: cli.out.clone(),
        inputs: cli.site.iter().cloned().collect(),
        outputs: Vec::new(),
    };
    match &cli.command {
        Command::Luminance(a) => cmd_luminance(&mut ctx, a)?,
        Command::Fit(a) => cmd_fit(&mut ctx, a)?,
        Command::Predict(a) => cmd_predict(&mut ctx, a)?,
        Command::Evaluate(a) => cmd_evaluate(&mut ctx, a)?,
        Command::Study(a) => cmd_study(&mut ctx, a)?,
        Command::Clearsky(a) => cmd_clearsky(&mut ctx, a)?,
        Command::Benchmark(a) => cmd_benchmark(&mut ctx, a)?,
        Command::Render(a) => cmd_render(&mut ctx, a)?,
    }
    write_manifest(&ctx, cli)
}

#[derive(Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    site: Option<String>,
    arguments: &'a Command,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let mut h = Sha256::new();
    let mut f = File::open(path).with_context(|| format!("hashing {}", path.display()))?;
    std::io::copy(&mut f, &mut h)?;
    Ok(hex::encode(h.finalize()))
}

fn digest_inputs(paths: &[PathBuf]) -> anyhow::Result<Vec<FileDigest>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|e| e.is_file())
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(p.clone());
        }
    }
    files
        .iter()
        .map(|f| {
            Ok(FileDigest {
                path: f.display().to_string(),
                sha256: sha256_file(f)?,
            })
        })
        .collect()
}

fn write_manifest(ctx: &RunState, cli: &Cli) -> anyhow::Result<()> {
    let outputs = ctx
        .outputs
        .iter()
        .map(|name| {
            Ok(FileDigest {
                path: name.clone(),
                sha256: sha256_file(&ctx.out.join(name))?,
            })
        })
        .collect::<anyhow::Result<_>>()?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name(),
        seed: ctx.seed,
        site: cli.site.as_ref().map(|p| p.display().to_string()),
        arguments: &cli.command,
        inputs: digest_inputs(&ctx.inputs)?,
        outputs,
    };
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    std::fs::write(ctx.out.join(MANIFEST_FILE), text)?;
    Ok(())
}

fn parse_window(s: &str) -> anyhow::Result<(NaiveTime, NaiveTime)> {
    let (a, b) = s
        .split_once('-')
        .ok_or_else(|| usage(format!("window `{s}` is not HH:MM-HH:MM")))?;
    let t = |x: &str| {
        NaiveTime::parse_from_str(x.trim(), "%H:%M").map_err(|_| usage(format!("bad time `{x}` in window `{s}`")))
    };
    Ok((t(a)?, t(b)?))
}

fn list_images(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn cmd_luminance(ctx: &mut RunState, a: &LuminanceArgs) -> anyhow::Result<()> {
    let site = ctx.site("luminance")?.clone();
    let lens = site.lens()?;
    let window = parse_window(&a.window)?;
    let files = list_images(&a.images)?;
    ctx.input(&a.images);

    let sidecar_path = a.sidecar.clone().or_else(|| {
        let p = a.images.join("sidecar.csv");
        p.is_file().then_some(p)
    });
    let sidecar = match &sidecar_path {
        Some(p) => Some(Sidecar::load(p).with_context(|| format!("reading sidecar {}", p.display()))?),
        None => None,
    };
    if let Some(p) = sidecar_path.as_ref().filter(|p| !p.starts_with(&a.images)) {
        ctx.input(p);
    }
    let offset = site.utc_offset()?;
    let source = match &sidecar {
        Some(s) => MetadataSource::both(s),
        None => MetadataSource::embedded(),
    }
    .with_naive_offset(offset);

    let seed = ctx.seed;
    let results: Vec<Option<LuminanceRecord>> = files
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let outcome = load_sky_image(path, &source).and_then(|img| {
                let geom = solar_position(img.meta.timestamp, site.latitude_deg, site.longitude_deg);
                if !geom.is_daytime() {
                    info!("{}: sun below horizon, skipped", path.display());
                    return Ok(None);
                }
                let cfg = PipelineConfig {
                    samples_n: site.samples_n,
                    seed,
                    stream: i as u64,
                    sun_threshold: a.threshold,
                };
                image_luminance_pipeline(&img, &lens, &geom, &cfg).map(Some)
            });
            match outcome {
                Ok(r) => r,
                Err(e) => {
                    warn!("{}: {e}", path.display());
                    None
                }
            }
        })
        .collect();
    let mut records: Vec<LuminanceRecord> = results.into_iter().flatten().collect();
    if records.is_empty() {
        bail!("no usable images in {}", a.images.display());
    }
    records.sort_by_key(|r| r.timestamp);
    info!("{} of {} images processed", records.len(), files.len());

    let p = ctx.path("luminance.csv");
    write_records(File::create(&p)?, &records)?;

    if let Some(weather) = &a.weather {
        let series = load_irradiance_series(ctx.input(weather))?;
        let lum: Vec<_> = records.iter().map(|r| (r.timestamp, r.weighted_luminance)).collect();
        let pairs = pair_luminance(&lum, &series, a.max_gap);
        let pairs = filter_daylight(&pairs, window.0, window.1, offset)?;
        info!("{} pairs inside the daylight window", pairs.len());
        save_pairs(ctx.path("pairs.csv"), &pairs)?;
    }
    Ok(())
}

fn read_pairs(ctx: &mut RunState, path: &Path) -> anyhow::Result<Vec<PairedSample>> {
    let pairs = load_pairs(ctx.input(path)).with_context(|| format!("reading pairs {}", path.display()))?;
    if pairs.is_empty() {
        bail!("{} has no pairs", path.display());
    }
    Ok(pairs)
}

fn cmd_fit(ctx: &mut RunState, a: &FitArgs) -> anyhow::Result<()> {
    if !(MIN_DEGREE..=MAX_DEGREE).contains(&a.degree) {
        return Err(usage(format!("--degree must be in {MIN_DEGREE}..={MAX_DEGREE}")));
    }
    let pairs = read_pairs(ctx, &a.pairs)?;
    let model = fit_polynomial(&pairs, a.degree)?;
    save_model(&model, ctx.path("model.json"))?;

    let degrees = (MIN_DEGREE..=MAX_DEGREE).filter(|d| d + 1 <= pairs.len());
    let table = model_selection_table(&pairs, degrees)?;
    let mut w = ctx.csv("model_selection.csv", &["degree", "rmse"])?;
    for row in &table {
        w.write_record([row.degree.to_string(), row.rmse.to_string()])?;
    }
    w.flush()?;

    let max_l = pairs.iter().map(|p| p.luminance).fold(0.0f64, f64::max);
    let curve: Vec<(f64, f64)> = (0..=200)
        .map(|i| {
            let l = max_l * f64::from(i) / 200.0;
            (l, predict(&model, l).value)
        })
        .collect();
    let mut w = ctx.csv("fit_curve.csv", &["luminance", "irradiance"])?;
    for (l, s) in &curve {
        w.write_record([l.to_string(), s.to_string()])?;
    }
    w.flush()?;
    let svg = plot::xy_chart(
        &format!("degree {} fit, RMSE {:.2} W/m²", model.degree, model.fit_rmse),
        "luminance",
        "irradiance (W/m²)",
        &[
            Series::Scatter {
                label: "pairs".into(),
                points: pairs.iter().map(|p| (p.luminance, p.irradiance)).collect(),
            },
            Series::Line {
                label: "model".into(),
                points: curve,
            },
        ],
    );
    ctx.write_svg("fit_curve.svg", &svg)
}

fn cmd_predict(ctx: &mut RunState, a: &PredictArgs) -> anyhow::Result<()> {
    let model = load_model(ctx.input(&a.model)).with_context(|| format!("reading model {}", a.model.display()))?;
    let name = a.luminance.display().to_string();
    let records = read_records(BufReader::new(File::open(ctx.input(&a.luminance))?), &name)?;
    let mut w = ctx.csv("predictions.csv", &["timestamp", "luminance", "ghi_wm2", "clamped"])?;
    for r in &records {
        let p = predict(&model, r.weighted_luminance);
        w.write_record([
            format_timestamp(&r.timestamp),
            r.weighted_luminance.to_string(),
            p.value.to_string(),
            p.clamped.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn cmd_evaluate(ctx: &mut RunState, a: &EvaluateArgs) -> anyhow::Result<()> {
    if !(a.bin_width > 0.0) {
        return Err(usage("--bin-width must be positive"));
    }
    let model = load_model(ctx.input(&a.model)).with_context(|| format!("reading model {}", a.model.display()))?;
    let pairs = read_pairs(ctx, &a.pairs)?;
    let actual: Vec<f64> = pairs.iter().map(|p| p.irradiance).collect();
    let estimated: Vec<f64> = pairs.iter().map(|p| predict(&model, p.luminance).value).collect();
    let report = evaluate::evaluate(&actual, &estimated, a.bin_width)?;
    let protocol = if a.holdout { "held-out" } else { "in-sample" };

    let within = format!("fraction_within_{WITHIN_BAND}");
    let mut w = ctx.csv("metrics.csv", &["protocol", "n", "rmse", "spearman", &within])?;
    w.write_record([
        protocol.to_string(),
        report.n.to_string(),
        report.rmse.to_string(),
        opt(report.spearman),
        report.histogram.fraction_within_band.to_string(),
    ])?;
    w.flush()?;

    let mut w = ctx.csv("histogram.csv", &["bin_lo", "bin_hi", "count"])?;
    for b in &report.histogram.bins {
        w.write_record([b.lo.to_string(), b.hi.to_string(), b.count.to_string()])?;
    }
    w.flush()?;
    let svg = plot::histogram_chart(
        &format!("estimated - measured ({protocol})"),
        "difference (W/m²)",
        &report.histogram.bins,
    );
    ctx.write_svg("histogram.svg", &svg)?;

    let svg = plot::xy_chart(
        &format!("estimated vs measured ({protocol})"),
        "measured (W/m²)",
        "estimated (W/m²)",
        &[Series::Scatter {
            label: "images".into(),
            points: actual.iter().copied().zip(estimated.iter().copied()).collect(),
        }],
    );
    ctx.write_svg("scatter.svg", &svg)?;

    if let Some(mode) = a.normalize {
        let mode = match mode {
            NormalizeArg::Global => NormalizationMode::Global,
            NormalizeArg::PerDay => NormalizationMode::PerDay,
        };
        let times: Vec<_> = pairs.iter().map(|p| p.timestamp).collect();
        let lum: Vec<f64> = pairs.iter().map(|p| p.luminance).collect();
        let loc = ctx.location();
        let scaled = normalize_series(&times, &actual, &lum, mode, loc.utc_offset()?)?;
        let constants = ClearSkyConstants::default();
        let clear: Vec<f64> = times.iter().map(|t| clear_sky_at(*t, &loc, &constants)).collect();
        let mut w = ctx.csv(
            "tracking.csv",
            &["timestamp", "measured", "estimated", "scaled_luminance", "clear_sky"],
        )?;
        for i in 0..pairs.len() {
            w.write_record([
                format_timestamp(&times[i]),
                actual[i].to_string(),
                estimated[i].to_string(),
                scaled[i].to_string(),
                clear[i].to_string(),
            ])?;
        }
        w.flush()?;
        let hours = |t: &chrono::DateTime<chrono::Utc>| (t.timestamp() - times[0].timestamp()) as f64 / 3600.0;
        let line = |label: &str, v: &[f64]| Series::Line {
            label: label.into(),
            points: times.iter().map(hours).zip(v.iter().copied()).collect(),
        };
        let svg = plot::xy_chart(
            "irradiance and scaled luminance",
            "hours since first pair",
            "W/m²",
            &[
                line("measured", &actual),
                line("scaled luminance", &scaled),
                line("clear sky", &clear),
            ],
        );
        ctx.write_svg("tracking.svg", &svg)?;
    }
    Ok(())
}

fn cmd_study(ctx: &mut RunState, a: &StudyArgs) -> anyhow::Result<()> {
    let fractions = parse_fraction_grid(&a.fractions).map_err(|e| usage(e.to_string()))?;
    if a.repeats == 0 {
        return Err(usage("--repeats must be at least 1"));
    }
    let pairs = read_pairs(ctx, &a.pairs)?;
    let study = split_study(&pairs, &fractions, a.repeats, a.degree, ctx.seed)?;

    let mut w = ctx.csv("study.csv", &["train_fraction", "train_size", "repeat", "train_rmse", "test_rmse"])?;
    for s in &study {
        for (i, r) in s.repeats.iter().enumerate() {
            w.write_record([
                s.train_fraction.to_string(),
                s.train_size.to_string(),
                i.to_string(),
                r.train_rmse.to_string(),
                opt(r.test_rmse),
            ])?;
        }
    }
    w.flush()?;

    let mut w = ctx.csv(
        "study_summary.csv",
        &[
            "train_fraction",
            "train_q1",
            "train_median",
            "train_q3",
            "test_q1",
            "test_median",
            "test_q3",
        ],
    )?;
    for s in &study {
        let t = s.test_quartiles;
        w.write_record([
            s.train_fraction.to_string(),
            s.train_quartiles.q1.to_string(),
            s.train_quartiles.median.to_string(),
            s.train_quartiles.q3.to_string(),
            opt(t.map(|q| q.q1)),
            opt(t.map(|q| q.median)),
            opt(t.map(|q| q.q3)),
        ])?;
    }
    w.flush()?;

    let boxes = |pick: &dyn Fn(&evaluate::RepeatResult) -> Option<f64>| -> Vec<(f64, Quartiles, f64, f64)> {
        study
            .iter()
            .filter_map(|s| {
                let v: Vec<f64> = s.repeats.iter().filter_map(pick).collect();
                let q = Quartiles::of(&v)?;
                let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Some((s.train_fraction, q, lo, hi))
            })
            .collect()
    };
    let svg = plot::box_chart("training RMSE", "training fraction", "RMSE (W/m²)", &boxes(&|r| Some(r.train_rmse)));
    ctx.write_svg("study_train.svg", &svg)?;
    let svg = plot::box_chart("test RMSE", "training fraction", "RMSE (W/m²)", &boxes(&|r| r.test_rmse));
    ctx.write_svg("study_test.svg", &svg)
}

fn cmd_clearsky(ctx: &mut RunState, a: &ClearskyArgs) -> anyhow::Result<()> {
    if a.step == 0 {
        return Err(usage("--step must be positive"));
    }
    let loc = ctx.location();
    let profile = clear_sky_profile(a.date, &loc, a.step, &ClearSkyConstants::default())?;
    let mut w = ctx.csv("clearsky.csv", &["timestamp", "zenith_deg", "ghi_wm2"])?;
    for p in &profile {
        w.write_record([format_timestamp(&p.timestamp), p.zenith_deg.to_string(), p.ghi.to_string()])?;
    }
    w.flush()?;
    let offset = loc.utc_offset()?;
    let points = profile
        .iter()
        .map(|p| {
            let local = p.timestamp.with_timezone(&offset).time();
            (f64::from(local.signed_duration_since(NaiveTime::MIN).num_seconds() as i32) / 3600.0, p.ghi)
        })
        .collect();
    let svg = plot::xy_chart(
        &format!("clear-sky GHI {}", a.date),
        "local time (h)",
        "GHI (W/m²)",
        &[Series::Line {
            label: "clear sky".into(),
            points,
        }],
    );
    ctx.write_svg("clearsky.svg", &svg)
}

struct DayWeather {
    tmax: Option<f64>,
    tmin: Option<f64>,
    rain: Option<f64>,
    rows: Vec<usize>,
}

fn cmd_benchmark(ctx: &mut RunState, a: &BenchmarkArgs) -> anyhow::Result<()> {
    let kinds: Vec<BenchmarkKind> = if a.models.is_empty() {
        BenchmarkKind::ALL.to_vec()
    } else {
        a.models
            .iter()
            .map(|m| m.parse().map_err(|e: crate::Error| usage(e.to_string())))
            .collect::<anyhow::Result<_>>()?
    };
    let series: IrradianceSeries = load_irradiance_series(ctx.input(&a.weather))?;
    let loc = ctx.location();
    let offset = loc.utc_offset()?;
    let params = BenchmarkParams::default();
    let constants = ClearSkyConstants::default();

    let mut days: BTreeMap<NaiveDate, DayWeather> = BTreeMap::new();
    for (i, s) in series.samples().iter().enumerate() {
        let d = days.entry(s.timestamp.with_timezone(&offset).date_naive()).or_insert(DayWeather {
            tmax: None,
            tmin: None,
            rain: None,
            rows: Vec::new(),
        });
        let merge = |acc: Option<f64>, v: Option<f64>, f: fn(f64, f64) -> f64| match (acc, v) {
            (Some(a), Some(b)) => Some(f(a, b)),
            (a, b) => a.or(b),
        };
        d.tmax = merge(d.tmax, s.tmax_c, f64::max);
        d.tmin = merge(d.tmin, s.tmin_c, f64::min);
        d.rain = merge(d.rain, s.rain_mm, |a, b| a + b);
        d.rows.push(i);
    }

    let n = series.len();
    let mut estimates: Vec<Vec<Option<f64>>> = vec![vec![None; n]; kinds.len()];
    let mut w = ctx.csv(
        "benchmark_daily.csv",
        &["date", "extraterrestrial_wm2", "tmax_c", "tmin_c", "rain_mm", "model", "daily_mean_wm2"],
    )?;
    for (date, day) in &days {
        let (Some(tmax), Some(tmin)) = (day.tmax, day.tmin) else {
            warn!("{date}: no temperature range, skipped");
            continue;
        };
        let ra = daily_extraterrestrial(*date, loc.latitude_deg, constants.solar_constant);
        let inputs = BenchmarkInputs {
            extraterrestrial: ra,
            tmax_c: tmax,
            tmin_c: tmin,
            rain_mm: day.rain,
        };
        let profile = clear_sky_profile(*date, &loc, 120, &constants)?;
        let profile_mean = profile.iter().map(|p| p.ghi).sum::<f64>() / profile.len() as f64;
        let at: Vec<f64> = day
            .rows
            .iter()
            .map(|&i| clearsky::clear_sky_at(series.samples()[i].timestamp, &loc, &constants))
            .collect();
        for (k, kind) in kinds.iter().enumerate() {
            let daily = match benchmark_estimate(*kind, &inputs, &params) {
                Ok(v) => v,
                Err(e) => {
                    warn!("{date} {kind}: {e}");
                    continue;
                }
            };
            w.write_record([
                date.to_string(),
                ra.to_string(),
                tmax.to_string(),
                tmin.to_string(),
                opt(day.rain),
                kind.to_string(),
                daily.to_string(),
            ])?;
            for (&i, v) in day.rows.iter().zip(disaggregate(daily, &at, profile_mean)) {
                estimates[k][i] = Some(v);
            }
        }
    }
    w.flush()?;

    let mut header = vec!["timestamp".to_string(), "measured".to_string()];
    header.extend(kinds.iter().map(|k| k.to_string()));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut w = ctx.csv("benchmark.csv", &header)?;
    for (i, s) in series.samples().iter().enumerate() {
        let mut row = vec![format_timestamp(&s.timestamp), s.ghi.to_string()];
        row.extend(estimates.iter().map(|e| opt(e[i])));
        w.write_record(row)?;
    }
    w.flush()?;

    let mut w = ctx.csv("benchmark_metrics.csv", &["model", "n", "rmse", "spearman"])?;
    for (k, kind) in kinds.iter().enumerate() {
        let (actual, est): (Vec<f64>, Vec<f64>) = series
            .samples()
            .iter()
            .zip(&estimates[k])
            .filter_map(|(s, e)| e.map(|e| (s.ghi, e)))
            .unzip();
        if actual.is_empty() {
            warn!("{kind}: no estimates");
            continue;
        }
        let rmse = evaluate::rmse(&actual, &est)?;
        let rho = evaluate::spearman(&actual, &est).ok();
        w.write_record([kind.to_string(), actual.len().to_string(), rmse.to_string(), opt(rho)])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_render(ctx: &mut RunState, a: &RenderArgs) -> anyhow::Result<()> {
    if a.images == 0 {
        return Err(usage("--images must be at least 1"));
    }
    if a.size < 16 {
        return Err(usage("--size must be at least 16"));
    }
    let loc = ctx.location();
    let profile = DayProfile::daytime(a.date, loc, ProfileShape::ClearSky { peak_luminance: a.peak });
    let mut cfg = DatasetConfig::new(profile, a.images, ctx.seed);
    cfg.irradiance_noise_sigma = a.noise;
    cfg.pixel_noise_sigma = a.pixel_noise;
    cfg.image_size = a.size;
    let ds = render::render_dataset(&cfg)?;
    render::write_dataset(&ctx.out, &ds)?;
    for i in 0..ds.images.len() {
        ctx.outputs.push(render::image_file_name(i));
    }
    ctx.outputs.push("sidecar.csv".into());
    ctx.outputs.push("weather.csv".into());

    let site = SiteConfig {
        latitude_deg: loc.latitude_deg,
        longitude_deg: loc.longitude_deg,
        utc_offset_minutes: loc.utc_offset_minutes,
        focal_scale_px: ds.lens.focal_scale,
        center_x_px: ds.lens.center_x,
        center_y_px: ds.lens.center_y,
        image_circle_radius_px: ds.lens.image_circle_radius,
        samples_n: crate::site::DEFAULT_SAMPLES,
        rng_seed: ctx.seed,
    };
    std::fs::write(ctx.path("site.toml"), site.to_toml())?;

    let mut w = ctx.csv("truth.csv", &["timestamp", "zenith_deg", "true_luminance", "ghi_wm2"])?;
    for ((s, l), g) in ds.truth.samples().iter().zip(&ds.true_luminance).zip(&ds.geometry) {
        w.write_record([
            format_timestamp(&s.timestamp),
            g.zenith_deg.to_string(),
            l.to_string(),
            s.ghi.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_parsing() {
        assert_eq!(parse_window("07:00-19:00").unwrap(), crate::ingest::default_daylight_window());
        assert!(parse_window("7-19").is_err());
        assert!(parse_window("07:00").is_err());
    }

    #[test]
    fn exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(main_with_args(["skyirr", "nonsense"]), ExitCode::from(EXIT_USAGE));
        assert_eq!(
            main_with_args(["skyirr", "fit", "--pairs", "x.csv", "--degree", "9", "--out", out]),
            ExitCode::from(EXIT_USAGE)
        );
        let missing = dir.path().join("missing.csv");
        assert_eq!(
            main_with_args(["skyirr", "fit", "--pairs", missing.to_str().unwrap(), "--out", out]),
            ExitCode::from(EXIT_DATA)
        );
        assert_eq!(
            main_with_args(["skyirr", "clearsky", "--date", "2016-09-01", "--out", out]),
            ExitCode::SUCCESS
        );
        assert!(dir.path().join(MANIFEST_FILE).is_file());
    }

    #[test]
    fn parses_global_flags_after_subcommand() {
        let cli = Cli::try_parse_from(["skyirr", "clearsky", "--date", "2016-09-01", "--jobs", "8", "--seed", "4"]).unwrap();
        assert_eq!(cli.jobs, Some(8));
        assert_eq!(cli.seed, Some(4));
        assert!(matches!(cli.command, Command::Clearsky(ClearskyArgs { step: 120, .. })));
    }
}
