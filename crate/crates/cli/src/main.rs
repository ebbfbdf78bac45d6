//! Command-line interface: segments a CSV series, runs simulation studies on
//! the preset models, and forecasts with the segmentation pipeline.
//!
//! Exit codes: 0 success, 1 invalid configuration, 2 I/O or parse failure,
//! 3 numerical failure. Every failure also prints a one-line JSON object
//! `{"error_kind": ..., "message": ...}` on standard error. Output files are
//! written through a temporary file and renamed, so a failed run never
//! leaves a partially written file behind.

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use specseg_core::error::Error;
use specseg_core::forecasting::{forecast_pipeline, wind_demo, ForecastConfig, MethodAccuracy};
use specseg_core::segmentation::{segment, FdrMethod, SegmentConfig};
use specseg_core::series::{load_csv, FrequencyBand, MultivariateSeries};
use specseg_core::simgen::{run_preset_study, ModelPreset};
use specseg_core::spectral::{KernelFamily, KernelSpec};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "specseg",
    version,
    about = "Frequency-domain segmentation, simulation studies, and forecasting \
             for multivariate time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment a multivariate series read from a CSV file
    Segment {
        /// Input CSV: one time point per row, one column per coordinate.
        /// A header row is detected and skipped automatically.
        #[arg(long)]
        input: PathBuf,
        /// Output JSON path
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: AnalysisOpts,
    },
    /// Run a simulation study on a preset model and write CSV tables
    Simulate {
        /// Preset model number
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
        model: u8,
        /// Comma-separated series lengths (default: the model's standard set)
        #[arg(long, value_delimiter = ',')]
        lengths: Vec<usize>,
        /// Replications per length
        #[arg(long, default_value_t = 100)]
        reps: usize,
        /// Master seed (mandatory: runs must be reproducible)
        #[arg(long)]
        seed: u64,
        /// Output prefix: writes <out>_study.csv, <out>_summary.csv,
        /// <out>_config.json
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: AnalysisOpts,
    },
    /// Forecast with the segmentation pipeline; without --input, runs the
    /// built-in demo on a generated trend-plus-noise dataset
    Forecast {
        /// Input CSV; omit to run the built-in demo (which needs --seed)
        #[arg(long)]
        input: Option<PathBuf>,
        /// Forecast horizon in steps
        #[arg(long, default_value_t = 1)]
        steps: usize,
        /// Seed for the built-in demo dataset
        #[arg(long)]
        seed: Option<u64>,
        /// Output JSON path
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: AnalysisOpts,
    },
}

#[derive(Args)]
struct AnalysisOpts {
    /// Smoothing kernel family
    #[arg(long, value_enum, default_value_t = KernelChoice::Bp)]
    kernel: KernelChoice,
    /// Bandwidth exponent: h = T^(-q)
    #[arg(long, default_value_t = 0.15)]
    q: f64,
    /// Level for the FDR-adjusted pairwise dependence tests
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Multiple-testing adjustment
    #[arg(long, value_enum, default_value_t = FdrChoice::Bh)]
    fdr: FdrChoice,
    /// Restrict the analysis to a frequency band "lo:hi" in radians,
    /// 0 <= lo < hi <= pi
    #[arg(long, value_parser = parse_band)]
    band: Option<(f64, f64)>,
    /// Worker threads for the parallel parts (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelChoice {
    /// Bartlett-Priestley quadratic window
    Bp,
    /// Parzen window
    Parzen,
}

#[derive(Clone, Copy, ValueEnum)]
enum FdrChoice {
    /// Benjamini-Hochberg step-up
    Bh,
    /// Benjamini-Yekutieli (conservative under dependence)
    By,
}

fn parse_band(raw: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = raw
        .split_once(':')
        .ok_or_else(|| format!("expected lo:hi, got {raw:?}"))?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("bad lower edge: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("bad upper edge: {e}"))?;
    Ok((lo, hi))
}

impl AnalysisOpts {
    fn segment_config(&self) -> Result<SegmentConfig, Error> {
        let family = match self.kernel {
            KernelChoice::Bp => KernelFamily::BartlettPriestley,
            KernelChoice::Parzen => KernelFamily::Parzen,
        };
        let band = match self.band {
            Some((lo, hi)) => Some(FrequencyBand::new(lo, hi)?),
            None => None,
        };
        let config = SegmentConfig {
            kernel: KernelSpec::new(family, self.q)?,
            alpha: self.alpha,
            fdr: match self.fdr {
                FdrChoice::Bh => FdrMethod::Bh,
                FdrChoice::By => FdrMethod::By,
            },
            band,
            ..SegmentConfig::default()
        };
        config.validate()?;
        Ok(config)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{err}");
                return ExitCode::SUCCESS;
            }
            emit_error("invalid-config", &err.to_string());
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (kind, code) = classify(&err);
            emit_error(kind, &err.to_string());
            ExitCode::from(code)
        }
    }
}

fn classify(err: &Error) -> (&'static str, u8) {
    match err {
        Error::Io { .. } | Error::Parse { .. } => ("io", 2),
        Error::InvalidInput(_) | Error::NonStationary(_) | Error::EmptyBand { .. } => {
            ("invalid-config", 1)
        }
        Error::EigenFailure(_) | Error::DegenerateSpectrum { .. } | Error::SingularRegressor { .. } => {
            ("numerical", 3)
        }
    }
}

fn emit_error(kind: &str, message: &str) {
    // Single line so scripts can parse standard error directly.
    let line = json!({ "error_kind": kind, "message": message });
    eprintln!("{line}");
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Segment { input, out, opts } => run_segment(&input, &out, &opts),
        Command::Simulate { model, lengths, reps, seed, out, opts } => {
            run_simulate(model, &lengths, reps, seed, &out, &opts)
        }
        Command::Forecast { input, steps, seed, out, opts } => {
            run_forecast(input.as_deref(), steps, seed, &out, &opts)
        }
    }
}

fn init_threads(opts: &AnalysisOpts) -> Result<(), Error> {
    if let Some(n) = opts.threads {
        if n == 0 {
            return Err(Error::InvalidInput("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("thread pool setup failed: {e}")))?;
    }
    Ok(())
}

fn run_segment(input: &Path, out: &Path, opts: &AnalysisOpts) -> Result<(), Error> {
    let config = opts.segment_config()?;
    init_threads(opts)?;
    let series = load_series(input)?;
    let result = segment(&series, &config)?;

    let mut doc = result.to_json();
    let obj = doc.as_object_mut().expect("segmentation JSON is an object");
    obj.insert("command".into(), json!("segment"));
    obj.insert("input".into(), json!(input.display().to_string()));
    obj.insert("generated_at".into(), json!(timestamp()));
    write_json_atomic(out, &doc)
}

fn run_simulate(
    model: u8,
    lengths: &[usize],
    reps: usize,
    seed: u64,
    out: &Path,
    opts: &AnalysisOpts,
) -> Result<(), Error> {
    let preset = ModelPreset::from_number(model)
        .ok_or_else(|| Error::InvalidInput(format!("no preset model {model}")))?;
    let config = opts.segment_config()?;
    init_threads(opts)?;

    let resolved_lengths: Vec<usize> = if lengths.is_empty() {
        preset.default_lengths()
    } else {
        lengths.to_vec()
    };
    let table = run_preset_study(preset, &resolved_lengths, reps, &config, seed)?;

    let study_path = suffixed(out, "_study.csv");
    let summary_path = suffixed(out, "_summary.csv");
    let config_path = suffixed(out, "_config.json");

    let tmp = tmp_path(&study_path);
    specseg_core::simgen::write_study_csv(&table, &tmp)?;
    rename(&tmp, &study_path)?;

    let tmp = tmp_path(&summary_path);
    specseg_core::simgen::write_summary_csv(&table, &tmp)?;
    rename(&tmp, &summary_path)?;

    let doc = json!({
        "command": "simulate",
        "model": preset.name(),
        "lengths": resolved_lengths,
        "reps": reps,
        "seed": seed,
        "config": config_json(&config),
        "outputs": {
            "study": study_path.display().to_string(),
            "summary": summary_path.display().to_string(),
        },
        "generated_at": timestamp(),
    });
    write_json_atomic(&config_path, &doc)
}

fn run_forecast(
    input: Option<&Path>,
    steps: usize,
    seed: Option<u64>,
    out: &Path,
    opts: &AnalysisOpts,
) -> Result<(), Error> {
    let config = ForecastConfig {
        segment: opts.segment_config()?,
        ..ForecastConfig::default()
    };
    init_threads(opts)?;

    let mut doc = match input {
        Some(path) => {
            let series = load_series(path)?;
            let fc = forecast_pipeline(&series, steps, &config)?;
            json!({
                "command": "forecast",
                "input": path.display().to_string(),
                "steps": steps,
                "dim": series.dim(),
                "forecast": fc.forecast.iter().copied().collect::<Vec<f64>>(),
                "groups": one_based(&fc.groups),
                "per_group_orders": fc.per_group_orders,
                "m_hat": fc.segmentation.m_hat,
                "seed": seed,
            })
        }
        None => {
            let seed = seed.ok_or_else(|| {
                Error::InvalidInput(
                    "the built-in forecast demo generates its data and needs --seed".into(),
                )
            })?;
            let report = wind_demo(seed, steps, &config)?;
            json!({
                "command": "forecast",
                "input": Value::Null,
                "steps": steps,
                "dim": report.forecast.ncols(),
                "forecast": report.forecast.iter().copied().collect::<Vec<f64>>(),
                "groups": one_based(&report.groups),
                "per_group_orders": report.per_group_orders,
                "m_hat": report.segmentation.m_hat,
                "seed": seed,
                "demo": {
                    "t_len": report.t_len,
                    "windows": report.windows,
                    "pipeline": accuracy_json(&report.pipeline),
                    "full_var": accuracy_json(&report.full_var),
                    "univariate": accuracy_json(&report.univariate),
                },
            })
        }
    };

    let obj = doc.as_object_mut().expect("forecast JSON is an object");
    obj.insert("config".into(), config_json(&config.segment));
    obj.insert("max_order".into(), json!(config.max_order));
    obj.insert("generated_at".into(), json!(timestamp()));
    write_json_atomic(out, &doc)
}

fn load_series(path: &Path) -> Result<MultivariateSeries, Error> {
    load_csv(path, detect_header(path)?)
}

/// A header row is one whose first non-empty line has a field that does not
/// parse as a number.
fn detect_header(path: &Path) -> Result<bool, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        return Ok(trimmed
            .split(',')
            .any(|field| field.trim().parse::<f64>().is_err()));
    }
    Ok(false)
}

fn config_json(config: &SegmentConfig) -> Value {
    json!({
        "kernel": config.kernel.family().name(),
        "q": config.kernel.q(),
        "alpha": config.alpha,
        "fdr": config.fdr.name(),
        "band": config.band.map(|b| [b.lo, b.hi]),
        "coherence_floor": config.coherence_floor,
    })
}

fn accuracy_json(acc: &MethodAccuracy) -> Value {
    json!({ "mse_per_step": acc.mse_per_step, "sd_per_step": acc.sd_per_step })
}

fn one_based(groups: &[Vec<usize>]) -> Vec<Vec<usize>> {
    groups
        .iter()
        .map(|g| g.iter().map(|i| i + 1).collect())
        .collect()
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_os_string();
    name.push(suffix);
    PathBuf::from(name)
}

fn tmp_path(target: &Path) -> PathBuf {
    let mut name = target.as_os_str().to_os_string();
    name.push(format!(".tmp-{}", std::process::id()));
    PathBuf::from(name)
}

fn rename(tmp: &Path, target: &Path) -> Result<(), Error> {
    std::fs::rename(tmp, target).map_err(|e| {
        let _ = std::fs::remove_file(tmp);
        Error::Io { path: target.display().to_string(), source: e }
    })
}

/// Serializes with a trailing newline and renames into place so the target
/// path never holds a truncated document.
fn write_json_atomic(path: &Path, doc: &Value) -> Result<(), Error> {
    let tmp = tmp_path(path);
    let body = format!("{}\n", serde_json::to_string_pretty(doc).expect("JSON serialization"));
    std::fs::write(&tmp, body)
        .map_err(|e| Error::Io { path: tmp.display().to_string(), source: e })?;
    rename(&tmp, path)
}
