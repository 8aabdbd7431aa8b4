//! The `movetrace` command line: every pipeline stage as a subcommand.
//!
//! All subcommands share one TOML run configuration (`--config`, see
//! [`crate::config`]); individual flags override file values. Outputs are a
//! pure function of (inputs, configuration, seed): re-running any
//! subcommand with the same arguments reproduces its outputs byte for
//! byte, whatever the worker-pool size. On failure the process exits
//! nonzero after printing a single machine-readable JSON line
//! (`{"error": "..."}`) to stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binning::{interpolate_gaps, run_binning};
use crate::config::{default_template, RunConfig};
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{evaluate_run, summarize_benchmark, DatasetOutcome, Method};
use crate::model::ModelParams;
use crate::plot;
use crate::simulate::{simulate_dataset, MissingnessParams, SimulatedDataset};
use crate::smc::{classify_regimes, run_mgs_detailed};

#[derive(Debug, Parser)]
#[command(
    name = "movetrace",
    version,
    about = "Smooth noisy, gappy position series and segment them into travel and pauses"
)]
pub struct Cli {
    /// TOML run configuration; omitted means all defaults. Flags override
    /// file values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn raw position fixes into per-person-day observation CSVs.
    Preprocess(PreprocessArgs),
    /// Draw simulated datasets (observations + ground truth) and a manifest.
    Simulate(SimulateArgs),
    /// Segment one observation CSV with the convex-hull binning method.
    Bin(BinArgs),
    /// Fit the Bayesian smoother to one observation CSV.
    Smooth(SmoothArgs),
    /// Score both methods on every dataset in a simulation manifest.
    Evaluate(EvaluateArgs),
    /// Render an SVG figure from observation/summary/segmentation CSVs.
    Plot(PlotArgs),
    /// Write a fully-populated configuration template.
    Init(InitArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Raw fix CSV: person_id,timestamp,lat,lon.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Directory the per-person-day CSVs are written to.
    #[arg(long, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
    /// Civil-day UTC offset in seconds.
    #[arg(long, value_name = "SECS")]
    pub tz_offset_secs: Option<i32>,
    /// Minutes per day window.
    #[arg(long, value_name = "N")]
    pub t_len: Option<usize>,
    /// Master seed for the per-person-day obfuscation.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub n_datasets: Option<usize>,
    #[arg(long, value_name = "N")]
    pub t_len: Option<usize>,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct BinArgs {
    /// Observation CSV to segment.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Segmentation CSV to write.
    #[arg(long, value_name = "FILE")]
    pub output: PathBuf,
    /// Hull-area growth ratio that closes a bin.
    #[arg(long, value_name = "X")]
    pub growth_ratio: Option<f64>,
    /// Absolute hull-growth tolerance (km^2).
    #[arg(long, value_name = "X")]
    pub onset_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SmoothArgs {
    /// Observation CSV to smooth.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Directory for summary.csv, report.json (and draws.csv).
    #[arg(long, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub n_particles: Option<usize>,
    #[arg(long, value_name = "N")]
    pub n_samples: Option<usize>,
    #[arg(long, value_name = "N")]
    pub burn_in: Option<usize>,
    #[arg(long, value_name = "X")]
    pub credible_level: Option<f64>,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Also write every retained trajectory draw (large file).
    #[arg(long)]
    pub emit_draws: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// manifest.json written by `simulate`.
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    /// Directory for the score CSVs and the JSON summary.
    #[arg(long, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
    /// Worker-pool size for dataset-level fan-out (any size gives the same
    /// results).
    #[arg(long, value_name = "N")]
    pub workers: Option<usize>,
    #[arg(long, value_name = "N")]
    pub n_particles: Option<usize>,
    #[arg(long, value_name = "N")]
    pub n_samples: Option<usize>,
    #[arg(long, value_name = "N")]
    pub burn_in: Option<usize>,
    /// Motion-probability threshold for travel classification.
    #[arg(long, value_name = "X")]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    /// Scatter of the raw observations.
    Observations,
    /// Posterior summary with probability shading, band, cloud and mean.
    Summary,
    /// Binning result with travel shading.
    Segmentation,
    /// Four-panel smoother-vs-binning comparison.
    Comparison,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// What to draw.
    #[arg(long, value_enum)]
    pub kind: PlotKind,
    /// Primary input CSV (observation, summary or segmentation, per kind).
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Summary CSV (comparison figures).
    #[arg(long, value_name = "FILE")]
    pub summary: Option<PathBuf>,
    /// Segmentation CSV (comparison figures).
    #[arg(long, value_name = "FILE")]
    pub segmentation: Option<PathBuf>,
    /// Observation CSV overlaid as dots.
    #[arg(long, value_name = "FILE")]
    pub observations: Option<PathBuf>,
    /// Draws CSV rendered as the sampled-trajectory cloud.
    #[arg(long, value_name = "FILE")]
    pub draws: Option<PathBuf>,
    /// SVG file to write.
    #[arg(long, value_name = "FILE")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    /// Where to write the template.
    #[arg(long, value_name = "FILE", default_value = "run.toml")]
    pub output: PathBuf,
    /// Overwrite an existing file.
    #[arg(long)]
    pub force: bool,
}

/// Entry point used by the binary: parse, dispatch, map errors to a
/// machine-readable stderr line and a nonzero exit code.
pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}

pub fn dispatch(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Preprocess(args) => cmd_preprocess(config, args),
        Command::Simulate(args) => cmd_simulate(config, args),
        Command::Bin(args) => cmd_bin(config, args),
        Command::Smooth(args) => cmd_smooth(config, args),
        Command::Evaluate(args) => cmd_evaluate(config, args),
        Command::Plot(args) => cmd_plot(config, args),
        Command::Init(args) => cmd_init(args),
    }
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

/// Stable per-item seed: FNV-1a over the master seed and a textual tag, so
/// one person-day's stream never depends on which other items are present.
fn derive_seed(master: u64, tag: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in master.to_le_bytes().into_iter().chain(tag.bytes()) {
        h = (h ^ u64::from(b)).wrapping_mul(PRIME);
    }
    h
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Keep file names portable whatever the person identifiers contain.
fn sanitize_file_stem(raw: &str) -> String {
    raw.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '-' })
        .collect()
}

// ---------------------------------------------------------------------------
// preprocess
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct PreprocessManifest {
    pub input: String,
    pub seed: u64,
    pub tz_offset_secs: i32,
    pub t_len: usize,
    pub n_rows_used: usize,
    pub n_rows_skipped: usize,
    pub person_days: Vec<PersonDayFile>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PersonDayFile {
    pub person_id: String,
    pub date: String,
    pub file: String,
    pub n_fixes: usize,
    pub n_observed_minutes: usize,
}

fn cmd_preprocess(mut config: RunConfig, args: PreprocessArgs) -> Result<()> {
    if let Some(v) = args.tz_offset_secs {
        config.preprocess.tz_offset_secs = v;
    }
    if let Some(v) = args.t_len {
        config.simulation.t_len = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    config.validate()?;
    let out_dir = args.output_dir.unwrap_or_else(|| PathBuf::from(&config.output_dir));

    let (fixes, issues) = io::read_raw_fixes(&args.input)?;
    for issue in &issues {
        eprintln!(
            "warning: {}:{}: skipped row: {}",
            args.input.display(),
            issue.line,
            issue.message
        );
    }
    if fixes.is_empty() {
        return Err(Error::domain(format!(
            "{}: no valid rows ({} malformed)",
            args.input.display(),
            issues.len()
        )));
    }
    let n_rows_used = fixes.len();
    let groups = io::group_by_person_day(fixes, config.preprocess.tz_offset_secs)?;

    ensure_dir(&out_dir)?;
    let mut person_days = Vec::with_capacity(groups.len());
    for (key, day_fixes) in &groups {
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(config.seed, &key.to_string()));
        let series = io::preprocess_person_day(
            key,
            day_fixes,
            config.preprocess.tz_offset_secs,
            config.simulation.t_len,
            &mut rng,
        )?;
        let file = format!("obs_{}.csv", sanitize_file_stem(&key.to_string()));
        io::write_observation_csv(&out_dir.join(&file), &series)?;
        person_days.push(PersonDayFile {
            person_id: key.person_id.clone(),
            date: key.date.to_string(),
            file,
            n_fixes: day_fixes.len(),
            n_observed_minutes: series.n_observed(),
        });
    }
    let manifest = PreprocessManifest {
        input: args.input.display().to_string(),
        seed: config.seed,
        tz_offset_secs: config.preprocess.tz_offset_secs,
        t_len: config.simulation.t_len,
        n_rows_used,
        n_rows_skipped: issues.len(),
        person_days,
    };
    io::write_json(&out_dir.join("preprocess_manifest.json"), &manifest)?;
    println!(
        "wrote {} person-day series to {} ({} rows skipped)",
        manifest.person_days.len(),
        out_dir.display(),
        manifest.n_rows_skipped
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct SimulationManifest {
    pub seed: u64,
    pub n_datasets: usize,
    pub t_len: usize,
    pub true_params: ModelParams,
    pub missingness: MissingnessParams,
    pub datasets: Vec<DatasetFiles>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetFiles {
    pub index: usize,
    pub dataset_seed: u64,
    /// Pre-drawn seed a later smoother run on this dataset must use, so the
    /// whole simulate→evaluate pipeline is one deterministic function of
    /// the master seed.
    pub smoother_seed: u64,
    pub observations: String,
    pub truth: String,
}

fn cmd_simulate(mut config: RunConfig, args: SimulateArgs) -> Result<()> {
    if let Some(v) = args.n_datasets {
        config.simulation.n_datasets = v;
    }
    if let Some(v) = args.t_len {
        config.simulation.t_len = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    config.validate()?;
    let out_dir = args.output_dir.unwrap_or_else(|| PathBuf::from(&config.output_dir));
    ensure_dir(&out_dir)?;

    let sim = &config.simulation;
    let mut seed_rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut datasets = Vec::with_capacity(sim.n_datasets);
    for index in 0..sim.n_datasets {
        let dataset_seed: u64 = seed_rng.random();
        let smoother_seed: u64 = seed_rng.random();
        let data = simulate_dataset(&sim.true_params, &sim.missingness, sim.t_len, dataset_seed);
        let observations = format!("dataset_{index:03}_obs.csv");
        let truth = format!("dataset_{index:03}_truth.csv");
        io::write_observation_csv(&out_dir.join(&observations), &data.obs)?;
        io::write_truth_csv(&out_dir.join(&truth), &data.truth)?;
        datasets.push(DatasetFiles {
            index,
            dataset_seed,
            smoother_seed,
            observations,
            truth,
        });
    }
    let manifest = SimulationManifest {
        seed: config.seed,
        n_datasets: sim.n_datasets,
        t_len: sim.t_len,
        true_params: sim.true_params,
        missingness: sim.missingness,
        datasets,
    };
    io::write_json(&out_dir.join("manifest.json"), &manifest)?;
    println!(
        "wrote {} simulated datasets to {}",
        manifest.n_datasets,
        out_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// bin
// ---------------------------------------------------------------------------

fn cmd_bin(mut config: RunConfig, args: BinArgs) -> Result<()> {
    if let Some(v) = args.growth_ratio {
        config.binning.growth_ratio = v;
    }
    if let Some(v) = args.onset_threshold {
        config.binning.onset_threshold = v;
    }
    config.validate()?;
    let obs = io::read_observation_csv(&args.input)?;
    let filled = interpolate_gaps(&obs)?;
    let seg = run_binning(&filled, &config.binning)?;
    if let Some(parent) = args.output.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    io::write_segmentation_csv(&args.output, &seg.x_est, &seg.states, &seg.start_times)?;
    println!(
        "segmented {} minutes into {} bins -> {}",
        seg.len(),
        seg.bins.len(),
        args.output.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// smooth
// ---------------------------------------------------------------------------

fn cmd_smooth(mut config: RunConfig, args: SmoothArgs) -> Result<()> {
    if let Some(v) = args.n_particles {
        config.sampler.n_particles = v;
    }
    if let Some(v) = args.n_samples {
        config.sampler.n_samples = v;
    }
    if let Some(v) = args.burn_in {
        config.sampler.burn_in = v;
    }
    if let Some(v) = args.credible_level {
        config.sampler.credible_level = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    config.validate()?;
    let out_dir = args.output_dir.unwrap_or_else(|| PathBuf::from(&config.output_dir));

    let obs = io::read_observation_csv(&args.input)?;
    let opts = config.sampler.to_options();
    let (draws, summary, report) = run_mgs_detailed(&obs, &config.priors, &opts, config.seed)?;

    ensure_dir(&out_dir)?;
    io::write_summary_csv(&out_dir.join("summary.csv"), &summary)?;
    io::write_json(&out_dir.join("report.json"), &report)?;
    if args.emit_draws {
        io::write_draws_csv(&out_dir.join("draws.csv"), &draws)?;
    }
    // Wall time goes to the console, not into report.json: written artifacts
    // must be identical across reruns with the same config and seed.
    println!(
        "smoothed {} minutes with {} retained draws in {:.1}s -> {}",
        summary.mean.len(),
        draws.len(),
        report.wall_secs,
        out_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct EvaluationReport<'a> {
    manifest: String,
    n_particles: usize,
    n_samples: usize,
    burn_in: usize,
    threshold: f64,
    summary: &'a crate::metrics::BenchmarkSummary,
}

fn cmd_evaluate(mut config: RunConfig, args: EvaluateArgs) -> Result<()> {
    if let Some(v) = args.workers {
        config.workers = v;
    }
    if let Some(v) = args.n_particles {
        config.sampler.n_particles = v;
    }
    if let Some(v) = args.n_samples {
        config.sampler.n_samples = v;
    }
    if let Some(v) = args.burn_in {
        config.sampler.burn_in = v;
    }
    if let Some(v) = args.threshold {
        config.threshold = v;
    }
    config.validate()?;
    let out_dir = args.output_dir.unwrap_or_else(|| PathBuf::from(&config.output_dir));

    let manifest: SimulationManifest = io::read_json(&args.manifest)?;
    let base = args.manifest.parent().unwrap_or_else(|| Path::new("."));

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let outcomes: Result<Vec<DatasetOutcome>> = pool.install(|| {
        manifest
            .datasets
            .par_iter()
            .map(|entry| evaluate_one(&config, &manifest, base, entry))
            .collect()
    });
    let outcomes = outcomes?;
    let summary = summarize_benchmark(&outcomes)?;

    ensure_dir(&out_dir)?;
    io::write_run_metrics_csv(&out_dir.join("run_metrics.csv"), &outcomes)?;
    io::write_benchmark_summary_csv(&out_dir.join("benchmark_summary.csv"), &summary)?;
    io::write_json(
        &out_dir.join("evaluation.json"),
        &EvaluationReport {
            manifest: args.manifest.display().to_string(),
            n_particles: config.sampler.n_particles,
            n_samples: config.sampler.n_samples,
            burn_in: config.sampler.burn_in,
            threshold: config.threshold,
            summary: &summary,
        },
    )?;
    println!(
        "evaluated {} datasets ({} aborted): RMSD ratio total {:.3}, observed {:.3}, missing {:.3} -> {}",
        summary.n_datasets,
        summary.n_aborted,
        summary.geo_mean_rmsd_ratio_total,
        summary.geo_mean_rmsd_ratio_observed,
        summary.geo_mean_rmsd_ratio_missing,
        out_dir.display()
    );
    Ok(())
}

fn evaluate_one(
    config: &RunConfig,
    manifest: &SimulationManifest,
    base: &Path,
    entry: &DatasetFiles,
) -> Result<DatasetOutcome> {
    let obs = io::read_observation_csv(&base.join(&entry.observations))?;
    let truth = io::read_truth_csv(&base.join(&entry.truth))?;
    if truth.len() != obs.len() {
        return Err(Error::domain(format!(
            "dataset {}: truth covers {} minutes but observations cover {}",
            entry.index,
            truth.len(),
            obs.len()
        )));
    }
    let data = SimulatedDataset {
        truth,
        obs,
        params_used: manifest.true_params,
        missingness: manifest.missingness,
        seed: entry.dataset_seed,
    };

    let filled = interpolate_gaps(&data.obs)?;
    let seg = run_binning(&filled, &config.binning)?;
    let binning = evaluate_run(&data, Method::Binning, &seg.x_est, &seg.states)?;

    let opts = config.sampler.to_options();
    let mut outcome = DatasetOutcome {
        dataset_index: entry.index,
        dataset_seed: entry.dataset_seed,
        smoother_seed: entry.smoother_seed,
        binning,
        smoother: None,
        smoother_report: None,
        smoother_error: None,
    };
    match run_mgs_detailed(&data.obs, &config.priors, &opts, entry.smoother_seed) {
        Ok((_draws, summary, report)) => {
            let labels = classify_regimes(&summary, config.threshold);
            outcome.smoother = Some(evaluate_run(&data, Method::Smoother, &summary.mean, &labels)?);
            outcome.smoother_report = Some(report);
        }
        Err(e @ Error::ParticleCollapse { .. }) => {
            outcome.smoother_error = Some(e.to_string());
        }
        Err(e) => return Err(e),
    }
    Ok(outcome)
}

// ---------------------------------------------------------------------------
// plot
// ---------------------------------------------------------------------------

fn cmd_plot(config: RunConfig, args: PlotArgs) -> Result<()> {
    config.validate()?;
    let require = |field: &Option<PathBuf>, name: &str| -> Result<PathBuf> {
        field
            .clone()
            .ok_or_else(|| Error::Config(format!("plot --kind {:?} needs --{name}", args.kind)))
    };
    let obs = match &args.observations {
        Some(path) => Some(io::read_observation_csv(path)?),
        None => None,
    };
    let svg = match args.kind {
        PlotKind::Observations => {
            let series = io::read_observation_csv(&require(&args.input, "input")?)?;
            plot::observation_figure(&series, &config.plot)
        }
        PlotKind::Summary => {
            let summary = io::read_summary_csv(&require(&args.input, "input")?)?;
            let draws = match &args.draws {
                Some(path) => io::read_draw_paths(path)?,
                None => Vec::new(),
            };
            plot::summary_figure(&summary, obs.as_ref(), &draws, &config.plot)?
        }
        PlotKind::Segmentation => {
            let seg = io::read_segmentation_csv(&require(&args.input, "input")?)?;
            plot::segmentation_figure(&seg, obs.as_ref(), &config.plot)?
        }
        PlotKind::Comparison => {
            let summary = io::read_summary_csv(&require(&args.summary, "summary")?)?;
            let seg = io::read_segmentation_csv(&require(&args.segmentation, "segmentation")?)?;
            plot::comparison_figure(&summary, &seg, obs.as_ref(), &config.plot)?
        }
    };
    if let Some(parent) = args.output.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_file(&args.output, &svg)?;
    println!("wrote {}", args.output.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// init
// ---------------------------------------------------------------------------

fn cmd_init(args: InitArgs) -> Result<()> {
    if args.output.exists() && !args.force {
        return Err(Error::Config(format!(
            "{} already exists (use --force to overwrite)",
            args.output.display()
        )));
    }
    write_file(&args.output, &default_template())?;
    println!("wrote {}", args.output.display());
    Ok(())
}
