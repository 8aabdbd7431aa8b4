//! Scoring and the simulation benchmark.
//!
//! Both processors are scored against the simulated ground truth with two
//! metrics, each computed over all minutes and separately over the observed
//! and missing subsets:
//!
//! * **RMSD** — root mean squared Euclidean distance between the estimated
//!   and true trajectories;
//! * **misclassification** — the fraction of minutes whose travel/pause
//!   label disagrees with the true regime.
//!
//! [`run_benchmark`] repeats simulate → segment (both methods) → score over
//! `n` datasets and aggregates the paired scores the way the original study
//! does: RMSD as the geometric mean of per-dataset binning/smoother ratios
//! (a ratio above 1 favours the smoother), misclassification as the
//! arithmetic mean of per-dataset differences (positive favours the
//! smoother).
//!
//! Datasets are processed in parallel. Every per-dataset seed is derived
//! up front from the base seed, so results are bit-identical regardless of
//! how the worker pool schedules them.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::binning::{interpolate_gaps, run_binning, BinningConfig};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::model::{ModelParams, Priors, Regime};
use crate::simulate::{simulate_dataset, MissingnessParams, SimulatedDataset};
use crate::smc::{classify_regimes, run_mgs_detailed, MgsOptions, MgsReport};

// ---------------------------------------------------------------------------
// Elementary metrics
// ---------------------------------------------------------------------------

/// Root mean squared Euclidean distance between two equal-length
/// trajectories, optionally restricted to the minutes where `mask` is true.
pub fn rmsd(est: &[Point2], truth: &[Point2], mask: Option<&[bool]>) -> Result<f64> {
    let n = check_lengths("rmsd", est.len(), truth.len(), mask)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in 0..est.len() {
        if mask.map_or(true, |m| m[t]) {
            sum += est[t].sq_dist(&truth[t]);
            count += 1;
        }
    }
    debug_assert_eq!(count, n);
    if count == 0 {
        return Err(Error::domain("rmsd: empty selection"));
    }
    Ok((sum / count as f64).sqrt())
}

/// Fraction of (selected) minutes whose regime label disagrees with the
/// truth.
pub fn misclassification(
    est: &[Regime],
    truth: &[Regime],
    mask: Option<&[bool]>,
) -> Result<f64> {
    check_lengths("misclassification", est.len(), truth.len(), mask)?;
    let mut wrong = 0usize;
    let mut count = 0usize;
    for t in 0..est.len() {
        if mask.map_or(true, |m| m[t]) {
            if est[t] != truth[t] {
                wrong += 1;
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::domain("misclassification: empty selection"));
    }
    Ok(wrong as f64 / count as f64)
}

fn check_lengths(
    what: &str,
    est: usize,
    truth: usize,
    mask: Option<&[bool]>,
) -> Result<usize> {
    if est != truth {
        return Err(Error::domain(format!(
            "{what}: length mismatch, estimate {est} vs truth {truth}"
        )));
    }
    if let Some(m) = mask {
        if m.len() != est {
            return Err(Error::domain(format!(
                "{what}: mask length {} vs series length {est}",
                m.len()
            )));
        }
        return Ok(m.iter().filter(|&&b| b).count());
    }
    Ok(est)
}

/// `exp(mean(log values))`. Every value must be strictly positive.
pub fn geometric_mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::domain("geometric_mean: empty input"));
    }
    let mut log_sum = 0.0;
    for &v in values {
        if !(v > 0.0) {
            return Err(Error::domain(format!(
                "geometric_mean: nonpositive value {v}"
            )));
        }
        log_sum += v.ln();
    }
    Ok((log_sum / values.len() as f64).exp())
}

// ---------------------------------------------------------------------------
// Per-run records
// ---------------------------------------------------------------------------

/// Which processor produced a score row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Binning,
    Smoother,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Binning => "binning",
            Method::Smoother => "smoother",
        })
    }
}

/// Scores of one method on one simulated dataset.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RunMetrics {
    pub method: Method,
    /// Seed the dataset was simulated from.
    pub seed: u64,
    pub rmsd_total: f64,
    pub rmsd_observed: f64,
    pub rmsd_missing: f64,
    pub misclass_total: f64,
    pub misclass_observed: f64,
    pub misclass_missing: f64,
    /// Fraction of minutes actually missing in this dataset.
    pub realized_missing_fraction: f64,
}

/// Score an estimated trajectory + labels against a simulated dataset,
/// splitting by the dataset's missingness pattern. Requires at least one
/// observed and one missing minute so that all six scores are defined.
pub fn evaluate_run(
    data: &SimulatedDataset,
    method: Method,
    x_est: &[Point2],
    s_est: &[Regime],
) -> Result<RunMetrics> {
    let observed: Vec<bool> = data.obs.y.iter().map(|y| y.is_some()).collect();
    let missing: Vec<bool> = observed.iter().map(|b| !b).collect();
    let truth = &data.truth;
    let n_missing = missing.iter().filter(|&&b| b).count();
    Ok(RunMetrics {
        method,
        seed: data.seed,
        rmsd_total: rmsd(x_est, &truth.positions, None)?,
        rmsd_observed: rmsd(x_est, &truth.positions, Some(&observed))?,
        rmsd_missing: rmsd(x_est, &truth.positions, Some(&missing))?,
        misclass_total: misclassification(s_est, &truth.regimes, None)?,
        misclass_observed: misclassification(s_est, &truth.regimes, Some(&observed))?,
        misclass_missing: misclassification(s_est, &truth.regimes, Some(&missing))?,
        realized_missing_fraction: n_missing as f64 / observed.len() as f64,
    })
}

// ---------------------------------------------------------------------------
// The benchmark
// ---------------------------------------------------------------------------

/// Everything needed to reproduce one benchmark: the generative truth, both
/// processors' settings, and the master seed.
#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub n_datasets: usize,
    /// Minutes per simulated day.
    pub t_len: usize,
    pub true_params: ModelParams,
    pub missingness: MissingnessParams,
    pub binning: BinningConfig,
    pub priors: Priors,
    pub mgs: MgsOptions,
    /// Motion-probability threshold for the smoother's hard labels.
    pub threshold: f64,
    pub base_seed: u64,
}

impl Default for BenchmarkConfig {
    /// The simulation study's full-scale protocol: 50 day-long datasets at
    /// the generating parameters, 2000 Gibbs iterations (half discarded)
    /// with 500 particles.
    fn default() -> Self {
        BenchmarkConfig {
            n_datasets: 50,
            t_len: 1440,
            true_params: ModelParams::default_true(),
            missingness: MissingnessParams::default(),
            binning: BinningConfig::default(),
            priors: Priors::default(),
            mgs: MgsOptions::default(),
            threshold: 0.5,
            base_seed: 20_240_901,
        }
    }
}

/// Everything recorded about one benchmark dataset: the binning scores, and
/// either the smoother's scores + diagnostics or the error that aborted it.
#[derive(Debug, Clone)]
pub struct DatasetOutcome {
    pub dataset_index: usize,
    pub dataset_seed: u64,
    pub smoother_seed: u64,
    pub binning: RunMetrics,
    pub smoother: Option<RunMetrics>,
    pub smoother_report: Option<MgsReport>,
    /// Rendered error when the smoother aborted; such datasets are excluded
    /// from the summary and counted in [`BenchmarkSummary::n_aborted`].
    pub smoother_error: Option<String>,
}

/// Aggregated paired comparison across datasets, mirroring the study's
/// summary table: geometric-mean RMSD ratios (binning / smoother) and
/// arithmetic-mean misclassification differences (binning − smoother), each
/// for all minutes and for the observed/missing splits.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BenchmarkSummary {
    pub n_datasets: usize,
    /// Datasets whose smoother run aborted and which are excluded above.
    pub n_aborted: usize,
    pub geo_mean_rmsd_ratio_total: f64,
    pub geo_mean_rmsd_ratio_observed: f64,
    pub geo_mean_rmsd_ratio_missing: f64,
    pub mean_misclass_diff_total: f64,
    pub mean_misclass_diff_observed: f64,
    pub mean_misclass_diff_missing: f64,
}

/// Aggregate per-dataset score pairs into the benchmark summary. Only
/// datasets with a completed smoother run contribute.
pub fn summarize_benchmark(outcomes: &[DatasetOutcome]) -> Result<BenchmarkSummary> {
    let scored: Vec<(&RunMetrics, &RunMetrics)> = outcomes
        .iter()
        .filter_map(|o| o.smoother.as_ref().map(|s| (&o.binning, s)))
        .collect();
    if scored.is_empty() {
        return Err(Error::domain(
            "summarize_benchmark: no dataset with a completed smoother run",
        ));
    }
    let ratio = |f: fn(&RunMetrics) -> f64| -> Result<f64> {
        let ratios: Vec<f64> = scored.iter().map(|(b, s)| f(b) / f(s)).collect();
        geometric_mean(&ratios)
    };
    let diff = |f: fn(&RunMetrics) -> f64| -> f64 {
        scored.iter().map(|(b, s)| f(b) - f(s)).sum::<f64>() / scored.len() as f64
    };
    Ok(BenchmarkSummary {
        n_datasets: outcomes.len(),
        n_aborted: outcomes.len() - scored.len(),
        geo_mean_rmsd_ratio_total: ratio(|m| m.rmsd_total)?,
        geo_mean_rmsd_ratio_observed: ratio(|m| m.rmsd_observed)?,
        geo_mean_rmsd_ratio_missing: ratio(|m| m.rmsd_missing)?,
        mean_misclass_diff_total: diff(|m| m.misclass_total),
        mean_misclass_diff_observed: diff(|m| m.misclass_observed),
        mean_misclass_diff_missing: diff(|m| m.misclass_missing),
    })
}

/// Run the full simulation comparison: for each of `n_datasets` seeds,
/// simulate a day of data, run the binning heuristic (on the
/// gap-interpolated series) and the smoother, score both against the truth,
/// and aggregate.
///
/// A smoother abort (e.g. repeated particle collapse) does not fail the
/// benchmark; the dataset is recorded with the error and excluded from the
/// summary.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<(Vec<DatasetOutcome>, BenchmarkSummary)> {
    if config.n_datasets == 0 {
        return Err(Error::domain("run_benchmark: need at least one dataset"));
    }
    // Derive all seeds up front so dataset i's work is independent of the
    // scheduling of the others.
    let mut seed_rng = ChaCha12Rng::seed_from_u64(config.base_seed);
    let seeds: Vec<(u64, u64)> = (0..config.n_datasets)
        .map(|_| (seed_rng.random(), seed_rng.random()))
        .collect();

    let outcomes: Result<Vec<DatasetOutcome>> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &(dataset_seed, smoother_seed))| {
            run_one_dataset(config, i, dataset_seed, smoother_seed)
        })
        .collect();
    let outcomes = outcomes?;
    let summary = summarize_benchmark(&outcomes)?;
    Ok((outcomes, summary))
}

fn run_one_dataset(
    config: &BenchmarkConfig,
    index: usize,
    dataset_seed: u64,
    smoother_seed: u64,
) -> Result<DatasetOutcome> {
    let data = simulate_dataset(
        &config.true_params,
        &config.missingness,
        config.t_len,
        dataset_seed,
    );

    let filled = interpolate_gaps(&data.obs)?;
    let seg = run_binning(&filled, &config.binning)?;
    let binning = evaluate_run(&data, Method::Binning, &seg.x_est, &seg.states)?;

    let (smoother, smoother_report, smoother_error) =
        match run_mgs_detailed(&data.obs, &config.priors, &config.mgs, smoother_seed) {
            Ok((_draws, summary, report)) => {
                let labels = classify_regimes(&summary, config.threshold);
                let metrics = evaluate_run(&data, Method::Smoother, &summary.mean, &labels)?;
                (Some(metrics), Some(report), None)
            }
            Err(e @ Error::ParticleCollapse { .. }) => (None, None, Some(e.to_string())),
            Err(e) => return Err(e),
        };

    Ok(DatasetOutcome {
        dataset_index: index,
        dataset_seed,
        smoother_seed,
        binning,
        smoother,
        smoother_report,
        smoother_error,
    })
}
