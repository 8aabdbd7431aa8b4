//! Run configuration: one TOML document drives every subcommand.
//!
//! Defaults reproduce the full simulation-study protocol: 50 datasets of
//! T = 1440 minutes at the data-generating parameter values, sampler at
//! 500 particles / 2000 sweeps (first 1000 discarded), binning at growth
//! ratio 1.2 and onset threshold 0.01, classification threshold 0.5.
//! Command-line flags override file values; a missing file means "all
//! defaults". `default_template()` emits a fully-populated, commented TOML
//! document to start from.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binning::BinningConfig;
use crate::error::{Error, Result};
use crate::model::{ModelParams, Priors};
use crate::simulate::MissingnessParams;
use crate::smc::MgsOptions;

/// Sampler block: particle count and sweep schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Particles per trajectory draw.
    pub n_particles: usize,
    /// Total Gibbs sweeps, including burn-in.
    pub n_samples: usize,
    /// Sweeps discarded before summaries.
    pub burn_in: usize,
    /// Two-sided credible level for the pointwise bands.
    pub credible_level: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        let mgs = MgsOptions::default();
        SamplerConfig {
            n_particles: mgs.n_particles,
            n_samples: mgs.n_samples,
            burn_in: mgs.burn_in,
            credible_level: mgs.credible_level,
        }
    }
}

impl SamplerConfig {
    pub fn to_options(self) -> MgsOptions {
        MgsOptions {
            n_samples: self.n_samples,
            burn_in: self.burn_in,
            n_particles: self.n_particles,
            credible_level: self.credible_level,
        }
    }
}

/// Simulation block: how many datasets, how long, and the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Number of datasets for `simulate`/`evaluate`.
    pub n_datasets: usize,
    /// Minutes per dataset.
    pub t_len: usize,
    /// Data-generating model parameters.
    pub true_params: ModelParams,
    /// Data-generating missingness chain.
    pub missingness: MissingnessParams,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n_datasets: 50,
            t_len: 1440,
            true_params: ModelParams::default_true(),
            missingness: MissingnessParams::default(),
        }
    }
}

/// Preprocessing block for raw position fixes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Civil-day UTC offset, seconds (e.g. -18000 for UTC-5).
    pub tz_offset_secs: i32,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig { tz_offset_secs: 0 }
    }
}

/// Figure options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotConfig {
    /// Panel width in pixels.
    pub width: u32,
    /// Per-panel height in pixels.
    pub panel_height: u32,
    /// How many retained draws to overlay as the sampled cloud.
    pub max_draw_overlays: usize,
}

impl Default for PlotConfig {
    fn default() -> Self {
        PlotConfig {
            width: 900,
            panel_height: 260,
            max_draw_overlays: 40,
        }
    }
}

/// Everything a run needs. One value of this type, plus the input files,
/// determines every output byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; all per-dataset and per-stage seeds derive from it.
    pub seed: u64,
    /// Directory all outputs are written under.
    pub output_dir: String,
    /// Classification threshold on the posterior motion probability.
    pub threshold: f64,
    /// Worker pool size for dataset-level fan-out (results are
    /// seed-deterministic at any size).
    pub workers: usize,
    pub simulation: SimulationConfig,
    pub priors: Priors,
    pub sampler: SamplerConfig,
    pub binning: BinningConfig,
    pub preprocess: PreprocessConfig,
    pub plot: PlotConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 20_240_901,
            output_dir: "out".into(),
            threshold: 0.5,
            workers: 1,
            simulation: SimulationConfig::default(),
            priors: Priors::default(),
            sampler: SamplerConfig::default(),
            binning: BinningConfig::default(),
            preprocess: PreprocessConfig::default(),
            plot: PlotConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parse a TOML document; unknown keys are rejected so typos fail fast.
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("cannot serialize: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.simulation.true_params.validate()?;
        self.simulation.missingness.validate()?;
        self.binning.validate()?;
        if self.simulation.n_datasets == 0 {
            return Err(Error::Config("simulation.n_datasets must be positive".into()));
        }
        if self.simulation.t_len < 2 {
            return Err(Error::Config("simulation.t_len must be at least 2".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!(
                "threshold={} must lie in (0,1)",
                self.threshold
            )));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be positive".into()));
        }
        let s = &self.sampler;
        if s.n_particles < 2 {
            return Err(Error::Config("sampler.n_particles must be at least 2".into()));
        }
        if s.n_samples == 0 || s.burn_in >= s.n_samples {
            return Err(Error::Config(
                "sampler.burn_in must be smaller than sampler.n_samples".into(),
            ));
        }
        if !(s.credible_level > 0.0 && s.credible_level < 1.0) {
            return Err(Error::Config(format!(
                "sampler.credible_level={} must lie in (0,1)",
                s.credible_level
            )));
        }
        if self.plot.width == 0 || self.plot.panel_height == 0 {
            return Err(Error::Config("plot dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// A fully-populated, commented config template at the default values.
pub fn default_template() -> String {
    let body = RunConfig::default()
        .to_toml_string()
        .expect("default config serializes");
    format!(
        "# Trajectory-smoothing run configuration.\n\
         # Every value below is the default; delete anything you do not\n\
         # want to override. Command-line flags take precedence over this\n\
         # file.\n\n{body}"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_study_protocol() {
        let c = RunConfig::default();
        assert_eq!(c.simulation.n_datasets, 50);
        assert_eq!(c.simulation.t_len, 1440);
        assert_eq!(c.sampler.n_particles, 500);
        assert_eq!(c.sampler.n_samples, 2000);
        assert_eq!(c.sampler.burn_in, 1000);
        assert_eq!(c.binning.growth_ratio, 1.2);
        assert_eq!(c.binning.onset_threshold, 0.01);
        assert_eq!(c.threshold, 0.5);
        assert_eq!(c.workers, 1);
        assert_eq!(c.simulation.true_params, ModelParams::default_true());
        assert_eq!(c.simulation.missingness.stay_missing, 0.95);
        assert_eq!(c.simulation.missingness.stay_observed, 0.99);
        c.validate().unwrap();
    }

    #[test]
    fn template_round_trips_to_defaults() {
        let parsed = RunConfig::from_toml(&default_template()).unwrap();
        assert_eq!(parsed, RunConfig::default());
    }

    #[test]
    fn empty_document_means_all_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_document_overrides_only_named_keys() {
        let text = "seed = 7\n[sampler]\nn_particles = 64\n";
        let parsed = RunConfig::from_toml(text).unwrap();
        assert_eq!(parsed.seed, 7);
        assert_eq!(parsed.sampler.n_particles, 64);
        assert_eq!(parsed.sampler.n_samples, 2000);
        assert_eq!(parsed.simulation.t_len, 1440);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml("sede = 7\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        assert!(err.to_string().contains("sede"));
    }

    #[test]
    fn invalid_values_are_rejected() {
        for text in [
            "threshold = 1.5\n",
            "workers = 0\n",
            "[sampler]\nn_samples = 100\nburn_in = 100\n",
            "[simulation]\nt_len = 1\n",
            "[binning]\ngrowth_ratio = 0.9\n",
        ] {
            assert!(RunConfig::from_toml(text).is_err(), "accepted: {text}");
        }
    }

    #[test]
    fn load_reads_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 99\n").unwrap();
        assert_eq!(RunConfig::load(&path).unwrap().seed, 99);
        assert!(RunConfig::load(&dir.path().join("absent.toml")).is_err());
    }
}
