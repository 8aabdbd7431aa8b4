//! Draws synthetic datasets from the model: latent trajectory, mixture-noise
//! observations, and a Markov missingness pattern.
//!
//! Everything is deterministic given a seed. [`simulate_dataset`] consumes
//! its seed in a fixed order (trajectory, then observation noise, then
//! missingness) so files regenerated from a manifest are bit-identical.

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::model::{
    latent_step_mean, latent_step_var, LatentTrajectory, ModelParams, ObservationSeries, Regime,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

/// Two-state Markov missingness: each minute is observed or missing, and the
/// pattern is independent of the latent trajectory.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MissingnessParams {
    /// P(minute t missing | minute t-1 missing).
    pub stay_missing: f64,
    /// P(minute t observed | minute t-1 observed).
    pub stay_observed: f64,
}

impl Default for MissingnessParams {
    /// Gaps average 20 minutes and roughly one minute in six is missing.
    fn default() -> Self {
        MissingnessParams {
            stay_missing: 0.95,
            stay_observed: 0.99,
        }
    }
}

impl MissingnessParams {
    /// Long-run fraction of missing minutes.
    pub fn stationary_missing_prob(&self) -> f64 {
        let to_missing = 1.0 - self.stay_observed;
        let to_observed = 1.0 - self.stay_missing;
        to_missing / (to_missing + to_observed)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("stay_missing", self.stay_missing),
            ("stay_observed", self.stay_observed),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::domain(format!("{name}={v} must lie in (0,1)")));
            }
        }
        Ok(())
    }
}

/// A simulated dataset: ground truth plus the observation series an analyst
/// would actually see.
#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub truth: LatentTrajectory,
    pub obs: ObservationSeries,
    pub params_used: ModelParams,
    pub missingness: MissingnessParams,
    pub seed: u64,
}

pub(crate) fn normal_step(rng: &mut impl Rng, mean: Point2, var: f64) -> Point2 {
    let sd = var.sqrt();
    let zx: f64 = StandardNormal.sample(rng);
    let zy: f64 = StandardNormal.sample(rng);
    Point2::new(mean.x + sd * zx, mean.y + sd * zy)
}

/// Draw a latent trajectory of `t_len` minutes.
///
/// The regime at minute 1 comes from the chain's stationary distribution,
/// the position starts at the origin, and the initial velocity is zero
/// (`X_0 := X_1`).
pub fn simulate_trajectory(
    params: &ModelParams,
    t_len: usize,
    rng: &mut impl Rng,
) -> Result<LatentTrajectory> {
    if t_len == 0 {
        return Err(Error::domain("simulate_trajectory: t_len must be positive"));
    }
    params.validate()?;

    let mut regimes = Vec::with_capacity(t_len);
    let mut positions = Vec::with_capacity(t_len);

    let s1 = if rng.random::<f64>() < params.stationary_flight_prob() {
        Regime::Flight
    } else {
        Regime::Pause
    };
    regimes.push(s1);
    positions.push(Point2::new(0.0, 0.0));

    for t in 2..=t_len {
        let prev = regimes[t - 2];
        let stay = match prev {
            Regime::Flight => params.alpha_ff,
            Regime::Pause => params.alpha_pp,
        };
        let s = if rng.random::<f64>() < stay {
            prev
        } else {
            match prev {
                Regime::Flight => Regime::Pause,
                Regime::Pause => Regime::Flight,
            }
        };
        let x_prev = positions[t - 2];
        let x_prev2 = if t == 2 { positions[0] } else { positions[t - 3] };
        let mean = latent_step_mean(x_prev, x_prev2, s, params);
        let var = latent_step_var(s, params);
        positions.push(normal_step(rng, mean, var));
        regimes.push(s);
    }

    Ok(LatentTrajectory { positions, regimes })
}

/// Noisy measurement of every minute plus the mixture component used:
/// `true` marks the small-variance component.
pub(crate) fn simulate_observations_labeled(
    truth: &[Point2],
    params: &ModelParams,
    rng: &mut impl Rng,
) -> (Vec<Point2>, Vec<bool>) {
    let mut noisy = Vec::with_capacity(truth.len());
    let mut small = Vec::with_capacity(truth.len());
    for &x in truth {
        let is_small = rng.random::<f64>() < params.pi_small;
        let var = if is_small {
            params.tau2_s
        } else {
            params.tau2_b()
        };
        noisy.push(normal_step(rng, x, var));
        small.push(is_small);
    }
    (noisy, small)
}

/// Noisy measurement of every minute: with probability `pi_small` the error
/// variance is `tau2_s` per coordinate, otherwise `tau2_b`.
pub fn simulate_observations(
    truth: &[Point2],
    params: &ModelParams,
    rng: &mut impl Rng,
) -> Result<Vec<Point2>> {
    if truth.is_empty() {
        return Err(Error::domain("simulate_observations: empty truth"));
    }
    params.validate()?;
    Ok(simulate_observations_labeled(truth, params, rng).0)
}

/// Draw the observed/missing indicator for every minute (`true` = observed).
/// Minute 1 is drawn from the chain's stationary distribution.
pub fn simulate_missingness(
    mp: &MissingnessParams,
    t_len: usize,
    rng: &mut impl Rng,
) -> Result<Vec<bool>> {
    if t_len == 0 {
        return Err(Error::domain("simulate_missingness: t_len must be positive"));
    }
    mp.validate()?;
    let mut observed = Vec::with_capacity(t_len);
    let first_missing = rng.random::<f64>() < mp.stationary_missing_prob();
    observed.push(!first_missing);
    for t in 1..t_len {
        let prev = observed[t - 1];
        let stay = if prev { mp.stay_observed } else { mp.stay_missing };
        let next = if rng.random::<f64>() < stay { prev } else { !prev };
        observed.push(next);
    }
    Ok(observed)
}

/// Simulate a complete dataset from one seed.
pub fn simulate_dataset(
    params: &ModelParams,
    mp: &MissingnessParams,
    t_len: usize,
    seed: u64,
) -> SimulatedDataset {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let truth = simulate_trajectory(params, t_len, &mut rng).expect("valid simulation config");
    let noisy = simulate_observations(&truth.positions, params, &mut rng).expect("non-empty");
    let observed = simulate_missingness(mp, t_len, &mut rng).expect("valid missingness");
    let y = noisy
        .into_iter()
        .zip(&observed)
        .map(|(p, &obs)| if obs { Some(p) } else { None })
        .collect();
    SimulatedDataset {
        truth,
        obs: ObservationSeries::new(y).expect("non-empty series"),
        params_used: *params,
        missingness: *mp,
        seed,
    }
}
