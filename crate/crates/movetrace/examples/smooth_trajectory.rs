//! Fit the Bayesian smoother to a short noisy series.
//!
//! The sampler alternates a particle-filter draw of the latent trajectory
//! with parameter updates; the retained draws give pointwise means,
//! credible bands and a posterior travel probability for every minute —
//! including the missing ones. Settings here are scaled down to finish in
//! seconds; see the library docs for the full-study defaults.
//!
//! ```sh
//! cargo run --release --example smooth_trajectory
//! ```

use movetrace::model::ModelParams;
use movetrace::simulate::{simulate_dataset, MissingnessParams};
use movetrace::smc::{run_mgs_detailed, MgsOptions, Priors};

fn main() -> Result<(), movetrace::Error> {
    let data = simulate_dataset(
        &ModelParams::default_true(),
        &MissingnessParams::default(),
        240,
        42,
    );

    let opts = MgsOptions {
        n_samples: 150,
        burn_in: 50,
        n_particles: 120,
        credible_level: 0.9,
    };
    let (draws, summary, report) = run_mgs_detailed(&data.obs, &Priors::default(), &opts, 7)?;

    println!(
        "retained {} draws ({} sweeps, {} burn-in, {} particles) in {:.1}s",
        draws.len(),
        opts.n_samples,
        opts.burn_in,
        opts.n_particles,
        report.wall_secs
    );
    println!(
        "acceptance rates: rho {:.2}, variance ratio {:.2}, noise variance {:.2}, \
         noise ratio {:.2}; min ESS {:.0}",
        report.accept_rho,
        report.accept_k,
        report.accept_tau2,
        report.accept_c,
        report.ess_min
    );

    println!("\nposterior by minute (every 24th):");
    println!(
        "{:>4} {:>21} {:>23} {:>9} {:>8}",
        "t", "mean (km)", "90% band width (km)", "P(travel)", "observed"
    );
    for t in (0..summary.mean.len()).step_by(24) {
        println!(
            "{:>4} ({:8.3}, {:8.3}) ({:9.3}, {:9.3}) {:>9.2} {:>8}",
            t + 1,
            summary.mean[t].x,
            summary.mean[t].y,
            summary.hi[t].x - summary.lo[t].x,
            summary.hi[t].y - summary.lo[t].y,
            summary.motion_prob[t],
            if data.obs.y[t].is_some() { "yes" } else { "no" }
        );
    }
    Ok(())
}
