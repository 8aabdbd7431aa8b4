//! Render every figure kind to SVG files.
//!
//! Simulates a short day, runs both estimators, and writes four figures —
//! raw observations, the smoother's posterior (probability shading, band,
//! draw cloud, mean), the binning segmentation (travel shading), and the
//! four-panel method comparison.
//!
//! ```sh
//! cargo run --release --example render_figures
//! ```

use movetrace::binning::{interpolate_gaps, run_binning, BinningConfig};
use movetrace::config::PlotConfig;
use movetrace::io::{SegmentationRecord, SummaryRecord};
use movetrace::model::ModelParams;
use movetrace::plot;
use movetrace::simulate::{simulate_dataset, MissingnessParams};
use movetrace::smc::{run_mgs_detailed, MgsOptions, Priors};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = simulate_dataset(
        &ModelParams::default_true(),
        &MissingnessParams::default(),
        240,
        42,
    );

    let filled = interpolate_gaps(&data.obs)?;
    let seg = run_binning(&filled, &BinningConfig::default())?;
    let seg = SegmentationRecord {
        x_est: seg.x_est,
        states: seg.states,
        start_times: seg.start_times,
    };

    let opts = MgsOptions {
        n_samples: 120,
        burn_in: 40,
        n_particles: 100,
        credible_level: 0.9,
    };
    let (draws, summary, _) = run_mgs_detailed(&data.obs, &Priors::default(), &opts, 7)?;
    let summary = SummaryRecord {
        mean: summary.mean,
        lo: summary.lo,
        hi: summary.hi,
        motion_prob: summary.motion_prob,
    };
    let draw_paths: Vec<_> = draws.iter().map(|d| d.trajectory.positions.clone()).collect();

    let cfg = PlotConfig::default();
    let out = std::path::Path::new("target/example_figures");
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("observations.svg"), plot::observation_figure(&data.obs, &cfg))?;
    std::fs::write(
        out.join("smoother.svg"),
        plot::summary_figure(&summary, Some(&data.obs), &draw_paths, &cfg)?,
    )?;
    std::fs::write(
        out.join("segmentation.svg"),
        plot::segmentation_figure(&seg, Some(&data.obs), &cfg)?,
    )?;
    std::fs::write(
        out.join("comparison.svg"),
        plot::comparison_figure(&summary, &seg, Some(&data.obs), &cfg)?,
    )?;
    println!("wrote 4 figures to {}", out.display());
    Ok(())
}
