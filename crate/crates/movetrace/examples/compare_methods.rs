//! Score binning against the smoother on a few simulated datasets.
//!
//! Each dataset is simulated, segmented by both methods, and scored
//! against the known truth: RMSD of the position estimate and the travel
//! misclassification rate, split by observed/missing minutes. The summary
//! reports geometric-mean RMSD ratios (binning / smoother; above 1 means
//! the smoother is closer to the truth) and mean misclassification
//! differences. Scaled down to finish in about a minute; the full study
//! uses 50 datasets and a much longer sampler.
//!
//! ```sh
//! cargo run --release --example compare_methods
//! ```

use movetrace::metrics::{run_benchmark, BenchmarkConfig};
use movetrace::smc::MgsOptions;

fn main() -> Result<(), movetrace::Error> {
    let config = BenchmarkConfig {
        n_datasets: 3,
        t_len: 720,
        mgs: MgsOptions {
            n_samples: 120,
            burn_in: 40,
            n_particles: 100,
            credible_level: 0.9,
        },
        base_seed: 42,
        ..BenchmarkConfig::default()
    };
    let (outcomes, summary) = run_benchmark(&config)?;

    println!(
        "{:>3} {:>14} {:>14} {:>13} {:>13}",
        "set", "binning RMSD", "smoother RMSD", "binning misc", "smoother misc"
    );
    for o in &outcomes {
        let s = o.smoother.as_ref().expect("smoother completed");
        println!(
            "{:>3} {:>14.4} {:>14.4} {:>13.4} {:>13.4}",
            o.dataset_index, o.binning.rmsd_total, s.rmsd_total, o.binning.misclass_total, s.misclass_total
        );
    }
    println!(
        "\nRMSD ratio (binning/smoother): total {:.2}, observed {:.2}, missing {:.2}",
        summary.geo_mean_rmsd_ratio_total,
        summary.geo_mean_rmsd_ratio_observed,
        summary.geo_mean_rmsd_ratio_missing
    );
    println!(
        "misclassification difference:  total {:+.4}, observed {:+.4}, missing {:+.4}",
        summary.mean_misclass_diff_total,
        summary.mean_misclass_diff_observed,
        summary.mean_misclass_diff_missing
    );
    Ok(())
}
