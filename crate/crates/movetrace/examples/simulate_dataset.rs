//! Draw one synthetic day of movement data and inspect it.
//!
//! ```sh
//! cargo run --example simulate_dataset
//! ```

use movetrace::model::{ModelParams, Regime};
use movetrace::simulate::{simulate_dataset, MissingnessParams};

fn main() {
    let params = ModelParams::default_true();
    let missingness = MissingnessParams::default();
    let data = simulate_dataset(&params, &missingness, 1440, 42);

    let t_len = data.truth.len();
    let n_flight = data
        .truth
        .regimes
        .iter()
        .filter(|&&s| s == Regime::Flight)
        .count();
    let n_observed = data.obs.n_observed();
    println!("simulated {t_len} minutes (seed {})", data.seed);
    println!(
        "  travel minutes: {n_flight} ({:.1}%)",
        100.0 * n_flight as f64 / t_len as f64
    );
    println!(
        "  observed minutes: {n_observed} ({:.1}% missing)",
        100.0 * (1.0 - n_observed as f64 / t_len as f64)
    );

    println!("\nfirst ten minutes:");
    println!("{:>4} {:>20} {:>7} {:>24}", "t", "truth (km)", "state", "observation (km)");
    for t in 0..10 {
        let p = data.truth.positions[t];
        let s = match data.truth.regimes[t] {
            Regime::Pause => "pause",
            Regime::Flight => "travel",
        };
        let obs = match data.obs.y[t] {
            Some(q) => format!("({:8.3}, {:8.3})", q.x, q.y),
            None => "missing".to_string(),
        };
        println!("{:>4} ({:8.3}, {:8.3}) {s:>7} {obs:>24}", t + 1, p.x, p.y);
    }
}
