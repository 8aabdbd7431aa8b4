//! Segment a noisy series with the convex-hull binning method.
//!
//! The binning method needs a complete series, so missing minutes are
//! linearly interpolated first; each committed bin is either a *stable*
//! visited place or a *momentary* travel point.
//!
//! ```sh
//! cargo run --example segment_by_binning
//! ```

use movetrace::binning::{interpolate_gaps, run_binning, BinKind, BinningConfig};
use movetrace::model::ModelParams;
use movetrace::simulate::{simulate_dataset, MissingnessParams};

fn main() -> Result<(), movetrace::Error> {
    let data = simulate_dataset(
        &ModelParams::default_true(),
        &MissingnessParams::default(),
        1440,
        42,
    );

    let filled = interpolate_gaps(&data.obs)?;
    let seg = run_binning(&filled, &BinningConfig::default())?;

    let stable = seg.bins.iter().filter(|b| b.kind == BinKind::Stable).count();
    println!(
        "{} bins over {} minutes ({} stable places, {} travel points)",
        seg.bins.len(),
        seg.len(),
        stable,
        seg.bins.len() - stable
    );

    println!("\nstable places:");
    for bin in seg.bins.iter().filter(|b| b.kind == BinKind::Stable) {
        println!(
            "  minutes {:>4}..={:<4} ({:>3} min) around ({:8.3}, {:8.3}) km",
            bin.start,
            bin.end,
            bin.end - bin.start + 1,
            bin.center.x,
            bin.center.y
        );
    }
    Ok(())
}
