//! Turn raw latitude/longitude fixes into minute-level series.
//!
//! Fixes are grouped per person and civil day, centered, projected to
//! kilometres, averaged within each minute, and finally re-centered and
//! rotated by a random angle so no absolute location survives. Malformed
//! rows are skipped with a warning instead of aborting the run.
//!
//! ```sh
//! cargo run --example preprocess_raw_fixes
//! ```

use std::io::Write;

use movetrace::io;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // A tiny raw file: two people, one stray malformed row.
    let dir = tempfile::tempdir()?;
    let raw_path = dir.path().join("raw.csv");
    let mut file = std::fs::File::create(&raw_path)?;
    writeln!(file, "person_id,timestamp,lat,lon")?;
    for (ts, lat, lon) in [
        (1_600_000_000i64, 40.0000, -83.0000),
        (1_600_000_030, 40.0001, -83.0002),
        (1_600_000_310, 40.0003, -83.0001),
        (1_600_003_600, 40.0100, -83.0150),
    ] {
        writeln!(file, "alice,{ts},{lat},{lon}")?;
    }
    writeln!(file, "bob,not_a_timestamp,40.0,-83.0")?;
    writeln!(file, "bob,1600000500,40.2000,-83.1000")?;
    drop(file);

    let (fixes, issues) = io::read_raw_fixes(&raw_path)?;
    println!("read {} fixes, skipped {} malformed rows:", fixes.len(), issues.len());
    for issue in &issues {
        println!("  line {}: {}", issue.line, issue.message);
    }

    let groups = io::group_by_person_day(fixes, 0)?;
    for (key, day_fixes) in &groups {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let series = io::preprocess_person_day(key, day_fixes, 0, 1440, &mut rng)?;
        println!(
            "\n{key}: {} fixes -> {} of {} minutes observed",
            day_fixes.len(),
            series.n_observed(),
            series.len()
        );
        for (t, y) in series.y.iter().enumerate() {
            if let Some(p) = y {
                println!("  minute {:>4}: ({:7.3}, {:7.3}) km", t + 1, p.x, p.y);
            }
        }
    }
    Ok(())
}
