//! Deterministic travel/pause segmentation by convex-hull binning.
//!
//! The segmenter scans a fully observed (gap-filled) minute series and
//! maintains a *bin*: the distinct positions seen since the current bin
//! started. While the bin's convex-hull area stays flat the subject is
//! presumed paused; a sudden area jump means travel started. The exact rules,
//! in the order they are applied at each minute `t` (`B` is the current bin,
//! `A` its tracked hull area, `B*` the bin with minute `t`'s point added,
//! `A*` its hull area, `s` the minute the bin started):
//!
//! 1. While `B` holds fewer than 3 distinct positions, absorb the point.
//! 2. Otherwise compute the growth ratio `d = A*/A`. Ratios involving a
//!    degenerate (zero-area) hull use the convention: `d = +inf` when only
//!    the denominator is zero, and `d = 1` when both are zero — any genuinely
//!    two-dimensional growth out of a flat hull counts as a departure, while
//!    flat-to-flat growth does not trip the commit test.
//! 3. `d > growth_ratio` (default 1.2) means the subject left the place:
//!    * if `B` has more than 3 distinct positions the bin is committed as a
//!      **stable** visit — every minute in `s..t-1` is assigned the mean of
//!      the bin's member points and a fresh bin starts at `t`;
//!    * with exactly 3 distinct positions there is no place yet: the oldest
//!      minute is emitted as a **momentary** (travel) point keeping its own
//!      observed value, and the bin start advances by one.
//! 4. Otherwise, while `B` holds 3 or 4 distinct positions the *onset* test
//!    decides whether a traveller has arrived somewhere: compare the hull
//!    with and without the oldest point. If the reduced hull is degenerate
//!    the same ratio convention as in step 2 applies (so a flat, spread-out
//!    bin keeps shedding travel points); otherwise the extra area
//!    attributable to the oldest point, `A* - area(B* minus oldest)` in km²,
//!    is compared against `onset_threshold` (default 0.01 km²). Growth above
//!    the threshold emits the oldest minute as momentary; growth at or below
//!    it means the recent points are compact — the bin absorbs the point and
//!    keeps growing toward a stable visit.
//! 5. At the end of the series the open bin is flushed: it becomes a stable
//!    visit when it spans at least 4 minutes, otherwise each remaining
//!    minute is emitted as momentary.
//!
//! Note the asymmetry of step 4: the commit test (step 3) is scale-free,
//! while the onset test deliberately compares absolute area, so uniformly
//! rescaling the input can change onset decisions and nothing else.
//!
//! Duplicate positions do not enlarge the bin: a subject pinging from the
//! exact same spot keeps a single-position (hence sub-3) bin alive
//! indefinitely, which the flush then commits as one long stable visit.
//!
//! Minutes with no observation must be filled first; [`interpolate_gaps`]
//! does this linearly, which produces exactly collinear gap points — during
//! a travelled gap these stay degenerate and are emitted minute by minute as
//! momentary by the rules above.

use crate::error::{Error, Result};
use crate::geometry::{convex_hull, points_centroid, Point2};
use crate::model::{ObservationSeries, Regime};
use std::collections::HashSet;

/// Thresholds of the segmenter.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BinningConfig {
    /// Hull-area growth ratio above which the current bin is split
    /// (dimensionless, must exceed 1).
    pub growth_ratio: f64,
    /// Absolute hull growth (km^2) attributable to the bin's oldest point
    /// that is tolerated before the point is shed as travel (must be
    /// positive).
    pub onset_threshold: f64,
}

impl Default for BinningConfig {
    fn default() -> Self {
        BinningConfig {
            growth_ratio: 1.2,
            onset_threshold: 0.01,
        }
    }
}

impl BinningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.growth_ratio > 1.0 && self.growth_ratio.is_finite()) {
            return Err(Error::domain(format!(
                "growth_ratio={} must exceed 1",
                self.growth_ratio
            )));
        }
        if !(self.onset_threshold > 0.0 && self.onset_threshold.is_finite()) {
            return Err(Error::domain(format!(
                "onset_threshold={} must be positive",
                self.onset_threshold
            )));
        }
        Ok(())
    }
}

/// Kind of a committed bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinKind {
    /// A visited place spanning several minutes.
    Stable,
    /// A single minute in transit.
    Momentary,
}

/// One committed bin: minutes `start..=end` (1-based, inclusive).
#[derive(Debug, Clone, PartialEq)]
pub struct Bin {
    pub start: usize,
    pub end: usize,
    pub kind: BinKind,
    /// Estimated position over the bin's span: the member-point mean for a
    /// stable bin, the observed point itself for a momentary one.
    pub center: Point2,
}

/// Output of [`run_binning`]: a partition of `1..=T` into bins plus the
/// per-minute estimates derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct BinSegmentation {
    /// Estimated position for every minute.
    pub x_est: Vec<Point2>,
    /// `Pause` for minutes in stable bins, `Flight` for momentary minutes.
    pub states: Vec<Regime>,
    /// Bins in time order; their spans partition `1..=T`.
    pub bins: Vec<Bin>,
    /// Start minute of every bin, ascending.
    pub start_times: Vec<usize>,
}

impl BinSegmentation {
    pub fn len(&self) -> usize {
        self.x_est.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_est.is_empty()
    }
}

/// Per-minute travel labels implied by the segmentation.
pub fn binning_to_labels(seg: &BinSegmentation) -> Vec<Regime> {
    seg.states.clone()
}

/// Fill missing minutes by linear interpolation between the neighbouring
/// observed minutes; leading/trailing gaps repeat the nearest observed value.
///
/// Errors when the series contains no observation at all.
pub fn interpolate_gaps(obs: &ObservationSeries) -> Result<Vec<Point2>> {
    let t_len = obs.len();
    let mut filled = Vec::with_capacity(t_len);
    let first = obs
        .first_observed()
        .ok_or_else(|| Error::domain("interpolate_gaps: series has no observed minutes"))?;

    let mut prev_idx = first; // 1-based index of last observed minute <= t
    let mut prev_val = obs.y[first - 1].unwrap();
    for t in 1..=t_len {
        match obs.y[t - 1] {
            Some(p) => {
                filled.push(p);
                prev_idx = t;
                prev_val = p;
            }
            None => {
                if t < first {
                    filled.push(obs.y[first - 1].unwrap());
                    continue;
                }
                // Find the next observed minute, if any.
                match (t..t_len).find(|&i| obs.y[i].is_some()) {
                    Some(next0) => {
                        let next_idx = next0 + 1;
                        let next_val = obs.y[next0].unwrap();
                        let w = (t - prev_idx) as f64 / (next_idx - prev_idx) as f64;
                        filled.push(Point2::new(
                            prev_val.x + w * (next_val.x - prev_val.x),
                            prev_val.y + w * (next_val.y - prev_val.y),
                        ));
                    }
                    None => filled.push(prev_val), // trailing gap
                }
            }
        }
    }
    Ok(filled)
}

fn bits(p: &Point2) -> (u64, u64) {
    (p.x.to_bits(), p.y.to_bits())
}

/// Distinct positions (exact equality) of `series[start-1..end]`, 1-based
/// inclusive bounds.
fn distinct_positions(series: &[Point2], start: usize, end: usize) -> Vec<Point2> {
    let mut seen: HashSet<(u64, u64)> = HashSet::new();
    let mut out = Vec::new();
    for p in &series[start - 1..end] {
        if seen.insert(bits(p)) {
            out.push(*p);
        }
    }
    out
}

fn hull_area(points: &[Point2]) -> Result<f64> {
    Ok(convex_hull(points)?.area())
}

/// Growth ratio with the degenerate-hull convention: `new/old`, `+inf` when
/// only `old` is zero, `1` when both are zero.
fn growth_ratio(new_area: f64, old_area: f64) -> f64 {
    if old_area == 0.0 {
        if new_area > 0.0 {
            f64::INFINITY
        } else {
            1.0
        }
    } else {
        new_area / old_area
    }
}

/// Run the hull segmenter over a fully observed minute series.
///
/// Requires at least 4 minutes and finite coordinates.
pub fn run_binning(series: &[Point2], config: &BinningConfig) -> Result<BinSegmentation> {
    config.validate()?;
    if series.len() < 4 {
        return Err(Error::domain(format!(
            "run_binning: need at least 4 minutes, got {}",
            series.len()
        )));
    }
    if let Some(p) = series.iter().find(|p| !p.is_finite()) {
        return Err(Error::domain(format!(
            "run_binning: non-finite point ({}, {})",
            p.x, p.y
        )));
    }

    let t_len = series.len();
    let mut x_est = vec![Point2::new(f64::NAN, f64::NAN); t_len];
    let mut bins: Vec<Bin> = Vec::new();

    let mut s: usize = 1; // start minute of the open bin (1-based)
    let mut area = 0.0; // tracked hull area of the open bin

    let commit_stable = |x_est: &mut Vec<Point2>, bins: &mut Vec<Bin>, start: usize, end: usize| {
        let members: Vec<Point2> = series[start - 1..end].to_vec();
        let center = points_centroid(&members).expect("non-empty bin");
        for l in start..=end {
            x_est[l - 1] = center;
        }
        bins.push(Bin {
            start,
            end,
            kind: BinKind::Stable,
            center,
        });
    };
    let emit_momentary = |x_est: &mut Vec<Point2>, bins: &mut Vec<Bin>, at: usize| {
        x_est[at - 1] = series[at - 1];
        bins.push(Bin {
            start: at,
            end: at,
            kind: BinKind::Momentary,
            center: series[at - 1],
        });
    };

    for t in 1..=t_len {
        let bin = distinct_positions(series, s, t - 1); // B (empty when t == s)
        if bin.len() < 3 {
            continue; // absorb Y_t into the open bin
        }
        if bin.len() == 3 {
            area = hull_area(&bin)?;
        }
        let bin_star = distinct_positions(series, s, t); // B*
        let area_star = hull_area(&bin_star)?;
        let d = growth_ratio(area_star, area);

        if d > config.growth_ratio {
            if bin.len() > 3 {
                // Departure from a formed place: commit the bin.
                commit_stable(&mut x_est, &mut bins, s, t - 1);
                s = t;
                area = 0.0;
            } else {
                // No place formed yet: shed the oldest minute as travel.
                emit_momentary(&mut x_est, &mut bins, s);
                s += 1;
                area = area_star;
            }
        } else if bin.len() == 3 || bin.len() == 4 {
            // Onset test: how much hull does the oldest point account for?
            let reduced = distinct_positions(series, s + 1, t);
            let reduced_area = hull_area(&reduced)?;
            let shed = if reduced_area == 0.0 {
                growth_ratio(area_star, reduced_area) > config.onset_threshold
            } else {
                area_star - reduced_area > config.onset_threshold
            };
            if shed {
                emit_momentary(&mut x_est, &mut bins, s);
                s += 1;
                // The tracked area is refreshed on the next pass once the
                // bin is back to 3 distinct positions.
            } else {
                area = area_star;
            }
        } else {
            area = area_star;
        }
    }

    // Flush the open bin.
    if t_len - s + 1 >= 4 {
        commit_stable(&mut x_est, &mut bins, s, t_len);
    } else {
        for l in s..=t_len {
            emit_momentary(&mut x_est, &mut bins, l);
        }
    }

    let mut states = vec![Regime::Pause; t_len];
    for b in &bins {
        if b.kind == BinKind::Momentary {
            states[b.start - 1] = Regime::Flight;
        }
    }
    let start_times: Vec<usize> = bins.iter().map(|b| b.start).collect();

    debug_assert!(x_est.iter().all(|p| p.is_finite()));
    Ok(BinSegmentation {
        x_est,
        states,
        bins,
        start_times,
    })
}

#[cfg(test)]
pub(crate) mod fixtures {
    use crate::geometry::Point2;

    /// Constant series: one place, never moves.
    pub fn constant(t_len: usize) -> Vec<Point2> {
        vec![Point2::new(2.5, -1.5); t_len]
    }

    /// Equally spaced points on a line, 1 km apart: continuous travel.
    pub fn collinear(t_len: usize) -> Vec<Point2> {
        (0..t_len).map(|i| Point2::new(i as f64, 0.0)).collect()
    }

    /// Two compact 20-minute clusters 5 km apart joined by 10 transit
    /// minutes. The first three points of each cluster span a fat triangle
    /// (hull area well below the onset threshold) and later cluster points
    /// stay inside the same disc, so each cluster forms one stable bin while
    /// every transit point trips either the growth or the onset test.
    pub fn two_clusters() -> Vec<Point2> {
        let cluster = |cx: f64, cy: f64| -> Vec<Point2> {
            let mut pts = vec![
                Point2::new(cx - 0.04, cy - 0.03),
                Point2::new(cx + 0.04, cy - 0.03),
                Point2::new(cx, cy + 0.05),
            ];
            for i in 0..17 {
                let angle = 0.7 * i as f64;
                let r = 0.005 + 0.0015 * (i % 7) as f64;
                pts.push(Point2::new(
                    cx + r * angle.cos(),
                    cy + r * angle.sin(),
                ));
            }
            pts
        };
        let mut series = cluster(0.0, 0.0);
        for i in 0..10 {
            let x = 0.3 + 0.449 * i as f64;
            let y = if i % 2 == 0 { 0.03 } else { -0.03 };
            series.push(Point2::new(x, y));
        }
        series.extend(cluster(5.0, 0.0));
        series
    }
}
