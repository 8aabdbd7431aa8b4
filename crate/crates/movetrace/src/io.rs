//! File formats and raw-fix preprocessing.
//!
//! # Precision contract
//!
//! Every floating-point value is written as decimal text with **9
//! significant digits** (`fmt_float`). Writing quantizes a value once; from
//! then on read → write cycles are bit-exact, because any 9-digit decimal
//! parses to the unique nearest f64 and that f64 prints back to the same 9
//! digits. Golden files and reproducibility checks therefore compare file
//! bytes directly.
//!
//! # Formats
//!
//! * raw-fix CSV: `person_id,timestamp,lat,lon` — one position report per
//!   row, timestamp in seconds since the Unix epoch;
//! * observation CSV: `t,x_km,y_km,observed` — exactly `T` rows, empty
//!   coordinate fields on missing minutes;
//! * segmentation CSV: `t,x_est,y_est,state,bin_start` — state 0 = pause,
//!   1 = travel; `bin_start` flags the first minute of each bin;
//! * summary CSV: `t,mean_x,mean_y,lo_x,hi_x,lo_y,hi_y,motion_prob`;
//! * draws CSV (optional, large): `iteration,t,x,y,state`;
//! * JSON for run reports and benchmark manifests.
//!
//! # Preprocessing
//!
//! Raw fixes are grouped per person and civil day (configurable UTC
//! offset), centered on their coordinate-wise mean, projected to km by a
//! local equirectangular approximation, averaged within each minute, and
//! finally re-centered and rotated by one uniform random angle per
//! person-day so that no absolute location survives in the outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, FixedOffset, NaiveDate};
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::metrics::{BenchmarkSummary, DatasetOutcome};
use crate::model::{LatentTrajectory, ObservationSeries, Regime};
use crate::smc::{McmcDraw, PosteriorSummary};

// ---------------------------------------------------------------------------
// Float formatting
// ---------------------------------------------------------------------------

/// Render a float with 9 significant digits (the on-disk precision).
/// Non-finite values are a caller bug upstream, so they are rejected when a
/// record is assembled rather than silently written.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.8e}")
}

fn require_finite(what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::domain(format!("{what} is not finite: {v}")))
    }
}

// ---------------------------------------------------------------------------
// Raw fixes
// ---------------------------------------------------------------------------

/// One raw position report.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFix {
    pub person_id: String,
    /// Seconds since the Unix epoch.
    pub timestamp: i64,
    pub lat: f64,
    pub lon: f64,
}

/// A person and one civil day of their data.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PersonDayKey {
    pub person_id: String,
    pub date: NaiveDate,
}

impl std::fmt::Display for PersonDayKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}_{}", self.person_id, self.date.format("%Y-%m-%d"))
    }
}

/// A malformed input row that was skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseIssue {
    pub line: u64,
    pub message: String,
}

/// Read a raw-fix CSV. Malformed rows (bad numbers, out-of-range
/// coordinates, wrong field count) are skipped and reported with their line
/// numbers so a long collection run survives isolated bad records; a missing
/// or misnamed header column is a hard error.
pub fn read_raw_fixes(path: &Path) -> Result<(Vec<RawFix>, Vec<ParseIssue>)> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_open_error(path, e))?;
    check_headers(path, &mut reader, &["person_id", "timestamp", "lat", "lon"])?;

    let mut fixes = Vec::new();
    let mut issues = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_record_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        match parse_raw_fix(&record) {
            Ok(fix) => fixes.push(fix),
            Err(message) => issues.push(ParseIssue { line, message }),
        }
    }
    Ok((fixes, issues))
}

fn parse_raw_fix(record: &csv::StringRecord) -> std::result::Result<RawFix, String> {
    if record.len() != 4 {
        return Err(format!("expected 4 fields, found {}", record.len()));
    }
    let person_id = record[0].trim().to_string();
    if person_id.is_empty() {
        return Err("empty person_id".into());
    }
    let timestamp: i64 = record[1]
        .trim()
        .parse()
        .map_err(|e| format!("bad timestamp `{}`: {e}", &record[1]))?;
    let lat: f64 = record[2]
        .trim()
        .parse()
        .map_err(|e| format!("bad lat `{}`: {e}", &record[2]))?;
    let lon: f64 = record[3]
        .trim()
        .parse()
        .map_err(|e| format!("bad lon `{}`: {e}", &record[3]))?;
    if !(lat.is_finite() && lat.abs() <= 90.0) {
        return Err(format!("latitude {lat} out of [-90, 90]"));
    }
    if !(lon.is_finite() && lon.abs() <= 180.0) {
        return Err(format!("longitude {lon} out of [-180, 180]"));
    }
    Ok(RawFix {
        person_id,
        timestamp,
        lat,
        lon,
    })
}

/// Group fixes by person and civil day under the given UTC offset
/// (seconds). The map is ordered, so iteration over person-days is
/// deterministic; each group is sorted by timestamp.
pub fn group_by_person_day(
    fixes: Vec<RawFix>,
    tz_offset_secs: i32,
) -> Result<BTreeMap<PersonDayKey, Vec<RawFix>>> {
    let offset = FixedOffset::east_opt(tz_offset_secs)
        .ok_or_else(|| Error::domain(format!("invalid timezone offset {tz_offset_secs} s")))?;
    let mut groups: BTreeMap<PersonDayKey, Vec<RawFix>> = BTreeMap::new();
    for fix in fixes {
        let when = DateTime::from_timestamp(fix.timestamp, 0)
            .ok_or_else(|| Error::domain(format!("timestamp {} out of range", fix.timestamp)))?;
        let date = when.with_timezone(&offset).date_naive();
        groups
            .entry(PersonDayKey {
                person_id: fix.person_id.clone(),
                date,
            })
            .or_default()
            .push(fix);
    }
    for group in groups.values_mut() {
        group.sort_by_key(|f| f.timestamp);
    }
    Ok(groups)
}

/// Seconds since the epoch of this civil day's local midnight.
pub fn day_start_timestamp(date: NaiveDate, tz_offset_secs: i32) -> Result<i64> {
    let offset = FixedOffset::east_opt(tz_offset_secs)
        .ok_or_else(|| Error::domain(format!("invalid timezone offset {tz_offset_secs} s")))?;
    let midnight = date
        .and_hms_opt(0, 0, 0)
        .ok_or_else(|| Error::domain("invalid date"))?;
    midnight
        .and_local_timezone(offset)
        .single()
        .map(|dt| dt.timestamp())
        .ok_or_else(|| Error::domain("ambiguous local midnight"))
}

// ---------------------------------------------------------------------------
// Projection and minute aggregation
// ---------------------------------------------------------------------------

/// Kilometres per degree of latitude (meridian arc approximation); also the
/// equatorial kilometres per degree of longitude.
pub const KM_PER_DEG: f64 = 111.32;

/// Coordinate-wise mean of the fixes' latitudes and longitudes — the local
/// origin the person-day is centered on.
pub fn center_origin(fixes: &[RawFix]) -> Result<(f64, f64)> {
    if fixes.is_empty() {
        return Err(Error::domain("center_origin: no fixes"));
    }
    let n = fixes.len() as f64;
    let lat = fixes.iter().map(|f| f.lat).sum::<f64>() / n;
    let lon = fixes.iter().map(|f| f.lon).sum::<f64>() / n;
    Ok((lat, lon))
}

/// Local equirectangular projection about `origin = (lat0, lon0)` in
/// degrees: north becomes +y, east becomes +x, both in kilometres. Adequate
/// at metro scale (distortion below 0.1% within ~50 km of the origin).
pub fn degrees_to_km(lat: f64, lon: f64, origin: (f64, f64)) -> Point2 {
    let (lat0, lon0) = origin;
    let y = (lat - lat0) * KM_PER_DEG;
    let x = (lon - lon0) * KM_PER_DEG * lat0.to_radians().cos();
    Point2::new(x, y)
}

/// Average projected fixes within each minute of the day window starting at
/// `day_start` (seconds since epoch): minute `t` covers the half-open
/// interval `[day_start + 60 (t-1), day_start + 60 t)`, so a fix exactly on
/// a boundary belongs to the later minute. Returns a series of exactly
/// `t_len` minutes; minutes with no fix are missing.
pub fn minute_aggregate(
    fixes: &[(i64, Point2)],
    day_start: i64,
    t_len: usize,
) -> Result<ObservationSeries> {
    if t_len == 0 {
        return Err(Error::domain("minute_aggregate: t_len must be positive"));
    }
    let mut sums = vec![(0.0f64, 0.0f64, 0usize); t_len];
    for &(ts, p) in fixes {
        let rel = ts - day_start;
        if rel < 0 || rel >= 60 * t_len as i64 {
            return Err(Error::domain(format!(
                "minute_aggregate: timestamp {ts} outside the day window"
            )));
        }
        let idx = (rel / 60) as usize;
        sums[idx].0 += p.x;
        sums[idx].1 += p.y;
        sums[idx].2 += 1;
    }
    let y = sums
        .into_iter()
        .map(|(sx, sy, n)| {
            if n == 0 {
                None
            } else {
                Some(Point2::new(sx / n as f64, sy / n as f64))
            }
        })
        .collect();
    ObservationSeries::new(y)
}

/// Privacy transform: translate the observed points so their mean is the
/// origin, then rotate them all by one uniform random angle. Pairwise
/// distances — everything the downstream algorithms use — are untouched, as
/// is the missingness pattern.
pub fn obfuscate(series: &ObservationSeries, rng: &mut impl Rng) -> ObservationSeries {
    let observed: Vec<Point2> = series.y.iter().flatten().copied().collect();
    if observed.is_empty() {
        return series.clone();
    }
    let n = observed.len() as f64;
    let cx = observed.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = observed.iter().map(|p| p.y).sum::<f64>() / n;
    let angle = rng.random::<f64>() * std::f64::consts::TAU;
    let (sin, cos) = angle.sin_cos();
    let y = series
        .y
        .iter()
        .map(|opt| {
            opt.map(|p| {
                let dx = p.x - cx;
                let dy = p.y - cy;
                Point2::new(cos * dx - sin * dy, sin * dx + cos * dy)
            })
        })
        .collect();
    ObservationSeries { y }
}

/// Full per-person-day preprocessing: center on the coordinate-wise mean,
/// project to km, average within minutes, obfuscate. Fixes must already be
/// grouped to one person-day; the day window is `t_len` minutes from that
/// day's local midnight.
pub fn preprocess_person_day(
    key: &PersonDayKey,
    fixes: &[RawFix],
    tz_offset_secs: i32,
    t_len: usize,
    rng: &mut impl Rng,
) -> Result<ObservationSeries> {
    let origin = center_origin(fixes)?;
    let day_start = day_start_timestamp(key.date, tz_offset_secs)?;
    let projected: Vec<(i64, Point2)> = fixes
        .iter()
        .map(|f| (f.timestamp, degrees_to_km(f.lat, f.lon, origin)))
        .collect();
    let series = minute_aggregate(&projected, day_start, t_len)?;
    Ok(obfuscate(&series, rng))
}

// ---------------------------------------------------------------------------
// CSV plumbing
// ---------------------------------------------------------------------------

fn csv_open_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.display().to_string(),
            source,
        },
        other => Error::domain(format!("cannot open {}: {other:?}", path.display())),
    }
}

fn csv_record_error(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    }
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Verify the header row contains exactly the expected column names, in
/// order; report the first missing/misplaced column by name.
fn check_headers(
    path: &Path,
    reader: &mut csv::Reader<std::fs::File>,
    expected: &[&str],
) -> Result<()> {
    let headers = reader.headers().map_err(|e| csv_record_error(path, e))?;
    for (i, want) in expected.iter().enumerate() {
        if headers.get(i).map(str::trim) != Some(*want) {
            return Err(Error::SchemaMismatch {
                path: path.display().to_string(),
                column: (*want).to_string(),
            });
        }
    }
    if headers.len() != expected.len() {
        return Err(parse_error(
            path,
            1,
            format!(
                "expected {} columns, found {}",
                expected.len(),
                headers.len()
            ),
        ));
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(BufWriter::new(file))
}

fn finish(path: &Path, mut w: BufWriter<std::fs::File>) -> Result<()> {
    w.flush().map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    finish(path, w)
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    line: u64,
    name: &str,
    raw: &str,
) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.trim()
        .parse()
        .map_err(|e| parse_error(path, line, format!("bad {name} `{raw}`: {e}")))
}

// ---------------------------------------------------------------------------
// Observation CSV
// ---------------------------------------------------------------------------

/// Write `t,x_km,y_km,observed` with empty coordinate fields on missing
/// minutes.
pub fn write_observation_csv(path: &Path, series: &ObservationSeries) -> Result<()> {
    let mut text = String::from("t,x_km,y_km,observed\n");
    for (i, y) in series.y.iter().enumerate() {
        match y {
            Some(p) => {
                let x = require_finite("x_km", p.x)?;
                let yy = require_finite("y_km", p.y)?;
                let _ = writeln!(text, "{},{},{},1", i + 1, fmt_float(x), fmt_float(yy));
            }
            None => {
                let _ = writeln!(text, "{},,,0", i + 1);
            }
        }
    }
    write_text(path, &text)
}

/// Read an observation CSV back; enforces the schema, contiguous 1-based
/// minutes, and coordinate presence consistent with the `observed` flag.
pub fn read_observation_csv(path: &Path) -> Result<ObservationSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_open_error(path, e))?;
    check_headers(path, &mut reader, &["t", "x_km", "y_km", "observed"])?;
    let mut y = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_record_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 4 {
            return Err(parse_error(
                path,
                line,
                format!("expected 4 fields, found {}", record.len()),
            ));
        }
        let t: usize = parse_field(path, line, "t", &record[0])?;
        if t != y.len() + 1 {
            return Err(parse_error(
                path,
                line,
                format!("minutes must be contiguous from 1; expected {}, found {t}", y.len() + 1),
            ));
        }
        let observed: u8 = parse_field(path, line, "observed", &record[3])?;
        match observed {
            1 => {
                let x: f64 = parse_field(path, line, "x_km", &record[1])?;
                let yy: f64 = parse_field(path, line, "y_km", &record[2])?;
                y.push(Some(Point2::new(x, yy)));
            }
            0 => {
                if !record[1].trim().is_empty() || !record[2].trim().is_empty() {
                    return Err(parse_error(
                        path,
                        line,
                        "missing minute must have empty coordinates",
                    ));
                }
                y.push(None);
            }
            other => {
                return Err(parse_error(path, line, format!("observed must be 0/1, found {other}")));
            }
        }
    }
    ObservationSeries::new(y)
}

// ---------------------------------------------------------------------------
// Ground-truth CSV
// ---------------------------------------------------------------------------

/// Write a simulated latent trajectory as `t,x_km,y_km,state` (state 0 =
/// pause, 1 = travel) so later scoring runs can read the truth back.
pub fn write_truth_csv(path: &Path, truth: &LatentTrajectory) -> Result<()> {
    let mut text = String::from("t,x_km,y_km,state\n");
    for (i, (p, s)) in truth.positions.iter().zip(&truth.regimes).enumerate() {
        let _ = writeln!(
            text,
            "{},{},{},{}",
            i + 1,
            fmt_float(require_finite("x_km", p.x)?),
            fmt_float(require_finite("y_km", p.y)?),
            s.as_u8()
        );
    }
    write_text(path, &text)
}

pub fn read_truth_csv(path: &Path) -> Result<LatentTrajectory> {
    let mut reader = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| csv_open_error(path, e))?;
    check_headers(path, &mut reader, &["t", "x_km", "y_km", "state"])?;
    let mut positions = Vec::new();
    let mut regimes = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_record_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let t: usize = parse_field(path, line, "t", &record[0])?;
        if t != positions.len() + 1 {
            return Err(parse_error(path, line, "minutes must be contiguous from 1"));
        }
        let x: f64 = parse_field(path, line, "x_km", &record[1])?;
        let y: f64 = parse_field(path, line, "y_km", &record[2])?;
        let state: u8 = parse_field(path, line, "state", &record[3])?;
        positions.push(Point2::new(x, y));
        regimes.push(Regime::from_u8(state).map_err(|e| parse_error(path, line, e.to_string()))?);
    }
    Ok(LatentTrajectory { positions, regimes })
}

// ---------------------------------------------------------------------------
// Segmentation CSV
// ---------------------------------------------------------------------------

/// Write `t,x_est,y_est,state,bin_start`; `state` is 0 for pause, 1 for
/// travel, and `bin_start` is 1 on the first minute of each bin.
pub fn write_segmentation_csv(
    path: &Path,
    x_est: &[Point2],
    states: &[Regime],
    start_times: &[usize],
) -> Result<()> {
    if x_est.len() != states.len() {
        return Err(Error::domain(format!(
            "segmentation lengths differ: {} positions vs {} states",
            x_est.len(),
            states.len()
        )));
    }
    let starts: std::collections::HashSet<usize> = start_times.iter().copied().collect();
    let mut text = String::from("t,x_est,y_est,state,bin_start\n");
    for (i, (p, s)) in x_est.iter().zip(states).enumerate() {
        let t = i + 1;
        let _ = writeln!(
            text,
            "{},{},{},{},{}",
            t,
            fmt_float(require_finite("x_est", p.x)?),
            fmt_float(require_finite("y_est", p.y)?),
            s.as_u8(),
            u8::from(starts.contains(&t))
        );
    }
    write_text(path, &text)
}

/// A segmentation read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationRecord {
    pub x_est: Vec<Point2>,
    pub states: Vec<Regime>,
    pub start_times: Vec<usize>,
}

pub fn read_segmentation_csv(path: &Path) -> Result<SegmentationRecord> {
    let mut reader = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| csv_open_error(path, e))?;
    check_headers(path, &mut reader, &["t", "x_est", "y_est", "state", "bin_start"])?;
    let mut out = SegmentationRecord {
        x_est: Vec::new(),
        states: Vec::new(),
        start_times: Vec::new(),
    };
    for record in reader.records() {
        let record = record.map_err(|e| csv_record_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let t: usize = parse_field(path, line, "t", &record[0])?;
        if t != out.x_est.len() + 1 {
            return Err(parse_error(path, line, "minutes must be contiguous from 1"));
        }
        let x: f64 = parse_field(path, line, "x_est", &record[1])?;
        let y: f64 = parse_field(path, line, "y_est", &record[2])?;
        let state: u8 = parse_field(path, line, "state", &record[3])?;
        let start: u8 = parse_field(path, line, "bin_start", &record[4])?;
        out.x_est.push(Point2::new(x, y));
        out.states.push(
            Regime::from_u8(state).map_err(|e| parse_error(path, line, e.to_string()))?,
        );
        if start == 1 {
            out.start_times.push(t);
        } else if start != 0 {
            return Err(parse_error(path, line, format!("bin_start must be 0/1, found {start}")));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Posterior summary CSV
// ---------------------------------------------------------------------------

/// Write `t,mean_x,mean_y,lo_x,hi_x,lo_y,hi_y,motion_prob`.
pub fn write_summary_csv(path: &Path, summary: &PosteriorSummary) -> Result<()> {
    let mut text = String::from("t,mean_x,mean_y,lo_x,hi_x,lo_y,hi_y,motion_prob\n");
    for t in 0..summary.mean.len() {
        let row = [
            summary.mean[t].x,
            summary.mean[t].y,
            summary.lo[t].x,
            summary.hi[t].x,
            summary.lo[t].y,
            summary.hi[t].y,
            summary.motion_prob[t],
        ];
        let mut fields = Vec::with_capacity(7);
        for v in row {
            fields.push(fmt_float(require_finite("summary value", v)?));
        }
        let _ = writeln!(text, "{},{}", t + 1, fields.join(","));
    }
    write_text(path, &text)
}

/// Pointwise summary read back from CSV (the fields the plotters need).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRecord {
    pub mean: Vec<Point2>,
    pub lo: Vec<Point2>,
    pub hi: Vec<Point2>,
    pub motion_prob: Vec<f64>,
}

pub fn read_summary_csv(path: &Path) -> Result<SummaryRecord> {
    let mut reader = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| csv_open_error(path, e))?;
    check_headers(
        path,
        &mut reader,
        &["t", "mean_x", "mean_y", "lo_x", "hi_x", "lo_y", "hi_y", "motion_prob"],
    )?;
    let mut out = SummaryRecord {
        mean: Vec::new(),
        lo: Vec::new(),
        hi: Vec::new(),
        motion_prob: Vec::new(),
    };
    for record in reader.records() {
        let record = record.map_err(|e| csv_record_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let t: usize = parse_field(path, line, "t", &record[0])?;
        if t != out.mean.len() + 1 {
            return Err(parse_error(path, line, "minutes must be contiguous from 1"));
        }
        let get = |idx: usize, name: &str| -> Result<f64> {
            parse_field(path, line, name, &record[idx])
        };
        out.mean.push(Point2::new(get(1, "mean_x")?, get(2, "mean_y")?));
        let (lo_x, hi_x) = (get(3, "lo_x")?, get(4, "hi_x")?);
        let (lo_y, hi_y) = (get(5, "lo_y")?, get(6, "hi_y")?);
        out.lo.push(Point2::new(lo_x, lo_y));
        out.hi.push(Point2::new(hi_x, hi_y));
        let p = get(7, "motion_prob")?;
        if !(0.0..=1.0).contains(&p) {
            return Err(parse_error(path, line, format!("motion_prob {p} outside [0,1]")));
        }
        out.motion_prob.push(p);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Retained draws CSV
// ---------------------------------------------------------------------------

/// Write every retained trajectory draw as `iteration,t,x,y,state`. This
/// file is large (draws × minutes rows); it is optional output.
pub fn write_draws_csv(path: &Path, draws: &[McmcDraw]) -> Result<()> {
    let mut text = String::from("iteration,t,x,y,state\n");
    for d in draws {
        for (i, (p, s)) in d
            .trajectory
            .positions
            .iter()
            .zip(&d.trajectory.regimes)
            .enumerate()
        {
            let _ = writeln!(
                text,
                "{},{},{},{},{}",
                d.iteration,
                i + 1,
                fmt_float(require_finite("draw x", p.x)?),
                fmt_float(require_finite("draw y", p.y)?),
                s.as_u8()
            );
        }
    }
    write_text(path, &text)
}

/// Read the trajectories back from a draws CSV, one path per retained
/// iteration (the sampled-cloud overlay in figures only needs positions).
pub fn read_draw_paths(path: &Path) -> Result<Vec<Vec<Point2>>> {
    let mut reader = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| csv_open_error(path, e))?;
    check_headers(path, &mut reader, &["iteration", "t", "x", "y", "state"])?;
    let mut paths: Vec<Vec<Point2>> = Vec::new();
    let mut current_iter: Option<u64> = None;
    for record in reader.records() {
        let record = record.map_err(|e| csv_record_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let iteration: u64 = parse_field(path, line, "iteration", &record[0])?;
        let t: usize = parse_field(path, line, "t", &record[1])?;
        let x: f64 = parse_field(path, line, "x", &record[2])?;
        let y: f64 = parse_field(path, line, "y", &record[3])?;
        if current_iter != Some(iteration) {
            current_iter = Some(iteration);
            paths.push(Vec::new());
        }
        let path_len = paths.last().map_or(0, Vec::len);
        if t != path_len + 1 {
            return Err(parse_error(
                path,
                line,
                "minutes must be contiguous from 1 within each iteration",
            ));
        }
        paths.last_mut().expect("non-empty").push(Point2::new(x, y));
    }
    Ok(paths)
}

// ---------------------------------------------------------------------------
// Benchmark outputs
// ---------------------------------------------------------------------------

/// Per-dataset, per-method scores:
/// `dataset,seed,method,rmsd_total,rmsd_observed,rmsd_missing,misclass_total,misclass_observed,misclass_missing,missing_fraction,aborted,error`.
/// A dataset whose smoother run aborted still gets a smoother row, flagged
/// `aborted=1` with empty scores and the error text.
pub fn write_run_metrics_csv(path: &Path, outcomes: &[DatasetOutcome]) -> Result<()> {
    let mut text = String::from(
        "dataset,seed,method,rmsd_total,rmsd_observed,rmsd_missing,\
         misclass_total,misclass_observed,misclass_missing,missing_fraction,aborted,error\n",
    );
    for o in outcomes {
        for m in std::iter::once(&o.binning).chain(o.smoother.as_ref()) {
            let _ = writeln!(
                text,
                "{},{},{},{},{},{},{},{},{},{},0,",
                o.dataset_index,
                o.dataset_seed,
                m.method,
                fmt_float(m.rmsd_total),
                fmt_float(m.rmsd_observed),
                fmt_float(m.rmsd_missing),
                fmt_float(m.misclass_total),
                fmt_float(m.misclass_observed),
                fmt_float(m.misclass_missing),
                fmt_float(m.realized_missing_fraction),
            );
        }
        if let Some(err) = &o.smoother_error {
            let _ = writeln!(
                text,
                "{},{},smoother,,,,,,,,1,{}",
                o.dataset_index,
                o.dataset_seed,
                err.replace(',', ";"),
            );
        }
    }
    write_text(path, &text)
}

/// The paired-comparison table: one row per time split,
/// `split,rmsd_ratio,misclass_diff`.
pub fn write_benchmark_summary_csv(path: &Path, summary: &BenchmarkSummary) -> Result<()> {
    let mut text = String::from("split,rmsd_ratio,misclass_diff\n");
    for (split, ratio, diff) in [
        ("total", summary.geo_mean_rmsd_ratio_total, summary.mean_misclass_diff_total),
        ("missing", summary.geo_mean_rmsd_ratio_missing, summary.mean_misclass_diff_missing),
        ("observed", summary.geo_mean_rmsd_ratio_observed, summary.mean_misclass_diff_observed),
    ] {
        let _ = writeln!(text, "{split},{},{}", fmt_float(ratio), fmt_float(diff));
    }
    write_text(path, &text)
}

/// Serialize any JSON-serializable report/manifest with stable formatting.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::domain(format!("cannot serialize to JSON: {e}")))?;
    write_text(path, &(text + "\n"))
}

/// Read a JSON document written by [`write_json`].
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn fix(person: &str, ts: i64, lat: f64, lon: f64) -> RawFix {
        RawFix {
            person_id: person.into(),
            timestamp: ts,
            lat,
            lon,
        }
    }

    #[test]
    fn fmt_float_gives_nine_significant_digits() {
        assert_eq!(fmt_float(1.0), "1.00000000e0");
        assert_eq!(fmt_float(-0.0123456789), "-1.23456789e-2");
        assert_eq!(fmt_float(12345.6789), "1.23456789e4");
    }

    proptest! {
        // One write quantizes; after that, read -> write is bit-exact.
        #[test]
        fn fmt_float_quantization_is_idempotent(v in -1e12f64..1e12) {
            let once: f64 = fmt_float(v).parse().unwrap();
            let twice: f64 = fmt_float(once).parse().unwrap();
            prop_assert_eq!(once.to_bits(), twice.to_bits());
            prop_assert_eq!(fmt_float(once), fmt_float(twice));
            // Quantization error stays within 9 significant digits.
            if v != 0.0 {
                prop_assert!(((once - v) / v).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn center_origin_trivial_cases() {
        let single = [fix("a", 0, 40.1, -83.2)];
        assert_eq!(center_origin(&single).unwrap(), (40.1, -83.2));
        let pair = [fix("a", 0, 39.0, -84.0), fix("a", 60, 41.0, -82.0)];
        let (lat, lon) = center_origin(&pair).unwrap();
        assert_relative_eq!(lat, 40.0, epsilon = 1e-12);
        assert_relative_eq!(lon, -83.0, epsilon = 1e-12);
        assert!(center_origin(&[]).is_err());
    }

    #[test]
    fn center_origin_matches_hand_computed_fixture() {
        // Hand-checked: lat mean = 200.15/5 = 40.03, lon mean = -416.0/5 = -83.2.
        let fixture = [
            fix("p1", 1_600_000_000, 40.00, -83.10),
            fix("p1", 1_600_000_030, 40.01, -83.15),
            fix("p1", 1_600_000_060, 40.02, -83.20),
            fix("p1", 1_600_000_090, 40.05, -83.25),
            fix("p1", 1_600_000_120, 40.07, -83.30),
        ];
        let (lat, lon) = center_origin(&fixture).unwrap();
        assert_relative_eq!(lat, 40.03, epsilon = 1e-12);
        assert_relative_eq!(lon, -83.2, epsilon = 1e-12);
    }

    #[test]
    fn projection_basics() {
        let origin = (40.0, -83.0);
        assert_eq!(degrees_to_km(40.0, -83.0, origin), Point2::new(0.0, 0.0));
        let north = degrees_to_km(41.0, -83.0, origin);
        assert_relative_eq!(north.y, 111.32, epsilon = 1e-9);
        assert_relative_eq!(north.x, 0.0, epsilon = 1e-12);
        // cos(60°) = 0.5 exactly.
        let east = degrees_to_km(60.0, 1.0, (60.0, 0.0));
        assert_relative_eq!(east.x, 55.66, epsilon = 1e-9);
        assert_relative_eq!(east.y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn minute_aggregate_averages_and_flags() {
        let day = 1_000_000i64;
        let fixes = vec![
            (day + 10, Point2::new(0.0, 0.0)),
            (day + 40, Point2::new(2.0, 2.0)),
            // Exactly on the minute-2/3 boundary -> minute 3.
            (day + 120, Point2::new(5.0, -1.0)),
        ];
        let series = minute_aggregate(&fixes, day, 5).unwrap();
        assert_eq!(series.len(), 5);
        assert_eq!(series.y[0], Some(Point2::new(1.0, 1.0)));
        assert_eq!(series.y[1], None);
        assert_eq!(series.y[2], Some(Point2::new(5.0, -1.0)));
        assert_eq!(series.y[3], None);
        assert_eq!(series.y[4], None);

        let outside = vec![(day - 1, Point2::new(0.0, 0.0))];
        assert!(minute_aggregate(&outside, day, 5).is_err());
    }

    #[test]
    fn obfuscate_preserves_geometry_and_centers() {
        let series = ObservationSeries::new(vec![
            Some(Point2::new(3.0, 1.0)),
            None,
            Some(Point2::new(-2.0, 4.0)),
            Some(Point2::new(0.5, -0.5)),
        ])
        .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let out = obfuscate(&series, &mut rng);
        assert_eq!(out.y[1], None);
        let pts_in: Vec<Point2> = series.y.iter().flatten().copied().collect();
        let pts_out: Vec<Point2> = out.y.iter().flatten().copied().collect();
        // Pairwise distances survive the rotation.
        for i in 0..pts_in.len() {
            for j in (i + 1)..pts_in.len() {
                assert_relative_eq!(
                    pts_in[i].sq_dist(&pts_in[j]).sqrt(),
                    pts_out[i].sq_dist(&pts_out[j]).sqrt(),
                    epsilon = 1e-9
                );
            }
        }
        // Observed points are centered on the origin.
        let n = pts_out.len() as f64;
        assert_relative_eq!(pts_out.iter().map(|p| p.x).sum::<f64>() / n, 0.0, epsilon = 1e-9);
        assert_relative_eq!(pts_out.iter().map(|p| p.y).sum::<f64>() / n, 0.0, epsilon = 1e-9);
        // Same seed, same rotation.
        let again = obfuscate(&series, &mut ChaCha12Rng::seed_from_u64(99));
        assert_eq!(out, again);
    }

    #[test]
    fn person_day_grouping_respects_timezone() {
        // 1970-01-02 00:30 UTC; at UTC-1 it is still 1970-01-01. The noon
        // fix stays on 1970-01-01 under both offsets.
        let late_night = 86_400 + 30 * 60;
        let noon = 12 * 3600;
        let fixes = vec![
            fix("a", late_night, 40.0, -83.0),
            fix("a", noon, 40.0, -83.0),
            fix("b", noon, 40.0, -83.0),
        ];
        let utc = group_by_person_day(fixes.clone(), 0).unwrap();
        assert_eq!(utc.len(), 3);
        let shifted = group_by_person_day(fixes, -3600).unwrap();
        assert_eq!(shifted.len(), 2);
        let key = PersonDayKey {
            person_id: "a".into(),
            date: NaiveDate::from_ymd_opt(1970, 1, 1).unwrap(),
        };
        assert_eq!(shifted[&key].len(), 2);
        // Groups are sorted by time.
        assert!(shifted[&key].windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
        assert_eq!(key.to_string(), "a_1970-01-01");
    }

    #[test]
    fn day_start_accounts_for_offset() {
        let date = NaiveDate::from_ymd_opt(1970, 1, 2).unwrap();
        assert_eq!(day_start_timestamp(date, 0).unwrap(), 86_400);
        // Local midnight at UTC+5 happens 5 hours before UTC midnight.
        assert_eq!(day_start_timestamp(date, 5 * 3600).unwrap(), 86_400 - 5 * 3600);
    }

    #[test]
    fn raw_fix_reader_reports_bad_lines_and_continues() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.csv");
        std::fs::write(
            &path,
            "person_id,timestamp,lat,lon\n\
             a,100,40.0,-83.0\n\
             a,not_a_number,40.0,-83.0\n\
             a,200,95.0,-83.0\n\
             a,300,40.5,-83.5\n",
        )
        .unwrap();
        let (fixes, issues) = read_raw_fixes(&path).unwrap();
        assert_eq!(fixes.len(), 2);
        assert_eq!(fixes[1].timestamp, 300);
        assert_eq!(issues.len(), 2);
        assert_eq!(issues[0].line, 3);
        assert!(issues[0].message.contains("timestamp"));
        assert_eq!(issues[1].line, 4);
        assert!(issues[1].message.contains("latitude"));
    }

    #[test]
    fn raw_fix_reader_rejects_wrong_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.csv");
        std::fs::write(&path, "pid,timestamp,lat,lon\na,1,2,3\n").unwrap();
        match read_raw_fixes(&path) {
            Err(Error::SchemaMismatch { column, .. }) => assert_eq!(column, "person_id"),
            other => panic!("expected schema mismatch, got {other:?}"),
        }
    }

    #[test]
    fn observation_csv_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.csv");
        let series = ObservationSeries::new(vec![
            Some(Point2::new(0.123456789123, -7.5)),
            None,
            Some(Point2::new(1e-11, 2.5e4)),
        ])
        .unwrap();
        write_observation_csv(&path, &series).unwrap();
        let read1 = read_observation_csv(&path).unwrap();
        assert_eq!(read1.len(), 3);
        assert_eq!(read1.y[1], None);
        // Values are the 9-digit quantization of the originals...
        assert_relative_eq!(read1.y[0].unwrap().x, 0.123456789, epsilon = 1e-12);
        // ...and a second write/read cycle changes nothing, byte for byte.
        let bytes1 = std::fs::read(&path).unwrap();
        write_observation_csv(&path, &read1).unwrap();
        let bytes2 = std::fs::read(&path).unwrap();
        assert_eq!(bytes1, bytes2);
        let read2 = read_observation_csv(&path).unwrap();
        for (a, b) in read1.y.iter().zip(&read2.y) {
            match (a, b) {
                (Some(p), Some(q)) => {
                    assert_eq!(p.x.to_bits(), q.x.to_bits());
                    assert_eq!(p.y.to_bits(), q.y.to_bits());
                }
                (None, None) => {}
                other => panic!("missingness changed: {other:?}"),
            }
        }
    }

    #[test]
    fn observation_csv_rejects_inconsistent_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.csv");
        std::fs::write(&path, "t,x_km,y_km,observed\n1,1.0,2.0,0\n").unwrap();
        assert!(matches!(read_observation_csv(&path), Err(Error::Parse { .. })));
        std::fs::write(&path, "t,x_km,y_km,observed\n2,1.0,2.0,1\n").unwrap();
        assert!(matches!(read_observation_csv(&path), Err(Error::Parse { .. })));
        std::fs::write(&path, "t,x,y,observed\n1,1.0,2.0,1\n").unwrap();
        match read_observation_csv(&path) {
            Err(Error::SchemaMismatch { column, .. }) => assert_eq!(column, "x_km"),
            other => panic!("expected schema mismatch, got {other:?}"),
        }
    }

    #[test]
    fn truth_csv_round_trips() {
        use crate::model::LatentTrajectory;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.csv");
        let truth = LatentTrajectory {
            positions: vec![Point2::new(0.25, -1.5), Point2::new(0.5, 3.0)],
            regimes: vec![Regime::Pause, Regime::Flight],
        };
        write_truth_csv(&path, &truth).unwrap();
        let read = read_truth_csv(&path).unwrap();
        assert_eq!(read, truth);
        let bytes1 = std::fs::read(&path).unwrap();
        write_truth_csv(&path, &read).unwrap();
        assert_eq!(bytes1, std::fs::read(&path).unwrap());
    }

    #[test]
    fn segmentation_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seg.csv");
        let x_est = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(2.0, 2.0),
        ];
        let states = vec![Regime::Pause, Regime::Flight, Regime::Pause];
        write_segmentation_csv(&path, &x_est, &states, &[1, 2, 3]).unwrap();
        let rec = read_segmentation_csv(&path).unwrap();
        assert_eq!(rec.states, states);
        assert_eq!(rec.start_times, vec![1, 2, 3]);
        assert_eq!(rec.x_est.len(), 3);
        let bytes1 = std::fs::read(&path).unwrap();
        write_segmentation_csv(&path, &rec.x_est, &rec.states, &rec.start_times).unwrap();
        assert_eq!(bytes1, std::fs::read(&path).unwrap());
    }

    #[test]
    fn summary_csv_round_trips_and_validates() {
        use crate::smc::PosteriorSummary;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.csv");
        let summary = PosteriorSummary {
            mean: vec![Point2::new(0.1, -0.2), Point2::new(0.3, 0.4)],
            lo: vec![Point2::new(0.0, -0.3), Point2::new(0.2, 0.3)],
            hi: vec![Point2::new(0.2, -0.1), Point2::new(0.4, 0.5)],
            sd: vec![Point2::new(0.05, 0.05), Point2::new(0.05, 0.05)],
            motion_prob: vec![0.25, 1.0],
            credible_level: 0.9,
            n_draws: 100,
        };
        write_summary_csv(&path, &summary).unwrap();
        let rec = read_summary_csv(&path).unwrap();
        assert_eq!(rec.mean.len(), 2);
        assert_relative_eq!(rec.motion_prob[0], 0.25, epsilon = 1e-12);
        assert_relative_eq!(rec.lo[1].y, 0.3, epsilon = 1e-12);
        let bytes1 = std::fs::read(&path).unwrap();
        write_summary_csv(
            &path,
            &PosteriorSummary {
                mean: rec.mean.clone(),
                lo: rec.lo.clone(),
                hi: rec.hi.clone(),
                sd: summary.sd.clone(),
                motion_prob: rec.motion_prob.clone(),
                credible_level: 0.9,
                n_draws: 100,
            },
        )
        .unwrap();
        assert_eq!(bytes1, std::fs::read(&path).unwrap());

        std::fs::write(
            &path,
            "t,mean_x,mean_y,lo_x,hi_x,lo_y,hi_y,motion_prob\n1,0,0,0,0,0,0,1.5\n",
        )
        .unwrap();
        assert!(matches!(read_summary_csv(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn draws_csv_round_trips_paths() {
        use crate::model::{LatentTrajectory, Regime};
        use crate::smc::McmcDraw;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("draws.csv");
        let mk = |iteration: usize, shift: f64| McmcDraw {
            trajectory: LatentTrajectory {
                positions: vec![Point2::new(shift, 0.0), Point2::new(shift + 1.0, 2.0)],
                regimes: vec![Regime::Pause, Regime::Flight],
            },
            params: crate::model::ModelParams::default_true(),
            iteration,
        };
        write_draws_csv(&path, &[mk(10, 0.0), mk(11, 5.0)]).unwrap();
        let paths = read_draw_paths(&path).unwrap();
        assert_eq!(paths.len(), 2);
        assert_eq!(paths[0].len(), 2);
        assert_relative_eq!(paths[1][0].x, 5.0, epsilon = 1e-12);
        assert_relative_eq!(paths[1][1].y, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn preprocess_person_day_produces_centered_series() {
        // Five fixes across three minutes of 1970-01-01 UTC.
        let fixes = [
            fix("p", 60, 40.000, -83.000),
            fix("p", 75, 40.001, -83.001),
            fix("p", 130, 40.002, -83.002),
            fix("p", 250, 40.004, -83.001),
            fix("p", 280, 40.004, -83.003),
        ];
        let key = PersonDayKey {
            person_id: "p".into(),
            date: NaiveDate::from_ymd_opt(1970, 1, 1).unwrap(),
        };
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let series = preprocess_person_day(&key, &fixes, 0, 10, &mut rng).unwrap();
        assert_eq!(series.len(), 10);
        // Minutes 2, 3, 5 observed (1-based), everything else missing.
        assert!(series.observed(2) && series.observed(3) && series.observed(5));
        assert_eq!(series.n_observed(), 3);
        // Observed points centered at the origin after obfuscation.
        let pts: Vec<Point2> = series.y.iter().flatten().copied().collect();
        let n = pts.len() as f64;
        assert_relative_eq!(pts.iter().map(|p| p.x).sum::<f64>() / n, 0.0, epsilon = 1e-9);
        assert_relative_eq!(pts.iter().map(|p| p.y).sum::<f64>() / n, 0.0, epsilon = 1e-9);
    }
}
