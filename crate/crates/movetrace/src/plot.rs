//! Static SVG figures.
//!
//! Every figure is a pure function of its inputs: coordinates are formatted
//! with fixed precision and no randomness is involved, so the same data
//! always produces byte-identical SVG — figures participate in the same
//! golden-file and reproducibility checks as the CSV outputs.
//!
//! All figures share the panel style: time (minutes) on the horizontal
//! axis, one panel per coordinate. The smoother figure shades each minute's
//! background with the posterior motion probability, draws the credible
//! band and the posterior mean, scatters the observations, and overlays a
//! cloud of retained trajectory draws. The segmentation figure shades
//! minutes classified as travel and steps through the bin centers.

use std::fmt::Write as _;

use crate::config::PlotConfig;
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::io::{SegmentationRecord, SummaryRecord};
use crate::model::{ObservationSeries, Regime};

const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 18.0;
const MARGIN_TOP: f64 = 34.0;
const MARGIN_BOTTOM: f64 = 46.0;
const PANEL_GAP: f64 = 34.0;
/// Opacity of the motion-probability shading at probability 1.
const SHADE_MAX_OPACITY: f64 = 0.35;
const SHADE_COLOR: &str = "#7d5ba6";
const BAND_COLOR: &str = "#9ecae9";
const DRAW_COLOR: &str = "#8a8a8a";
const ESTIMATE_COLOR: &str = "#1f4e9c";
const OBS_COLOR: &str = "#c43d3d";

fn px(v: f64) -> String {
    format!("{v:.2}")
}

/// Which coordinate of a point a panel displays.
#[derive(Clone, Copy)]
enum Coord {
    X,
    Y,
}

impl Coord {
    fn of(self, p: &Point2) -> f64 {
        match self {
            Coord::X => p.x,
            Coord::Y => p.y,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Coord::X => "x (km)",
            Coord::Y => "y (km)",
        }
    }
}

/// Pixel geometry plus the data window of one panel.
struct Panel {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
    t_len: usize,
    v_min: f64,
    v_max: f64,
}

impl Panel {
    fn map_t(&self, t: f64) -> f64 {
        let frac = if self.t_len > 1 {
            (t - 1.0) / (self.t_len as f64 - 1.0)
        } else {
            0.5
        };
        self.left + frac * self.width
    }

    fn map_v(&self, v: f64) -> f64 {
        let frac = (v - self.v_min) / (self.v_max - self.v_min);
        self.top + (1.0 - frac) * self.height
    }
}

/// Min/max over the finite values, padded 5%; a degenerate or empty range
/// falls back to a unit window so every figure has usable axes.
fn value_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        return (-1.0, 1.0);
    }
    if lo == hi {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Round tick positions covering `[lo, hi]` with a 1/2/5 step near
/// `span / 5`.
fn nice_ticks(lo: f64, hi: f64) -> (Vec<f64>, usize) {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = if norm < 1.5 {
        1.0
    } else if norm < 3.5 {
        2.0
    } else if norm < 7.5 {
        5.0
    } else {
        10.0
    } * mag;
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        // Avoid "-0.0" labels.
        out.push(if t == 0.0 { 0.0 } else { t });
        t += step;
    }
    (out, decimals)
}

/// One drawable layer of a panel, in painting order.
enum Layer<'a> {
    /// Per-minute background shading with the given intensities in [0,1].
    Shade(&'a [f64]),
    /// Contiguous runs of `true` are shaded at a fixed opacity.
    ShadeRuns(&'a [bool]),
    /// Filled vertical band between two series.
    Band { lo: &'a [Point2], hi: &'a [Point2] },
    /// Thin faint path per draw.
    Cloud(&'a [&'a [Point2]]),
    /// The point-estimate path.
    Estimate(&'a [Point2]),
    /// Scatter of (1-based minute, point) observations.
    Dots(&'a [(usize, Point2)]),
}

struct PanelSpec<'a> {
    title: String,
    coord: Coord,
    layers: Vec<Layer<'a>>,
}

impl PanelSpec<'_> {
    fn data_range(&self) -> (f64, f64) {
        let mut values: Vec<f64> = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Shade(_) | Layer::ShadeRuns(_) => {}
                Layer::Band { lo, hi } => {
                    values.extend(lo.iter().map(|p| self.coord.of(p)));
                    values.extend(hi.iter().map(|p| self.coord.of(p)));
                }
                Layer::Cloud(paths) => {
                    for path in *paths {
                        values.extend(path.iter().map(|p| self.coord.of(p)));
                    }
                }
                Layer::Estimate(path) => values.extend(path.iter().map(|p| self.coord.of(p))),
                Layer::Dots(dots) => values.extend(dots.iter().map(|(_, p)| self.coord.of(p))),
            }
        }
        value_range(values.into_iter())
    }

    fn t_len(&self) -> usize {
        self.layers
            .iter()
            .map(|layer| match layer {
                Layer::Shade(p) => p.len(),
                Layer::ShadeRuns(r) => r.len(),
                Layer::Band { lo, .. } => lo.len(),
                Layer::Cloud(paths) => paths.iter().map(|p| p.len()).max().unwrap_or(0),
                Layer::Estimate(path) => path.len(),
                Layer::Dots(dots) => dots.iter().map(|(t, _)| *t).max().unwrap_or(0),
            })
            .max()
            .unwrap_or(0)
    }
}

fn polyline_points(panel: &Panel, coord: Coord, path: &[Point2]) -> String {
    let mut s = String::new();
    for (i, p) in path.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(
            s,
            "{},{}",
            px(panel.map_t(i as f64 + 1.0)),
            px(panel.map_v(coord.of(p)))
        );
    }
    s
}

fn render_layer(svg: &mut String, panel: &Panel, coord: Coord, layer: &Layer<'_>) {
    match layer {
        Layer::Shade(probs) => {
            for (i, &p) in probs.iter().enumerate() {
                let opacity = p.clamp(0.0, 1.0) * SHADE_MAX_OPACITY;
                let text = format!("{opacity:.3}");
                if text == "0.000" {
                    continue;
                }
                let t = i as f64 + 1.0;
                let x0 = panel.map_t(t - 0.5).max(panel.left);
                let x1 = panel.map_t(t + 0.5).min(panel.left + panel.width);
                let _ = writeln!(
                    svg,
                    r#"<rect class="shade" x="{}" y="{}" width="{}" height="{}" fill="{}" fill-opacity="{}"/>"#,
                    px(x0),
                    px(panel.top),
                    px(x1 - x0),
                    px(panel.height),
                    SHADE_COLOR,
                    text
                );
            }
        }
        Layer::ShadeRuns(mask) => {
            let mut i = 0;
            while i < mask.len() {
                if !mask[i] {
                    i += 1;
                    continue;
                }
                let start = i;
                while i < mask.len() && mask[i] {
                    i += 1;
                }
                let x0 = panel.map_t(start as f64 + 0.5).max(panel.left);
                let x1 = panel.map_t(i as f64 + 0.5).min(panel.left + panel.width);
                let _ = writeln!(
                    svg,
                    r#"<rect class="shade" x="{}" y="{}" width="{}" height="{}" fill="{}" fill-opacity="{:.3}"/>"#,
                    px(x0),
                    px(panel.top),
                    px(x1 - x0),
                    px(panel.height),
                    SHADE_COLOR,
                    SHADE_MAX_OPACITY
                );
            }
        }
        Layer::Band { lo, hi } => {
            if lo.is_empty() {
                return;
            }
            let mut points = String::new();
            for (i, p) in lo.iter().enumerate() {
                let _ = write!(
                    points,
                    "{},{} ",
                    px(panel.map_t(i as f64 + 1.0)),
                    px(panel.map_v(coord.of(p)))
                );
            }
            for (i, p) in hi.iter().enumerate().rev() {
                let _ = write!(
                    points,
                    "{},{} ",
                    px(panel.map_t(i as f64 + 1.0)),
                    px(panel.map_v(coord.of(p)))
                );
            }
            let _ = writeln!(
                svg,
                r#"<polygon class="band" points="{}" fill="{}" fill-opacity="0.55"/>"#,
                points.trim_end(),
                BAND_COLOR
            );
        }
        Layer::Cloud(paths) => {
            for path in *paths {
                let _ = writeln!(
                    svg,
                    r#"<polyline class="draw" points="{}" fill="none" stroke="{}" stroke-width="0.6" stroke-opacity="0.35"/>"#,
                    polyline_points(panel, coord, path),
                    DRAW_COLOR
                );
            }
        }
        Layer::Estimate(path) => {
            let _ = writeln!(
                svg,
                r#"<polyline class="estimate" points="{}" fill="none" stroke="{}" stroke-width="1.6"/>"#,
                polyline_points(panel, coord, path),
                ESTIMATE_COLOR
            );
        }
        Layer::Dots(dots) => {
            for (t, p) in *dots {
                let _ = writeln!(
                    svg,
                    r#"<circle class="obs" cx="{}" cy="{}" r="2.1" fill="{}"/>"#,
                    px(panel.map_t(*t as f64)),
                    px(panel.map_v(coord.of(p))),
                    OBS_COLOR
                );
            }
        }
    }
}

fn render_axes(svg: &mut String, panel: &Panel, title: &str, coord: Coord) {
    let bottom = panel.top + panel.height;
    let _ = writeln!(
        svg,
        r##"<rect class="frame" x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#333" stroke-width="1"/>"##,
        px(panel.left),
        px(panel.top),
        px(panel.width),
        px(panel.height)
    );
    // Time ticks.
    let (t_ticks, t_dec) = nice_ticks(1.0, panel.t_len.max(2) as f64);
    for t in t_ticks {
        let x = panel.map_t(t);
        let _ = writeln!(
            svg,
            r##"<line class="tick" x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="#333" stroke-width="1"/>"##,
            px(x),
            px(bottom),
            px(bottom + 4.0)
        );
        let _ = writeln!(
            svg,
            r#"<text class="ticklabel" x="{}" y="{}" font-size="11" text-anchor="middle" font-family="sans-serif">{:.*}</text>"#,
            px(x),
            px(bottom + 16.0),
            t_dec,
            t
        );
    }
    // Value ticks.
    let (v_ticks, v_dec) = nice_ticks(panel.v_min, panel.v_max);
    for v in v_ticks {
        let y = panel.map_v(v);
        let _ = writeln!(
            svg,
            r##"<line class="tick" x1="{1}" y1="{0}" x2="{2}" y2="{0}" stroke="#333" stroke-width="1"/>"##,
            px(y),
            px(panel.left - 4.0),
            px(panel.left)
        );
        let _ = writeln!(
            svg,
            r#"<text class="ticklabel" x="{}" y="{}" font-size="11" text-anchor="end" font-family="sans-serif">{:.*}</text>"#,
            px(panel.left - 7.0),
            px(y + 3.5),
            v_dec,
            v
        );
    }
    let _ = writeln!(
        svg,
        r#"<text class="title" x="{}" y="{}" font-size="13" text-anchor="start" font-family="sans-serif">{}</text>"#,
        px(panel.left),
        px(panel.top - 8.0),
        title
    );
    let _ = writeln!(
        svg,
        r#"<text class="axislabel" x="{}" y="{}" font-size="12" text-anchor="middle" font-family="sans-serif">minute</text>"#,
        px(panel.left + panel.width / 2.0),
        px(bottom + 32.0)
    );
    let _ = writeln!(
        svg,
        r#"<text class="axislabel" x="{}" y="{}" font-size="12" text-anchor="middle" font-family="sans-serif" transform="rotate(-90 {} {})">{}</text>"#,
        px(panel.left - 48.0),
        px(panel.top + panel.height / 2.0),
        px(panel.left - 48.0),
        px(panel.top + panel.height / 2.0),
        coord.label()
    );
}

/// Lay panels on a grid (`columns` wide, row-major) and render the figure.
fn render_figure(cfg: &PlotConfig, columns: usize, panels: &[PanelSpec<'_>]) -> String {
    let columns = columns.max(1);
    let rows = panels.len().div_ceil(columns);
    let panel_w = (cfg.width as f64 - MARGIN_LEFT - MARGIN_RIGHT
        - (columns as f64 - 1.0) * (MARGIN_LEFT + MARGIN_RIGHT))
        .max(60.0)
        / columns as f64;
    let panel_h = cfg.panel_height as f64;
    let total_w = cfg.width as f64;
    let total_h =
        MARGIN_TOP + rows as f64 * panel_h + (rows as f64 - 1.0) * (PANEL_GAP + MARGIN_BOTTOM)
            + MARGIN_BOTTOM;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = px(total_w),
        h = px(total_h)
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, spec) in panels.iter().enumerate() {
        let row = i / columns;
        let col = i % columns;
        let (v_min, v_max) = spec.data_range();
        let panel = Panel {
            left: MARGIN_LEFT + col as f64 * (panel_w + MARGIN_LEFT + MARGIN_RIGHT),
            top: MARGIN_TOP + row as f64 * (panel_h + PANEL_GAP + MARGIN_BOTTOM),
            width: panel_w,
            height: panel_h,
            t_len: spec.t_len(),
            v_min,
            v_max,
        };
        for layer in &spec.layers {
            render_layer(&mut svg, &panel, spec.coord, layer);
        }
        render_axes(&mut svg, &panel, &spec.title, spec.coord);
    }
    svg.push_str("</svg>\n");
    svg
}

fn observed_dots(series: &ObservationSeries) -> Vec<(usize, Point2)> {
    series
        .y
        .iter()
        .enumerate()
        .filter_map(|(i, y)| y.map(|p| (i + 1, p)))
        .collect()
}

/// Pick at most `limit` paths, evenly spaced, preserving order.
fn thin_paths<'a>(paths: &'a [Vec<Point2>], limit: usize) -> Vec<&'a [Point2]> {
    if limit == 0 || paths.is_empty() {
        return Vec::new();
    }
    if paths.len() <= limit {
        return paths.iter().map(Vec::as_slice).collect();
    }
    (0..limit)
        .map(|i| paths[i * paths.len() / limit].as_slice())
        .collect()
}

/// Two-panel scatter of the raw observations.
pub fn observation_figure(series: &ObservationSeries, cfg: &PlotConfig) -> String {
    let dots = observed_dots(series);
    let panels: Vec<PanelSpec> = [Coord::X, Coord::Y]
        .into_iter()
        .map(|coord| PanelSpec {
            title: format!("observations — {}", coord.label()),
            coord,
            layers: vec![Layer::Shade(&[]), Layer::Dots(&dots)],
        })
        .collect();
    // The empty Shade layer keeps t_len honest even with a trailing gap.
    let mut panels = panels;
    let shade_len = vec![0.0; series.len()];
    for spec in &mut panels {
        spec.layers[0] = Layer::Shade(&shade_len);
    }
    render_figure(cfg, 1, &panels)
}

/// Posterior figure: motion-probability shading, credible band, draw
/// cloud, posterior mean, and the observations it conditioned on.
pub fn summary_figure(
    summary: &SummaryRecord,
    obs: Option<&ObservationSeries>,
    draw_paths: &[Vec<Point2>],
    cfg: &PlotConfig,
) -> Result<String> {
    let t_len = summary.mean.len();
    if t_len == 0 {
        return Err(Error::domain("summary_figure: empty summary"));
    }
    if summary.lo.len() != t_len || summary.hi.len() != t_len || summary.motion_prob.len() != t_len
    {
        return Err(Error::domain("summary_figure: summary columns differ in length"));
    }
    if let Some(series) = obs {
        if series.len() != t_len {
            return Err(Error::domain(format!(
                "summary_figure: observations cover {} minutes but the summary covers {t_len}",
                series.len()
            )));
        }
    }
    for path in draw_paths {
        if path.len() != t_len {
            return Err(Error::domain("summary_figure: draw path length differs from summary"));
        }
    }
    let dots = obs.map(observed_dots).unwrap_or_default();
    let cloud = thin_paths(draw_paths, cfg.max_draw_overlays);
    let panels: Vec<PanelSpec> = [Coord::X, Coord::Y]
        .into_iter()
        .map(|coord| PanelSpec {
            title: format!("posterior trajectory — {}", coord.label()),
            coord,
            layers: vec![
                Layer::Shade(&summary.motion_prob),
                Layer::Band {
                    lo: &summary.lo,
                    hi: &summary.hi,
                },
                Layer::Cloud(&cloud),
                Layer::Estimate(&summary.mean),
                Layer::Dots(&dots),
            ],
        })
        .collect();
    Ok(render_figure(cfg, 1, &panels))
}

/// Segmentation figure: travel minutes shaded, bin-center estimate, and
/// the observations.
pub fn segmentation_figure(
    seg: &SegmentationRecord,
    obs: Option<&ObservationSeries>,
    cfg: &PlotConfig,
) -> Result<String> {
    let t_len = seg.x_est.len();
    if t_len == 0 {
        return Err(Error::domain("segmentation_figure: empty segmentation"));
    }
    if seg.states.len() != t_len {
        return Err(Error::domain("segmentation_figure: states and estimate differ in length"));
    }
    if let Some(series) = obs {
        if series.len() != t_len {
            return Err(Error::domain(format!(
                "segmentation_figure: observations cover {} minutes but the segmentation covers {t_len}",
                series.len()
            )));
        }
    }
    let travel: Vec<bool> = seg.states.iter().map(|s| *s == Regime::Flight).collect();
    let dots = obs.map(observed_dots).unwrap_or_default();
    let panels: Vec<PanelSpec> = [Coord::X, Coord::Y]
        .into_iter()
        .map(|coord| PanelSpec {
            title: format!("segmentation — {}", coord.label()),
            coord,
            layers: vec![
                Layer::ShadeRuns(&travel),
                Layer::Estimate(&seg.x_est),
                Layer::Dots(&dots),
            ],
        })
        .collect();
    Ok(render_figure(cfg, 1, &panels))
}

/// Four-panel side-by-side comparison: smoother on the top row, binning on
/// the bottom, one column per coordinate.
pub fn comparison_figure(
    summary: &SummaryRecord,
    seg: &SegmentationRecord,
    obs: Option<&ObservationSeries>,
    cfg: &PlotConfig,
) -> Result<String> {
    let t_len = summary.mean.len();
    if t_len == 0 || seg.x_est.len() != t_len {
        return Err(Error::domain(
            "comparison_figure: summary and segmentation must cover the same minutes",
        ));
    }
    if let Some(series) = obs {
        if series.len() != t_len {
            return Err(Error::domain(
                "comparison_figure: observations must cover the same minutes",
            ));
        }
    }
    let travel: Vec<bool> = seg.states.iter().map(|s| *s == Regime::Flight).collect();
    let dots = obs.map(observed_dots).unwrap_or_default();
    let mut panels = Vec::with_capacity(4);
    for coord in [Coord::X, Coord::Y] {
        panels.push(PanelSpec {
            title: format!("smoother — {}", coord.label()),
            coord,
            layers: vec![
                Layer::Shade(&summary.motion_prob),
                Layer::Band {
                    lo: &summary.lo,
                    hi: &summary.hi,
                },
                Layer::Estimate(&summary.mean),
                Layer::Dots(&dots),
            ],
        });
    }
    for coord in [Coord::X, Coord::Y] {
        panels.push(PanelSpec {
            title: format!("binning — {}", coord.label()),
            coord,
            layers: vec![
                Layer::ShadeRuns(&travel),
                Layer::Estimate(&seg.x_est),
                Layer::Dots(&dots),
            ],
        });
    }
    Ok(render_figure(cfg, 2, &panels))
}
