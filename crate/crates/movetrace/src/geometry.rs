//! Planar points, convex hulls and hull areas.
//!
//! Coordinates are kilometres in a local tangent plane. The hull code is the
//! geometric core of the [`crate::binning`] segmenter, which watches how the
//! area of the hull of a sliding bin of points grows over time.
//!
//! Degenerate inputs (fewer than three distinct points, or all points
//! collinear) are a normal occurrence there — linearly interpolated gap fills
//! are exactly collinear — so [`convex_hull`] represents them explicitly: the
//! polygon keeps the full distinct point list, is flagged degenerate, and has
//! area exactly zero.

use crate::error::{Error, Result};

/// Cross products with magnitude at or below this are treated as collinear.
///
/// Coordinates are O(1..100) km, so genuine triangles have cross products
/// far above this, while f64 rounding on interpolated collinear points stays
/// well below it.
pub const COLLINEAR_EPS: f64 = 1e-12;

/// A point in the local plane, in kilometres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Squared Euclidean distance to `other`.
    pub fn sq_dist(&self, other: &Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

impl std::ops::Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

/// Convex hull of a point set.
///
/// For a proper (2-D) hull, `vertices` are the extreme points in
/// counter-clockwise order with no duplicate or collinear boundary points.
/// For a degenerate set, `vertices` holds every distinct input point in
/// sorted order and the polygon has area zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Point2>,
    degenerate: bool,
}

impl ConvexPolygon {
    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Shoelace area; exactly zero for degenerate hulls.
    pub fn area(&self) -> f64 {
        if self.degenerate {
            return 0.0;
        }
        let v = &self.vertices;
        let n = v.len();
        let mut twice = 0.0;
        for i in 0..n {
            let j = (i + 1) % n;
            twice += v[i].x * v[j].y - v[j].x * v[i].y;
        }
        // CCW orientation makes this non-negative up to rounding.
        (twice / 2.0).abs()
    }
}

/// Signed cross product of (a - o) and (b - o): positive for a left turn.
fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn sort_key(p: &Point2) -> (f64, f64) {
    (p.x, p.y)
}

/// Convex hull via Andrew's monotone chain, O(n log n).
///
/// Errors when the input is empty or contains non-finite coordinates.
pub fn convex_hull(points: &[Point2]) -> Result<ConvexPolygon> {
    if points.is_empty() {
        return Err(Error::domain("convex_hull: empty point set"));
    }
    if let Some(p) = points.iter().find(|p| !p.is_finite()) {
        return Err(Error::domain(format!(
            "convex_hull: non-finite point ({}, {})",
            p.x, p.y
        )));
    }

    let mut pts = points.to_vec();
    pts.sort_by(|a, b| sort_key(a).partial_cmp(&sort_key(b)).unwrap());
    pts.dedup();

    if pts.len() <= 2 || all_collinear(&pts) {
        return Ok(ConvexPolygon {
            vertices: pts,
            degenerate: true,
        });
    }

    // Lower then upper chain, keeping strict left turns only, so collinear
    // boundary points are dropped and vertices are never repeated.
    let mut lower: Vec<Point2> = Vec::with_capacity(pts.len());
    for &p in &pts {
        while lower.len() >= 2
            && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= COLLINEAR_EPS
        {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point2> = Vec::with_capacity(pts.len());
    for &p in pts.iter().rev() {
        while upper.len() >= 2
            && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= COLLINEAR_EPS
        {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);

    Ok(ConvexPolygon {
        vertices: lower,
        degenerate: false,
    })
}

fn all_collinear(sorted_distinct: &[Point2]) -> bool {
    let a = sorted_distinct[0];
    let b = *sorted_distinct.last().unwrap();
    sorted_distinct
        .iter()
        .all(|&p| cross(a, b, p).abs() <= COLLINEAR_EPS)
}

/// Area of a hull produced by [`convex_hull`].
pub fn polygon_area(polygon: &ConvexPolygon) -> f64 {
    polygon.area()
}

/// Arithmetic mean of a non-empty point set.
///
/// This is the "centre" the binning segmenter assigns to a committed bin: the
/// mean over every member point, not the area centroid of the hull polygon.
pub fn points_centroid(points: &[Point2]) -> Result<Point2> {
    if points.is_empty() {
        return Err(Error::domain("points_centroid: empty point set"));
    }
    let mut sx = 0.0;
    let mut sy = 0.0;
    for p in points {
        sx += p.x;
        sy += p.y;
    }
    let n = points.len() as f64;
    Ok(Point2::new(sx / n, sy / n))
}
