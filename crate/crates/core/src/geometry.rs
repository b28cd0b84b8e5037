//! Planar geometry in kilometre coordinates.
//!
//! Zones are simple polygons (optionally with holes). Service buffers are disks, and the
//! area of a disk clipped to a polygon is computed exactly by summing signed
//! disk/triangle intersections over the polygon edges.

use std::f64::consts::PI;

use geo_types::{Coord, LineString, Polygon};

use crate::error::{Error, Result};

pub type Point = Coord<f64>;

fn cross(a: Point, b: Point) -> f64 {
    a.x * b.y - a.y * b.x
}

fn dot(a: Point, b: Point) -> f64 {
    a.x * b.x + a.y * b.y
}

pub fn euclid(a: Point, b: Point) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

fn ring_signed_area(ring: &LineString<f64>) -> f64 {
    ring.0
        .windows(2)
        .map(|w| cross(w[0], w[1]))
        .sum::<f64>()
        / 2.0
}

/// Unsigned area of a polygon, holes subtracted.
pub fn polygon_area(poly: &Polygon<f64>) -> f64 {
    let outer = ring_signed_area(poly.exterior()).abs();
    let holes: f64 = poly
        .interiors()
        .iter()
        .map(|r| ring_signed_area(r).abs())
        .sum();
    outer - holes
}

/// Area centroid of the exterior ring.
pub fn polygon_centroid(poly: &Polygon<f64>) -> Point {
    let ring = &poly.exterior().0;
    let a = ring_signed_area(poly.exterior());
    let (mut cx, mut cy) = (0.0, 0.0);
    for w in ring.windows(2) {
        let c = cross(w[0], w[1]);
        cx += (w[0].x + w[1].x) * c;
        cy += (w[0].y + w[1].y) * c;
    }
    Point {
        x: cx / (6.0 * a),
        y: cy / (6.0 * a),
    }
}

fn ring_contains(ring: &LineString<f64>, p: Point) -> bool {
    let mut inside = false;
    for w in ring.0.windows(2) {
        let (a, b) = (w[0], w[1]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Even-odd point-in-polygon test. Points exactly on an edge may land either way.
pub fn contains(poly: &Polygon<f64>, p: Point) -> bool {
    ring_contains(poly.exterior(), p) && !poly.interiors().iter().any(|r| ring_contains(r, p))
}

pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let d = b - a;
    let len2 = dot(d, d);
    if len2 == 0.0 {
        return euclid(p, a);
    }
    let t = (dot(p - a, d) / len2).clamp(0.0, 1.0);
    euclid(p, a + d * t)
}

pub fn point_polyline_distance(p: Point, line: &LineString<f64>) -> f64 {
    match line.0.len() {
        0 => f64::INFINITY,
        1 => euclid(p, line.0[0]),
        _ => line
            .0
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

/// Distance from `p` to the polygon boundary (0 inside is not implied).
pub fn point_boundary_distance(poly: &Polygon<f64>, p: Point) -> f64 {
    std::iter::once(poly.exterior())
        .chain(poly.interiors())
        .map(|r| point_polyline_distance(p, r))
        .fold(f64::INFINITY, f64::min)
}

/// Signed area of the intersection of the disk of radius `r` at the origin with the
/// triangle (origin, a, b).
fn disk_triangle_area(a: Point, b: Point, r: f64) -> f64 {
    let sector = |u: Point, v: Point| 0.5 * r * r * cross(u, v).atan2(dot(u, v));
    let d = b - a;
    let qa = dot(d, d);
    if qa == 0.0 {
        return 0.0;
    }
    let r2 = r * r;
    let (da, db) = (dot(a, a), dot(b, b));
    if da <= r2 && db <= r2 {
        return 0.5 * cross(a, b);
    }
    let qb = dot(a, d);
    let qc = da - r2;
    let disc = qb * qb - qa * qc;
    if disc <= 0.0 {
        return sector(a, b);
    }
    let s = disc.sqrt();
    let t1 = (-qb - s) / qa;
    let t2 = (-qb + s) / qa;
    if t2 <= 0.0 || t1 >= 1.0 {
        return sector(a, b);
    }
    let p1 = a + d * t1.max(0.0);
    let p2 = a + d * t2.min(1.0);
    sector(a, p1) + 0.5 * cross(p1, p2) + sector(p2, b)
}

fn ring_disk_area(ring: &LineString<f64>, center: Point, r: f64) -> f64 {
    ring.0
        .windows(2)
        .map(|w| disk_triangle_area(w[0] - center, w[1] - center, r))
        .sum::<f64>()
        .abs()
}

/// Exact area of `disk(center, r) ∩ poly`.
pub fn disk_intersection_area(poly: &Polygon<f64>, center: Point, r: f64) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Geometry(format!("buffer radius must be positive, got {r}")));
    }
    validate_polygon(poly)?;
    if !contains(poly, center) && point_boundary_distance(poly, center) >= r {
        return Ok(0.0);
    }
    let outer = ring_disk_area(poly.exterior(), center, r);
    let holes: f64 = poly
        .interiors()
        .iter()
        .map(|h| ring_disk_area(h, center, r))
        .sum();
    let area = (outer - holes).max(0.0);
    Ok(area.min(PI * r * r).min(polygon_area(poly)))
}

/// Rejects polygons that cannot carry an area: fewer than three distinct vertices,
/// non-finite coordinates, or zero area.
pub fn validate_polygon(poly: &Polygon<f64>) -> Result<()> {
    let ring = &poly.exterior().0;
    if ring.iter().any(|c| !c.x.is_finite() || !c.y.is_finite()) {
        return Err(Error::Geometry("non-finite polygon coordinate".into()));
    }
    let mut distinct = ring.clone();
    distinct.dedup();
    if distinct.first() == distinct.last() && distinct.len() > 1 {
        distinct.pop();
    }
    if distinct.len() < 3 {
        return Err(Error::Geometry(format!(
            "polygon needs at least 3 distinct vertices, got {}",
            distinct.len()
        )));
    }
    if polygon_area(poly) <= 0.0 {
        return Err(Error::Geometry("polygon has zero area".into()));
    }
    Ok(())
}

/// Axis-aligned bounds `(min, max)` of a set of coordinates.
pub fn bounds<'a>(coords: impl IntoIterator<Item = &'a Point>) -> (Point, Point) {
    coords.into_iter().fold(
        (
            Point { x: f64::INFINITY, y: f64::INFINITY },
            Point { x: f64::NEG_INFINITY, y: f64::NEG_INFINITY },
        ),
        |(lo, hi), c| {
            (
                Point { x: lo.x.min(c.x), y: lo.y.min(c.y) },
                Point { x: hi.x.max(c.x), y: hi.y.max(c.y) },
            )
        },
    )
}

/// Cell centres of a regular grid of spacing `cell` that fall inside `poly`.
///
/// Used as midpoint quadrature for areas that have no closed form (overlapping annuli
/// around lines and station sets).
pub fn grid_samples(poly: &Polygon<f64>, cell: f64) -> Vec<Point> {
    let (lo, hi) = bounds(&poly.exterior().0);
    let nx = ((hi.x - lo.x) / cell).ceil().max(1.0) as usize;
    let ny = ((hi.y - lo.y) / cell).ceil().max(1.0) as usize;
    let mut out = Vec::new();
    for iy in 0..ny {
        let y = lo.y + (iy as f64 + 0.5) * cell;
        for ix in 0..nx {
            let p = Point {
                x: lo.x + (ix as f64 + 0.5) * cell,
                y,
            };
            if contains(poly, p) {
                out.push(p);
            }
        }
    }
    out
}

pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon<f64> {
    Polygon::new(
        LineString::from(vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]),
        vec![],
    )
}
