//! Cell regions, user sampling and port layouts.
//!
//! Hexagonal cells are flat-topped with a vertex on the +x axis and are
//! centred at the origin. The six first-tier neighbours of a hexagon of
//! circumradius `R` are centred at distance `sqrt(3) R` in the directions
//! 30 + 60k degrees.

use std::f64::consts::{FRAC_PI_3, FRAC_PI_6};
use std::ops::{Add, Mul, Sub};

use rand::Rng;

use crate::error::{invalid, Error, Result};

const SQRT_3: f64 = 1.732_050_807_568_877_2;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn polar(radius: f64, angle: f64) -> Self {
        Point::new(radius * angle.cos(), radius * angle.sin())
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }

    /// Rotation about the origin by `angle` radians.
    pub fn rotated(self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Point::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, rhs: f64) -> Point {
        Point::new(self.x * rhs, self.y * rhs)
    }
}

/// A convex cell region.
#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    /// Regular hexagon centred at the origin, flat-topped, vertex at `(R, 0)`.
    Hexagon { circumradius: f64 },
    /// Convex polygon with counter-clockwise vertices.
    Polygon { vertices: Vec<Point>, centroid: Point },
}

impl Region {
    pub fn hexagon(circumradius: f64) -> Result<Self> {
        if !(circumradius > 0.0 && circumradius.is_finite()) {
            return Err(invalid("circumradius", format!("must be positive, got {circumradius}")));
        }
        Ok(Region::Hexagon { circumradius })
    }

    /// Hexagon whose inscribed circle has radius `apothem`.
    pub fn hexagon_with_apothem(apothem: f64) -> Result<Self> {
        Region::hexagon(2.0 * apothem / SQRT_3)
    }

    /// Convex polygon; vertices must be in counter-clockwise order.
    pub fn polygon(vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidRegion(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidRegion("non-finite vertex".into()));
        }
        let n = vertices.len();
        let scale = vertices.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1.0);
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            let turn = (b - a).cross(c - b);
            if turn < -1e-12 * scale * scale {
                return Err(Error::InvalidRegion(
                    "vertices are not convex in counter-clockwise order".into(),
                ));
            }
        }
        let (area, centroid) = polygon_area_centroid(&vertices);
        if !(area > 1e-12 * scale * scale) {
            return Err(Error::InvalidRegion("polygon has no area".into()));
        }
        Ok(Region::Polygon { vertices, centroid })
    }

    /// Regular `n`-gon centred at the origin with a vertex on the +x axis.
    pub fn regular_polygon(n: usize, circumradius: f64) -> Result<Self> {
        if n < 3 {
            return Err(invalid("n", "regular polygon needs at least 3 sides"));
        }
        if !(circumradius > 0.0) {
            return Err(invalid("circumradius", "must be positive"));
        }
        let step = 2.0 * std::f64::consts::PI / n as f64;
        Region::polygon(
            (0..n)
                .map(|k| Point::polar(circumradius, k as f64 * step))
                .collect(),
        )
    }

    pub fn rectangle(min: Point, max: Point) -> Result<Self> {
        Region::polygon(vec![
            min,
            Point::new(max.x, min.y),
            max,
            Point::new(min.x, max.y),
        ])
    }

    pub fn is_hexagon(&self) -> bool {
        matches!(self, Region::Hexagon { .. })
    }

    pub fn vertices(&self) -> Vec<Point> {
        match self {
            Region::Hexagon { circumradius } => (0..6)
                .map(|k| Point::polar(*circumradius, k as f64 * FRAC_PI_3))
                .collect(),
            Region::Polygon { vertices, .. } => vertices.clone(),
        }
    }

    pub fn centroid(&self) -> Point {
        match self {
            Region::Hexagon { .. } => Point::ORIGIN,
            Region::Polygon { centroid, .. } => *centroid,
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            Region::Hexagon { circumradius } => 1.5 * SQRT_3 * circumradius * circumradius,
            Region::Polygon { vertices, .. } => polygon_area_centroid(vertices).0,
        }
    }

    /// Largest distance from the centroid to the boundary.
    pub fn extent(&self) -> f64 {
        match self {
            Region::Hexagon { circumradius } => *circumradius,
            Region::Polygon { vertices, centroid } => vertices
                .iter()
                .map(|v| v.distance(*centroid))
                .fold(0.0, f64::max),
        }
    }

    /// The region scaled about the origin by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        match self {
            Region::Hexagon { circumradius } => Region::hexagon(circumradius * factor),
            Region::Polygon { vertices, .. } => {
                Region::polygon(vertices.iter().map(|v| *v * factor).collect())
            }
        }
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        match self {
            Region::Hexagon { circumradius } => {
                let h = circumradius * SQRT_3 / 2.0;
                (Point::new(-circumradius, -h), Point::new(*circumradius, h))
            }
            Region::Polygon { vertices, .. } => {
                let mut lo = vertices[0];
                let mut hi = vertices[0];
                for v in vertices {
                    lo.x = lo.x.min(v.x);
                    lo.y = lo.y.min(v.y);
                    hi.x = hi.x.max(v.x);
                    hi.y = hi.y.max(v.y);
                }
                (lo, hi)
            }
        }
    }

    /// Closed containment test with a small relative tolerance.
    pub fn contains(&self, p: Point) -> bool {
        let tol = 1e-9 * self.extent();
        match self {
            Region::Hexagon { circumradius } => {
                let (ax, ay) = (p.x.abs(), p.y.abs());
                ay <= circumradius * SQRT_3 / 2.0 + tol && SQRT_3 * ax + ay <= SQRT_3 * circumradius + tol
            }
            Region::Polygon { vertices, .. } => {
                let n = vertices.len();
                (0..n).all(|i| {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    let edge = b - a;
                    edge.cross(p - a) >= -tol * edge.norm()
                })
            }
        }
    }

    /// Cubature nodes with weights summing to one, for averages over a
    /// uniformly distributed user. The region is fanned into triangles from
    /// its centroid and each triangle is split into `level^2` congruent
    /// sub-triangles; each node is a sub-triangle centroid.
    pub fn cubature(&self, level: usize) -> Vec<(Point, f64)> {
        let level = level.max(1);
        let verts = self.vertices();
        let c = self.centroid();
        let total = self.area();
        let mut nodes = Vec::with_capacity(verts.len() * level * level);
        let inv = 1.0 / level as f64;
        for i in 0..verts.len() {
            let a = c;
            let b = verts[i];
            let d = verts[(i + 1) % verts.len()];
            let tri_area = 0.5 * (b - a).cross(d - a).abs();
            let w = tri_area / (level * level) as f64 / total;
            let e1 = (b - a) * inv;
            let e2 = (d - a) * inv;
            for j in 0..level {
                for k in 0..level - j {
                    // upright sub-triangle
                    let base = a + e1 * j as f64 + e2 * k as f64;
                    nodes.push((base + (e1 + e2) * (1.0 / 3.0), w));
                    // inverted sub-triangle
                    if j + k + 1 < level {
                        nodes.push((base + (e1 + e2) * (2.0 / 3.0), w));
                    }
                }
            }
        }
        nodes
    }
}

fn polygon_area_centroid(vertices: &[Point]) -> (f64, Point) {
    let n = vertices.len();
    let mut area2 = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        let cr = a.cross(b);
        area2 += cr;
        cx += (a.x + b.x) * cr;
        cy += (a.y + b.y) * cr;
    }
    let area = area2 / 2.0;
    if area2.abs() < f64::MIN_POSITIVE {
        return (0.0, Point::ORIGIN);
    }
    (area, Point::new(cx / (3.0 * area2), cy / (3.0 * area2)))
}

/// Uniform point in `region` by rejection from the bounding box.
pub fn sample_uniform<R: Rng + ?Sized>(region: &Region, rng: &mut R) -> Point {
    let (lo, hi) = region.bounding_box();
    loop {
        let p = Point::new(
            lo.x + (hi.x - lo.x) * rng.random::<f64>(),
            lo.y + (hi.y - lo.y) * rng.random::<f64>(),
        );
        if region.contains(p) {
            return p;
        }
    }
}

/// Euclidean distance clamped below at the far-field radius `r0`.
#[inline]
pub fn clamped_distance(p: Point, u: Point, r0: f64) -> f64 {
    p.distance(u).max(r0)
}

/// Centroids of the six first-tier neighbours of a hexagonal cell.
pub fn neighbor_offsets(region: &Region) -> Result<[Point; 6]> {
    match region {
        Region::Hexagon { circumradius } => {
            let d = SQRT_3 * circumradius;
            Ok(std::array::from_fn(|j| {
                Point::polar(d, FRAC_PI_6 + j as f64 * FRAC_PI_3)
            }))
        }
        _ => Err(Error::NotHexagonal),
    }
}

/// Euclidean projection onto the region: identity inside, nearest boundary
/// point outside.
pub fn project_into_region(p: Point, region: &Region) -> Point {
    if region.contains(p) {
        return p;
    }
    let verts = region.vertices();
    let n = verts.len();
    let mut best = verts[0];
    let mut best_d = f64::INFINITY;
    for i in 0..n {
        let a = verts[i];
        let b = verts[(i + 1) % n];
        let ab = b - a;
        let t = ((p - a).dot(ab) / ab.norm_sq()).clamp(0.0, 1.0);
        let q = a + ab * t;
        let d = q.distance(p);
        if d < best_d {
            best_d = d;
            best = q;
        }
    }
    best
}

/// Positions of the `N` ports of the central cell.
#[derive(Clone, Debug, PartialEq)]
pub struct PortLayout {
    ports: Vec<Point>,
    region: Region,
}

impl PortLayout {
    pub fn new(ports: Vec<Point>, region: Region) -> Result<Self> {
        if ports.is_empty() {
            return Err(invalid("ports", "layout needs at least one port"));
        }
        if let Some(i) = ports.iter().position(|p| !region.contains(*p)) {
            return Err(invalid(
                "ports",
                format!("port {i} at ({}, {}) lies outside the region", ports[i].x, ports[i].y),
            ));
        }
        Ok(PortLayout { ports, region })
    }

    /// Builds a layout after projecting every port into the region.
    pub fn projected(ports: Vec<Point>, region: Region) -> Result<Self> {
        let ports = ports
            .into_iter()
            .map(|p| project_into_region(p, &region))
            .collect();
        PortLayout::new(ports, region)
    }

    /// `n_ring` ports evenly spaced on a circle of `radius` about the region
    /// centroid starting at angle `phase`, optionally preceded by a port at
    /// the centroid.
    pub fn ring(
        region: Region,
        n_ring: usize,
        radius: f64,
        phase: f64,
        center_port: bool,
    ) -> Result<Self> {
        let c = region.centroid();
        let mut ports = Vec::with_capacity(n_ring + center_port as usize);
        if center_port {
            ports.push(c);
        }
        let step = 2.0 * std::f64::consts::PI / n_ring.max(1) as f64;
        ports.extend((0..n_ring).map(|k| c + Point::polar(radius, phase + k as f64 * step)));
        PortLayout::new(ports, region)
    }

    /// `n` ports drawn uniformly in the region.
    pub fn random<R: Rng + ?Sized>(region: Region, n: usize, rng: &mut R) -> Result<Self> {
        let ports = (0..n).map(|_| sample_uniform(&region, rng)).collect();
        PortLayout::new(ports, region)
    }

    pub fn ports(&self) -> &[Point] {
        &self.ports
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn len(&self) -> usize {
        self.ports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ports.is_empty()
    }

    /// Distances of the ports from the region centroid.
    pub fn radii(&self) -> Vec<f64> {
        let c = self.region.centroid();
        self.ports.iter().map(|p| p.distance(c)).collect()
    }

    /// Index of the port nearest to `u`; ties go to the lowest index.
    pub fn nearest_port(&self, u: Point) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.ports.iter().enumerate() {
            let d = p.distance(u);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn with_ports(&self, ports: Vec<Point>) -> Result<Self> {
        PortLayout::new(ports, self.region.clone())
    }
}

/// The central layout replicated into the six neighbouring cells: entry `j`
/// holds `p_i + o_j` for every port `i`.
pub fn neighbor_ports(layout: &PortLayout) -> Result<[Vec<Point>; 6]> {
    let offsets = neighbor_offsets(layout.region())?;
    Ok(offsets.map(|o| layout.ports().iter().map(|p| *p + o).collect()))
}
