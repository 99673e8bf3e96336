//! Computational domains: the lid-driven rectangular cavity with a trapezoidal
//! obstacle and two semicircular bottom-wall heaters, plus the plain rectangle
//! and right-triangular cavity used for benchmarking and validation.
//!
//! All lengths are dimensionless, scaled by the cavity height (so the cavity
//! occupies `0 <= y <= 1`).

use std::f64::consts::PI;
use thiserror::Error;

/// Weld tolerance for chaining segment endpoints during discretization.
const WELD_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
#[error("invalid geometry: {0}")]
pub struct InvalidGeometry(pub String);

/// 2D point in dimensionless coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// Twice the signed area of triangle `o`, `a`, `b`.
pub fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Distance from `p` to the closed segment `a`-`b`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let len2 = ab.x * ab.x + ab.y * ab.y;
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

/// Labels for the pieces of the domain boundary. The seven tags partition the
/// full boundary of the multiply-connected cavity domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    LeftWall,
    RightWall,
    Lid,
    BottomAdiabatic,
    HeaterLeft,
    HeaterRight,
    Obstacle,
}

impl BoundaryTag {
    pub const ALL: [BoundaryTag; 7] = [
        BoundaryTag::LeftWall,
        BoundaryTag::RightWall,
        BoundaryTag::Lid,
        BoundaryTag::BottomAdiabatic,
        BoundaryTag::HeaterLeft,
        BoundaryTag::HeaterRight,
        BoundaryTag::Obstacle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundaryTag::LeftWall => "left_wall",
            BoundaryTag::RightWall => "right_wall",
            BoundaryTag::Lid => "lid",
            BoundaryTag::BottomAdiabatic => "bottom_adiabatic",
            BoundaryTag::HeaterLeft => "heater_left",
            BoundaryTag::HeaterRight => "heater_right",
            BoundaryTag::Obstacle => "obstacle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: Point,
    pub radius: f64,
}

impl Circle {
    /// Radial projection of `p` onto the circle.
    pub fn project(&self, p: Point) -> Point {
        let d = p - self.center;
        let n = d.norm();
        if n == 0.0 {
            return Point::new(self.center.x + self.radius, self.center.y);
        }
        self.center + d * (self.radius / n)
    }

    pub fn distance_to(&self, p: Point) -> f64 {
        (p.dist(self.center) - self.radius).abs()
    }
}

/// One piece of a boundary loop: a straight line or a circular arc. Arcs are
/// traversed from `start_angle` to `end_angle` (the sweep may be negative).
#[derive(Debug, Clone, Copy)]
pub enum Segment {
    Line {
        start: Point,
        end: Point,
    },
    Arc {
        center: Point,
        radius: f64,
        start_angle: f64,
        end_angle: f64,
    },
}

impl Segment {
    pub fn start(&self) -> Point {
        match *self {
            Segment::Line { start, .. } => start,
            Segment::Arc {
                center,
                radius,
                start_angle,
                ..
            } => center + Point::new(start_angle.cos(), start_angle.sin()) * radius,
        }
    }

    pub fn end(&self) -> Point {
        match *self {
            Segment::Line { end, .. } => end,
            Segment::Arc {
                center,
                radius,
                end_angle,
                ..
            } => center + Point::new(end_angle.cos(), end_angle.sin()) * radius,
        }
    }

    pub fn length(&self) -> f64 {
        match *self {
            Segment::Line { start, end } => start.dist(end),
            Segment::Arc {
                radius,
                start_angle,
                end_angle,
                ..
            } => radius * (end_angle - start_angle).abs(),
        }
    }

    pub fn is_arc(&self) -> bool {
        matches!(self, Segment::Arc { .. })
    }

    pub fn circle(&self) -> Option<Circle> {
        match *self {
            Segment::Line { .. } => None,
            Segment::Arc { center, radius, .. } => Some(Circle { center, radius }),
        }
    }

    /// Subdivide into chords no longer than `max_h`; arcs additionally respect
    /// the sagitta bound `chord_tol`. Returns all points including both
    /// endpoints.
    pub fn discretize(&self, max_h: f64, chord_tol: f64) -> Vec<Point> {
        match *self {
            Segment::Line { start, end } => {
                let len = start.dist(end);
                let n = (len / max_h).ceil().max(1.0) as usize;
                (0..=n)
                    .map(|i| {
                        let t = i as f64 / n as f64;
                        start + (end - start) * t
                    })
                    .collect()
            }
            Segment::Arc {
                center,
                radius,
                start_angle,
                end_angle,
            } => {
                let sweep = end_angle - start_angle;
                // sagitta of a chord spanning dtheta is r*(1 - cos(dtheta/2))
                let dt_sagitta = 2.0 * (1.0 - (chord_tol / radius).min(1.0)).acos().max(1e-3);
                let dt_len = 2.0 * (max_h / (2.0 * radius)).min(1.0).asin().max(1e-3);
                let dt = dt_sagitta.min(dt_len);
                let n = ((sweep.abs() / dt).ceil() as usize).max(2);
                (0..=n)
                    .map(|i| {
                        let a = start_angle + sweep * (i as f64 / n as f64);
                        center + Point::new(a.cos(), a.sin()) * radius
                    })
                    .collect()
            }
        }
    }
}

/// A closed chain of tagged segments. Consecutive segments share endpoints;
/// the last segment closes back to the first.
#[derive(Debug, Clone)]
pub struct BoundaryLoop {
    pub segments: Vec<(Segment, BoundaryTag)>,
}

/// One straight chord of a discretized boundary loop, connecting points `i`
/// and `(i + 1) % n` of the loop's point list.
#[derive(Debug, Clone, Copy)]
pub struct Chord {
    pub tag: BoundaryTag,
    /// Set when the chord approximates a circular arc; used to snap mesh
    /// nodes back onto the true circle.
    pub circle: Option<Circle>,
}

#[derive(Debug, Clone)]
pub struct DiscretizedLoop {
    pub points: Vec<Point>,
    pub chords: Vec<Chord>,
}

impl BoundaryLoop {
    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|(s, _)| s.length()).sum()
    }

    /// Maximum gap between consecutive segment endpoints (0 for a well-formed
    /// loop, up to floating-point round-off).
    pub fn closure_gap(&self) -> f64 {
        let n = self.segments.len();
        (0..n)
            .map(|i| {
                let end = self.segments[i].0.end();
                let next = self.segments[(i + 1) % n].0.start();
                end.dist(next)
            })
            .fold(0.0, f64::max)
    }

    /// Chord-discretize the whole loop. Each segment's final point welds with
    /// the next segment's first, so the result has exactly one point per
    /// chord: chord `i` connects `points[i]` to `points[(i + 1) % n]`.
    pub fn discretize(&self, max_h: f64, chord_tol: f64) -> DiscretizedLoop {
        let mut points: Vec<Point> = Vec::new();
        let mut chords: Vec<Chord> = Vec::new();
        for (seg, tag) in &self.segments {
            let pts = seg.discretize(max_h, chord_tol);
            let circle = seg.circle();
            for p in &pts[..pts.len() - 1] {
                if let Some(last) = points.last() {
                    debug_assert!(last.dist(*p) > WELD_TOL, "duplicate chord point");
                }
                points.push(*p);
                chords.push(Chord { tag: *tag, circle });
            }
        }
        DiscretizedLoop { points, chords }
    }

    /// Shoelace area of the chord-discretized loop (positive for
    /// counterclockwise orientation).
    pub fn signed_area(&self, chord_tol: f64) -> f64 {
        let d = self.discretize(f64::INFINITY, chord_tol);
        polygon_signed_area(&d.points)
    }
}

pub fn polygon_signed_area(pts: &[Point]) -> f64 {
    let n = pts.len();
    let mut a = 0.0;
    for i in 0..n {
        let p = pts[i];
        let q = pts[(i + 1) % n];
        a += p.x * q.y - q.x * p.y;
    }
    0.5 * a
}

/// A meshable 2D domain: tagged boundary loops plus point membership.
pub trait Domain {
    fn validate(&self) -> Result<(), InvalidGeometry>;
    fn boundary_loops(&self) -> Vec<BoundaryLoop>;
    /// True iff `p` lies strictly inside the fluid region. Points within
    /// floating-point round-off of the boundary may return either value.
    fn contains(&self, p: Point) -> bool;
    fn fluid_area(&self) -> f64;
    fn chord_tolerance(&self) -> f64 {
        1e-3
    }
    fn circle_for_tag(&self, tag: BoundaryTag) -> Option<Circle> {
        let _ = tag;
        None
    }
    fn perimeter(&self) -> f64 {
        self.boundary_loops()
            .iter()
            .map(|l| l.total_length())
            .sum()
    }
}

/// Isosceles trapezoidal obstacle, base parallel to the bottom wall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trapezoid {
    pub center_x: f64,
    pub base_y: f64,
    pub bottom_half_width: f64,
    pub top_half_width: f64,
    pub height: f64,
}

impl Trapezoid {
    /// Corners in counterclockwise order starting at the bottom-left.
    pub fn corners(&self) -> [Point; 4] {
        [
            Point::new(self.center_x - self.bottom_half_width, self.base_y),
            Point::new(self.center_x + self.bottom_half_width, self.base_y),
            Point::new(self.center_x + self.top_half_width, self.base_y + self.height),
            Point::new(self.center_x - self.top_half_width, self.base_y + self.height),
        ]
    }

    pub fn area(&self) -> f64 {
        (self.bottom_half_width + self.top_half_width) * self.height
    }

    pub fn centroid(&self) -> Point {
        let cs = self.corners();
        let mut cx = 0.0;
        let mut cy = 0.0;
        let mut a = 0.0;
        for i in 0..4 {
            let p = cs[i];
            let q = cs[(i + 1) % 4];
            let w = p.x * q.y - q.x * p.y;
            a += w;
            cx += (p.x + q.x) * w;
            cy += (p.y + q.y) * w;
        }
        a *= 0.5;
        Point::new(cx / (6.0 * a), cy / (6.0 * a))
    }

    /// Inside-or-on-boundary test (corners are CCW, so all cross products are
    /// nonnegative for interior points).
    pub fn contains(&self, p: Point) -> bool {
        let cs = self.corners();
        (0..4).all(|i| cross(cs[i], cs[(i + 1) % 4], p) >= 0.0)
    }

    /// Distance from `p` to the trapezoid (0 if inside).
    pub fn distance_to(&self, p: Point) -> f64 {
        if self.contains(p) {
            return 0.0;
        }
        let cs = self.corners();
        (0..4)
            .map(|i| point_segment_distance(p, cs[i], cs[(i + 1) % 4]))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Parametric description of the enclosure of interest: a rectangle of height
/// 1 and width `aspect_ratio`, with a trapezoidal hole and two semicircular
/// heater bumps protruding from the bottom wall into the fluid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityGeometry {
    pub aspect_ratio: f64,
    pub trapezoid: Trapezoid,
    pub heater_radius: f64,
    /// x-coordinates of the two heater centers on the bottom wall, left < right.
    pub heater_centers: [f64; 2],
    /// Maximum sagitta allowed when arcs are discretized into chords.
    pub arc_chord_tolerance: f64,
}

impl Default for CavityGeometry {
    fn default() -> Self {
        Self {
            aspect_ratio: 2.0,
            trapezoid: Trapezoid {
                center_x: 1.0,
                base_y: 0.35,
                bottom_half_width: 0.3,
                top_half_width: 0.15,
                height: 0.3,
            },
            heater_radius: 0.15,
            heater_centers: [0.5, 1.5],
            arc_chord_tolerance: 1e-3,
        }
    }
}

impl CavityGeometry {
    pub fn width(&self) -> f64 {
        self.aspect_ratio
    }

    fn heater_circle(&self, i: usize) -> Circle {
        Circle {
            center: Point::new(self.heater_centers[i], 0.0),
            radius: self.heater_radius,
        }
    }
}

/// Tagged boundary loops of the cavity: the outer rectangle-with-bumps
/// (counterclockwise) followed by the trapezoidal hole (clockwise).
pub fn build_boundary(geom: &CavityGeometry) -> Result<Vec<BoundaryLoop>, InvalidGeometry> {
    geom.validate()?;
    Ok(geom.boundary_loops())
}

/// True iff `p` is strictly inside the fluid region of the cavity.
pub fn point_in_domain(geom: &CavityGeometry, p: Point) -> bool {
    geom.contains(p)
}

impl Domain for CavityGeometry {
    fn validate(&self) -> Result<(), InvalidGeometry> {
        let err = |msg: String| Err(InvalidGeometry(msg));
        let t = &self.trapezoid;
        let vals = [
            self.aspect_ratio,
            t.center_x,
            t.base_y,
            t.bottom_half_width,
            t.top_half_width,
            t.height,
            self.heater_radius,
            self.heater_centers[0],
            self.heater_centers[1],
            self.arc_chord_tolerance,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return err("all coordinates must be finite".into());
        }
        if self.aspect_ratio <= 0.0 {
            return err(format!("aspect_ratio must be > 0, got {}", self.aspect_ratio));
        }
        if self.arc_chord_tolerance <= 0.0 {
            return err("arc_chord_tolerance must be > 0".into());
        }
        if !(t.top_half_width > 0.0 && t.bottom_half_width >= t.top_half_width) {
            return err(format!(
                "trapezoid requires bottom_half_width >= top_half_width > 0, got {} and {}",
                t.bottom_half_width, t.top_half_width
            ));
        }
        if t.height <= 0.0 {
            return err(format!("trapezoid height must be > 0, got {}", t.height));
        }
        let w = self.width();
        if !(t.base_y > 0.0
            && t.base_y + t.height < 1.0
            && t.center_x - t.bottom_half_width > 0.0
            && t.center_x + t.bottom_half_width < w)
        {
            return err("trapezoid must lie strictly inside the rectangle".into());
        }
        let r = self.heater_radius;
        if r <= 0.0 {
            return err(format!("heater_radius must be > 0, got {r}"));
        }
        if r >= 1.0 {
            return err("heater semicircle must fit below the lid (radius < 1)".into());
        }
        let [c0, c1] = self.heater_centers;
        if !(c0 < c1) {
            return err("heater_centers must satisfy left < right".into());
        }
        if !(c0 + r < c1 - r) {
            return err(format!(
                "heater semicircles overlap: {} + {} >= {} - {}",
                c0, r, c1, r
            ));
        }
        if !(c0 - r > 0.0 && c1 + r < w) {
            return err("heater arc intersects side wall".into());
        }
        for i in 0..2 {
            let c = self.heater_circle(i);
            if t.distance_to(c.center) <= r {
                return err(format!("heater at x = {} touches the trapezoid", c.center.x));
            }
        }
        Ok(())
    }

    fn boundary_loops(&self) -> Vec<BoundaryLoop> {
        let w = self.width();
        let r = self.heater_radius;
        let [c0, c1] = self.heater_centers;
        let bl = Point::new(0.0, 0.0);
        let br = Point::new(w, 0.0);
        let tr = Point::new(w, 1.0);
        let tl = Point::new(0.0, 1.0);
        let line = |a, b| Segment::Line { start: a, end: b };
        // heater arcs bulge into the domain, traversed right-to-left in angle
        // so the overall loop stays counterclockwise
        let arc = |cx: f64| Segment::Arc {
            center: Point::new(cx, 0.0),
            radius: r,
            start_angle: PI,
            end_angle: 0.0,
        };
        let outer = BoundaryLoop {
            segments: vec![
                (line(bl, Point::new(c0 - r, 0.0)), BoundaryTag::BottomAdiabatic),
                (arc(c0), BoundaryTag::HeaterLeft),
                (
                    line(Point::new(c0 + r, 0.0), Point::new(c1 - r, 0.0)),
                    BoundaryTag::BottomAdiabatic,
                ),
                (arc(c1), BoundaryTag::HeaterRight),
                (line(Point::new(c1 + r, 0.0), br), BoundaryTag::BottomAdiabatic),
                (line(br, tr), BoundaryTag::RightWall),
                (line(tr, tl), BoundaryTag::Lid),
                (line(tl, bl), BoundaryTag::LeftWall),
            ],
        };
        // hole loop runs clockwise so the fluid is consistently on the left
        let cs = self.trapezoid.corners();
        let hole = BoundaryLoop {
            segments: vec![
                (line(cs[0], cs[3]), BoundaryTag::Obstacle),
                (line(cs[3], cs[2]), BoundaryTag::Obstacle),
                (line(cs[2], cs[1]), BoundaryTag::Obstacle),
                (line(cs[1], cs[0]), BoundaryTag::Obstacle),
            ],
        };
        vec![outer, hole]
    }

    fn contains(&self, p: Point) -> bool {
        let w = self.width();
        if !(p.x > 0.0 && p.x < w && p.y > 0.0 && p.y < 1.0) {
            return false;
        }
        if self.trapezoid.contains(p) {
            return false;
        }
        // solid heater bumps: the fluid boundary is the arc
        let r = self.heater_radius;
        for &cx in &self.heater_centers {
            if p.dist(Point::new(cx, 0.0)) < r {
                return false;
            }
        }
        true
    }

    fn fluid_area(&self) -> f64 {
        self.width() - self.trapezoid.area() - PI * self.heater_radius * self.heater_radius
    }

    fn chord_tolerance(&self) -> f64 {
        self.arc_chord_tolerance
    }

    fn circle_for_tag(&self, tag: BoundaryTag) -> Option<Circle> {
        match tag {
            BoundaryTag::HeaterLeft => Some(self.heater_circle(0)),
            BoundaryTag::HeaterRight => Some(self.heater_circle(1)),
            _ => None,
        }
    }
}

/// Plain rectangle (no obstacle, no heaters) for benchmarks and manufactured
/// solutions. Tags: moving `Lid` on top, `LeftWall`/`RightWall` sides,
/// `BottomAdiabatic` bottom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectangleDomain {
    pub width: f64,
    pub height: f64,
}

impl RectangleDomain {
    pub fn new(width: f64, height: f64) -> Result<Self, InvalidGeometry> {
        let d = Self { width, height };
        d.validate()?;
        Ok(d)
    }

    pub fn unit_square() -> Self {
        Self {
            width: 1.0,
            height: 1.0,
        }
    }
}

impl Domain for RectangleDomain {
    fn validate(&self) -> Result<(), InvalidGeometry> {
        if !(self.width > 0.0 && self.height > 0.0)
            || !self.width.is_finite()
            || !self.height.is_finite()
        {
            return Err(InvalidGeometry(format!(
                "rectangle sides must be positive and finite, got {} x {}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    fn boundary_loops(&self) -> Vec<BoundaryLoop> {
        let bl = Point::new(0.0, 0.0);
        let br = Point::new(self.width, 0.0);
        let tr = Point::new(self.width, self.height);
        let tl = Point::new(0.0, self.height);
        let line = |a, b| Segment::Line { start: a, end: b };
        vec![BoundaryLoop {
            segments: vec![
                (line(bl, br), BoundaryTag::BottomAdiabatic),
                (line(br, tr), BoundaryTag::RightWall),
                (line(tr, tl), BoundaryTag::Lid),
                (line(tl, bl), BoundaryTag::LeftWall),
            ],
        }]
    }

    fn contains(&self, p: Point) -> bool {
        p.x > 0.0 && p.x < self.width && p.y > 0.0 && p.y < self.height
    }

    fn fluid_area(&self) -> f64 {
        self.width * self.height
    }
}

/// Right-triangular cavity used by the validation suite: cold moving vertical
/// wall at x = 0 (`LeftWall`), adiabatic bottom (`BottomAdiabatic`), heated
/// hypotenuse (`HeaterLeft`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangularCavity {
    pub height: f64,
}

/// Validation-harness domain matching the right-triangular enclosure
/// configuration (moving cold vertical wall, hot inclined wall, adiabatic
/// bottom).
pub fn triangular_cavity_geometry(height: f64) -> Result<TriangularCavity, InvalidGeometry> {
    let d = TriangularCavity { height };
    d.validate()?;
    Ok(d)
}

impl Domain for TriangularCavity {
    fn validate(&self) -> Result<(), InvalidGeometry> {
        if !(self.height > 0.0) || !self.height.is_finite() {
            return Err(InvalidGeometry(format!(
                "triangular cavity height must be > 0, got {}",
                self.height
            )));
        }
        Ok(())
    }

    fn boundary_loops(&self) -> Vec<BoundaryLoop> {
        let h = self.height;
        let o = Point::new(0.0, 0.0);
        let b = Point::new(h, 0.0);
        let t = Point::new(0.0, h);
        let line = |a, p| Segment::Line { start: a, end: p };
        vec![BoundaryLoop {
            segments: vec![
                (line(o, b), BoundaryTag::BottomAdiabatic),
                (line(b, t), BoundaryTag::HeaterLeft),
                (line(t, o), BoundaryTag::LeftWall),
            ],
        }]
    }

    fn contains(&self, p: Point) -> bool {
        p.x > 0.0 && p.y > 0.0 && p.x + p.y < self.height
    }

    fn fluid_area(&self) -> f64 {
        0.5 * self.height * self.height
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn default_geometry_is_valid() {
        CavityGeometry::default().validate().unwrap();
    }

    #[test]
    fn default_loops_have_expected_segments() {
        let geom = CavityGeometry::default();
        let loops = build_boundary(&geom).unwrap();
        assert_eq!(loops.len(), 2);
        let outer = &loops[0];
        let hole = &loops[1];
        assert_eq!(outer.segments.iter().filter(|(s, _)| s.is_arc()).count(), 2);
        assert_eq!(hole.segments.len(), 4);
        assert!(hole.segments.iter().all(|(s, _)| !s.is_arc()));
        assert!(outer.closure_gap() < 1e-12);
        assert!(hole.closure_gap() < 1e-12);
        // orientation: outer CCW, hole CW
        assert!(outer.signed_area(geom.arc_chord_tolerance) > 0.0);
        assert!(hole.signed_area(geom.arc_chord_tolerance) < 0.0);
    }

    #[test]
    fn heater_touching_side_wall_is_rejected() {
        let geom = CavityGeometry {
            heater_centers: [0.1, 1.9],
            ..CavityGeometry::default()
        };
        let err = build_boundary(&geom).unwrap_err();
        assert!(err.to_string().contains("side wall"), "{err}");
    }

    #[test]
    fn degenerate_trapezoid_rectangle_hole_is_valid() {
        let mut geom = CavityGeometry::default();
        geom.trapezoid.top_half_width = geom.trapezoid.bottom_half_width;
        build_boundary(&geom).unwrap();
    }

    #[test]
    fn overlapping_heaters_rejected() {
        let geom = CavityGeometry {
            heater_centers: [0.9, 1.1],
            ..CavityGeometry::default()
        };
        assert!(geom.validate().is_err());
    }

    #[test]
    fn point_membership() {
        let geom = CavityGeometry::default();
        assert!(!geom.contains(geom.trapezoid.centroid()));
        // inside the left heater bump: solid, outside the fluid
        assert!(!geom.contains(Point::new(
            geom.heater_centers[0],
            geom.heater_radius / 2.0
        )));
        assert!(geom.contains(Point::new(geom.aspect_ratio / 2.0, 0.95)));
        assert!(!geom.contains(Point::new(-0.1, 0.5)));
    }

    #[test]
    fn triangular_cavity_basics() {
        let tri = triangular_cavity_geometry(1.0).unwrap();
        let loops = tri.boundary_loops();
        assert_eq!(loops.len(), 1);
        assert_eq!(loops[0].segments.len(), 3);
        let per = loops[0].total_length();
        assert!((per - (2.0 + 2.0f64.sqrt())).abs() < 1e-12);
        assert!((loops[0].signed_area(1e-3) - 0.5).abs() < 1e-12);
        assert!(triangular_cavity_geometry(0.0).is_err());
    }

    #[test]
    fn tagged_lengths_partition_perimeter() {
        let geom = CavityGeometry::default();
        let loops = geom.boundary_loops();
        let total: f64 = loops.iter().map(|l| l.total_length()).sum();
        let mut by_tag = std::collections::HashMap::new();
        for l in &loops {
            for (seg, tag) in &l.segments {
                *by_tag.entry(*tag).or_insert(0.0) += seg.length();
            }
        }
        let sum: f64 = by_tag.values().sum();
        assert!((sum - total).abs() < 1e-12);
        // both heater arcs present with length pi*r each
        let pr = PI * geom.heater_radius;
        assert!((by_tag[&BoundaryTag::HeaterLeft] - pr).abs() < 1e-12);
        assert!((by_tag[&BoundaryTag::HeaterRight] - pr).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_area_matches_fluid_area() {
        let geom = CavityGeometry::default();
        let mut rng = rand::rngs::StdRng::seed_from_u64(42);
        let n = 200_000;
        let w = geom.width();
        let hits = (0..n)
            .filter(|_| {
                let p = Point::new(rng.gen::<f64>() * w, rng.gen::<f64>());
                geom.contains(p)
            })
            .count();
        let est = w * hits as f64 / n as f64;
        let exact = geom.fluid_area();
        // 4-sigma Monte-Carlo band
        let sigma = w * (0.25f64 / n as f64).sqrt();
        assert!(
            (est - exact).abs() < 4.0 * sigma + 1e-9,
            "MC area {est} vs exact {exact}"
        );
    }

    #[test]
    fn discretized_loops_are_closed_and_simple() {
        let geom = CavityGeometry::default();
        for l in geom.boundary_loops() {
            let d = l.discretize(0.1, geom.arc_chord_tolerance);
            assert_eq!(d.points.len(), d.chords.len());
            // no two non-adjacent chords intersect
            let n = d.points.len();
            for i in 0..n {
                let (a1, b1) = (d.points[i], d.points[(i + 1) % n]);
                for j in i + 1..n {
                    if j == i || (j + 1) % n == i || (i + 1) % n == j {
                        continue;
                    }
                    let (a2, b2) = (d.points[j], d.points[(j + 1) % n]);
                    let d1 = cross(a1, b1, a2) * cross(a1, b1, b2);
                    let d2 = cross(a2, b2, a1) * cross(a2, b2, b1);
                    assert!(
                        !(d1 < 0.0 && d2 < 0.0),
                        "chords {i} and {j} intersect"
                    );
                }
            }
        }
    }

    #[test]
    fn arc_discretization_respects_sagitta() {
        let arc = Segment::Arc {
            center: Point::new(0.0, 0.0),
            radius: 0.15,
            start_angle: PI,
            end_angle: 0.0,
        };
        let tol = 2e-4;
        let pts = arc.discretize(0.05, tol);
        for w in pts.windows(2) {
            let mid = (w[0] + w[1]) * 0.5;
            let sagitta = 0.15 - mid.norm();
            assert!(sagitta <= tol * 1.0001, "sagitta {sagitta} too large");
        }
        // endpoints on the circle
        assert!((pts.first().unwrap().norm() - 0.15).abs() < 1e-12);
        assert!((pts.last().unwrap().norm() - 0.15).abs() < 1e-12);
    }
}
