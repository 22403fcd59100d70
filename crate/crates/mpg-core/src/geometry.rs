//! Planar convex geometry for the tabletop simulator.
//!
//! Object footprints are convex polygons; everything the primitives need
//! (containment, separation, directional penetration along a push, ray
//! entry for the pusher tip) reduces to a handful of exact-ish convex
//! routines on `f64` coordinates.

use std::ops::{Add, Mul, Neg, Sub};

/// Tolerance for geometric predicates, in meters.
pub const GEOM_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the cross product `self × o`.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Rotates by `angle` radians counter-clockwise.
    pub fn rotated(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Convex polygon with vertices stored counter-clockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    verts: Vec<Vec2>,
}

impl ConvexPolygon {
    /// Builds a polygon from vertices given in either winding order.
    ///
    /// Panics if fewer than 3 vertices or degenerate (area ~ 0).
    pub fn new(mut verts: Vec<Vec2>) -> Self {
        assert!(verts.len() >= 3, "polygon needs at least 3 vertices");
        let area2: f64 = shoelace(&verts);
        assert!(area2.abs() > GEOM_EPS, "degenerate polygon");
        if area2 < 0.0 {
            verts.reverse();
        }
        Self { verts }
    }

    /// Axis-aligned rectangle centered at the origin.
    pub fn rect(half_x: f64, half_y: f64) -> Self {
        Self::new(vec![
            Vec2::new(-half_x, -half_y),
            Vec2::new(half_x, -half_y),
            Vec2::new(half_x, half_y),
            Vec2::new(-half_x, half_y),
        ])
    }

    /// Regular `k`-gon with the given circumradius, one vertex on +x.
    pub fn regular(k: usize, circumradius: f64) -> Self {
        assert!(k >= 3);
        let verts = (0..k)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
                Vec2::new(circumradius * a.cos(), circumradius * a.sin())
            })
            .collect();
        Self::new(verts)
    }

    pub fn verts(&self) -> &[Vec2] {
        &self.verts
    }

    pub fn area(&self) -> f64 {
        shoelace(&self.verts).abs() * 0.5
    }

    pub fn centroid(&self) -> Vec2 {
        let mut cx = 0.0;
        let mut cy = 0.0;
        let mut a2 = 0.0;
        let n = self.verts.len();
        for i in 0..n {
            let p = self.verts[i];
            let q = self.verts[(i + 1) % n];
            let w = p.cross(q);
            a2 += w;
            cx += (p.x + q.x) * w;
            cy += (p.y + q.y) * w;
        }
        Vec2::new(cx / (3.0 * a2), cy / (3.0 * a2))
    }

    /// Maximum vertex distance from the origin (object-frame radius).
    pub fn radius(&self) -> f64 {
        self.verts.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Applies yaw about the origin then translates.
    pub fn transformed(&self, yaw: f64, offset: Vec2) -> Self {
        Self {
            verts: self.verts.iter().map(|v| v.rotated(yaw) + offset).collect(),
        }
    }

    /// Point containment; boundary points count as inside.
    pub fn contains(&self, p: Vec2) -> bool {
        let n = self.verts.len();
        for i in 0..n {
            let a = self.verts[i];
            let b = self.verts[(i + 1) % n];
            if (b - a).cross(p - a) < -GEOM_EPS {
                return false;
            }
        }
        true
    }

    /// Projection interval onto an axis.
    pub fn project(&self, axis: Vec2) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in &self.verts {
            let d = v.dot(axis);
            lo = lo.min(d);
            hi = hi.max(d);
        }
        (lo, hi)
    }

    /// Extent of the projection onto a unit axis.
    pub fn width_along(&self, axis: Vec2) -> f64 {
        let (lo, hi) = self.project(axis);
        hi - lo
    }

    /// Minimum width over all directions (rotating-calipers over edges).
    pub fn min_width(&self) -> f64 {
        let n = self.verts.len();
        let mut best = f64::INFINITY;
        for i in 0..n {
            let e = self.verts[(i + 1) % n] - self.verts[i];
            let len = e.norm();
            if len <= GEOM_EPS {
                continue;
            }
            let axis = e.perp() * (1.0 / len);
            best = best.min(self.width_along(axis));
        }
        best
    }

    /// SAT intersection test; mere touching does not count as overlap.
    pub fn intersects(&self, other: &ConvexPolygon) -> bool {
        !self.separated(other) && !other.separated(self)
    }

    fn separated(&self, other: &ConvexPolygon) -> bool {
        let n = self.verts.len();
        for i in 0..n {
            let e = self.verts[(i + 1) % n] - self.verts[i];
            let axis = e.perp();
            let (a_lo, a_hi) = self.project(axis);
            let (b_lo, b_hi) = other.project(axis);
            let scale = axis.norm();
            if b_lo - a_hi > -GEOM_EPS * scale || a_lo - b_hi > -GEOM_EPS * scale {
                return true;
            }
        }
        false
    }

    /// Minimum distance between two polygons; 0 when they overlap or touch.
    pub fn distance(&self, other: &ConvexPolygon) -> f64 {
        if self.intersects(other) {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for v in &self.verts {
            best = best.min(other.distance_to_point(*v));
        }
        for v in &other.verts {
            best = best.min(self.distance_to_point(*v));
        }
        best
    }

    /// Distance from a point to the polygon; 0 if inside.
    pub fn distance_to_point(&self, p: Vec2) -> f64 {
        if self.contains(p) {
            return 0.0;
        }
        let n = self.verts.len();
        let mut best = f64::INFINITY;
        for i in 0..n {
            let a = self.verts[i];
            let b = self.verts[(i + 1) % n];
            best = best.min(seg_point_dist(a, b, p));
        }
        best
    }

    pub fn bbox(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.verts {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }

    /// First parameter `t in [0, max_t]` at which `origin + t*dir` lies
    /// inside the polygon; `Some(0.0)` when the origin starts inside.
    pub fn ray_entry(&self, origin: Vec2, dir: Vec2, max_t: f64) -> Option<f64> {
        let mut t_lo: f64 = 0.0;
        let mut t_hi: f64 = max_t;
        let n = self.verts.len();
        for i in 0..n {
            let a = self.verts[i];
            let e = self.verts[(i + 1) % n] - a;
            // inside: cross(e, p - a) >= 0
            let c0 = e.cross(origin - a);
            let cu = e.cross(dir);
            if cu.abs() <= GEOM_EPS * e.norm() {
                if c0 < 0.0 {
                    return None; // parallel and outside this half-plane
                }
                continue;
            }
            let t = -c0 / cu;
            if cu > 0.0 {
                t_lo = t_lo.max(t);
            } else {
                t_hi = t_hi.min(t);
            }
            if t_lo > t_hi {
                return None;
            }
        }
        Some(t_lo)
    }

    /// Minimum translation of `mover` along unit direction `dir` so it no
    /// longer overlaps `self`. Returns 0 when they do not overlap.
    pub fn separation_along(&self, mover: &ConvexPolygon, dir: Vec2) -> f64 {
        if !self.intersects(mover) {
            return 0.0;
        }
        // Minkowski difference D = mover ⊕ (-self); origin ∈ D while they
        // overlap. Moving `mover` by t*dir shifts D by t*dir, so the exit
        // parameter of the ray origin - t*dir through D is the separation.
        let mut pts = Vec::with_capacity(self.verts.len() * mover.verts.len());
        for m in &mover.verts {
            for s in &self.verts {
                pts.push(*m - *s);
            }
        }
        let hull = convex_hull(pts);
        let n = hull.len();
        let mut t_hi = f64::INFINITY;
        let origin = Vec2::new(0.0, 0.0);
        let u = -dir;
        for i in 0..n {
            let a = hull[i];
            let e = hull[(i + 1) % n] - a;
            let c0 = e.cross(origin - a);
            let cu = e.cross(u);
            if cu.abs() <= GEOM_EPS {
                continue;
            }
            let t = -c0 / cu;
            if cu < 0.0 {
                t_hi = t_hi.min(t);
            }
        }
        if !t_hi.is_finite() {
            return 0.0;
        }
        t_hi.max(0.0)
    }
}

fn shoelace(verts: &[Vec2]) -> f64 {
    let n = verts.len();
    let mut s = 0.0;
    for i in 0..n {
        s += verts[i].cross(verts[(i + 1) % n]);
    }
    s
}

fn seg_point_dist(a: Vec2, b: Vec2, p: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 <= GEOM_EPS * GEOM_EPS {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

/// Andrew monotone chain; returns CCW hull without repeated endpoint.
pub fn convex_hull(mut pts: Vec<Vec2>) -> Vec<Vec2> {
    pts.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap());
    pts.dedup_by(|a, b| a.dist(*b) <= GEOM_EPS);
    let n = pts.len();
    if n <= 2 {
        return pts;
    }
    let mut hull: Vec<Vec2> = Vec::with_capacity(2 * n);
    for &p in pts.iter().chain(pts.iter().rev().skip(1)) {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            if (b - a).cross(p - a) <= GEOM_EPS {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_basics() {
        let r = ConvexPolygon::rect(0.02, 0.01);
        assert!((r.area() - 0.0008).abs() < 1e-12);
        assert!(r.contains(Vec2::new(0.0, 0.0)));
        assert!(r.contains(Vec2::new(0.02, 0.01))); // corner counts
        assert!(!r.contains(Vec2::new(0.021, 0.0)));
        let c = r.centroid();
        assert!(c.norm() < 1e-12);
    }

    #[test]
    fn winding_is_normalized() {
        let cw = ConvexPolygon::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 0.0),
        ]);
        assert!(cw.contains(Vec2::new(0.5, 0.5)));
        assert!((cw.area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn intersection_and_distance() {
        let a = ConvexPolygon::rect(0.5, 0.5);
        let b = a.transformed(0.0, Vec2::new(0.6, 0.0));
        assert!(a.intersects(&b));
        let c = a.transformed(0.0, Vec2::new(1.5, 0.0));
        assert!(!a.intersects(&c));
        assert!((a.distance(&c) - 0.5).abs() < 1e-9);
        let d = a.transformed(0.3, Vec2::new(3.0, 4.0));
        assert!(a.distance(&d) > 3.0);
    }

    #[test]
    fn min_width_of_rect_and_hexagon() {
        let r = ConvexPolygon::rect(0.04, 0.01);
        assert!((r.min_width() - 0.02).abs() < 1e-9);
        // across-flats width of a regular hexagon = sqrt(3) * circumradius
        let h = ConvexPolygon::regular(6, 0.05);
        assert!((h.min_width() - 0.05 * 3f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn ray_entry_into_box() {
        let b = ConvexPolygon::rect(0.5, 0.5).transformed(0.0, Vec2::new(2.0, 0.0));
        let t = b.ray_entry(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), 10.0);
        assert!((t.unwrap() - 1.5).abs() < 1e-9);
        // starting inside
        let t0 = b.ray_entry(Vec2::new(2.0, 0.0), Vec2::new(1.0, 0.0), 10.0);
        assert_eq!(t0.unwrap(), 0.0);
        // miss
        let miss = b.ray_entry(Vec2::new(0.0, 2.0), Vec2::new(1.0, 0.0), 10.0);
        assert!(miss.is_none());
        // pointing away
        let away = b.ray_entry(Vec2::new(0.0, 0.0), Vec2::new(-1.0, 0.0), 10.0);
        assert!(away.is_none());
    }

    #[test]
    fn separation_resolves_overlap() {
        let a = ConvexPolygon::rect(0.5, 0.5);
        let b = a.transformed(0.0, Vec2::new(0.7, 0.1));
        let dir = Vec2::new(1.0, 0.0);
        let s = a.separation_along(&b, dir);
        assert!((s - 0.3).abs() < 1e-9, "s = {s}");
        let moved = b.transformed(0.0, dir * (s + 1e-9));
        assert!(!a.intersects(&moved));
        // disjoint pair needs no translation
        let c = a.transformed(0.0, Vec2::new(5.0, 0.0));
        assert_eq!(a.separation_along(&c, dir), 0.0);
    }

    #[test]
    fn hull_of_square_grid() {
        let mut pts = Vec::new();
        for i in 0..=3 {
            for j in 0..=3 {
                pts.push(Vec2::new(i as f64, j as f64));
            }
        }
        let hull = convex_hull(pts);
        assert_eq!(hull.len(), 4);
    }
}
