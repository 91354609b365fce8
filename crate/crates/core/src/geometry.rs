//! Planar geometry primitives: vectors, polylines with arc-length queries,
//! and oriented-box overlap tests used by collision detection.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// Z-component of the cross product; positive when `other` is to the left.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dist(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n > 0.0 {
            self * (1.0 / n)
        } else {
            Vec2::ZERO
        }
    }

    pub fn from_angle(theta: f64) -> Vec2 {
        Vec2::new(theta.cos(), theta.sin())
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Rotate by `theta` radians counter-clockwise.
    pub fn rotated(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
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

/// Normalize an angle to (-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut a = theta % two_pi;
    if a <= -std::f64::consts::PI {
        a += two_pi;
    } else if a > std::f64::consts::PI {
        a -= two_pi;
    }
    a
}

/// Distance from point `p` to the segment `a`-`b`.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

/// Rectangle with arbitrary orientation, described by center pose and half-extents.
#[derive(Clone, Copy, Debug)]
pub struct OrientedBox {
    pub center: Vec2,
    pub heading: f64,
    pub half_len: f64,
    pub half_wid: f64,
}

impl OrientedBox {
    pub fn new(center: Vec2, heading: f64, length: f64, width: f64) -> Self {
        OrientedBox {
            center,
            heading,
            half_len: length / 2.0,
            half_wid: width / 2.0,
        }
    }

    pub fn corners(&self) -> [Vec2; 4] {
        let fwd = Vec2::from_angle(self.heading);
        let left = fwd.perp();
        let f = fwd * self.half_len;
        let l = left * self.half_wid;
        [
            self.center + f + l,
            self.center + f - l,
            self.center - f - l,
            self.center - f + l,
        ]
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let d = (p - self.center).rotated(-self.heading);
        d.x.abs() <= self.half_len && d.y.abs() <= self.half_wid
    }

    /// Overlap test against a disc (used for pedestrians).
    pub fn overlaps_disc(&self, center: Vec2, radius: f64) -> bool {
        let d = (center - self.center).rotated(-self.heading);
        let cx = d.x.clamp(-self.half_len, self.half_len);
        let cy = d.y.clamp(-self.half_wid, self.half_wid);
        (d - Vec2::new(cx, cy)).norm() <= radius
    }
}

/// Exact separating-axis overlap test between two oriented boxes.
///
/// Projects both corner sets onto the 4 candidate axes (2 edge normals per
/// box); the boxes overlap iff no axis separates the projections.
pub fn boxes_overlap(a: &OrientedBox, b: &OrientedBox) -> bool {
    let ca = a.corners();
    let cb = b.corners();
    let axes = [
        Vec2::from_angle(a.heading),
        Vec2::from_angle(a.heading).perp(),
        Vec2::from_angle(b.heading),
        Vec2::from_angle(b.heading).perp(),
    ];
    for axis in axes {
        let (mut min_a, mut max_a) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in ca {
            let v = p.dot(axis);
            min_a = min_a.min(v);
            max_a = max_a.max(v);
        }
        let (mut min_b, mut max_b) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in cb {
            let v = p.dot(axis);
            min_b = min_b.min(v);
            max_b = max_b.max(v);
        }
        if max_a < min_b || max_b < min_a {
            return false;
        }
    }
    true
}

/// Polyline with arc-length parameterization. Used for ego routes and
/// traffic lane centerlines.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<Vec2>,
    cum: Vec<f64>,
}

impl Polyline {
    pub fn new(points: Vec<Vec2>) -> Self {
        assert!(points.len() >= 2, "polyline needs at least two points");
        let mut cum = Vec::with_capacity(points.len());
        let mut s = 0.0;
        cum.push(0.0);
        for w in points.windows(2) {
            s += w[0].dist(w[1]);
            cum.push(s);
        }
        Polyline { points, cum }
    }

    pub fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    /// Point at arc length `s`, clamped to the polyline extent.
    pub fn point_at(&self, s: f64) -> Vec2 {
        let s = s.clamp(0.0, self.length());
        let i = match self.cum.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
            Ok(i) => i.min(self.points.len() - 2),
            Err(i) => i - 1,
        };
        let seg_len = self.cum[i + 1] - self.cum[i];
        let t = if seg_len > 0.0 { (s - self.cum[i]) / seg_len } else { 0.0 };
        self.points[i] + (self.points[i + 1] - self.points[i]) * t
    }

    /// Unit tangent of the segment containing arc length `s`.
    pub fn tangent_at(&self, s: f64) -> Vec2 {
        let s = s.clamp(0.0, self.length());
        let i = match self.cum.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
            Ok(i) => i.min(self.points.len() - 2),
            Err(i) => i - 1,
        };
        (self.points[i + 1] - self.points[i]).normalized()
    }

    /// Project `p` onto the polyline: returns (arc length, signed lateral
    /// offset). Positive offset is to the left of travel direction.
    pub fn project(&self, p: Vec2) -> (f64, f64) {
        let mut best = (0.0, f64::INFINITY, 0.0);
        for i in 0..self.points.len() - 1 {
            let a = self.points[i];
            let b = self.points[i + 1];
            let ab = b - a;
            let len2 = ab.dot(ab);
            if len2 == 0.0 {
                continue;
            }
            let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
            let q = a + ab * t;
            let d = p.dist(q);
            if d < best.1 {
                let side = ab.normalized().cross(p - q).signum();
                best = (self.cum[i] + t * len2.sqrt(), d, side * d);
            }
        }
        (best.0, best.2)
    }

    /// Like [`project`](Self::project), but the first and last segments
    /// extend to infinity, so points beyond the polyline's ends report
    /// only their perpendicular offset.
    pub fn project_extended(&self, p: Vec2) -> (f64, f64) {
        let first = self.points[0];
        let first_dir = (self.points[1] - first).normalized();
        let along_start = (p - first).dot(first_dir);
        if along_start < 0.0 {
            return (along_start, first_dir.cross(p - first));
        }
        let last = *self.points.last().unwrap();
        let last_dir = (last - self.points[self.points.len() - 2]).normalized();
        let along_end = (p - last).dot(last_dir);
        if along_end > 0.0 {
            return (self.length() + along_end, last_dir.cross(p - last));
        }
        self.project(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_boxes_overlap() {
        let b = OrientedBox::new(Vec2::new(1.0, 2.0), 0.7, 4.5, 2.0);
        assert!(boxes_overlap(&b, &b));
    }

    #[test]
    fn distant_boxes_do_not_overlap() {
        let a = OrientedBox::new(Vec2::ZERO, 0.0, 4.5, 2.0);
        let b = OrientedBox::new(Vec2::new(20.0, 0.0), 0.0, 4.5, 2.0);
        assert!(!boxes_overlap(&a, &b));
    }

    #[test]
    fn rotated_near_miss() {
        // 45-degree box whose corner stops just short of the other box.
        let a = OrientedBox::new(Vec2::ZERO, 0.0, 2.0, 2.0);
        let b = OrientedBox::new(Vec2::new(2.5, 0.0), std::f64::consts::FRAC_PI_4, 2.0, 2.0);
        assert!(!boxes_overlap(&a, &b));
        let c = OrientedBox::new(Vec2::new(2.3, 0.0), std::f64::consts::FRAC_PI_4, 2.0, 2.0);
        assert!(boxes_overlap(&a, &c));
    }

    #[test]
    fn disc_overlap_edge_cases() {
        let b = OrientedBox::new(Vec2::ZERO, 0.0, 4.0, 2.0);
        assert!(b.overlaps_disc(Vec2::new(2.2, 0.0), 0.3));
        assert!(!b.overlaps_disc(Vec2::new(2.4, 0.0), 0.3));
        assert!(b.overlaps_disc(Vec2::ZERO, 0.1));
    }

    #[test]
    fn polyline_projection_and_arclength() {
        let pl = Polyline::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(10.0, 0.0),
            Vec2::new(10.0, 10.0),
        ]);
        assert_eq!(pl.length(), 20.0);
        assert_eq!(pl.point_at(15.0), Vec2::new(10.0, 5.0));
        let (s, lat) = pl.project(Vec2::new(5.0, 2.0));
        assert!((s - 5.0).abs() < 1e-12);
        assert!((lat - 2.0).abs() < 1e-12); // left of +x travel
        let (s2, lat2) = pl.project(Vec2::new(12.0, 5.0));
        assert!((s2 - 15.0).abs() < 1e-12);
        assert!((lat2 + 2.0).abs() < 1e-12);
    }

    #[test]
    fn wrap_angle_range() {
        for k in -20..20 {
            let a = wrap_angle(0.37 * k as f64 * 3.0);
            assert!(a > -std::f64::consts::PI && a <= std::f64::consts::PI);
        }
        assert_eq!(wrap_angle(std::f64::consts::PI), std::f64::consts::PI);
    }
}
