//! T-intersection road network: paved region, ego routes, traffic lane
//! rings, and crosswalk placement.
//!
//! Layout: the main road runs east-west along the x axis, the stem runs
//! south from the junction at the origin. Right-hand traffic; every arm has
//! one lane per direction.

use crate::geometry::{Polyline, Vec2};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    /// From the stem, turn left onto the westbound lane (crosses eastbound
    /// traffic — the hardest case, and the default).
    Left,
    /// From the stem, turn right onto the eastbound lane.
    Right,
    /// Enter on the west arm and drive straight through to the east arm.
    Straight,
}

/// A traffic lane centerline. Traffic vehicles follow these as closed rings:
/// a vehicle reaching the end re-enters at the start.
#[derive(Clone, Debug)]
pub struct Lane {
    pub centerline: Polyline,
    /// Target cruise speed for vehicles on this lane, m/s.
    pub speed_limit: f64,
}

#[derive(Clone, Debug)]
pub struct MapSpec {
    pub lane_width: f64,
    pub arm_length: f64,
    pub route: Route,
    pub crosswalks: Vec<(Vec2, Vec2)>,
    pub spawn_point: Vec2,
    pub spawn_heading: f64,
    pub goal_point: Vec2,
    /// Ego route centerline, sampled so consecutive waypoints are < 5 m apart.
    pub waypoints: Polyline,
    pub traffic_lanes: Vec<Lane>,
}

const WAYPOINT_SPACING: f64 = 2.0;

fn sample_arc(center: Vec2, radius: f64, start_angle: f64, end_angle: f64, out: &mut Vec<Vec2>) {
    let arc_len = radius * (end_angle - start_angle).abs();
    let n = (arc_len / 1.0).ceil().max(2.0) as usize;
    for i in 1..=n {
        let a = start_angle + (end_angle - start_angle) * i as f64 / n as f64;
        out.push(center + Vec2::from_angle(a) * radius);
    }
}

fn resample(points: Vec<Vec2>, spacing: f64) -> Vec<Vec2> {
    let pl = Polyline::new(points);
    let n = (pl.length() / spacing).ceil() as usize;
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..=n {
        out.push(pl.point_at(pl.length() * i as f64 / n as f64));
    }
    out
}

impl MapSpec {
    pub fn build(lane_width: f64, arm_length: f64, route: Route, traffic_speed_limit: f64) -> Self {
        let half = lane_width / 2.0; // lane center offset from the road axis
        let w = lane_width; // full road half-width
        let spawn_margin = 5.0;

        // Ego route, built from straight runs joined by circular arcs.
        let (spawn_point, spawn_heading, goal_point, raw): (Vec2, f64, Vec2, Vec<Vec2>) =
            match route {
                Route::Left => {
                    let spawn = Vec2::new(half, -arm_length + spawn_margin);
                    let goal = Vec2::new(-arm_length + spawn_margin, half);
                    let mut pts = vec![spawn, Vec2::new(half, -6.0)];
                    // quarter turn: (half,-6) -> (-6, half), center (-6,-6)
                    sample_arc(Vec2::new(-6.0, -6.0), 6.0 + half, 0.0, std::f64::consts::FRAC_PI_2, &mut pts);
                    pts.push(goal);
                    (spawn, std::f64::consts::FRAC_PI_2, goal, pts)
                }
                Route::Right => {
                    let spawn = Vec2::new(half, -arm_length + spawn_margin);
                    let goal = Vec2::new(arm_length - spawn_margin, -half);
                    let mut pts = vec![spawn, Vec2::new(half, -6.0)];
                    // quarter turn: (half,-6) -> (6,-half), center (6,-6)
                    sample_arc(
                        Vec2::new(6.0, -6.0),
                        6.0 - half,
                        std::f64::consts::PI,
                        std::f64::consts::FRAC_PI_2,
                        &mut pts,
                    );
                    pts.push(goal);
                    (spawn, std::f64::consts::FRAC_PI_2, goal, pts)
                }
                Route::Straight => {
                    let spawn = Vec2::new(-arm_length + spawn_margin, -half);
                    let goal = Vec2::new(arm_length - spawn_margin, -half);
                    (spawn, 0.0, goal, vec![spawn, goal])
                }
            };
        let waypoints = Polyline::new(resample(raw, WAYPOINT_SPACING));

        // Traffic lane rings. These are mutually non-crossing so autopilot
        // needs no junction arbitration; the ego's route is what crosses them.
        let l = arm_length;
        let eastbound = Lane {
            centerline: Polyline::new(resample(
                vec![Vec2::new(-l, -half), Vec2::new(l, -half)],
                WAYPOINT_SPACING,
            )),
            speed_limit: traffic_speed_limit,
        };
        let westbound = Lane {
            centerline: Polyline::new(resample(
                vec![Vec2::new(l, half), Vec2::new(-l, half)],
                WAYPOINT_SPACING,
            )),
            speed_limit: traffic_speed_limit,
        };
        let stem_south = Lane {
            centerline: Polyline::new(resample(
                vec![Vec2::new(-half, -6.0), Vec2::new(-half, -l)],
                WAYPOINT_SPACING,
            )),
            speed_limit: traffic_speed_limit * 0.75,
        };

        let crosswalks = vec![
            (Vec2::new(-8.0, -w), Vec2::new(-8.0, w)),
            (Vec2::new(8.0, -w), Vec2::new(8.0, w)),
            (Vec2::new(-w, -8.0), Vec2::new(w, -8.0)),
        ];

        MapSpec {
            lane_width,
            arm_length,
            route,
            crosswalks,
            spawn_point,
            spawn_heading,
            goal_point,
            waypoints,
            traffic_lanes: vec![eastbound, westbound, stem_south],
        }
    }

    /// Whether a point lies on the paved surface of either road.
    pub fn is_paved(&self, p: Vec2) -> bool {
        let w = self.lane_width;
        let l = self.arm_length;
        let on_main = p.x.abs() <= l && p.y.abs() <= w;
        let on_stem = p.x.abs() <= w && p.y <= w && p.y >= -l;
        on_main || on_stem
    }

    /// The junction interior, where the two roads overlap.
    pub fn in_junction(&self, p: Vec2) -> bool {
        p.x.abs() <= self.lane_width && p.y.abs() <= self.lane_width
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn waypoints_start_and_end_at_spawn_and_goal() {
        for route in [Route::Left, Route::Right, Route::Straight] {
            let m = MapSpec::build(3.5, 60.0, route, 8.33);
            assert!(m.waypoints.points[0].dist(m.spawn_point) < 1e-9);
            assert!(m.waypoints.points.last().unwrap().dist(m.goal_point) < 1e-9);
            for w in m.waypoints.points.windows(2) {
                assert!(w[0].dist(w[1]) < 5.0);
            }
        }
    }

    #[test]
    fn crosswalks_lie_on_pavement() {
        let m = MapSpec::build(3.5, 60.0, Route::Left, 8.33);
        for (a, b) in &m.crosswalks {
            for t in 0..=10 {
                let p = *a + (*b - *a) * (t as f64 / 10.0);
                assert!(m.is_paved(p), "crosswalk point {p:?} off pavement");
            }
        }
    }

    #[test]
    fn paved_region_shape() {
        let m = MapSpec::build(3.5, 60.0, Route::Left, 8.33);
        assert!(m.is_paved(Vec2::new(50.0, 1.0)));
        assert!(m.is_paved(Vec2::new(1.0, -50.0)));
        assert!(!m.is_paved(Vec2::new(10.0, 5.0)));
        assert!(!m.is_paved(Vec2::new(5.0, -10.0)));
        assert!(m.in_junction(Vec2::new(0.0, 0.0)));
        assert!(!m.in_junction(Vec2::new(0.0, -4.0)));
    }

    #[test]
    fn traffic_lanes_do_not_cross_each_other() {
        let m = MapSpec::build(3.5, 60.0, Route::Left, 8.33);
        for (i, a) in m.traffic_lanes.iter().enumerate() {
            for b in m.traffic_lanes.iter().skip(i + 1) {
                for p in &a.centerline.points {
                    let (_, lat) = b.centerline.project(*p);
                    assert!(lat.abs() > 2.0, "lanes closer than 2 m at {p:?}");
                }
            }
        }
    }
}
