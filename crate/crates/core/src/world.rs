//! World state and the deterministic simulation step: autopilot traffic,
//! scripted pedestrians, collision detection against the ego, lane
//! classification, and seeded scenario spawning.

use crate::geometry::{boxes_overlap, OrientedBox, Vec2};
use crate::map::{MapSpec, Route};
use crate::pedestrian::{PedestrianState, PED_RADIUS};
use crate::vehicle::{step_ego, VehicleKind, VehicleState, A_MAX, B_MAX, MAX_STEER_ANGLE, WHEELBASE};
use rand::RngExt;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bumper-to-bumper distance below which autopilot brakes fully.
pub const SAFE_DISTANCE: f64 = 2.5;
/// Forward corridor length scanned for obstacles.
const CORRIDOR_LENGTH: f64 = 20.0;
/// Half-width of the obstacle corridor around the lane centerline.
const CORRIDOR_HALF_WIDTH: f64 = 2.3;
/// Desired time headway for the car-following law.
const TIME_HEADWAY: f64 = 1.5;
const PURE_PURSUIT_LOOKAHEAD: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CollisionKind {
    Vehicle,
    Pedestrian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub other_kind: CollisionKind,
    pub other_index: usize,
    pub tick: u64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub veh: usize,
    pub ped: usize,
    pub route: Route,
    pub dt: f64,
    pub lane_width: f64,
    pub arm_length: f64,
    /// Speed limit used by reward clamping and observation normalization.
    pub v_limit: f64,
    /// Cruise speed target for autopilot traffic.
    pub traffic_speed_limit: f64,
    /// Hard simulator speed cap as a multiple of `v_limit`.
    pub v_cap_factor: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            veh: 4,
            ped: 2,
            route: Route::Left,
            dt: 0.1,
            lane_width: 3.5,
            arm_length: 60.0,
            v_limit: 8.33,
            traffic_speed_limit: 8.33,
            v_cap_factor: 2.0,
        }
    }
}

impl ScenarioConfig {
    pub fn v_cap(&self) -> f64 {
        self.v_cap_factor * self.v_limit
    }
}

#[derive(Clone, Debug)]
pub struct WorldState {
    pub ego: VehicleState,
    pub traffic: Vec<VehicleState>,
    pub pedestrians: Vec<PedestrianState>,
    pub map: MapSpec,
    pub tick: u64,
    pub dt: f64,
    pub v_cap: f64,
}

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("vehicle index {0} is out of range or not a traffic vehicle")]
    BadVehicleIndex(usize),
    #[error("could not place {entity} #{index} after {attempts} attempts")]
    SpawnFailed {
        entity: &'static str,
        index: usize,
        attempts: usize,
    },
}

/// Exact oriented-box overlap test (separating axes).
pub fn detect_collision(a: &OrientedBox, b: &OrientedBox) -> bool {
    boxes_overlap(a, b)
}

/// Pure-pursuit steering toward a point 5 m ahead on the lane, plus
/// gap-keeping: full brake inside the 2.5 m safe distance, otherwise an
/// IDM-style acceleration toward the lane speed target.
pub fn autopilot(world: &WorldState, vehicle_index: usize) -> Result<(f64, f64, f64), WorldError> {
    let v = world
        .traffic
        .get(vehicle_index)
        .ok_or(WorldError::BadVehicleIndex(vehicle_index))?;
    let lane_idx = v.lane_ref.ok_or(WorldError::BadVehicleIndex(vehicle_index))?;
    let lane = &world.map.traffic_lanes[lane_idx];
    let ring_len = lane.centerline.length();
    let (s, _) = lane.centerline.project(v.position);

    // Steering: pure pursuit on a lookahead point (ring wrap-around).
    let target = lane.centerline.point_at(wrap_s(s + PURE_PURSUIT_LOOKAHEAD, ring_len));
    let local = (target - v.position).rotated(-v.heading);
    let alpha = local.y.atan2(local.x);
    let ld = local.norm().max(1.0);
    let steer_angle = (2.0 * WHEELBASE * alpha.sin() / ld).atan();
    let steer = (steer_angle / MAX_STEER_ANGLE).clamp(-1.0, 1.0);

    // Nearest leading obstacle in the forward corridor of this lane.
    let mut best: Option<(f64, f64)> = None; // (bumper gap, obstacle speed along lane)
    let mut consider = |pos: Vec2, half_len: f64, vel: Vec2| {
        let (so, lat) = lane.centerline.project(pos);
        let ds = wrap_s(so - s, ring_len);
        if ds > 1e-9 && ds <= CORRIDOR_LENGTH && lat.abs() <= CORRIDOR_HALF_WIDTH {
            let gap = ds - v.length / 2.0 - half_len;
            let along = vel.dot(lane.centerline.tangent_at(so));
            if best.map_or(true, |(g, _)| gap < g) {
                best = Some((gap, along.max(0.0)));
            }
        }
    };
    for (i, other) in world.traffic.iter().enumerate() {
        if i != vehicle_index {
            consider(other.position, other.length / 2.0, other.velocity());
        }
    }
    consider(world.ego.position, world.ego.length / 2.0, world.ego.velocity());
    for p in &world.pedestrians {
        consider(p.position, PED_RADIUS, p.velocity());
    }

    if let Some((gap, _)) = best {
        if gap < SAFE_DISTANCE {
            return Ok((0.0, steer, 1.0));
        }
    }

    let v0 = lane.speed_limit * v.kind.speed_factor();
    let free = A_MAX * (1.0 - (v.speed / v0).powi(4));
    let accel = match best {
        Some((gap, lead_speed)) => {
            let approach = v.speed * (v.speed - lead_speed)
                / (2.0 * (A_MAX * B_MAX / 2.0).sqrt());
            let desired_gap = SAFE_DISTANCE + TIME_HEADWAY * v.speed + approach.max(0.0);
            free - A_MAX * (desired_gap / gap.max(0.1)).powi(2)
        }
        None => free,
    };
    let throttle = (accel / A_MAX).clamp(0.0, 1.0);
    let brake = (-accel / B_MAX).clamp(0.0, 1.0);
    Ok((throttle, steer, brake))
}

fn wrap_s(s: f64, len: f64) -> f64 {
    let mut s = s % len;
    if s < 0.0 {
        s += len;
    }
    s
}

/// Fraction of the ego's footprint corners off the pavement and in
/// non-route lanes. Both values are quarter-fractions in {0, .25, .5, .75, 1}.
pub fn classify_lane(ego: &VehicleState, map: &MapSpec) -> (f64, f64) {
    let mut offroad = 0u32;
    let mut otherlane = 0u32;
    // Corners within this distance of the route centerline count as on-route.
    let route_band = map.lane_width / 2.0 + 0.3;
    for corner in ego.footprint().corners() {
        if !map.is_paved(corner) {
            offroad += 1;
        } else if map.in_junction(corner) {
            // The route sweeps the junction interior; never penalized.
        } else {
            let (_, lat) = map.waypoints.project_extended(corner);
            if lat.abs() > route_band {
                otherlane += 1;
            }
        }
    }
    (offroad as f64 / 4.0, otherlane as f64 / 4.0)
}

/// Advance the world by one tick. Returns the stepped world and the first
/// ego collision, ordered by (distance to ego, vehicles before pedestrians,
/// index). Pure function of its inputs.
pub fn step_world(world: &WorldState, throttle: f64, steer: f64, brake: f64) -> (WorldState, Option<CollisionEvent>) {
    let mut next = world.clone();
    next.tick = world.tick + 1;

    // All autopilot decisions are taken against the pre-step snapshot.
    let actions: Vec<(f64, f64, f64)> = (0..world.traffic.len())
        .map(|i| autopilot(world, i).expect("traffic vehicle with lane"))
        .collect();

    next.ego = step_ego(&world.ego, throttle, steer, brake, world.dt, world.v_cap);

    for (i, act) in actions.iter().enumerate() {
        let stepped = step_ego(&world.traffic[i], act.0, act.1, act.2, world.dt, world.v_cap);
        next.traffic[i] = stepped;
        // Ring wrap: past the lane end, re-enter at the start.
        let lane = &world.map.traffic_lanes[stepped.lane_ref.unwrap()];
        let (s, _) = lane.centerline.project(stepped.position);
        if s >= lane.centerline.length() - 0.25 {
            next.traffic[i].position = lane.centerline.point_at(0.0);
            next.traffic[i].heading = lane.centerline.tangent_at(0.0).angle();
        }
    }

    let vehicle_positions: Vec<Vec2> = std::iter::once(next.ego.position)
        .chain(next.traffic.iter().map(|t| t.position))
        .collect();
    for p in next.pedestrians.iter_mut() {
        let paused = p.blocked(vehicle_positions.iter().copied());
        p.step(world.dt, paused);
    }

    let collision = first_ego_collision(&next);
    (next, collision)
}

fn first_ego_collision(world: &WorldState) -> Option<CollisionEvent> {
    let ego_box = world.ego.footprint();
    let mut hits: Vec<(f64, u8, usize)> = Vec::new();
    for (i, t) in world.traffic.iter().enumerate() {
        if detect_collision(&ego_box, &t.footprint()) {
            hits.push((world.ego.position.dist(t.position), 0, i));
        }
    }
    for (i, p) in world.pedestrians.iter().enumerate() {
        if ego_box.overlaps_disc(p.position, PED_RADIUS) {
            hits.push((world.ego.position.dist(p.position), 1, i));
        }
    }
    hits.into_iter()
        .min_by(|a, b| a.partial_cmp(b).unwrap())
        .map(|(_, kind, idx)| CollisionEvent {
            other_kind: if kind == 0 {
                CollisionKind::Vehicle
            } else {
                CollisionKind::Pedestrian
            },
            other_index: idx,
            tick: world.tick,
        })
}

const SPAWN_ATTEMPTS: usize = 1000;

/// Seeded-deterministic scenario placement: ego at the route spawn point,
/// traffic on lane rings with safe initial gaps, pedestrians on crosswalk
/// or jaywalk paths (80% crosswalk users, rounded).
pub fn spawn_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<WorldState, WorldError> {
    let map = MapSpec::build(cfg.lane_width, cfg.arm_length, cfg.route, cfg.traffic_speed_limit);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut ego = VehicleState::new(map.spawn_point, map.spawn_heading, VehicleKind::Car);
    ego.speed = 0.0;

    let mut traffic: Vec<VehicleState> = Vec::with_capacity(cfg.veh);
    for i in 0..cfg.veh {
        let mut placed = false;
        for attempt in 0..SPAWN_ATTEMPTS {
            // Round-robin over lanes, drifting to other lanes when the
            // preferred one is too crowded to accept another vehicle.
            let lane_idx = (i + attempt / 50) % map.traffic_lanes.len();
            let lane = &map.traffic_lanes[lane_idx];
            let kind = match rng.random_range(0..10) {
                0..6 => VehicleKind::Car,
                6..8 => VehicleKind::Motorcycle,
                _ => VehicleKind::Cycle,
            };
            let s = rng.random_range(0.0..lane.centerline.length());
            let pos = lane.centerline.point_at(s);
            let heading = lane.centerline.tangent_at(s).angle();
            let mut cand = VehicleState::new(pos, heading, kind);
            cand.lane_ref = Some(lane_idx);
            cand.speed = rng.random_range(0.3..0.8) * lane.speed_limit * kind.speed_factor();
            if !placement_ok(&cand, &ego, &traffic, &map) {
                continue;
            }
            traffic.push(cand);
            placed = true;
            break;
        }
        if !placed {
            return Err(WorldError::SpawnFailed {
                entity: "vehicle",
                index: i,
                attempts: SPAWN_ATTEMPTS,
            });
        }
    }

    let n_crosswalk = (0.8 * cfg.ped as f64).round() as usize;
    let mut pedestrians = Vec::with_capacity(cfg.ped);
    for i in 0..cfg.ped {
        let uses_crosswalk = i < n_crosswalk;
        let mut placed = false;
        for _ in 0..SPAWN_ATTEMPTS {
            let path = if uses_crosswalk {
                let (a, b) = map.crosswalks[rng.random_range(0..map.crosswalks.len())];
                crossing_path(a, b)
            } else {
                jaywalk_path(&map, &mut rng)
            };
            let progress = rng.random_range(0.0..path.length());
            let dir = if rng.random_range(0..2) == 0 { 1.0 } else { -1.0 };
            let cand = PedestrianState::new(path, progress, dir, uses_crosswalk);
            let clear = traffic
                .iter()
                .all(|t| !t.footprint().overlaps_disc(cand.position, PED_RADIUS + 0.7))
                && cand.position.dist(ego.position) > 3.0;
            if clear {
                pedestrians.push(cand);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(WorldError::SpawnFailed {
                entity: "pedestrian",
                index: i,
                attempts: SPAWN_ATTEMPTS,
            });
        }
    }

    Ok(WorldState {
        ego,
        traffic,
        pedestrians,
        map,
        tick: 0,
        dt: cfg.dt,
        v_cap: cfg.v_cap(),
    })
}

fn placement_ok(cand: &VehicleState, ego: &VehicleState, traffic: &[VehicleState], map: &MapSpec) -> bool {
    if cand.position.dist(ego.position) < 10.0 {
        return false;
    }
    // Keep initial traffic out of the junction so rings start free-flowing.
    if map.in_junction(cand.position) {
        return false;
    }
    for other in traffic {
        if detect_collision(&cand.footprint(), &other.footprint()) {
            return false;
        }
        if cand.lane_ref == other.lane_ref {
            let lane = &map.traffic_lanes[cand.lane_ref.unwrap()];
            let len = lane.centerline.length();
            let (sa, _) = lane.centerline.project(cand.position);
            let (sb, _) = lane.centerline.project(other.position);
            let ds = wrap_s(sa - sb, len).min(wrap_s(sb - sa, len));
            if ds < SAFE_DISTANCE + cand.length.max(other.length) {
                return false;
            }
        }
    }
    true
}

fn crossing_path(a: Vec2, b: Vec2) -> crate::geometry::Polyline {
    // Extend 1.5 m past both curbs so pedestrians start off the road.
    let dir = (b - a).normalized();
    crate::geometry::Polyline::new(vec![a - dir * 1.5, b + dir * 1.5])
}

fn jaywalk_path(map: &MapSpec, rng: &mut ChaCha8Rng) -> crate::geometry::Polyline {
    let w = map.lane_width + 1.5;
    let reach = map.arm_length - 5.0;
    // Pick an arm, then a crossing station away from the junction mouth.
    match rng.random_range(0..3) {
        0 => {
            let x = rng.random_range(10.0..reach);
            crate::geometry::Polyline::new(vec![Vec2::new(x, -w), Vec2::new(x, w)])
        }
        1 => {
            let x = -rng.random_range(10.0..reach);
            crate::geometry::Polyline::new(vec![Vec2::new(x, -w), Vec2::new(x, w)])
        }
        _ => {
            let y = -rng.random_range(10.0..reach);
            crate::geometry::Polyline::new(vec![Vec2::new(-w, y), Vec2::new(w, y)])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world_with_traffic(veh: usize, ped: usize, seed: u64) -> WorldState {
        let cfg = ScenarioConfig { veh, ped, ..Default::default() };
        spawn_scenario(&cfg, seed).unwrap()
    }

    /// Place a traffic vehicle on lane `lane_idx` at arc length `s`.
    fn put_vehicle(world: &mut WorldState, lane_idx: usize, s: f64, speed: f64) -> usize {
        let lane = &world.map.traffic_lanes[lane_idx];
        let pos = lane.centerline.point_at(s);
        let heading = lane.centerline.tangent_at(s).angle();
        let mut v = VehicleState::new(pos, heading, VehicleKind::Car);
        v.lane_ref = Some(lane_idx);
        v.speed = speed;
        world.traffic.push(v);
        world.traffic.len() - 1
    }

    #[test]
    fn autopilot_full_brake_inside_safe_distance() {
        let mut world = world_with_traffic(0, 0, 0);
        // Two cars 5.5 m apart center-to-center: bumper gap 1.0 m < 2.5 m.
        let follower = put_vehicle(&mut world, 0, 20.0, 5.0);
        put_vehicle(&mut world, 0, 25.5, 0.0);
        let (throttle, _, brake) = autopilot(&world, follower).unwrap();
        assert_eq!(throttle, 0.0);
        assert_eq!(brake, 1.0);
    }

    #[test]
    fn autopilot_free_road_near_target_speed_is_coasting() {
        let mut world = world_with_traffic(0, 0, 0);
        let limit = world.map.traffic_lanes[0].speed_limit;
        let i = put_vehicle(&mut world, 0, 20.0, limit);
        let (throttle, steer, brake) = autopilot(&world, i).unwrap();
        // At the target speed the car-following law asks for ~zero accel.
        assert!(throttle < 0.05, "throttle {throttle}");
        assert!(brake < 0.05, "brake {brake}");
        assert!(steer.abs() < 0.2, "steer {steer} on a straight");
    }

    #[test]
    fn autopilot_brakes_for_pedestrian_in_corridor() {
        let mut world = world_with_traffic(0, 0, 0);
        let i = put_vehicle(&mut world, 0, 20.0, 6.0);
        let ahead = world.map.traffic_lanes[0].centerline.point_at(25.0);
        world.pedestrians.push(PedestrianState::new(
            crate::geometry::Polyline::new(vec![ahead, ahead + Vec2::new(0.0, 5.0)]),
            0.0,
            1.0,
            false,
        ));
        let (_, _, brake) = autopilot(&world, i).unwrap();
        assert_eq!(brake, 1.0);
    }

    #[test]
    fn spawn_is_seed_deterministic() {
        let a = world_with_traffic(6, 4, 9);
        let b = world_with_traffic(6, 4, 9);
        for (x, y) in a.traffic.iter().zip(&b.traffic) {
            assert_eq!(x.position, y.position);
            assert_eq!(x.speed, y.speed);
            assert_eq!(x.kind, y.kind);
        }
        for (x, y) in a.pedestrians.iter().zip(&b.pedestrians) {
            assert_eq!(x.position, y.position);
        }
        let c = world_with_traffic(6, 4, 10);
        assert!(a.traffic.iter().zip(&c.traffic).any(|(x, y)| x.position != y.position));
    }

    #[test]
    fn eighty_percent_of_pedestrians_use_crosswalks() {
        let w = world_with_traffic(0, 10, 3);
        let on_crosswalk = w.pedestrians.iter().filter(|p| p.uses_crosswalk).count();
        assert_eq!(on_crosswalk, 8);
    }

    #[test]
    fn empty_scenario_spawns_only_ego() {
        let w = world_with_traffic(0, 0, 1);
        assert!(w.traffic.is_empty());
        assert!(w.pedestrians.is_empty());
        assert_eq!(w.ego.position, w.map.spawn_point);
        assert_eq!(w.ego.speed, 0.0);
    }

    #[test]
    fn spawned_entities_do_not_start_in_collision() {
        for seed in 0..20 {
            let w = world_with_traffic(8, 6, seed);
            let (_, collision) = step_world(&w, 0.0, 0.0, 0.0);
            assert!(collision.is_none(), "seed {seed}: {collision:?}");
        }
    }

    #[test]
    fn step_world_is_deterministic() {
        let mut a = world_with_traffic(5, 3, 4);
        let mut b = world_with_traffic(5, 3, 4);
        for _ in 0..100 {
            a = step_world(&a, 0.6, 0.1, 0.0).0;
            b = step_world(&b, 0.6, 0.1, 0.0).0;
        }
        assert_eq!(a.ego.position, b.ego.position);
        for (x, y) in a.traffic.iter().zip(&b.traffic) {
            assert_eq!(x.position, y.position);
            assert_eq!(x.speed, y.speed);
        }
        for (x, y) in a.pedestrians.iter().zip(&b.pedestrians) {
            assert_eq!(x.position, y.position);
        }
    }

    #[test]
    fn lane_classification_on_route_and_offroad() {
        let w = world_with_traffic(0, 0, 0);
        let on_route = w.ego.clone();
        assert_eq!(classify_lane(&on_route, &w.map), (0.0, 0.0));

        let mut off = w.ego.clone();
        off.position = Vec2::new(30.0, 30.0);
        assert_eq!(classify_lane(&off, &w.map), (1.0, 0.0));

        // Fully inside the oncoming side of the stem: other-lane, on pavement.
        let mut wrong = w.ego.clone();
        wrong.position = Vec2::new(-1.75, -20.0);
        wrong.heading = std::f64::consts::FRAC_PI_2;
        let (offroad, otherlane) = classify_lane(&wrong, &w.map);
        assert_eq!(offroad, 0.0);
        assert_eq!(otherlane, 1.0);
    }
}
