//! Episode orchestration: reset/step interface, observation construction
//! (vector features or stacked occupancy grids), reward wiring, and the
//! three termination rules (collision, goal, 500-step timeout).

use crate::geometry::Vec2;
use crate::map::MapSpec;
use crate::pedestrian::PED_RADIUS;
use crate::reward::{compute_reward, RewardBreakdown, RewardConfig, RewardInputs};
use crate::world::{classify_lane, spawn_scenario, step_world, ScenarioConfig, WorldError, WorldState};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MAX_STEPS: u64 = 500;
pub const GOAL_RADIUS: f64 = 2.0;

/// Vector observation layout: 5 ego features + 8 road users x 5 features.
pub const VECTOR_OBS_DIM: usize = 45;
const NEAREST_USERS: usize = 8;
const REL_POS_SCALE: f64 = 30.0;

/// Grid observation: 84x84 egocentric occupancy, average-pooled 4x4 to
/// 21x21, four stacked frames.
pub const GRID_SIZE: usize = 84;
pub const GRID_POOL: usize = 4;
pub const GRID_POOLED: usize = GRID_SIZE / GRID_POOL; // 21
pub const GRID_FRAMES: usize = 4;
pub const GRID_OBS_DIM: usize = GRID_POOLED * GRID_POOLED * GRID_FRAMES; // 1764
const GRID_CELL: f64 = 0.5; // meters per cell; the grid spans 42 m x 42 m

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub throttle: f64,
    pub steer: f64,
    pub brake: f64,
}

impl Action {
    /// Clamp each command into its range: [0,1], [-1,1], [0,1].
    pub fn new(throttle: f64, steer: f64, brake: f64) -> Self {
        Action {
            throttle: throttle.clamp(0.0, 1.0),
            steer: steer.clamp(-1.0, 1.0),
            brake: brake.clamp(0.0, 1.0),
        }
    }

    /// Map a raw [-1,1]^3 policy output onto the control ranges.
    pub fn from_raw(raw: [f64; 3]) -> Self {
        Action::new((raw[0] + 1.0) / 2.0, raw[1], (raw[2] + 1.0) / 2.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DoneKind {
    Running,
    Collision,
    Goal,
    Timeout,
}

impl DoneKind {
    pub fn is_terminal(self) -> bool {
        self != DoneKind::Running
    }
}

impl std::fmt::Display for DoneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            DoneKind::Running => "running",
            DoneKind::Collision => "collision",
            DoneKind::Goal => "goal",
            DoneKind::Timeout => "timeout",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObsMode {
    Vector,
    Grid,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: RewardBreakdown,
    pub done_kind: DoneKind,
    pub tick: u64,
    pub d_cu: f64,
    pub ego_speed: f64,
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Spawn(#[from] WorldError),
    #[error("step called on a finished episode (outcome {0})")]
    EpisodeFinished(DoneKind),
    #[error(transparent)]
    Reward(#[from] crate::reward::RewardError),
}

/// Arc length remaining to the goal along the route polyline, measured
/// from the closest projection of `p`.
pub fn route_distance(p: Vec2, map: &MapSpec) -> f64 {
    let (s, _) = map.waypoints.project(p);
    map.waypoints.length() - s
}

pub struct Env {
    pub world: WorldState,
    scenario: ScenarioConfig,
    reward_cfg: RewardConfig,
    obs_mode: ObsMode,
    max_steps: u64,
    d_pre: f64,
    d0: f64,
    done: DoneKind,
    frames: Vec<Vec<f64>>, // grid mode only: GRID_FRAMES pooled frames
}

impl Env {
    pub fn reset(
        scenario: ScenarioConfig,
        reward_cfg: RewardConfig,
        obs_mode: ObsMode,
        max_steps: u64,
        seed: u64,
    ) -> Result<(Env, Vec<f64>), EnvError> {
        let world = spawn_scenario(&scenario, seed)?;
        let d0 = route_distance(world.ego.position, &world.map);
        let mut env = Env {
            world,
            scenario,
            reward_cfg,
            obs_mode,
            max_steps,
            d_pre: d0,
            d0,
            done: DoneKind::Running,
            frames: Vec::new(),
        };
        if obs_mode == ObsMode::Grid {
            let frame = env.render_pooled_frame();
            env.frames = vec![frame; GRID_FRAMES];
        }
        let obs = env.observation();
        Ok((env, obs))
    }

    pub fn obs_dim(mode: ObsMode) -> usize {
        match mode {
            ObsMode::Vector => VECTOR_OBS_DIM,
            ObsMode::Grid => GRID_OBS_DIM,
        }
    }

    pub fn d0(&self) -> f64 {
        self.d0
    }

    pub fn done(&self) -> DoneKind {
        self.done
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        if self.done.is_terminal() {
            return Err(EnvError::EpisodeFinished(self.done));
        }
        let (next, collision) = step_world(&self.world, action.throttle, action.steer, action.brake);
        self.world = next;

        let d_cu = route_distance(self.world.ego.position, &self.world.map);
        let at_goal = self.world.ego.position.dist(self.world.map.goal_point) <= GOAL_RADIUS;
        let collided = collision.is_some();
        // Collision takes precedence over goal on the same tick.
        self.done = if collided {
            DoneKind::Collision
        } else if at_goal {
            DoneKind::Goal
        } else if self.world.tick >= self.max_steps {
            DoneKind::Timeout
        } else {
            DoneKind::Running
        };

        let (m_offroad, m_otherlane) = classify_lane(&self.world.ego, &self.world.map);
        let reward = compute_reward(
            &RewardInputs {
                collided,
                reached_goal: self.done == DoneKind::Goal,
                d_pre: self.d_pre,
                d_cu,
                v_speed: self.world.ego.speed,
                v_limit: self.scenario.v_limit,
                m_offroad,
                m_otherlane,
            },
            &self.reward_cfg,
        )?;
        self.d_pre = d_cu;

        if self.obs_mode == ObsMode::Grid {
            let frame = self.render_pooled_frame();
            self.frames.remove(0);
            self.frames.push(frame);
        }

        Ok(StepOutcome {
            observation: self.observation(),
            reward,
            done_kind: self.done,
            tick: self.world.tick,
            d_cu,
            ego_speed: self.world.ego.speed,
        })
    }

    pub fn observation(&self) -> Vec<f64> {
        match self.obs_mode {
            ObsMode::Vector => self.vector_observation(),
            ObsMode::Grid => self.frames.concat(),
        }
    }

    /// [speed/V_limit, cos/sin of heading error, lateral offset/lane width,
    /// D_cu/D_0, then the 8 nearest road users as egocentric
    /// (rel_x/30, rel_y/30, rel_vx/V_limit, rel_vy/V_limit, kind code)].
    fn vector_observation(&self) -> Vec<f64> {
        let w = &self.world;
        let v_limit = self.scenario.v_limit;
        let (s, lateral) = w.map.waypoints.project(w.ego.position);
        let tangent = w.map.waypoints.tangent_at(s);
        let heading_err = crate::geometry::wrap_angle(w.ego.heading - tangent.angle());
        let d_cu = w.map.waypoints.length() - s;

        let mut obs = Vec::with_capacity(VECTOR_OBS_DIM);
        obs.push(w.ego.speed / v_limit);
        obs.push(heading_err.cos());
        obs.push(heading_err.sin());
        obs.push(lateral / w.map.lane_width);
        obs.push(d_cu / self.d0.max(1.0));

        // (distance, tie-break index, rel pos, rel vel, kind code)
        let mut users: Vec<(f64, usize, Vec2, Vec2, f64)> = Vec::new();
        let ego_vel = w.ego.velocity();
        for (i, t) in w.traffic.iter().enumerate() {
            let kind_code = match t.kind {
                crate::vehicle::VehicleKind::Car => 1.0,
                _ => 0.5,
            };
            users.push((
                w.ego.position.dist(t.position),
                i,
                (t.position - w.ego.position).rotated(-w.ego.heading),
                (t.velocity() - ego_vel).rotated(-w.ego.heading),
                kind_code,
            ));
        }
        for (i, p) in w.pedestrians.iter().enumerate() {
            users.push((
                w.ego.position.dist(p.position),
                w.traffic.len() + i,
                (p.position - w.ego.position).rotated(-w.ego.heading),
                (p.velocity() - ego_vel).rotated(-w.ego.heading),
                -1.0,
            ));
        }
        users.sort_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap());
        for slot in 0..NEAREST_USERS {
            if let Some((_, _, rel, rel_v, kind)) = users.get(slot) {
                obs.push(rel.x / REL_POS_SCALE);
                obs.push(rel.y / REL_POS_SCALE);
                obs.push(rel_v.x / v_limit);
                obs.push(rel_v.y / v_limit);
                obs.push(*kind);
            } else {
                obs.extend_from_slice(&[0.0; 5]);
            }
        }
        debug_assert_eq!(obs.len(), VECTOR_OBS_DIM);
        obs
    }

    /// One egocentric binary occupancy frame, average-pooled to 21x21.
    fn render_pooled_frame(&self) -> Vec<f64> {
        let w = &self.world;
        let mut grid = vec![0u8; GRID_SIZE * GRID_SIZE];
        let half_span = GRID_SIZE as f64 * GRID_CELL / 2.0;

        let to_world = |cx: usize, cy: usize| -> Vec2 {
            // Cell center in the ego frame (x forward, y left), then world.
            let ex = (cx as f64 + 0.5) * GRID_CELL - half_span;
            let ey = (cy as f64 + 0.5) * GRID_CELL - half_span;
            w.ego.position + Vec2::new(ex, ey).rotated(w.ego.heading)
        };

        let mut mark_box = |fp: crate::geometry::OrientedBox| {
            // Ego-frame bounding range of the footprint limits the scan.
            let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
            let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
            for c in fp.corners() {
                let e = (c - w.ego.position).rotated(-w.ego.heading);
                lo = Vec2::new(lo.x.min(e.x), lo.y.min(e.y));
                hi = Vec2::new(hi.x.max(e.x), hi.y.max(e.y));
            }
            let c0 = (((lo.x + half_span) / GRID_CELL).floor().max(0.0)) as usize;
            let c1 = (((hi.x + half_span) / GRID_CELL).ceil().min(GRID_SIZE as f64)) as usize;
            let r0 = (((lo.y + half_span) / GRID_CELL).floor().max(0.0)) as usize;
            let r1 = (((hi.y + half_span) / GRID_CELL).ceil().min(GRID_SIZE as f64)) as usize;
            for cy in r0..r1 {
                for cx in c0..c1 {
                    if fp.contains(to_world(cx, cy)) {
                        grid[cy * GRID_SIZE + cx] = 1;
                    }
                }
            }
        };

        for t in &w.traffic {
            mark_box(t.footprint());
        }
        for p in &w.pedestrians {
            let e = (p.position - w.ego.position).rotated(-w.ego.heading);
            if e.x.abs() < half_span && e.y.abs() < half_span {
                let cx = ((e.x + half_span) / GRID_CELL) as usize;
                let cy = ((e.y + half_span) / GRID_CELL) as usize;
                for (dx, dy) in [(0i64, 0i64), (1, 0), (-1, 0), (0, 1), (0, -1)] {
                    let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
                    if (0..GRID_SIZE as i64).contains(&nx) && (0..GRID_SIZE as i64).contains(&ny) {
                        let center = to_world(nx as usize, ny as usize);
                        if center.dist(p.position) <= PED_RADIUS + GRID_CELL * 0.71 {
                            grid[ny as usize * GRID_SIZE + nx as usize] = 1;
                        }
                    }
                }
            }
        }

        let mut pooled = vec![0.0; GRID_POOLED * GRID_POOLED];
        for py in 0..GRID_POOLED {
            for px in 0..GRID_POOLED {
                let mut sum = 0u32;
                for dy in 0..GRID_POOL {
                    for dx in 0..GRID_POOL {
                        sum += grid[(py * GRID_POOL + dy) * GRID_SIZE + px * GRID_POOL + dx] as u32;
                    }
                }
                pooled[py * GRID_POOLED + px] = sum as f64 / (GRID_POOL * GRID_POOL) as f64;
            }
        }
        pooled
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty_scenario() -> ScenarioConfig {
        ScenarioConfig { veh: 0, ped: 0, ..Default::default() }
    }

    fn reset(scenario: ScenarioConfig, mode: ObsMode, seed: u64) -> (Env, Vec<f64>) {
        Env::reset(scenario, RewardConfig::default(), mode, DEFAULT_MAX_STEPS, seed).unwrap()
    }

    #[test]
    fn reset_is_deterministic() {
        let cfg = ScenarioConfig::default();
        let (_, a) = reset(cfg, ObsMode::Vector, 7);
        let (_, b) = reset(cfg, ObsMode::Vector, 7);
        assert_eq!(a, b);
    }

    #[test]
    fn empty_world_zero_fills_user_slots() {
        let (_, obs) = reset(empty_scenario(), ObsMode::Vector, 0);
        assert_eq!(obs.len(), VECTOR_OBS_DIM);
        assert!(obs[5..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grid_observation_has_1764_entries() {
        let (_, obs) = reset(ScenarioConfig::default(), ObsMode::Grid, 3);
        assert_eq!(obs.len(), 1764);
        assert!(obs.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn action_clamps_to_ranges() {
        let a = Action::new(1.4, -2.0, 0.3);
        assert_eq!(a, Action { throttle: 1.0, steer: -1.0, brake: 0.3 });
    }

    #[test]
    fn timeout_at_max_steps() {
        let (mut env, _) = reset(empty_scenario(), ObsMode::Vector, 0);
        let mut last = DoneKind::Running;
        for i in 0..DEFAULT_MAX_STEPS {
            let out = env.step(Action::new(0.0, 0.0, 0.0)).unwrap();
            last = out.done_kind;
            if i < DEFAULT_MAX_STEPS - 1 {
                assert_eq!(last, DoneKind::Running);
            }
        }
        assert_eq!(last, DoneKind::Timeout);
        assert!(env.step(Action::new(0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn goal_detection_with_bonus() {
        let (mut env, _) = reset(empty_scenario(), ObsMode::Vector, 0);
        // Teleport the ego just short of the goal, facing it, and roll forward.
        env.world.ego.heading = match env.world.map.route {
            crate::map::Route::Left => std::f64::consts::PI,
            _ => 0.0,
        };
        env.world.ego.position =
            env.world.map.goal_point - Vec2::from_angle(env.world.ego.heading) * 2.5;
        env.world.ego.speed = 5.0;
        let out = env.step(Action::new(0.5, 0.0, 0.0)).unwrap();
        assert_eq!(out.done_kind, DoneKind::Goal);
        assert_eq!(out.reward.r5, 100.0);
    }

    #[test]
    fn route_distance_endpoints() {
        let (env, _) = reset(empty_scenario(), ObsMode::Vector, 0);
        let map = &env.world.map;
        assert!(route_distance(map.goal_point, map) < 1e-9);
        assert!((route_distance(map.spawn_point, map) - map.waypoints.length()).abs() < 1e-9);
    }

    #[test]
    fn route_distance_midpoint_vertex() {
        let (env, _) = reset(empty_scenario(), ObsMode::Vector, 0);
        let map = &env.world.map;
        // Walk to the vertex at half the waypoint count and hand-sum segments.
        let pts = &map.waypoints.points;
        let mid = pts.len() / 2;
        let mut s = 0.0;
        for w in pts[..=mid].windows(2) {
            s += w[0].dist(w[1]);
        }
        let expect = map.waypoints.length() - s;
        assert!((route_distance(pts[mid], map) - expect).abs() < 1e-9);
    }

    #[test]
    fn grid_frames_shift_by_one() {
        let cfg = ScenarioConfig::default();
        let (mut env, _) = reset(cfg, ObsMode::Grid, 5);
        let before = env.frames.clone();
        env.step(Action::new(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(env.frames[0], before[1]);
        assert_eq!(env.frames[1], before[2]);
        assert_eq!(env.frames[2], before[3]);
    }

    #[test]
    fn fuzz_observations_stay_finite() {
        use rand::RngExt;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut total = 0usize;
        let mut episode = 0u64;
        while total < 100_000 {
            let (mut env, obs) = reset(ScenarioConfig::default(), ObsMode::Vector, episode);
            assert!(obs.iter().all(|v| v.is_finite()));
            loop {
                let a = Action::new(
                    rng.random_range(0.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(0.0..1.0),
                );
                let out = env.step(a).unwrap();
                total += 1;
                assert!(out.observation.iter().all(|v| v.is_finite()));
                assert!(out.d_cu <= env.d0 + 10.0, "projection escaped the route");
                if out.done_kind.is_terminal() || total >= 100_000 {
                    break;
                }
            }
            episode += 1;
        }
    }
}
