//! Trajectory playback: parse a recorded episode CSV, re-simulate the
//! scenario from its seed with the recorded controls, and render textual
//! top-down frames.

use crate::env::Action;
use crate::geometry::Vec2;
use crate::map::Route;
use crate::world::{spawn_scenario, step_world, ScenarioConfig, WorldState};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReplayViewError {
    #[error("trajectory file is missing the '# key=value ...' header line")]
    MissingHeader,
    #[error("trajectory header is missing key {0:?}")]
    MissingKey(&'static str),
    #[error("bad value for {key} in trajectory header: {value:?}")]
    BadValue { key: &'static str, value: String },
    #[error("bad field {field:?} on data line {line}")]
    BadField { line: usize, field: &'static str },
    #[error("scenario could not be respawned: {0}")]
    Spawn(#[from] crate::world::WorldError),
}

/// A trajectory file reduced to what playback needs: the scenario it was
/// recorded in, the spawn seed, and the per-tick controls.
#[derive(Debug)]
pub struct Trajectory {
    pub scenario: ScenarioConfig,
    pub seed: u64,
    pub max_steps: u64,
    pub actions: Vec<Action>,
}

fn header_get<'a>(
    map: &'a HashMap<&str, &str>,
    key: &'static str,
) -> Result<&'a str, ReplayViewError> {
    map.get(key).copied().ok_or(ReplayViewError::MissingKey(key))
}

fn header_parse<T: std::str::FromStr>(
    map: &HashMap<&str, &str>,
    key: &'static str,
) -> Result<T, ReplayViewError> {
    let raw = header_get(map, key)?;
    raw.parse().map_err(|_| ReplayViewError::BadValue {
        key,
        value: raw.to_string(),
    })
}

pub fn parse_trajectory(text: &str) -> Result<Trajectory, ReplayViewError> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) if l.starts_with('#') => break l[1..].trim().to_string(),
            _ => return Err(ReplayViewError::MissingHeader),
        }
    };
    let kv: HashMap<&str, &str> = header
        .split_whitespace()
        .filter_map(|tok| tok.split_once('='))
        .collect();

    let route_raw = header_get(&kv, "route")?;
    let route: Route = serde_json::from_value(serde_json::Value::String(route_raw.into()))
        .map_err(|_| ReplayViewError::BadValue {
            key: "route",
            value: route_raw.to_string(),
        })?;
    let scenario = ScenarioConfig {
        veh: header_parse(&kv, "veh")?,
        ped: header_parse(&kv, "ped")?,
        route,
        dt: header_parse(&kv, "dt")?,
        lane_width: header_parse(&kv, "lane_width")?,
        arm_length: header_parse(&kv, "arm_length")?,
        v_limit: header_parse(&kv, "v_limit")?,
        traffic_speed_limit: header_parse(&kv, "traffic_speed_limit")?,
        v_cap_factor: header_parse(&kv, "v_cap_factor")?,
    };
    let seed = header_parse(&kv, "seed")?;
    let max_steps = header_parse(&kv, "max_steps")?;

    let mut actions = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() || line.starts_with('#') || line.starts_with("tick,") {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let field = |i: usize, name: &'static str| -> Result<f64, ReplayViewError> {
            cols.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or(ReplayViewError::BadField {
                    line: lineno + 1,
                    field: name,
                })
        };
        actions.push(Action::new(
            field(5, "throttle")?,
            field(6, "steer")?,
            field(7, "brake")?,
        ));
    }
    Ok(Trajectory {
        scenario,
        seed,
        max_steps,
        actions,
    })
}

/// Characters: `#` ego, `T` traffic, `p` pedestrian, `.` road, `x`
/// crosswalk, `*` goal, space off-road. One cell per metre, window
/// centred on the ego.
pub fn render_frame(world: &WorldState, half_extent: f64) -> String {
    let n = half_extent as i64;
    let cx = world.ego.position.x.round();
    let cy = world.ego.position.y.round();
    let mut grid: Vec<Vec<char>> = Vec::new();
    // Row 0 is the largest y so north points up on screen.
    for yi in (-n..=n).rev() {
        let mut row = Vec::new();
        for xi in -n..=n {
            let p = Vec2::new(cx + xi as f64, cy + yi as f64);
            let mut c = if world.map.is_paved(p) { '.' } else { ' ' };
            for &(a, b) in &world.map.crosswalks {
                if crate::geometry::point_segment_distance(p, a, b) <= 1.5 {
                    c = 'x';
                }
            }
            if p.dist(world.map.goal_point) <= 1.5 {
                c = '*';
            }
            row.push(c);
        }
        grid.push(row);
    }
    let mut plot = |pos: Vec2, ch: char| {
        let xi = (pos.x - cx).round() as i64;
        let yi = (pos.y - cy).round() as i64;
        if xi.abs() <= n && yi.abs() <= n {
            grid[(n - yi) as usize][(xi + n) as usize] = ch;
        }
    };
    for ped in &world.pedestrians {
        plot(ped.position, 'p');
    }
    for v in &world.traffic {
        plot(v.position, 'T');
    }
    plot(world.ego.position, '#');
    let mut out = String::new();
    for row in grid {
        out.extend(row);
        out.push('\n');
    }
    out
}

/// Re-simulate the trajectory and emit one frame every `stride` ticks.
pub fn playback(
    traj: &Trajectory,
    half_extent: f64,
    stride: usize,
) -> Result<Vec<String>, ReplayViewError> {
    let mut world = spawn_scenario(&traj.scenario, traj.seed)?;
    let mut frames = vec![annotated_frame(&world, half_extent, None)];
    for (i, a) in traj.actions.iter().enumerate() {
        let (next, collision) = step_world(&world, a.throttle, a.steer, a.brake);
        world = next;
        let last = i + 1 == traj.actions.len();
        if (i + 1) % stride.max(1) == 0 || last || collision.is_some() {
            frames.push(annotated_frame(&world, half_extent, Some(*a)));
        }
        if collision.is_some() {
            break;
        }
    }
    Ok(frames)
}

fn annotated_frame(world: &WorldState, half_extent: f64, action: Option<Action>) -> String {
    let mut s = format!(
        "t={:.1}s tick={} ego=({:.1},{:.1}) v={:.1} m/s",
        world.tick as f64 * world.dt,
        world.tick,
        world.ego.position.x,
        world.ego.position.y,
        world.ego.speed
    );
    if let Some(a) = action {
        s.push_str(&format!(
            " throttle={:.2} steer={:.2} brake={:.2}",
            a.throttle, a.steer, a.brake
        ));
    }
    s.push('\n');
    s.push_str(&render_frame(world, half_extent));
    s
}
