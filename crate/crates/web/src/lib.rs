//! wasm-bindgen bindings for the browser demo: drive the intersection
//! simulator from JavaScript, either manually or with a trained policy
//! checkpoint pasted into the page.
//!
//! All logic lives in [`SimCore`], which is plain Rust and runs (and is
//! tested) on the host; [`WebSim`] is the thin wasm-facing wrapper.

use intersim::config::{Checkpoint, RunConfig, CHECKPOINT_TAG};
use intersim::env::{Action, DoneKind, Env, ObsMode};
use intersim::map::Route;
use intersim::neural::Mlp;
use serde_json::json;
use wasm_bindgen::prelude::*;

pub struct SimCore {
    cfg: RunConfig,
    env: Env,
    obs: Vec<f64>,
    actor: Option<Mlp>,
    last_reward: f64,
    last_outcome: DoneKind,
    ret: f64,
}

impl SimCore {
    /// Fresh scenario. `route` is "left", "right", or "straight".
    pub fn new(veh: usize, ped: usize, route: &str, seed: u64) -> Result<SimCore, String> {
        let route: Route = serde_json::from_value(serde_json::Value::String(route.into()))
            .map_err(|_| format!("unknown route {route:?}; use left, right, or straight"))?;
        let cfg = RunConfig { veh, ped, route, ..Default::default() };
        let (env, obs) = Env::reset(
            cfg.scenario(),
            cfg.reward(),
            ObsMode::Vector,
            cfg.max_steps,
            seed,
        )
        .map_err(|e| e.to_string())?;
        Ok(SimCore {
            cfg,
            env,
            obs,
            actor: None,
            last_reward: 0.0,
            last_outcome: DoneKind::Running,
            ret: 0.0,
        })
    }

    pub fn reset(&mut self, seed: u64) -> Result<(), String> {
        let (env, obs) = Env::reset(
            self.cfg.scenario(),
            self.cfg.reward(),
            ObsMode::Vector,
            self.cfg.max_steps,
            seed,
        )
        .map_err(|e| e.to_string())?;
        self.env = env;
        self.obs = obs;
        self.last_reward = 0.0;
        self.last_outcome = DoneKind::Running;
        self.ret = 0.0;
        Ok(())
    }

    pub fn step(&mut self, throttle: f64, steer: f64, brake: f64) -> Result<(), String> {
        self.advance(Action::new(throttle, steer, brake))
    }

    /// Load the actor network out of a training checkpoint JSON string.
    pub fn load_policy(&mut self, checkpoint_json: &str) -> Result<(), String> {
        let ckpt: Checkpoint =
            serde_json::from_str(checkpoint_json).map_err(|e| e.to_string())?;
        if ckpt.format != CHECKPOINT_TAG {
            return Err(format!("not a checkpoint file (tag {:?})", ckpt.format));
        }
        if ckpt.agent.actor.layer_sizes[0] != self.obs.len() {
            return Err(format!(
                "policy expects {} observation inputs, simulator produces {}",
                ckpt.agent.actor.layer_sizes[0],
                self.obs.len()
            ));
        }
        self.actor = Some(ckpt.agent.actor);
        Ok(())
    }

    /// Advance one tick, letting the loaded policy choose the controls.
    pub fn step_policy(&mut self) -> Result<(), String> {
        let actor = self.actor.as_ref().ok_or("no policy loaded")?;
        let out = actor.forward(&self.obs).map_err(|e| e.to_string())?;
        self.advance(Action::from_raw([out[0], out[1], out[2]]))
    }

    pub fn has_policy(&self) -> bool {
        self.actor.is_some()
    }

    pub fn done(&self) -> bool {
        self.last_outcome != DoneKind::Running
    }

    /// Everything the canvas renderer needs, as one JSON string.
    pub fn state_json(&self) -> String {
        let w = &self.env.world;
        let m = &w.map;
        json!({
            "tick": w.tick,
            "dt": w.dt,
            "outcome": format!("{}", self.last_outcome),
            "reward": self.last_reward,
            "return": self.ret,
            "map": {
                "lane_width": m.lane_width,
                "arm_length": m.arm_length,
                "waypoints": m.waypoints.points.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>(),
                "crosswalks": m.crosswalks.iter()
                    .map(|(a, b)| [[a.x, a.y], [b.x, b.y]]).collect::<Vec<_>>(),
                "goal": [m.goal_point.x, m.goal_point.y],
            },
            "ego": {
                "x": w.ego.position.x, "y": w.ego.position.y,
                "heading": w.ego.heading, "speed": w.ego.speed,
                "length": w.ego.length, "width": w.ego.width,
            },
            "traffic": w.traffic.iter().map(|v| json!({
                "x": v.position.x, "y": v.position.y,
                "heading": v.heading, "speed": v.speed,
                "length": v.length, "width": v.width,
            })).collect::<Vec<_>>(),
            "pedestrians": w.pedestrians.iter().map(|p| json!({
                "x": p.position.x, "y": p.position.y,
            })).collect::<Vec<_>>(),
        })
        .to_string()
    }

    fn advance(&mut self, action: Action) -> Result<(), String> {
        if self.done() {
            return Ok(());
        }
        let out = self.env.step(action).map_err(|e| e.to_string())?;
        self.obs = out.observation;
        self.last_reward = out.reward.total;
        self.last_outcome = out.done_kind;
        self.ret += out.reward.total;
        Ok(())
    }
}

#[wasm_bindgen]
pub struct WebSim {
    inner: SimCore,
}

#[wasm_bindgen]
impl WebSim {
    #[wasm_bindgen(constructor)]
    pub fn new(veh: usize, ped: usize, route: &str, seed: u64) -> Result<WebSim, JsValue> {
        SimCore::new(veh, ped, route, seed)
            .map(|inner| WebSim { inner })
            .map_err(|e| JsValue::from_str(&e))
    }

    pub fn reset(&mut self, seed: u64) -> Result<(), JsValue> {
        self.inner.reset(seed).map_err(|e| JsValue::from_str(&e))
    }

    pub fn step(&mut self, throttle: f64, steer: f64, brake: f64) -> Result<(), JsValue> {
        self.inner
            .step(throttle, steer, brake)
            .map_err(|e| JsValue::from_str(&e))
    }

    pub fn load_policy(&mut self, checkpoint_json: &str) -> Result<(), JsValue> {
        self.inner
            .load_policy(checkpoint_json)
            .map_err(|e| JsValue::from_str(&e))
    }

    pub fn step_policy(&mut self) -> Result<(), JsValue> {
        self.inner.step_policy().map_err(|e| JsValue::from_str(&e))
    }

    pub fn has_policy(&self) -> bool {
        self.inner.has_policy()
    }

    pub fn done(&self) -> bool {
        self.inner.done()
    }

    pub fn state_json(&self) -> String {
        self.inner.state_json()
    }
}
