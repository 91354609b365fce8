//! Flat JSON run configuration and checkpoint persistence.
//!
//! Configs are single-level JSON objects of named scalars; unknown keys are
//! rejected. Checkpoints are self-describing JSON documents carrying all
//! six network parameter sets, optimizer states, the update counter, and
//! the RNG state, at full f64 precision. All files are written atomically
//! (temp file + rename), and re-serialization is byte-identical.

use crate::env::ObsMode;
use crate::map::Route;
use crate::reward::RewardConfig;
use crate::td3::{Td3Agent, Td3Config};
use crate::world::ScenarioConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const CHECKPOINT_TAG: &str = "TD3CKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error in {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("bad checkpoint format tag {0:?} (expected {CHECKPOINT_TAG:?})")]
    BadTag(String),
    #[error("checkpoint version {0} unsupported (expected {CHECKPOINT_VERSION})")]
    BadVersion(u32),
    #[error("checkpoint network {net:?} layer {layer}: stored shape is inconsistent")]
    BadShape { net: &'static str, layer: usize },
}

macro_rules! default_fns {
    ($($name:ident: $ty:ty = $val:expr;)*) => {
        $(fn $name() -> $ty { $val })*
    };
}

default_fns! {
    d_episodes: u64 = 2000;
    d_max_steps: u64 = 500;
    d_gamma: f64 = 0.99;
    d_lr: f64 = 0.0003;
    d_batch: usize = 64;
    d_exploration_noise: f64 = 0.1;
    d_exploration_steps: u64 = 10_000;
    d_policy_delay: u64 = 2;
    d_tau: f64 = 0.005;
    d_target_noise_sigma: f64 = 0.2;
    d_target_noise_clip: f64 = 0.5;
    d_replay_capacity: usize = 5000;
    d_hidden_size: usize = 256;
    d_veh: usize = 4;
    d_ped: usize = 2;
    d_route: Route = Route::Left;
    d_dt: f64 = 0.1;
    d_lane_width: f64 = 3.5;
    d_arm_length: f64 = 60.0;
    d_v_limit: f64 = 8.33;
    d_traffic_speed_limit: f64 = 8.33;
    d_v_cap_factor: f64 = 2.0;
    d_c_collision: f64 = 100.0;
    d_include_speed_term: bool = true;
    d_speed_term_weight: f64 = 0.05;
    d_obs_mode: ObsMode = ObsMode::Vector;
    d_checkpoint_every: u64 = 100;
}

/// Every trainable knob in one flat document. Defaults follow the
/// simulation parameter table where one exists, otherwise the documented
/// design default.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "d_episodes")]
    pub episodes: u64,
    #[serde(default = "d_max_steps")]
    pub max_steps: u64,
    #[serde(default = "d_gamma")]
    pub gamma: f64,
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_batch")]
    pub batch: usize,
    #[serde(default = "d_exploration_noise")]
    pub exploration_noise: f64,
    #[serde(default = "d_exploration_steps")]
    pub exploration_steps: u64,
    #[serde(default = "d_policy_delay")]
    pub policy_delay: u64,
    #[serde(default = "d_tau")]
    pub tau: f64,
    #[serde(default = "d_target_noise_sigma")]
    pub target_noise_sigma: f64,
    #[serde(default = "d_target_noise_clip")]
    pub target_noise_clip: f64,
    #[serde(default = "d_replay_capacity")]
    pub replay_capacity: usize,
    #[serde(default = "d_hidden_size")]
    pub hidden_size: usize,
    #[serde(default = "d_veh")]
    pub veh: usize,
    #[serde(default = "d_ped")]
    pub ped: usize,
    #[serde(default = "d_route")]
    pub route: Route,
    #[serde(default = "d_dt")]
    pub dt: f64,
    #[serde(default = "d_lane_width")]
    pub lane_width: f64,
    #[serde(default = "d_arm_length")]
    pub arm_length: f64,
    #[serde(default = "d_v_limit")]
    pub v_limit: f64,
    #[serde(default = "d_traffic_speed_limit")]
    pub traffic_speed_limit: f64,
    #[serde(default = "d_v_cap_factor")]
    pub v_cap_factor: f64,
    #[serde(default = "d_c_collision")]
    pub c_collision: f64,
    #[serde(default = "d_include_speed_term")]
    pub include_speed_term: bool,
    #[serde(default = "d_speed_term_weight")]
    pub speed_term_weight: f64,
    #[serde(default = "d_obs_mode")]
    pub obs_mode: ObsMode,
    #[serde(default = "d_checkpoint_every")]
    pub checkpoint_every: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").unwrap()
    }
}

impl RunConfig {
    pub fn td3(&self) -> Td3Config {
        Td3Config {
            gamma: self.gamma,
            lr: self.lr,
            batch: self.batch,
            exploration_noise_sigma: self.exploration_noise,
            exploration_steps: self.exploration_steps,
            policy_delay: self.policy_delay,
            tau: self.tau,
            target_noise_sigma: self.target_noise_sigma,
            target_noise_clip: self.target_noise_clip,
            replay_capacity: self.replay_capacity,
            episodes: self.episodes,
            max_steps: self.max_steps,
            hidden_size: self.hidden_size,
        }
    }

    pub fn scenario(&self) -> ScenarioConfig {
        ScenarioConfig {
            veh: self.veh,
            ped: self.ped,
            route: self.route,
            dt: self.dt,
            lane_width: self.lane_width,
            arm_length: self.arm_length,
            v_limit: self.v_limit,
            traffic_speed_limit: self.traffic_speed_limit,
            v_cap_factor: self.v_cap_factor,
        }
    }

    pub fn reward(&self) -> RewardConfig {
        RewardConfig {
            c_collision: self.c_collision,
            include_speed_term: self.include_speed_term,
            speed_term_weight: self.speed_term_weight,
        }
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, IoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| IoError::Parse {
        path: path.display().to_string(),
        source,
    })
}

pub fn save_config(cfg: &RunConfig, path: &Path) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(cfg).expect("config serializes");
    atomic_write(path, text.as_bytes())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: RunConfig,
    pub seed: u64,
    pub episodes_done: u64,
    pub env_steps_done: u64,
    pub agent: Td3Agent,
}

impl Checkpoint {
    pub fn new(config: RunConfig, seed: u64, episodes_done: u64, env_steps_done: u64, agent: Td3Agent) -> Self {
        Checkpoint {
            format: CHECKPOINT_TAG.to_string(),
            version: CHECKPOINT_VERSION,
            config,
            seed,
            episodes_done,
            env_steps_done,
            agent,
        }
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), IoError> {
    let text = serde_json::to_string(ckpt).expect("checkpoint serializes");
    atomic_write(path, text.as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, IoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|source| IoError::Parse {
        path: path.display().to_string(),
        source,
    })?;
    if ckpt.format != CHECKPOINT_TAG {
        return Err(IoError::BadTag(ckpt.format));
    }
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(IoError::BadVersion(ckpt.version));
    }
    for (name, net) in [
        ("actor", &ckpt.agent.actor),
        ("actor_target", &ckpt.agent.actor_target),
        ("critic1", &ckpt.agent.critic1),
        ("critic2", &ckpt.agent.critic2),
        ("critic1_target", &ckpt.agent.critic1_target),
        ("critic2_target", &ckpt.agent.critic2_target),
    ] {
        for l in 0..net.layer_sizes.len() - 1 {
            let want_w = net.layer_sizes[l] * net.layer_sizes[l + 1];
            if net.weights.get(l).map(Vec::len) != Some(want_w)
                || net.biases.get(l).map(Vec::len) != Some(net.layer_sizes[l + 1])
            {
                return Err(IoError::BadShape { net: name, layer: l });
            }
        }
    }
    Ok(ckpt)
}

/// Write via a temp file in the same directory, then rename into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let err = |source| IoError::Write {
        path: path.display().to_string(),
        source,
    };
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir).map_err(err)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|s| s.to_string_lossy()).unwrap_or_default()
    ));
    std::fs::write(&tmp, bytes).map_err(err)?;
    std::fs::rename(&tmp, path).map_err(err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::td3::Td3Agent;

    #[test]
    fn empty_object_gives_table_defaults() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg.lr, 0.0003);
        assert_eq!(cfg.episodes, 2000);
        assert_eq!(cfg.batch, 64);
        assert_eq!(cfg.gamma, 0.99);
        assert_eq!(cfg.exploration_noise, 0.1);
        assert_eq!(cfg.exploration_steps, 10_000);
        assert_eq!(cfg.policy_delay, 2);
        assert_eq!(cfg.replay_capacity, 5000);
        assert_eq!(cfg.max_steps, 500);
        assert_eq!(cfg.hidden_size, 256);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"leraning_rate": 0.1}"#).unwrap_err();
        assert!(err.to_string().contains("leraning_rate"));
    }

    #[test]
    fn config_roundtrip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.json");
        let p2 = dir.path().join("b.json");
        let cfg = RunConfig::default();
        save_config(&cfg, &p1).unwrap();
        let loaded = load_config(&p1).unwrap();
        save_config(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn checkpoint_roundtrip_preserves_forward_outputs() {
        let cfg = RunConfig { hidden_size: 16, ..Default::default() };
        let agent = Td3Agent::new(8, cfg.td3(), 7);
        let state = vec![0.123456789012345; 8];
        let before = agent.actor.forward(&state).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("ckpt.json");
        let p2 = dir.path().join("ckpt2.json");
        save_checkpoint(&Checkpoint::new(cfg, 7, 0, 0, agent), &p1).unwrap();
        let loaded = load_checkpoint(&p1).unwrap();
        assert_eq!(loaded.agent.actor.forward(&state).unwrap(), before);

        save_checkpoint(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn corrupted_shape_names_the_layer() {
        let cfg = RunConfig { hidden_size: 8, ..Default::default() };
        let agent = Td3Agent::new(4, cfg.td3(), 1);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ckpt.json");
        let mut ckpt = Checkpoint::new(cfg, 1, 0, 0, agent);
        ckpt.agent.critic2.weights[1].pop();
        save_checkpoint(&ckpt, &p).unwrap();
        let err = load_checkpoint(&p).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("critic2") && msg.contains("layer 1"), "{msg}");
    }

    #[test]
    fn bad_tag_and_version_rejected() {
        let cfg = RunConfig { hidden_size: 8, ..Default::default() };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ckpt.json");
        let mut ckpt = Checkpoint::new(cfg, 1, 0, 0, Td3Agent::new(4, cfg.td3(), 1));
        ckpt.format = "NOPE".into();
        save_checkpoint(&ckpt, &p).unwrap();
        assert!(matches!(load_checkpoint(&p), Err(IoError::BadTag(_))));
        ckpt.format = CHECKPOINT_TAG.into();
        ckpt.version = 99;
        save_checkpoint(&ckpt, &p).unwrap();
        assert!(matches!(load_checkpoint(&p), Err(IoError::BadVersion(99))));
    }
}
