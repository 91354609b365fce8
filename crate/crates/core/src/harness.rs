//! Training orchestration and the evaluation protocol: seeded episode
//! loops, travel-delay/collision statistics with confidence intervals,
//! density sweeps, and a uniform-random baseline.

use crate::config::{
    atomic_write, save_checkpoint, Checkpoint, IoError, RunConfig,
};
use crate::env::{Action, DoneKind, Env, EnvError};
use crate::replay::{ReplayBuffer, Transition};
use crate::td3::{Td3Agent, Td3Error};
use rand::RngExt;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] Td3Error),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("evaluation needs at least 2 repeats, got {0}")]
    TooFewRepeats(usize),
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
}

/// Splitmix64 round; used to derive independent per-episode seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct EpisodeResult {
    pub steps: u64,
    pub outcome: DoneKind,
    pub ret: f64,
    pub collisions: u32,
    pub travel_delay: f64,
}

#[derive(Clone, Debug)]
pub struct ScenarioSpec {
    pub name: String,
    pub ped: usize,
    pub veh: usize,
}

/// The five evaluation densities, scaled down by `scale` and rounded up.
pub fn scenario_table(scale: f64) -> Vec<ScenarioSpec> {
    [(100, 100), (200, 200), (300, 300), (400, 400), (450, 450)]
        .iter()
        .enumerate()
        .map(|(i, &(ped, veh))| ScenarioSpec {
            name: format!("s{}", i + 1),
            ped: (ped as f64 * scale).ceil() as usize,
            veh: (veh as f64 * scale).ceil() as usize,
        })
        .collect()
}

pub fn lookup_scenario(name: &str, scale: f64) -> Result<ScenarioSpec, HarnessError> {
    if name == "desk" {
        return Ok(ScenarioSpec { name: "desk".into(), ped: 2, veh: 4 });
    }
    if let Some(rest) = name.strip_prefix("custom:") {
        if let Some((p, v)) = rest.split_once(',') {
            if let (Ok(ped), Ok(veh)) = (p.parse(), v.parse()) {
                return Ok(ScenarioSpec { name: name.into(), ped, veh });
            }
        }
        return Err(HarnessError::UnknownScenario(name.into()));
    }
    scenario_table(scale)
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| HarnessError::UnknownScenario(name.into()))
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub scenario: String,
    pub episodes_per_repeat: usize,
    pub repeats: usize,
    pub repeat_mean_delay: Vec<f64>,
    pub repeat_mean_collisions: Vec<f64>,
    pub mean_delay: f64,
    pub ci95_delay: f64,
    pub mean_collisions: f64,
    pub ci95_collisions: f64,
    pub goal_rate: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// 1.96 * sd(per-repeat means) / sqrt(repeats), with the n-1 sample sd.
fn ci95(repeat_means: &[f64]) -> f64 {
    let n = repeat_means.len() as f64;
    let m = mean(repeat_means);
    let var = repeat_means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    1.96 * var.sqrt() / n.sqrt()
}

/// How the ego is driven during an episode.
pub enum Policy<'a> {
    Greedy(&'a crate::neural::Mlp),
    UniformRandom,
}

#[derive(Clone, Debug)]
pub struct TrajectoryRow {
    pub tick: u64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub action: Action,
    pub reward: crate::reward::RewardBreakdown,
    pub done_kind: DoneKind,
}

pub struct EpisodeRecording {
    pub cfg: RunConfig,
    pub episode_seed: u64,
    pub rows: Vec<TrajectoryRow>,
}

pub fn run_episode(
    cfg: &RunConfig,
    policy: &Policy,
    episode_seed: u64,
    record: bool,
) -> Result<(EpisodeResult, Option<EpisodeRecording>), HarnessError> {
    let (mut env, mut obs) = Env::reset(
        cfg.scenario(),
        cfg.reward(),
        cfg.obs_mode,
        cfg.max_steps,
        episode_seed,
    )?;
    let mut action_rng = ChaCha8Rng::seed_from_u64(mix_seed(episode_seed, 0xba5e));
    let mut ret = 0.0;
    let mut rows = Vec::new();
    loop {
        let raw = match policy {
            Policy::Greedy(actor) => {
                let out = actor.forward(&obs).map_err(Td3Error::from)?;
                [out[0], out[1], out[2]]
            }
            Policy::UniformRandom => [
                action_rng.random_range(-1.0..1.0),
                action_rng.random_range(-1.0..1.0),
                action_rng.random_range(-1.0..1.0),
            ],
        };
        let action = Action::from_raw(raw);
        let out = env.step(action)?;
        ret += out.reward.total;
        obs = out.observation;
        if record {
            rows.push(TrajectoryRow {
                tick: out.tick,
                x: env.world.ego.position.x,
                y: env.world.ego.position.y,
                heading: env.world.ego.heading,
                speed: env.world.ego.speed,
                action,
                reward: out.reward,
                done_kind: out.done_kind,
            });
        }
        if out.done_kind.is_terminal() {
            let steps = out.tick;
            let travel_delay = if out.done_kind == DoneKind::Goal {
                steps as f64 * cfg.dt
            } else {
                cfg.max_steps as f64 * cfg.dt
            };
            let result = EpisodeResult {
                steps,
                outcome: out.done_kind,
                ret,
                collisions: (out.done_kind == DoneKind::Collision) as u32,
                travel_delay,
            };
            let recording = record.then(|| EpisodeRecording {
                cfg: *cfg,
                episode_seed,
                rows,
            });
            return Ok((result, recording));
        }
    }
}

pub struct TrainResult {
    pub returns: Vec<f64>,
    pub curve_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub agent: Td3Agent,
}

/// Episode loop: reset, act (random warmup, then noisy policy), store,
/// learn each tick once the warmup has passed and the buffer can fill a
/// batch. Writes the training curve CSV plus periodic and final
/// checkpoints under `out_dir`.
pub fn train(
    cfg: &RunConfig,
    seed: u64,
    out_dir: &Path,
    resume: Option<Checkpoint>,
) -> Result<TrainResult, HarnessError> {
    let obs_dim = Env::obs_dim(cfg.obs_mode);
    let (mut agent, start_episode, mut env_steps) = match resume {
        Some(ckpt) => (ckpt.agent, ckpt.episodes_done, ckpt.env_steps_done),
        None => (Td3Agent::new(obs_dim, cfg.td3(), seed), 0, 0),
    };
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity);

    let mut curve = String::from("episode,steps,return,outcome,ma50_return\n");
    let mut returns: Vec<f64> = Vec::new();
    let curve_path = out_dir.join(format!("curve_seed{seed}.csv"));
    let final_path = out_dir.join(format!("checkpoint_seed{seed}.json"));

    let save = |agent: &Td3Agent, episodes_done: u64, env_steps: u64, path: &Path| {
        save_checkpoint(
            &Checkpoint::new(*cfg, seed, episodes_done, env_steps, agent.clone()),
            path,
        )
    };

    if cfg.episodes == 0 || start_episode >= cfg.episodes {
        atomic_write(&curve_path, curve.as_bytes())?;
        save(&agent, start_episode, env_steps, &final_path)?;
        return Ok(TrainResult {
            returns,
            curve_path,
            checkpoint_path: final_path,
            agent,
        });
    }

    for episode in start_episode..cfg.episodes {
        let episode_seed = mix_seed(seed, episode);
        let (mut env, mut obs) = Env::reset(
            cfg.scenario(),
            cfg.reward(),
            cfg.obs_mode,
            cfg.max_steps,
            episode_seed,
        )?;
        let mut ret = 0.0;
        let (steps, outcome) = loop {
            let raw = if env_steps < cfg.exploration_steps {
                [
                    agent.rng.random_range(-1.0..1.0),
                    agent.rng.random_range(-1.0..1.0),
                    agent.rng.random_range(-1.0..1.0),
                ]
            } else {
                agent.select_action(&obs, true)?
            };
            let out = env.step(Action::from_raw(raw))?;
            env_steps += 1;
            ret += out.reward.total;
            buffer.push(Transition {
                state: obs,
                action: raw,
                reward: out.reward.total,
                next_state: out.observation.clone(),
                done_kind: out.done_kind,
            });
            obs = out.observation;
            if env_steps >= cfg.exploration_steps && buffer.len() >= cfg.batch {
                agent.train_step(&buffer)?;
            }
            if out.done_kind.is_terminal() {
                break (out.tick, out.done_kind);
            }
        };
        returns.push(ret);
        let window = &returns[returns.len().saturating_sub(50)..];
        curve.push_str(&format!(
            "{},{},{},{},{}\n",
            episode,
            steps,
            ret,
            outcome,
            mean(window)
        ));
        let done = episode + 1;
        if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < cfg.episodes {
            save(&agent, done, env_steps, &out_dir.join(format!("checkpoint_seed{seed}_ep{done}.json")))?;
        }
    }

    atomic_write(&curve_path, curve.as_bytes())?;
    save(&agent, cfg.episodes, env_steps, &final_path)?;
    Ok(TrainResult {
        returns,
        curve_path,
        checkpoint_path: final_path,
        agent,
    })
}

/// Run `episodes x repeats` greedy (or random) episodes on one scenario
/// and aggregate travel delay and collision means with 95% confidence
/// half-widths over the per-repeat means.
pub fn evaluate(
    cfg: &RunConfig,
    policy: &Policy,
    scenario: &ScenarioSpec,
    episodes: usize,
    repeats: usize,
    seed: u64,
) -> Result<EvalReport, HarnessError> {
    if repeats < 2 {
        return Err(HarnessError::TooFewRepeats(repeats));
    }
    let run_cfg = RunConfig {
        ped: scenario.ped,
        veh: scenario.veh,
        ..*cfg
    };
    let mut repeat_mean_delay = Vec::with_capacity(repeats);
    let mut repeat_mean_collisions = Vec::with_capacity(repeats);
    let mut goals = 0usize;
    for repeat in 0..repeats {
        let mut delays = Vec::with_capacity(episodes);
        let mut collisions = Vec::with_capacity(episodes);
        for episode in 0..episodes {
            let episode_seed = mix_seed(seed, (repeat as u64) << 32 | episode as u64);
            let (result, _) = run_episode(&run_cfg, policy, episode_seed, false)?;
            delays.push(result.travel_delay);
            collisions.push(result.collisions as f64);
            goals += (result.outcome == DoneKind::Goal) as usize;
        }
        repeat_mean_delay.push(mean(&delays));
        repeat_mean_collisions.push(mean(&collisions));
    }
    Ok(EvalReport {
        scenario: scenario.name.clone(),
        episodes_per_repeat: episodes,
        repeats,
        mean_delay: mean(&repeat_mean_delay),
        ci95_delay: ci95(&repeat_mean_delay),
        mean_collisions: mean(&repeat_mean_collisions),
        ci95_collisions: ci95(&repeat_mean_collisions),
        goal_rate: goals as f64 / (episodes * repeats) as f64,
        repeat_mean_delay,
        repeat_mean_collisions,
    })
}

/// `evaluate` with uniform-random actions; the control every trained
/// policy is compared against.
pub fn random_baseline(
    cfg: &RunConfig,
    scenario: &ScenarioSpec,
    episodes: usize,
    repeats: usize,
    seed: u64,
) -> Result<EvalReport, HarnessError> {
    evaluate(cfg, &Policy::UniformRandom, scenario, episodes, repeats, seed)
}

/// Evaluate every scenario of the table, in order.
pub fn sweep(
    cfg: &RunConfig,
    policy: &Policy,
    table: &[ScenarioSpec],
    episodes: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<EvalReport>, HarnessError> {
    table
        .iter()
        .map(|s| evaluate(cfg, policy, s, episodes, repeats, seed))
        .collect()
}

pub fn eval_reports_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("scenario,repeat,mean_delay_s,mean_collisions,ci95_delay_s,ci95_collisions\n");
    for r in reports {
        for i in 0..r.repeats {
            out.push_str(&format!(
                "{},{},{},{},,\n",
                r.scenario, i, r.repeat_mean_delay[i], r.repeat_mean_collisions[i]
            ));
        }
        out.push_str(&format!(
            "{},summary,{},{},{},{}\n",
            r.scenario, r.mean_delay, r.mean_collisions, r.ci95_delay, r.ci95_collisions
        ));
    }
    out
}

pub fn trajectory_csv(rec: &EpisodeRecording) -> String {
    let cfg = &rec.cfg;
    let route = serde_json::to_value(cfg.route).unwrap();
    let mut out = format!(
        "# route={} veh={} ped={} seed={} dt={} max_steps={} v_limit={} lane_width={} arm_length={} traffic_speed_limit={} v_cap_factor={}\n",
        route.as_str().unwrap(),
        cfg.veh,
        cfg.ped,
        rec.episode_seed,
        cfg.dt,
        cfg.max_steps,
        cfg.v_limit,
        cfg.lane_width,
        cfg.arm_length,
        cfg.traffic_speed_limit,
        cfg.v_cap_factor,
    );
    out.push_str("tick,x,y,heading,speed,throttle,steer,brake,r1,r2,r3,r4,r5,total,done_kind\n");
    for r in &rec.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.tick,
            r.x,
            r.y,
            r.heading,
            r.speed,
            r.action.throttle,
            r.action.steer,
            r.action.brake,
            r.reward.r1,
            r.reward.r2,
            r.reward.r3,
            r.reward.r4,
            r.reward.r5,
            r.reward.total,
            r.done_kind
        ));
    }
    out
}
