//! TD3 learner: twin critics with clipped double-Q targets, delayed actor
//! updates, target policy smoothing, and Gaussian exploration noise.

use crate::env::DoneKind;
use crate::neural::{adam_step, polyak_update, AdamState, Gradients, Mlp, NeuralError, OutputActivation};
use crate::replay::{ReplayBuffer, ReplayError, Transition};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ACTION_DIM: usize = 3;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Td3Config {
    pub gamma: f64,
    pub lr: f64,
    pub batch: usize,
    pub exploration_noise_sigma: f64,
    /// Environment steps driven by uniform random actions before the
    /// policy takes over.
    pub exploration_steps: u64,
    pub policy_delay: u64,
    pub tau: f64,
    pub target_noise_sigma: f64,
    pub target_noise_clip: f64,
    pub replay_capacity: usize,
    pub episodes: u64,
    pub max_steps: u64,
    /// Width of the two hidden layers in actor and critics.
    pub hidden_size: usize,
}

impl Default for Td3Config {
    fn default() -> Self {
        Td3Config {
            gamma: 0.99,
            lr: 0.0003,
            batch: 64,
            exploration_noise_sigma: 0.1,
            exploration_steps: 10_000,
            policy_delay: 2,
            tau: 0.005,
            target_noise_sigma: 0.2,
            target_noise_clip: 0.5,
            replay_capacity: 5000,
            episodes: 2000,
            max_steps: 500,
            hidden_size: 256,
        }
    }
}

#[derive(Debug, Error)]
pub enum Td3Error {
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

#[derive(Clone, Debug)]
pub struct TrainDiagnostics {
    pub critic_loss: f64,
    pub actor_loss: Option<f64>,
    pub did_actor_update: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Td3Agent {
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub critic1_target: Mlp,
    pub critic2_target: Mlp,
    pub opt_actor: AdamState,
    pub opt_critic1: AdamState,
    pub opt_critic2: AdamState,
    pub update_counter: u64,
    pub cfg: Td3Config,
    pub rng: ChaCha8Rng,
}

impl Td3Agent {
    pub fn new(obs_dim: usize, cfg: Td3Config, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = cfg.hidden_size;
        let mut actor = Mlp::new(&[obs_dim, h, h, ACTION_DIM], OutputActivation::Tanh, &mut rng);
        // Start with near-zero actions so early exploration dominates.
        actor.scale_output_layer(0.1);
        let critic_sizes = [obs_dim + ACTION_DIM, h, h, 1];
        let critic1 = Mlp::new(&critic_sizes, OutputActivation::Identity, &mut rng);
        let critic2 = Mlp::new(&critic_sizes, OutputActivation::Identity, &mut rng);
        let opt_actor = AdamState::new(&actor, cfg.lr);
        let opt_critic1 = AdamState::new(&critic1, cfg.lr);
        let opt_critic2 = AdamState::new(&critic2, cfg.lr);
        Td3Agent {
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            actor,
            critic1,
            critic2,
            opt_actor,
            opt_critic1,
            opt_critic2,
            update_counter: 0,
            cfg,
            rng,
        }
    }

    /// Deterministic policy action, plus clamped Gaussian noise when
    /// exploring. Output stays in [-1,1]^3.
    pub fn select_action(&mut self, state: &[f64], explore: bool) -> Result<[f64; 3], Td3Error> {
        let out = self.actor.forward(state)?;
        let mut a = [out[0], out[1], out[2]];
        if explore {
            let normal = Normal::new(0.0, self.cfg.exploration_noise_sigma).unwrap();
            for v in a.iter_mut() {
                *v = (*v + normal.sample(&mut self.rng)).clamp(-1.0, 1.0);
            }
        }
        Ok(a)
    }

    /// Target action with clipped smoothing noise:
    /// clamp(actor_target(s') + clamp(N(0, sigma), -c, c), -1, 1).
    pub fn smoothed_target_action(&mut self, next_state: &[f64]) -> Result<[f64; 3], Td3Error> {
        let out = self.actor_target.forward(next_state)?;
        let mut a = [0.0; 3];
        let normal = Normal::new(0.0, self.cfg.target_noise_sigma.max(1e-300)).unwrap();
        let c = self.cfg.target_noise_clip;
        for (i, v) in out.iter().enumerate() {
            let noise = if self.cfg.target_noise_sigma > 0.0 {
                normal.sample(&mut self.rng).clamp(-c, c)
            } else {
                0.0
            };
            a[i] = (v + noise).clamp(-1.0, 1.0);
        }
        Ok(a)
    }

    fn critic_input(state: &[f64], action: &[f64; 3]) -> Vec<f64> {
        let mut x = Vec::with_capacity(state.len() + ACTION_DIM);
        x.extend_from_slice(state);
        x.extend_from_slice(action);
        x
    }

    /// Clipped double-Q TD targets: y = r + bootstrap * gamma * min(Q1', Q2')
    /// at the smoothed target action. Collision and Goal terminals do not
    /// bootstrap; Running and Timeout do.
    pub fn critic_target(&mut self, batch: &[&Transition]) -> Result<Vec<f64>, Td3Error> {
        let mut targets = Vec::with_capacity(batch.len());
        for t in batch {
            let bootstrap = match t.done_kind {
                DoneKind::Collision | DoneKind::Goal => 0.0,
                DoneKind::Running | DoneKind::Timeout => 1.0,
            };
            let y = if bootstrap > 0.0 {
                let a = self.smoothed_target_action(&t.next_state)?;
                let x = Self::critic_input(&t.next_state, &a);
                let q1 = self.critic1_target.forward(&x)?[0];
                let q2 = self.critic2_target.forward(&x)?[0];
                t.reward + self.cfg.gamma * q1.min(q2)
            } else {
                t.reward
            };
            targets.push(y);
        }
        Ok(targets)
    }

    /// One learner update: both critics take an Adam step on mean squared
    /// TD error; every `policy_delay`-th call the actor steps on
    /// -mean(Q1(s, actor(s))) and all three targets are Polyak-averaged.
    pub fn train_step(&mut self, buffer: &ReplayBuffer) -> Result<TrainDiagnostics, Td3Error> {
        let batch_size = self.cfg.batch;
        // Sample indices first so a failed precondition leaves no mutation.
        let batch: Vec<Transition> = {
            let refs = buffer.sample(batch_size, &mut self.rng)?;
            refs.into_iter().cloned().collect()
        };
        let batch_refs: Vec<&Transition> = batch.iter().collect();
        let targets = self.critic_target(&batch_refs)?;

        let mut critic_loss = 0.0;
        for (critic, opt) in [
            (&mut self.critic1, &mut self.opt_critic1),
            (&mut self.critic2, &mut self.opt_critic2),
        ] {
            let mut grads = Gradients::zeros_like(critic);
            let mut loss = 0.0;
            for (t, y) in batch.iter().zip(&targets) {
                let x = Self::critic_input(&t.state, &t.action);
                let q = critic.forward(&x)?[0];
                let err = q - y;
                loss += err * err;
                // d/dq of mean squared error.
                let upstream = [2.0 * err / batch_size as f64];
                grads.add(&critic.backward(&x, &upstream)?);
            }
            loss /= batch_size as f64;
            critic_loss += loss / 2.0;
            adam_step(critic, &grads, opt)?;
        }

        self.update_counter += 1;
        let mut actor_loss = None;
        let did_actor_update = self.update_counter % self.cfg.policy_delay == 0;
        if did_actor_update {
            let mut grads = Gradients::zeros_like(&self.actor);
            let mut loss = 0.0;
            for t in &batch {
                let out = self.actor.forward(&t.state)?;
                let a = [out[0], out[1], out[2]];
                let x = Self::critic_input(&t.state, &a);
                let q = self.critic1.forward(&x)?[0];
                loss -= q / batch_size as f64;
                // dQ/da via the critic, then through the actor.
                let dq = self.critic1.backward(&x, &[-1.0 / batch_size as f64])?;
                let upstream = [
                    dq.d_input[t.state.len()],
                    dq.d_input[t.state.len() + 1],
                    dq.d_input[t.state.len() + 2],
                ];
                grads.add(&self.actor.backward(&t.state, &upstream)?);
            }
            adam_step(&mut self.actor, &grads, &mut self.opt_actor)?;
            actor_loss = Some(loss);

            polyak_update(&mut self.actor_target, &self.actor, self.cfg.tau)?;
            polyak_update(&mut self.critic1_target, &self.critic1, self.cfg.tau)?;
            polyak_update(&mut self.critic2_target, &self.critic2, self.cfg.tau)?;
        }

        Ok(TrainDiagnostics {
            critic_loss,
            actor_loss,
            did_actor_update,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngExt;

    fn small_cfg() -> Td3Config {
        Td3Config {
            batch: 8,
            hidden_size: 16,
            ..Default::default()
        }
    }

    fn random_transition(rng: &mut ChaCha8Rng, obs_dim: usize, done: DoneKind) -> Transition {
        Transition {
            state: (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            action: [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ],
            reward: rng.random_range(-1.0..1.0),
            next_state: (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            done_kind: done,
        }
    }

    fn filled_buffer(obs_dim: usize, n: usize, seed: u64) -> ReplayBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut buf = ReplayBuffer::new(5000);
        for _ in 0..n {
            buf.push(random_transition(&mut rng, obs_dim, DoneKind::Running));
        }
        buf
    }

    #[test]
    fn targets_equal_online_at_construction() {
        let agent = Td3Agent::new(10, small_cfg(), 0);
        assert_eq!(agent.actor, agent.actor_target);
        assert_eq!(agent.critic1, agent.critic1_target);
        assert_eq!(agent.critic2, agent.critic2_target);
    }

    #[test]
    fn greedy_action_deterministic_and_bounded() {
        let mut agent = Td3Agent::new(6, small_cfg(), 1);
        let state = vec![0.3; 6];
        let a = agent.select_action(&state, false).unwrap();
        let b = agent.select_action(&state, false).unwrap();
        assert_eq!(a, b);
        for _ in 0..100 {
            let c = agent.select_action(&state, true).unwrap();
            assert!(c.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn zero_output_actor_maps_to_half_throttle() {
        let mut agent = Td3Agent::new(4, small_cfg(), 2);
        agent.actor.scale_output_layer(0.0);
        let a = agent.select_action(&[0.1, 0.2, 0.3, 0.4], false).unwrap();
        assert_eq!(a, [0.0, 0.0, 0.0]);
        let act = crate::env::Action::from_raw(a);
        assert_eq!(act.throttle, 0.5);
        assert_eq!(act.brake, 0.5);
    }

    #[test]
    fn terminal_goal_target_is_reward() {
        let mut agent = Td3Agent::new(4, small_cfg(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut t = random_transition(&mut rng, 4, DoneKind::Goal);
        t.reward = 100.0;
        let y = agent.critic_target(&[&t]).unwrap();
        assert_eq!(y, vec![100.0]);
    }

    #[test]
    fn running_target_uses_min_and_discount() {
        // Force constant critics: zero weights, biases 2 and 3.
        let mut agent = Td3Agent::new(4, small_cfg(), 4);
        for c in [&mut agent.critic1_target, &mut agent.critic2_target] {
            for w in c.weights.iter_mut() {
                w.fill(0.0);
            }
            for b in c.biases.iter_mut() {
                b.fill(0.0);
            }
        }
        *agent.critic1_target.biases.last_mut().unwrap() = vec![2.0];
        *agent.critic2_target.biases.last_mut().unwrap() = vec![3.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut t = random_transition(&mut rng, 4, DoneKind::Running);
        t.reward = 0.0;
        let y = agent.critic_target(&[&t]).unwrap();
        assert!((y[0] - 0.99 * 2.0).abs() < 1e-12);

        // Timeout transitions bootstrap too.
        t.done_kind = DoneKind::Timeout;
        let y2 = agent.critic_target(&[&t]).unwrap();
        assert!((y2[0] - 1.98).abs() < 1e-12);
    }

    #[test]
    fn smoothing_noise_is_clipped() {
        let mut agent = Td3Agent::new(4, small_cfg(), 5);
        // Zero the target actor so the smoothed action is pure noise.
        for w in agent.actor_target.weights.iter_mut() {
            w.fill(0.0);
        }
        for b in agent.actor_target.biases.iter_mut() {
            b.fill(0.0);
        }
        for _ in 0..10_000 {
            let a = agent.smoothed_target_action(&[0.0; 4]).unwrap();
            for v in a {
                assert!(v.abs() <= 0.5 + 1e-12);
            }
        }
        // With sigma zero the smoothed action equals the target output.
        agent.cfg.target_noise_sigma = 0.0;
        let a = agent.smoothed_target_action(&[0.0; 4]).unwrap();
        assert_eq!(a, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn actor_updates_every_second_call() {
        let mut agent = Td3Agent::new(6, small_cfg(), 6);
        let buf = filled_buffer(6, 100, 7);
        let mut actor_updates = 0;
        for _ in 0..10 {
            if agent.train_step(&buf).unwrap().did_actor_update {
                actor_updates += 1;
            }
        }
        assert_eq!(actor_updates, 5);
    }

    #[test]
    fn underfilled_buffer_errors_without_mutation() {
        let mut agent = Td3Agent::new(6, small_cfg(), 8);
        let buf = filled_buffer(6, 4, 9);
        let before = agent.clone();
        assert!(agent.train_step(&buf).is_err());
        assert_eq!(agent.update_counter, before.update_counter);
        assert_eq!(agent.actor, before.actor);
        assert_eq!(agent.critic1, before.critic1);
    }

    #[test]
    fn updates_keep_parameters_finite() {
        let mut agent = Td3Agent::new(6, small_cfg(), 10);
        let buf = filled_buffer(6, 200, 11);
        for _ in 0..50 {
            agent.train_step(&buf).unwrap();
        }
        for net in [&agent.actor, &agent.critic1, &agent.critic2] {
            assert!(net.weights.iter().flatten().all(|v| v.is_finite()));
            assert!(net.biases.iter().flatten().all(|v| v.is_finite()));
        }
    }
}
