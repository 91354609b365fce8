//! T-intersection driving microsimulation with a from-scratch TD3 stack:
//! deterministic 2D world, five-term reward, dense-network learner, and a
//! training/evaluation harness with density sweeps.

pub mod config;
pub mod env;
pub mod geometry;
pub mod harness;
pub mod map;
pub mod neural;
pub mod pedestrian;
pub mod replay;
pub mod replay_view;
pub mod reward;
pub mod td3;
pub mod vehicle;
pub mod world;
