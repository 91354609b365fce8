//! Five-component step reward: collision penalty, progress toward the
//! goal, clamped speed, lane-keeping penalties, and the arrival bonus.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const GOAL_BONUS: f64 = 100.0;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    /// Magnitude of the collision penalty.
    pub c_collision: f64,
    /// Whether the clamped-speed term contributes to the total.
    pub include_speed_term: bool,
    /// Weight on the speed term when included.
    pub speed_term_weight: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            c_collision: 100.0,
            include_speed_term: true,
            speed_term_weight: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RewardInputs {
    pub collided: bool,
    pub reached_goal: bool,
    pub d_pre: f64,
    pub d_cu: f64,
    pub v_speed: f64,
    pub v_limit: f64,
    pub m_offroad: f64,
    pub m_otherlane: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
    pub r5: f64,
    pub total: f64,
}

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("non-finite reward input: {0}")]
    NonFinite(&'static str),
    #[error("negative distance input: {0}")]
    NegativeDistance(&'static str),
}

/// r1 = -C on collision, r2 = D_pre - D_cu, r3 = max(0, min(V_speed,
/// V_limit)), r4 = -M_offroad - M_otherlane, r5 = 100 on arrival.
/// Total is r1 + r2 + r4 + r5, plus w3*r3 when the speed term is enabled.
pub fn compute_reward(inputs: &RewardInputs, cfg: &RewardConfig) -> Result<RewardBreakdown, RewardError> {
    for (name, v) in [
        ("d_pre", inputs.d_pre),
        ("d_cu", inputs.d_cu),
        ("v_speed", inputs.v_speed),
        ("v_limit", inputs.v_limit),
        ("m_offroad", inputs.m_offroad),
        ("m_otherlane", inputs.m_otherlane),
    ] {
        if !v.is_finite() {
            return Err(RewardError::NonFinite(name));
        }
    }
    if inputs.d_pre < 0.0 {
        return Err(RewardError::NegativeDistance("d_pre"));
    }
    if inputs.d_cu < 0.0 {
        return Err(RewardError::NegativeDistance("d_cu"));
    }

    let r1 = if inputs.collided { -cfg.c_collision } else { 0.0 };
    let r2 = inputs.d_pre - inputs.d_cu;
    let r3 = inputs.v_speed.min(inputs.v_limit).max(0.0);
    let r4 = -inputs.m_offroad - inputs.m_otherlane;
    let r5 = if inputs.reached_goal { GOAL_BONUS } else { 0.0 };
    let mut total = r1 + r2 + r4 + r5;
    if cfg.include_speed_term {
        total += cfg.speed_term_weight * r3;
    }
    Ok(RewardBreakdown { r1, r2, r3, r4, r5, total })
}
