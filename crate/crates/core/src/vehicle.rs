//! Vehicle state and the kinematic bicycle update shared by the ego and
//! autopilot traffic.

use crate::geometry::{wrap_angle, OrientedBox, Vec2};
use serde::{Deserialize, Serialize};

pub const A_MAX: f64 = 3.0; // m/s^2, full throttle
pub const B_MAX: f64 = 8.0; // m/s^2, full brake
pub const C_DRAG: f64 = 0.05; // 1/s, linear drag
pub const WHEELBASE: f64 = 2.7; // m
pub const MAX_STEER_ANGLE: f64 = 35.0 * std::f64::consts::PI / 180.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleKind {
    Car,
    Motorcycle,
    Cycle,
}

impl VehicleKind {
    pub fn dimensions(self) -> (f64, f64) {
        match self {
            VehicleKind::Car => (4.5, 2.0),
            VehicleKind::Motorcycle | VehicleKind::Cycle => (2.0, 0.8),
        }
    }

    /// Cruise speed as a fraction of the lane speed limit.
    pub fn speed_factor(self) -> f64 {
        match self {
            VehicleKind::Car => 1.0,
            VehicleKind::Motorcycle => 0.9,
            VehicleKind::Cycle => 0.6,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: Vec2,
    pub heading: f64,
    /// Longitudinal speed, always >= 0 (no reverse gear).
    pub speed: f64,
    pub length: f64,
    pub width: f64,
    pub kind: VehicleKind,
    /// Index of the assigned traffic lane; None for the ego.
    pub lane_ref: Option<usize>,
}

impl VehicleState {
    pub fn new(position: Vec2, heading: f64, kind: VehicleKind) -> Self {
        let (length, width) = kind.dimensions();
        VehicleState {
            position,
            heading: wrap_angle(heading),
            speed: 0.0,
            length,
            width,
            kind,
            lane_ref: None,
        }
    }

    pub fn footprint(&self) -> OrientedBox {
        OrientedBox::new(self.position, self.heading, self.length, self.width)
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::from_angle(self.heading) * self.speed
    }
}

/// Advance one vehicle by `dt` under (throttle, steer, brake) controls.
///
/// Longitudinal: a = throttle*A_MAX - brake*B_MAX - C_DRAG*speed, with speed
/// clamped to [0, v_cap]. Lateral: kinematic bicycle, front wheel angle
/// steer*MAX_STEER_ANGLE. Position is integrated with the updated heading
/// and speed.
pub fn step_ego(
    state: &VehicleState,
    throttle: f64,
    steer: f64,
    brake: f64,
    dt: f64,
    v_cap: f64,
) -> VehicleState {
    let mut next = *state;
    let accel = throttle * A_MAX - brake * B_MAX - C_DRAG * state.speed;
    next.speed = (state.speed + accel * dt).clamp(0.0, v_cap);
    let steer_angle = steer * MAX_STEER_ANGLE;
    let yaw_rate = next.speed * steer_angle.tan() / WHEELBASE;
    next.heading = wrap_angle(state.heading + yaw_rate * dt);
    next.position = state.position + Vec2::from_angle(next.heading) * (next.speed * dt);
    next
}
