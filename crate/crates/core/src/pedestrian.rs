//! Scripted pedestrians: path followers that ping-pong along a fixed
//! polyline and pause when a vehicle is about to block their path.

use crate::geometry::{Polyline, Vec2};

pub const PED_RADIUS: f64 = 0.3;
pub const PED_SPEED: f64 = 1.4;

/// Distance threshold to a vehicle that makes a pedestrian pause.
const PAUSE_VEHICLE_DIST: f64 = 3.0;
/// How far ahead along its path a pedestrian checks for vehicles.
const PAUSE_LOOKAHEAD: f64 = 2.0;

#[derive(Clone, Debug)]
pub struct PedestrianState {
    pub position: Vec2,
    pub speed: f64,
    pub path: Polyline,
    /// Arc length along `path`, in [0, path length].
    pub progress: f64,
    /// +1 walking toward the path end, -1 back toward the start.
    pub direction: f64,
    pub uses_crosswalk: bool,
}

impl PedestrianState {
    pub fn new(path: Polyline, progress: f64, direction: f64, uses_crosswalk: bool) -> Self {
        let position = path.point_at(progress);
        PedestrianState {
            position,
            speed: PED_SPEED,
            path,
            progress,
            direction,
            uses_crosswalk,
        }
    }

    pub fn velocity(&self) -> Vec2 {
        self.path.tangent_at(self.progress) * (self.speed * self.direction)
    }

    /// True when any vehicle sits within 3 m of the next 2 m of path.
    pub fn blocked(&self, vehicles: impl Iterator<Item = Vec2>) -> bool {
        let mut samples = Vec::new();
        let mut d = 0.0;
        while d <= PAUSE_LOOKAHEAD {
            samples.push(self.path.point_at(self.progress + self.direction * d));
            d += 0.5;
        }
        for v in vehicles {
            if samples.iter().any(|s| s.dist(v) < PAUSE_VEHICLE_DIST) {
                return true;
            }
        }
        false
    }

    /// Advance by speed*dt unless paused; reverses direction at path ends.
    pub fn step(&mut self, dt: f64, paused: bool) {
        if !paused {
            self.progress += self.speed * self.direction * dt;
            let len = self.path.length();
            // Reflect overshoot so distance walked is conserved at the turn.
            if self.progress >= len {
                self.progress = (2.0 * len - self.progress).max(0.0);
                self.direction = -1.0;
            } else if self.progress <= 0.0 {
                self.progress = (-self.progress).min(len);
                self.direction = 1.0;
            }
        }
        self.position = self.path.point_at(self.progress);
    }
}
