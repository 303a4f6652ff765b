use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry, dynamics and reward constants shared by all tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArenaConfig {
    /// The arena is the square `[-arena_half_width, arena_half_width]^2`.
    pub arena_half_width: f64,
    pub zone_radius: f64,
    /// Minimum centre-to-centre distance between zones, and between any zone
    /// and the robot's start position.
    pub min_zone_separation: f64,
    pub dt: f64,
    pub max_speed: f64,
    pub max_accel: f64,
    pub max_turn_rate: f64,
    /// Per-step velocity retention factor in (0, 1].
    pub drag: f64,
    /// Reward per remaining step paid on success.
    pub lambda: f64,
    pub time_limit: u32,
    pub colour_cooldown: u32,
    pub timeout_beta_a: f64,
    pub timeout_beta_b: f64,
    pub timeout_min: u32,
    pub timeout_max: u32,
    /// Zone count for PointTSP and TimedTSP.
    pub tsp_zones: usize,
    /// Zone count for ColourMatch.
    pub colour_zones: usize,
    /// Rejection samples allowed per zone before generation gives up.
    pub placement_attempts: usize,
}

impl Default for ArenaConfig {
    fn default() -> Self {
        let half = 1.0;
        ArenaConfig {
            arena_half_width: half,
            zone_radius: 0.08,
            min_zone_separation: 0.25,
            dt: 1.0,
            max_speed: 0.02 * half,
            max_accel: 0.002 * half,
            max_turn_rate: 0.15,
            drag: 0.98,
            lambda: 0.01,
            time_limit: 2000,
            colour_cooldown: 50,
            timeout_beta_a: 2.0,
            timeout_beta_b: 5.0,
            timeout_min: 200,
            timeout_max: 2000,
            tsp_zones: 15,
            colour_zones: 6,
            placement_attempts: 10_000,
        }
    }
}

impl ArenaConfig {
    /// Three large zones with a 500-step limit; small enough to train in minutes.
    pub fn mini_point_tsp() -> Self {
        ArenaConfig {
            zone_radius: 0.15,
            min_zone_separation: 0.35,
            time_limit: 500,
            timeout_min: 100,
            timeout_max: 500,
            tsp_zones: 3,
            ..ArenaConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        let finite = [
            self.arena_half_width,
            self.zone_radius,
            self.min_zone_separation,
            self.dt,
            self.max_speed,
            self.max_accel,
            self.max_turn_rate,
            self.drag,
            self.lambda,
            self.timeout_beta_a,
            self.timeout_beta_b,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return fail("all real-valued fields must be finite");
        }
        if self.arena_half_width <= 0.0 {
            return fail("arena_half_width must be positive");
        }
        if self.zone_radius <= 0.0 {
            return fail("zone_radius must be positive");
        }
        if self.min_zone_separation < 2.0 * self.zone_radius {
            return fail("min_zone_separation must be at least 2 * zone_radius");
        }
        if self.zone_radius >= self.arena_half_width {
            return fail("zones must fit inside the arena");
        }
        if self.dt <= 0.0 || self.max_speed <= 0.0 || self.max_accel < 0.0 || self.max_turn_rate < 0.0 {
            return fail("dt and max_speed must be positive; max_accel and max_turn_rate non-negative");
        }
        if !(self.drag > 0.0 && self.drag <= 1.0) {
            return fail("drag must lie in (0, 1]");
        }
        if self.lambda <= 0.0 {
            return fail("lambda must be positive");
        }
        if self.time_limit == 0 {
            return fail("time_limit must be positive");
        }
        if !(0 < self.timeout_min && self.timeout_min <= self.timeout_max && self.timeout_max <= self.time_limit) {
            return fail("require 0 < timeout_min <= timeout_max <= time_limit");
        }
        if self.timeout_beta_a <= 0.0 || self.timeout_beta_b <= 0.0 {
            return fail("Beta shape parameters must be positive");
        }
        if self.tsp_zones == 0 || self.colour_zones < 2 {
            return fail("need at least one TSP zone and two colour zones");
        }
        if self.placement_attempts == 0 {
            return fail("placement_attempts must be positive");
        }
        Ok(())
    }

    /// Limit of the speed under constant full thrust.
    pub fn terminal_speed(&self) -> f64 {
        if self.drag >= 1.0 {
            self.max_speed
        } else {
            self.max_speed.min(self.max_accel * self.dt / (1.0 - self.drag))
        }
    }
}
