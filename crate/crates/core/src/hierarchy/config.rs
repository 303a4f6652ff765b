use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ppo::PpoConfig;
use crate::sim::TaskKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Skills,
    Diayn,
    Options,
    XyGoals,
    ZoneGoals,
    TspSolver,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Skills,
        Method::Diayn,
        Method::Options,
        Method::XyGoals,
        Method::ZoneGoals,
        Method::TspSolver,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Skills => "skills",
            Method::Diayn => "diayn",
            Method::Options => "options",
            Method::XyGoals => "xy_goals",
            Method::ZoneGoals => "zone_goals",
            Method::TspSolver => "tsp_solver",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method '{s}'")))
    }

    /// Methods whose high level picks one of `skill_count` discrete skills.
    pub fn uses_skills(self) -> bool {
        matches!(self, Method::Skills | Method::Diayn | Method::Options)
    }

    /// Methods whose low level is rewarded for approaching a goal point.
    pub fn uses_goals(self) -> bool {
        matches!(self, Method::XyGoals | Method::ZoneGoals | Method::TspSolver)
    }

    pub fn has_high_level(self) -> bool {
        self != Method::TspSolver
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelConfig {
    pub method: Method,
    pub skill_count: usize,
    /// Segment length for the fixed-length methods.
    pub skill_length: u32,
    pub max_option_length: u32,
    /// Step cap on a single zone goal.
    pub zone_goal_cap: u32,
    pub diayn_alpha: f64,
    /// Use the fixed uniform skill prior instead of a learned one.
    pub diayn_uniform_prior: bool,
    /// Multiplier on the goal-distance reward.
    pub goal_reward_scale: f64,
    pub low: PpoConfig,
    pub high: PpoConfig,
}

impl TwoLevelConfig {
    pub fn new(method: Method) -> Self {
        TwoLevelConfig {
            method,
            skill_count: 5,
            skill_length: 200,
            max_option_length: 200,
            zone_goal_cap: 200,
            diayn_alpha: 0.01,
            diayn_uniform_prior: false,
            goal_reward_scale: 1.0,
            low: PpoConfig::hrl_low(),
            high: PpoConfig::hrl_high(),
        }
    }

    /// Doubles the batch on ColourMatch for both levels.
    pub fn for_task(mut self, task: TaskKind) -> Self {
        if task == TaskKind::ColourMatch {
            self.low = self.low.for_task(task);
            self.high.steps_per_env = self.low.steps_per_env;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.low.validate()?;
        self.high.validate()?;
        if self.method.uses_skills() && self.skill_count < 2 {
            return Err(Error::InvalidConfig("skill_count must be at least 2".into()));
        }
        if self.skill_length == 0 || self.max_option_length == 0 || self.zone_goal_cap == 0 {
            return Err(Error::InvalidConfig("segment lengths must be positive".into()));
        }
        if !self.diayn_alpha.is_finite() || self.diayn_alpha < 0.0 {
            return Err(Error::InvalidConfig(format!("diayn_alpha {}", self.diayn_alpha)));
        }
        if !self.goal_reward_scale.is_finite() {
            return Err(Error::InvalidConfig("goal_reward_scale must be finite".into()));
        }
        if self.low.num_envs != self.high.num_envs || self.low.steps_per_env != self.high.steps_per_env {
            return Err(Error::InvalidConfig("both levels share one env pool and rollout".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TwoLevelConfig::new(Method::Diayn);
        assert_eq!((c.skill_count, c.skill_length, c.diayn_alpha), (5, 200, 0.01));
        assert_eq!((c.low.gamma, c.high.gamma), (0.99, 1.0));
        assert_eq!((c.low.clip_eps, c.high.clip_eps), (0.1, 0.1));
        assert_eq!((c.high.minibatch_size, c.high.epochs, c.high.entropy_coef), (80, 5, 0.01));
        c.validate().unwrap();
        let c = c.for_task(TaskKind::ColourMatch);
        assert_eq!(c.low.steps_per_update(), 128_000);
        c.validate().unwrap();
    }

    #[test]
    fn names_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.name()).unwrap(), m);
        }
        assert!(Method::parse("ppo").is_err());
    }
}
