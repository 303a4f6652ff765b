use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::hierarchy::{Method, TwoLevelConfig};
use crate::ppo::PpoConfig;
use crate::sim::{ArenaConfig, TaskKind};

/// Hidden width of the flat networks.
pub const DEFAULT_WIDTH: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Algorithm {
    Ppo,
    PpoVd,
    TwoLevel(Method),
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ppo => "ppo",
            Algorithm::PpoVd => "ppo_vd",
            Algorithm::TwoLevel(m) => m.name(),
        }
    }

    pub fn parse(s: &str) -> Result<Algorithm> {
        match s {
            "ppo" => Ok(Algorithm::Ppo),
            "ppo_vd" => Ok(Algorithm::PpoVd),
            other => Method::parse(other)
                .map(Algorithm::TwoLevel)
                .map_err(|_| Error::InvalidConfig(format!("unknown algorithm '{other}'"))),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl TryFrom<String> for Algorithm {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Algorithm::parse(&s)
    }
}

impl From<Algorithm> for String {
    fn from(a: Algorithm) -> String {
        a.name().to_string()
    }
}

/// Everything a run depends on besides code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: TaskKind,
    pub algorithm: Algorithm,
    /// Discount of the flat learner.
    pub gamma: f64,
    pub frames: u64,
    pub seed: u64,
    pub out_dir: String,
    /// Iterations between checkpoints; 0 saves only at the end.
    pub checkpoint_every: u64,
    pub width: usize,
    /// Two-level width; `None` matches the flat parameter count.
    pub hrl_width: Option<usize>,
    /// Write elapsed seconds into the metrics; off for byte-identical logs.
    pub record_wall_time: bool,
    pub arena: ArenaConfig,
    pub ppo: PpoConfig,
    pub hrl: TwoLevelConfig,
}

/// Keys that pick the defaults of everything else.
const BASE_KEYS: [&str; 3] = ["task", "algo", "gamma"];

impl RunConfig {
    pub fn new(task: TaskKind, algorithm: Algorithm, gamma: f64) -> Self {
        let ppo = match algorithm {
            Algorithm::PpoVd => PpoConfig::ppo_vd(gamma),
            _ => PpoConfig::ppo(gamma),
        }
        .for_task(task);
        let method = match algorithm {
            Algorithm::TwoLevel(m) => m,
            _ => Method::Skills,
        };
        RunConfig {
            task,
            algorithm,
            gamma,
            frames: 10_000_000,
            seed: 0,
            out_dir: "runs/default".into(),
            checkpoint_every: 0,
            width: DEFAULT_WIDTH,
            hrl_width: None,
            record_wall_time: true,
            arena: ArenaConfig::default(),
            ppo,
            hrl: TwoLevelConfig::new(method).for_task(task),
        }
    }

    /// Builds a config from `key=value` entries. `task`, `algo` and `gamma`
    /// choose the defaults; every other key overrides one field, later
    /// entries winning. Nested fields use dotted keys such as `ppo.lr`,
    /// `arena.zone_radius` or `hrl.low.clip_eps`.
    pub fn from_entries(entries: &[(String, String)]) -> Result<RunConfig> {
        let last = |key: &str| entries.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let task = TaskKind::parse(last("task").unwrap_or("point_tsp"))?;
        let algorithm = Algorithm::parse(last("algo").unwrap_or("ppo"))?;
        let gamma = match last("gamma") {
            Some(g) => parse_f64("gamma", g)?,
            None => 0.99,
        };
        let mut json = serde_json::to_value(RunConfig::new(task, algorithm, gamma))?;
        for (key, value) in entries.iter().filter(|(k, _)| !BASE_KEYS.contains(&k.as_str())) {
            set_field(&mut json, key, value)?;
        }
        let cfg: RunConfig =
            serde_json::from_value(json).map_err(|e| Error::InvalidConfig(format!("config does not deserialize: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>, extra: &[(String, String)]) -> Result<RunConfig> {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut entries = parse_config_text(&text)?;
        entries.extend_from_slice(extra);
        RunConfig::from_entries(&entries)
    }

    pub fn validate(&self) -> Result<()> {
        self.arena.validate()?;
        self.ppo.validate()?;
        self.hrl.validate()?;
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if self.width == 0 || self.hrl_width == Some(0) {
            return Err(Error::InvalidConfig("widths must be positive".into()));
        }
        if let Algorithm::TwoLevel(m) = self.algorithm {
            if m != self.hrl.method {
                return Err(Error::InvalidConfig(format!(
                    "algorithm {} but hrl.method {}",
                    m.name(),
                    self.hrl.method.name()
                )));
            }
        }
        Ok(())
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{key}: '{v}' is not a number")))
}

/// Splits `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key=value, got '{raw}'", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::InvalidConfig(format!("line {}: empty key", n + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Dotted keys map to JSON paths; the old value's type decides how the new
/// one is parsed.
fn set_field(json: &mut Value, key: &str, raw: &str) -> Result<()> {
    const TOP_LEVEL: [&str; 6] = ["frames", "seed", "width", "hrl_width", "record_wall_time", "checkpoint_every"];
    let unknown = || Error::InvalidConfig(format!("unknown config key '{key}'"));
    let path: Vec<&str> = match key {
        "out" => vec!["out_dir"],
        k if TOP_LEVEL.contains(&k) => vec![k],
        k if k.contains('.') => k.split('.').collect(),
        _ => return Err(unknown()),
    };
    let mut slot = &mut *json;
    for part in &path {
        slot = slot.get_mut(*part).ok_or_else(unknown)?;
    }
    let bad = |what: &str| Error::InvalidConfig(format!("{key}: '{raw}' is not {what}"));
    *slot = match slot {
        Value::Bool(_) => Value::Bool(raw.parse().map_err(|_| bad("a boolean"))?),
        Value::Number(n) if n.is_u64() => Value::from(raw.parse::<u64>().map_err(|_| bad("a non-negative integer"))?),
        Value::Number(_) => Value::from(raw.parse::<f64>().map_err(|_| bad("a number"))?),
        Value::String(_) => Value::String(raw.to_string()),
        Value::Null => match raw {
            "none" => Value::Null,
            _ => Value::from(raw.parse::<u64>().map_err(|_| bad("an integer or 'none'"))?),
        },
        Value::Array(_) | Value::Object(_) => return Err(unknown()),
    };
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entries(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn base_keys_pick_defaults() {
        let c = RunConfig::from_entries(&entries(&[("algo", "ppo_vd"), ("gamma", "1"), ("task", "colour_match")])).unwrap();
        assert_eq!(c.ppo.value_coef, 0.005);
        assert_eq!(c.ppo.gamma, 1.0);
        assert_eq!(c.ppo.steps_per_update(), 128_000);
        let c = RunConfig::from_entries(&entries(&[("algo", "zone_goals")])).unwrap();
        assert_eq!(c.hrl.method, Method::ZoneGoals);
    }

    #[test]
    fn overrides_apply_by_type() {
        let text = "# comment\nppo.lr = 1e-3\narena.time_limit=2500 # trailing\n\nhrl.low.clip_eps=0.05\nseed=9\nrecord_wall_time=false\nout=/tmp/x\nhrl_width=40\nppo.value_mode=distribution\n";
        let c = RunConfig::from_entries(&parse_config_text(text).unwrap()).unwrap();
        assert_eq!(c.ppo.lr, 1e-3);
        assert_eq!(c.arena.time_limit, 2500);
        assert_eq!(c.hrl.low.clip_eps, 0.05);
        assert_eq!((c.seed, c.record_wall_time, c.hrl_width), (9, false, Some(40)));
        assert_eq!(c.out_dir, "/tmp/x");
        assert_eq!(c.ppo.value_mode, crate::neural::ValueKind::Distribution);
    }

    #[test]
    fn unknown_and_malformed_entries_fail() {
        for bad in [
            vec![("ppo.learning_rate", "1")],
            vec![("nonsense", "1")],
            vec![("arena", "1")],
            vec![("arena.time_limit", "-3")],
            vec![("record_wall_time", "maybe")],
            vec![("algo", "sac")],
            vec![("ppo.epochs", "0")],
            vec![("algo", "skills"), ("hrl.method", "diayn")],
            vec![("ppo.value_mode", "quantile")],
        ] {
            assert!(RunConfig::from_entries(&entries(&bad)).is_err(), "{bad:?}");
        }
        assert!(parse_config_text("just words").is_err());
        assert!(parse_config_text("=3").is_err());
    }

    #[test]
    fn serde_round_trip() {
        let c = RunConfig::new(TaskKind::TimedTsp, Algorithm::TwoLevel(Method::Options), 0.99);
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"algorithm\":\"options\""));
        assert_eq!(serde_json::from_str::<RunConfig>(&s).unwrap(), c);
    }
}
