use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::checkpoint::write_atomic;
use crate::error::{Error, Result};
use crate::sim::TaskKind;

pub const REGISTRY_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestKnown {
    pub best_return: f64,
    pub algorithm: String,
    pub checkpoint: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

/// Best undiscounted return ever seen per `(task, instance seed)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestKnownRegistry {
    pub format_version: u32,
    /// Keyed by `"<task>/<seed>"`.
    pub entries: BTreeMap<String, BestKnown>,
}

impl Default for BestKnownRegistry {
    fn default() -> Self {
        BestKnownRegistry {
            format_version: REGISTRY_VERSION,
            entries: BTreeMap::new(),
        }
    }
}

fn key(task: TaskKind, seed: u64) -> String {
    format!("{}/{seed}", task.name())
}

impl BestKnownRegistry {
    pub fn get(&self, task: TaskKind, seed: u64) -> Option<&BestKnown> {
        self.entries.get(&key(task, seed))
    }

    /// Records `ret` if it beats the stored value. Returns whether it did.
    pub fn offer(&mut self, task: TaskKind, seed: u64, ret: f64, algorithm: &str, checkpoint: &str, timestamp: u64) -> bool {
        if !ret.is_finite() {
            return false;
        }
        let k = key(task, seed);
        if self.entries.get(&k).is_some_and(|b| b.best_return >= ret) {
            return false;
        }
        self.entries.insert(
            k,
            BestKnown {
                best_return: ret,
                algorithm: algorithm.to_string(),
                checkpoint: checkpoint.to_string(),
                timestamp,
            },
        );
        true
    }

    /// A missing file is an empty registry.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let reg: BestKnownRegistry =
            serde_json::from_str(&text).map_err(|e| Error::Corrupt(format!("registry: {e}")))?;
        if reg.format_version != REGISTRY_VERSION {
            return Err(Error::VersionMismatch {
                found: reg.format_version,
                expected: REGISTRY_VERSION,
            });
        }
        Ok(reg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn keeps_the_maximum() {
        let mut r = BestKnownRegistry::default();
        assert!(r.offer(TaskKind::PointTsp, 1, 3.0, "ppo", "a", 0));
        assert!(!r.offer(TaskKind::PointTsp, 1, 2.0, "ppo", "b", 1));
        assert!(!r.offer(TaskKind::PointTsp, 1, f64::NAN, "ppo", "b", 1));
        assert!(r.offer(TaskKind::PointTsp, 1, 4.0, "skills", "c", 2));
        assert!(r.offer(TaskKind::TimedTsp, 1, 1.0, "ppo", "a", 0));
        let b = r.get(TaskKind::PointTsp, 1).unwrap();
        assert_eq!((b.best_return, b.algorithm.as_str()), (4.0, "skills"));
    }

    #[test]
    fn file_round_trip_and_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reg.json");
        assert_eq!(BestKnownRegistry::load(&path).unwrap(), BestKnownRegistry::default());
        let mut r = BestKnownRegistry::default();
        r.offer(TaskKind::ColourMatch, 7, -1.5, "ppo", "x", 3);
        r.save(&path).unwrap();
        assert_eq!(BestKnownRegistry::load(&path).unwrap(), r);
        let bumped = std::fs::read_to_string(&path).unwrap().replace("\"format_version\": 1", "\"format_version\": 2");
        std::fs::write(&path, bumped).unwrap();
        assert!(matches!(BestKnownRegistry::load(&path), Err(Error::VersionMismatch { found: 2, expected: 1 })));
    }

    proptest! {
        #[test]
        fn never_decreases(offers in proptest::collection::vec((0u64..4, -10.0f64..30.0), 1..60)) {
            let mut r = BestKnownRegistry::default();
            let mut best: BTreeMap<u64, f64> = BTreeMap::new();
            for (seed, ret) in offers {
                let before = r.get(TaskKind::PointTsp, seed).map(|b| b.best_return);
                r.offer(TaskKind::PointTsp, seed, ret, "ppo", "c", 0);
                let after = r.get(TaskKind::PointTsp, seed).unwrap().best_return;
                if let Some(b) = before {
                    prop_assert!(after >= b);
                }
                let e = best.entry(seed).or_insert(ret);
                *e = e.max(ret);
                prop_assert_eq!(after, best[&seed]);
            }
        }
    }
}
