//! Versioned JSON checkpoints holding everything needed to resume a run
//! bit-exactly.

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::hierarchy::EnvSlot;
use crate::neural::ParamSet;
use crate::ppo::{AdamState, EnvPool};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

/// Parameters and optimiser moments of one network group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetState {
    pub role: String,
    pub params: Vec<ParamEntry>,
    pub optimizer: AdamState,
}

impl NetState {
    pub fn capture(role: &str, params: &ParamSet, optimizer: &AdamState) -> Self {
        NetState {
            role: role.to_string(),
            params: params
                .iter()
                .map(|(name, t)| ParamEntry {
                    name: name.to_string(),
                    shape: [t.nrows(), t.ncols()],
                    values: t.iter().copied().collect(),
                })
                .collect(),
            optimizer: optimizer.clone(),
        }
    }

    /// Writes the stored values into a freshly built network of the same
    /// architecture.
    pub fn restore(&self, params: &mut ParamSet, optimizer: &mut AdamState) -> Result<()> {
        if self.params.len() != params.len() {
            return Err(Error::Corrupt(format!(
                "{}: {} parameters stored, network has {}",
                self.role,
                self.params.len(),
                params.len()
            )));
        }
        for e in &self.params {
            params
                .assign(&e.name, (e.shape[0], e.shape[1]), &e.values)
                .map_err(|err| Error::Corrupt(format!("{}: {err}", self.role)))?;
        }
        if self.optimizer.m.len() != params.len() {
            return Err(Error::Corrupt(format!("{}: optimizer state does not match", self.role)));
        }
        *optimizer = self.optimizer.clone();
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub run_config: RunConfig,
    pub frames_trained: u64,
    pub iterations: u64,
    pub nets: Vec<NetState>,
    pub rng: ChaCha8Rng,
    pub aux_rng: Option<ChaCha8Rng>,
    pub pool: EnvPool,
    pub slots: Option<Vec<EnvSlot>>,
}

impl Checkpoint {
    pub fn net(&self, role: &str) -> Result<&NetState> {
        self.nets
            .iter()
            .find(|n| n.role == role)
            .ok_or_else(|| Error::Corrupt(format!("checkpoint has no '{role}' network")))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks the version before decoding the rest.
    pub fn from_json(text: &str) -> Result<Checkpoint> {
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
        }
        let header: Header =
            serde_json::from_str(text).map_err(|e| Error::Corrupt(format!("checkpoint header: {e}")))?;
        if header.format_version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                found: header.format_version,
                expected: CHECKPOINT_VERSION,
            });
        }
        serde_json::from_str(text).map_err(|e| Error::Corrupt(format!("checkpoint: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_json()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Checkpoint::from_json(&text)
    }
}

/// Writes through a sibling temp file so readers never see half a document.
pub(crate) fn write_atomic(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
