use std::path::{Path, PathBuf};

use super::checkpoint::{write_atomic, Checkpoint};
use super::metrics::{MetricsWriter, METRICS_HEADER};
use super::session::Session;
use crate::error::{Error, Result};
use crate::ppo::IterationMetrics;

pub const METRICS_FILE: &str = "metrics.csv";
pub const LATEST_CHECKPOINT: &str = "checkpoint.json";
pub const CONFIG_FILE: &str = "config.json";

pub fn checkpoint_path(out_dir: &Path, iteration: u64) -> PathBuf {
    out_dir.join(format!("checkpoint_{iteration:06}.json"))
}

/// Keeps the header and the first `rows` records so a resumed run picks up
/// exactly where its checkpoint left off.
fn truncate_metrics(path: &Path, rows: u64) -> Result<()> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let kept: Vec<&str> = text.lines().take(rows as usize + 1).collect();
    if kept.len() != rows as usize + 1 {
        return Err(Error::Corrupt(format!(
            "{} has fewer rows than the checkpoint's {rows} iterations",
            path.display()
        )));
    }
    write_atomic(path, &(kept.join("\n") + "\n"))
}

fn save(session: &Session, out_dir: &Path) -> Result<()> {
    let ck = session.checkpoint();
    if session.config.checkpoint_every > 0 && session.iterations.is_multiple_of(session.config.checkpoint_every) {
        ck.save(checkpoint_path(out_dir, session.iterations))?;
    }
    ck.save(out_dir.join(LATEST_CHECKPOINT))
}

/// Runs a session to its frame budget, writing metrics, the config and
/// checkpoints under its output directory. `on_iteration` sees every row.
pub fn train(mut session: Session, resumed: bool, mut on_iteration: impl FnMut(u64, &IterationMetrics)) -> Result<Session> {
    session.config.validate()?;
    let out_dir = PathBuf::from(&session.config.out_dir);
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let metrics_path = out_dir.join(METRICS_FILE);
    let mut writer = if resumed {
        truncate_metrics(&metrics_path, session.iterations)?;
        MetricsWriter::append(&metrics_path)?
    } else {
        write_atomic(&out_dir.join(CONFIG_FILE), &serde_json::to_string_pretty(&session.config)?)?;
        MetricsWriter::create(&metrics_path)?
    };
    while !session.done() {
        let m = session.step()?;
        writer.write(session.iterations, &m)?;
        on_iteration(session.iterations, &m);
        if session.config.checkpoint_every > 0 && session.iterations.is_multiple_of(session.config.checkpoint_every) {
            save(&session, &out_dir)?;
        }
    }
    save(&session, &out_dir)?;
    Ok(session)
}

/// Loads a checkpoint and continues its run in the configured directory.
pub fn resume(checkpoint: impl AsRef<Path>, on_iteration: impl FnMut(u64, &IterationMetrics)) -> Result<Session> {
    let ck = Checkpoint::load(checkpoint)?;
    train(Session::resume(&ck)?, true, on_iteration)
}

/// Header line of the metrics CSV.
pub fn metrics_header() -> String {
    METRICS_HEADER.join(",")
}
