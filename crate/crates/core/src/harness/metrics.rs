use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ppo::{IterationMetrics, LevelStats};

/// Column order of the metrics CSV. Flat learners fill the `low_` columns
/// and leave the `high_` ones empty.
pub const METRICS_HEADER: [&str; 17] = [
    "iteration",
    "frames",
    "episodes",
    "mean_return",
    "success_rate",
    "low_policy_loss",
    "low_value_loss",
    "low_entropy",
    "low_explained_variance",
    "low_updates",
    "low_samples",
    "high_policy_loss",
    "high_value_loss",
    "high_entropy",
    "high_explained_variance",
    "high_updates",
    "wall_time",
];

fn num(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        String::new()
    }
}

fn level_cells(l: Option<&LevelStats>, with_samples: bool) -> Vec<String> {
    let mut cells = match l {
        Some(l) => vec![
            num(l.policy_loss),
            num(l.value_loss),
            num(l.entropy),
            num(l.explained_variance),
            l.minibatch_updates.to_string(),
        ],
        None => vec![String::new(); 5],
    };
    if with_samples {
        cells.push(l.map_or(String::new(), |l| l.samples.to_string()));
    }
    cells
}

/// One CSV record for an iteration.
pub fn metrics_record(iteration: u64, m: &IterationMetrics) -> Vec<String> {
    let level = |name: &str| m.levels.iter().find(|(n, _)| n == name).map(|(_, l)| l);
    let main = level("low").or_else(|| m.levels.first().map(|(_, l)| l));
    let mut rec = vec![
        iteration.to_string(),
        m.frames.to_string(),
        m.episodes.to_string(),
        num(m.mean_return),
        num(m.success_rate),
    ];
    rec.extend(level_cells(main, true));
    rec.extend(level_cells(level("high"), false));
    rec.push(num(m.wall_time));
    rec
}

/// Appends rows to a metrics CSV, writing the header on creation.
pub struct MetricsWriter {
    file: File,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
        writeln!(file, "{}", METRICS_HEADER.join(",")).map_err(|e| Error::io(path, e))?;
        Ok(MetricsWriter { file })
    }

    /// Opens an existing log for a resumed run, checking its header.
    pub fn append(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if text.lines().next() != Some(METRICS_HEADER.join(",").as_str()) {
            return Err(Error::Corrupt(format!("{} has an unexpected header", path.display())));
        }
        let file = OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
        Ok(MetricsWriter { file })
    }

    pub fn write(&mut self, iteration: u64, m: &IterationMetrics) -> Result<()> {
        writeln!(self.file, "{}", metrics_record(iteration, m).join(","))
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::io("metrics", e))
    }
}
