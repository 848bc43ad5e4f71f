//! Episode metrics as CSV: one header, one row per episode.
//!
//! Rows are written through `{}` float formatting (shortest exact decimal),
//! so two runs that produce the same numbers produce the same bytes. Every
//! row is flushed as it lands, which keeps a killed run's file readable up
//! to its last finished episode.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::trainer::TrainMetrics;

pub const METRICS_HEADER: &str =
    "episode,steps_alive,mean_agent_reward,epsilon,mean_loss,wall_seconds";

pub struct MetricsWriter<W: Write> {
    out: W,
}

impl MetricsWriter<BufWriter<File>> {
    /// Creates (or truncates) `path` and writes the header line.
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        MetricsWriter::new(BufWriter::new(File::create(path)?))
    }
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "{METRICS_HEADER}")?;
        out.flush()?;
        Ok(MetricsWriter { out })
    }

    pub fn write(&mut self, m: &TrainMetrics) -> Result<()> {
        writeln!(
            self.out,
            "{},{},{},{},{},{}",
            m.episode, m.steps_alive, m.mean_agent_reward, m.epsilon, m.mean_loss, m.wall_seconds
        )?;
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<TrainMetrics>> {
    parse_metrics(&std::fs::read_to_string(path)?)
}

/// Strict parser for the format [`MetricsWriter`] emits: exact header, six
/// comma-separated fields per row, every float finite. Errors carry the byte
/// offset of the offending line.
pub fn parse_metrics(text: &str) -> Result<Vec<TrainMetrics>> {
    let mut offset = 0usize;
    let mut rows = Vec::new();
    let mut saw_header = false;
    for line in text.split('\n') {
        let at = offset;
        offset += line.len() + 1;
        if !saw_header {
            if line != METRICS_HEADER {
                return Err(Error::Format {
                    offset: at as u64,
                    message: format!("expected header \"{METRICS_HEADER}\", got \"{line}\""),
                });
            }
            saw_header = true;
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Format {
                offset: at as u64,
                message: format!("expected 6 fields, got {}", fields.len()),
            });
        }
        let bad = |what: &str| Error::Format {
            offset: at as u64,
            message: format!("unreadable {what} in \"{line}\""),
        };
        let float = |field: &str, what: &str| -> Result<f64> {
            let v: f64 = field.parse().map_err(|_| bad(what))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Format {
                    offset: at as u64,
                    message: format!("non-finite {what} in \"{line}\""),
                })
            }
        };
        rows.push(TrainMetrics {
            episode: fields[0].parse().map_err(|_| bad("episode"))?,
            steps_alive: fields[1].parse().map_err(|_| bad("steps_alive"))?,
            mean_agent_reward: float(fields[2], "mean_agent_reward")?,
            epsilon: float(fields[3], "epsilon")?,
            mean_loss: float(fields[4], "mean_loss")?,
            wall_seconds: float(fields[5], "wall_seconds")?,
        });
    }
    Ok(rows)
}
