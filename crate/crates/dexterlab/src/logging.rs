//! Append-only run outputs: a JSONL training log, a results CSV in the
//! ablation table's column order, and a lock file guarding the run
//! directory against concurrent writers.

use crate::rollout::EvalMetrics;
use serde::Serialize;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub struct JsonlLogger {
    writer: BufWriter<File>,
}

impl JsonlLogger {
    pub fn append(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(JsonlLogger {
            writer: BufWriter::new(file),
        })
    }

    pub fn log<T: Serialize>(&mut self, record: &T) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.writer, record)?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()
    }
}

pub const RESULTS_CSV_HEADER: &str = "network_size,max_timesteps,action_masking,curriculum_learning,stage2_dynamic_reward,stage2_early_reward,button_radius_mm,success_rate,avg_errors_per_success_episode,avg_time_per_success_episode_s";

/// One results row mirroring the evaluation table's columns.
#[derive(Debug, Clone)]
pub struct ResultsRow {
    pub network_size: usize,
    pub max_timesteps: u64,
    pub action_masking: bool,
    pub curriculum_learning: bool,
    pub dynamic_reward: bool,
    pub early_reward: bool,
    pub button_radius_mm: f64,
    pub metrics: Option<EvalMetrics>,
}

impl ResultsRow {
    pub fn to_csv_line(&self) -> String {
        let yes_no = |b: bool| if b { "yes" } else { "no" };
        let (rate, errs, time) = match &self.metrics {
            Some(m) => (
                format!("{}", m.success_rate),
                m.avg_errors_per_success_episode
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
                m.avg_time_per_success_episode
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
            ),
            None => ("failed".to_string(), String::new(), String::new()),
        };
        format!(
            "{}x{},{},{},{},{},{},{},{},{},{}",
            self.network_size,
            self.network_size,
            self.max_timesteps,
            yes_no(self.action_masking),
            yes_no(self.curriculum_learning),
            yes_no(self.dynamic_reward),
            yes_no(self.early_reward),
            self.button_radius_mm,
            rate,
            errs,
            time
        )
    }
}

/// Appends a row, writing the header first when the file is new or empty.
pub fn append_results_csv(path: &Path, row: &ResultsRow) -> std::io::Result<()> {
    let need_header = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    if need_header {
        writeln!(file, "{}", RESULTS_CSV_HEADER)?;
    }
    writeln!(file, "{}", row.to_csv_line())
}

/// Exclusive lock on a run directory, released on drop.
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(RunLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(std::io::Error::new(
                    std::io::ErrorKind::AlreadyExists,
                    format!(
                        "run directory {} is locked by another process (stale? remove {})",
                        dir.display(),
                        path.display()
                    ),
                ))
            }
            Err(e) => Err(e),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}
