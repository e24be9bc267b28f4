use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::curriculum::CurriculumSummary;

/// One row of the metrics CSV.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub reward_total: f64,
    pub reward_task: f64,
    pub reward_regularization: f64,
    pub reward_style: f64,
    pub reward_contact: f64,
    pub tracking_rmse: f64,
    pub contact_match: f64,
    /// Mean discriminator score on dataset rows during this iteration's update.
    pub d_real: f64,
    /// Mean discriminator score on buffered policy rows during the update.
    pub d_fake: f64,
    /// Mean discriminator score of this iteration's policy transitions.
    pub d_policy: f64,
    pub disc_loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub estimator_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub episodes: usize,
    pub faults: usize,
    pub buffer_len: usize,
    pub update_skipped: bool,
    pub curriculum: CurriculumSummary,
    /// Seconds for the iteration; zero in deterministic single-thread mode.
    pub wall_time: f64,
}

pub const METRICS_COLUMNS: [&str; 30] = [
    "iteration",
    "reward_total",
    "reward_task",
    "reward_regularization",
    "reward_style",
    "reward_contact",
    "tracking_rmse",
    "contact_match",
    "d_real",
    "d_fake",
    "d_policy",
    "disc_loss",
    "policy_loss",
    "value_loss",
    "entropy",
    "estimator_loss",
    "approx_kl",
    "clip_fraction",
    "episodes",
    "faults",
    "buffer_len",
    "update_skipped",
    "mean_level",
    "max_level",
    "grid_fraction",
    "cmd_min_vx",
    "cmd_max_vx",
    "cmd_max_vy",
    "cmd_max_yaw",
    "wall_time",
];

impl IterationMetrics {
    pub fn header() -> String {
        METRICS_COLUMNS.join(",")
    }

    pub fn csv_row(&self) -> String {
        let c = &self.curriculum;
        let fields: Vec<String> = vec![
            self.iteration.to_string(),
            self.reward_total.to_string(),
            self.reward_task.to_string(),
            self.reward_regularization.to_string(),
            self.reward_style.to_string(),
            self.reward_contact.to_string(),
            self.tracking_rmse.to_string(),
            self.contact_match.to_string(),
            self.d_real.to_string(),
            self.d_fake.to_string(),
            self.d_policy.to_string(),
            self.disc_loss.to_string(),
            self.policy_loss.to_string(),
            self.value_loss.to_string(),
            self.entropy.to_string(),
            self.estimator_loss.to_string(),
            self.approx_kl.to_string(),
            self.clip_fraction.to_string(),
            self.episodes.to_string(),
            self.faults.to_string(),
            self.buffer_len.to_string(),
            u8::from(self.update_skipped).to_string(),
            c.mean_level.to_string(),
            c.max_level.to_string(),
            c.grid_fraction.to_string(),
            c.min_vx.to_string(),
            c.max_vx.to_string(),
            c.max_vy.to_string(),
            c.max_yaw.to_string(),
            self.wall_time.to_string(),
        ];
        fields.join(",")
    }
}

/// Parses a metrics CSV into header and rows of raw fields.
pub fn read_metrics(path: &Path) -> std::io::Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .map(|h| h.split(',').map(str::to_string).collect())
        .unwrap_or_default();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    Ok((header, rows))
}

/// Append-only metrics file.
#[derive(Debug)]
pub struct MetricsWriter {
    path: PathBuf,
    file: File,
}

impl MetricsWriter {
    /// Starts a fresh file with a header.
    pub fn create(path: &Path) -> std::io::Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let mut file = File::create(path)?;
        writeln!(file, "{}", IterationMetrics::header())?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    /// Reopens an existing file, dropping rows at or after `next_iteration`
    /// (written after the checkpoint being resumed).
    pub fn resume(path: &Path, next_iteration: usize) -> std::io::Result<Self> {
        if !path.exists() {
            return Self::create(path);
        }
        let reader = BufReader::new(File::open(path)?);
        let mut kept = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if i == 0 {
                kept.push(line);
                continue;
            }
            let it = line.split(',').next().and_then(|f| f.parse::<usize>().ok());
            if matches!(it, Some(it) if it < next_iteration) {
                kept.push(line);
            }
        }
        if kept.is_empty() {
            kept.push(IterationMetrics::header());
        }
        let mut text = kept.join("\n");
        text.push('\n');
        fs::write(path, text)?;
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn append(&mut self, m: &IterationMetrics) -> std::io::Result<()> {
        writeln!(self.file, "{}", m.csv_row())?;
        self.file.flush()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
