//! The single run configuration file. Every tunable constant of every module
//! lives here; `RunConfig::default()` is the documented baseline.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::camp::{DiscriminatorConfig, ReferenceConfig};
use crate::curriculum::CurriculumConfig;
use crate::nets::NetConfig;
use crate::reward::RewardConfig;
use crate::sim::SimConfig;
use crate::trainer::PpoConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which groups the robots are split into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupSplit {
    /// Half common, half adaptive.
    #[default]
    Mixed,
    CommonOnly,
    AdaptiveOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub dataset_dir: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            dataset_dir: PathBuf::from("dataset"),
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub runs: usize,
    /// Evaluation episode length (s).
    pub duration: f64,
    pub climb_distance: f64,
    pub climb_time: f64,
    /// Forward command for the climbing test (m/s).
    pub climb_speed: f64,
    /// Stair tile difficulty for the climbing test and the stair scenario.
    pub stair_level: u32,
    pub tracking_speeds: Vec<f64>,
    /// Stepping frequencies of the named-gait analysis trajectories.
    pub analysis_frequencies: Vec<f64>,
    pub analysis_frames: usize,
    pub standing_height: f64,
    pub sprint_speed: f64,
    pub stair_speed: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            runs: 5,
            duration: 10.0,
            climb_distance: 4.0,
            climb_time: 20.0,
            climb_speed: 0.5,
            stair_level: 5,
            tracking_speeds: vec![0.5, 1.0, 2.0],
            analysis_frequencies: vec![2.0, 3.0, 4.0],
            analysis_frames: 100,
            standing_height: 0.4,
            sprint_speed: 4.0,
            stair_speed: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub num_envs: usize,
    pub iterations: usize,
    /// Write a checkpoint every this many iterations (0 = only at the end).
    pub checkpoint_interval: usize,
    pub groups: GroupSplit,
    pub paths: PathsConfig,
    pub ppo: PpoConfig,
    pub sim: SimConfig,
    pub reward: RewardConfig,
    pub curriculum: CurriculumConfig,
    pub discriminator: DiscriminatorConfig,
    pub nets: NetConfig,
    pub reference: ReferenceConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            num_envs: 64,
            iterations: 500,
            checkpoint_interval: 50,
            groups: GroupSplit::Mixed,
            paths: PathsConfig::default(),
            ppo: PpoConfig::default(),
            sim: SimConfig::default(),
            reward: RewardConfig::default(),
            curriculum: CurriculumConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            nets: NetConfig::default(),
            reference: ReferenceConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        if self.num_envs == 0 || (self.groups == GroupSplit::Mixed && self.num_envs % 2 == 1) {
            return Err(ConfigError::Invalid(format!(
                "num_envs must be positive and even for a mixed split, got {}",
                self.num_envs
            )));
        }
        self.ppo.validate().map_err(|e| invalid(&e))?;
        self.sim.validate().map_err(|e| invalid(&e))?;
        self.curriculum.validate().map_err(|e| invalid(&e))?;
        if self.discriminator.batch_size == 0 || !(self.discriminator.learning_rate > 0.0) {
            return Err(ConfigError::Invalid("discriminator batch size and learning rate".into()));
        }
        if !(self.nets.action_scale > 0.0) || self.nets.action_scale != self.sim.physics.action_scale {
            return Err(ConfigError::Invalid(
                "nets.action_scale must be positive and equal sim.physics.action_scale".into(),
            ));
        }
        let e = &self.eval;
        if e.runs == 0 || !(e.duration > 0.0) || e.analysis_frames == 0 || !(e.climb_time > 0.0) {
            return Err(ConfigError::Invalid("eval runs, durations and frame counts must be positive".into()));
        }
        if e.stair_level > crate::sim::MAX_LEVEL {
            return Err(ConfigError::Invalid(format!("eval.stair_level above {}", crate::sim::MAX_LEVEL)));
        }
        if e.analysis_frequencies.iter().any(|f| !(*f >= 0.0)) {
            return Err(ConfigError::Invalid("analysis frequencies must be non-negative".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_toml())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curriculum::FixedGait;
    use crate::gait::NamedGait;

    #[test]
    fn default_round_trips() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn overrides_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.groups = GroupSplit::CommonOnly;
        cfg.num_envs = 7;
        cfg.curriculum.fixed_gait = Some(FixedGait {
            gait: NamedGait::Pacing,
            frequency: 3.0,
            base_height: 0.25,
        });
        cfg.curriculum.fixed_command = Some([0.5, 0.0, 0.1]);
        cfg.sim.randomization.push_interval = f64::INFINITY;
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_toml("seed = 3\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));
        let err = RunConfig::from_toml("[ppo]\ngama = 0.9\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));
    }

    #[test]
    fn partial_file_takes_defaults() {
        let cfg = RunConfig::from_toml("seed = 9\nnum_envs = 8\n[ppo]\nhorizon = 12\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.ppo.horizon, 12);
        assert_eq!(cfg.ppo.gamma, 0.99);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(matches!(
            RunConfig::from_toml("num_envs = 3\n"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            RunConfig::from_toml("[ppo]\ngamma = 1.0\n"),
            Err(ConfigError::Invalid(_))
        ));
    }
}
