//! Gait sampling for the common group, terrain levels for the adaptive
//! group, and the grid-adaptive command range.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gait::{GaitParams, NamedGait, PhaseState};
use crate::reward::GroupTag;
use crate::sim::{TerrainKey, TerrainType, MAX_LEVEL};

#[derive(Debug, thiserror::Error)]
pub enum CurriculumError {
    #[error("robot count must be even and positive, got {0}")]
    OddRobotCount(usize),
    #[error("invalid curriculum config: {0}")]
    InvalidConfig(String),
}

/// Gait and command overrides that pin the common group to one behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedGait {
    pub gait: NamedGait,
    pub frequency: f64,
    pub base_height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumConfig {
    pub frequency_range: [f64; 2],
    pub stance_range: [f64; 2],
    pub height_range: [f64; 2],
    pub promote_threshold: f64,
    pub demote_threshold: f64,
    /// Fraction of the tile length a robot must cover to be promoted.
    pub promote_distance_fraction: f64,
    pub grid_threshold: f64,
    pub grid_cell_velocity: f64,
    pub grid_cell_yaw: f64,
    /// Hard limits on `|v_x|, |v_y|, |ω_z|`.
    pub command_caps: [f64; 3],
    pub initial_extents: CommandExtents,
    /// Command range for robots on terrain tiles and in the common group.
    pub base_commands: CommandExtents,
    pub command_resample_interval: f64,
    pub fixed_gait: Option<FixedGait>,
    pub fixed_command: Option<[f64; 3]>,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            frequency_range: [1.0, 4.0],
            stance_range: [0.25, 0.75],
            height_range: [0.1, 0.4],
            promote_threshold: 0.8,
            demote_threshold: 0.4,
            promote_distance_fraction: 0.5,
            grid_threshold: 0.8,
            grid_cell_velocity: 0.5,
            grid_cell_yaw: 0.5,
            command_caps: [4.0, 1.0, 3.0],
            initial_extents: CommandExtents {
                vx: [-1.0, 1.0],
                vy: [-0.5, 0.5],
                yaw: [-1.0, 1.0],
            },
            base_commands: CommandExtents {
                vx: [0.0, 1.0],
                vy: [-0.3, 0.3],
                yaw: [-0.5, 0.5],
            },
            command_resample_interval: 10.0,
            fixed_gait: None,
            fixed_command: None,
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<(), CurriculumError> {
        let bad = |m: &str| Err(CurriculumError::InvalidConfig(m.into()));
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !ordered(self.frequency_range) || self.frequency_range[0] < 0.0 {
            return bad("frequency range");
        }
        if !ordered(self.stance_range) || self.stance_range[0] <= 0.0 || self.stance_range[1] >= 1.0 {
            return bad("stance range");
        }
        if !ordered(self.height_range) {
            return bad("height range");
        }
        if !(self.demote_threshold <= self.promote_threshold) {
            return bad("thresholds");
        }
        if !(self.grid_cell_velocity > 0.0 && self.grid_cell_yaw > 0.0) {
            return bad("grid cell");
        }
        if !(self.command_resample_interval > 0.0) {
            return bad("command resample interval");
        }
        if !self.initial_extents.within(&self.command_caps) {
            return bad("initial extents exceed caps");
        }
        if !self.initial_extents.contains_extents(&self.base_commands) {
            return bad("base commands must lie inside the initial extents");
        }
        if let Some(g) = self.fixed_gait {
            GaitParams::from_named(g.gait, g.frequency, g.base_height)
                .map_err(|e| CurriculumError::InvalidConfig(e.to_string()))?;
        }
        Ok(())
    }
}

/// Closed ranges for each command axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandExtents {
    pub vx: [f64; 2],
    pub vy: [f64; 2],
    pub yaw: [f64; 2],
}

impl CommandExtents {
    fn axes(&self) -> [[f64; 2]; 3] {
        [self.vx, self.vy, self.yaw]
    }

    fn axis_mut(&mut self, i: usize) -> &mut [f64; 2] {
        match i {
            0 => &mut self.vx,
            1 => &mut self.vy,
            _ => &mut self.yaw,
        }
    }

    pub fn contains(&self, c: &[f64; 3]) -> bool {
        self.axes()
            .iter()
            .zip(c)
            .all(|(r, v)| *v >= r[0] - 1e-12 && *v <= r[1] + 1e-12)
    }

    pub fn contains_extents(&self, other: &CommandExtents) -> bool {
        self.axes()
            .iter()
            .zip(other.axes())
            .all(|(a, b)| a[0] <= b[0] && b[1] <= a[1])
    }

    pub fn within(&self, caps: &[f64; 3]) -> bool {
        self.axes()
            .iter()
            .zip(caps)
            .all(|(r, c)| r[0] <= r[1] && r[0] >= -c - 1e-12 && r[1] <= c + 1e-12)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 3] {
        self.axes().map(|r| if r[0] < r[1] { rng.random_range(r[0]..=r[1]) } else { r[0] })
    }
}

/// Draws one common-group episode: a named gait's offsets with randomized
/// frequency, stance ratio, height and starting phase.
pub fn sample_gait_episode<R: Rng + ?Sized>(cfg: &CurriculumConfig, rng: &mut R) -> (NamedGait, GaitParams, PhaseState) {
    let phase = PhaseState::new(rng.random_range(0.0..1.0)).expect("unit phase");
    if let Some(g) = cfg.fixed_gait {
        let params = GaitParams::from_named(g.gait, g.frequency, g.base_height).expect("validated fixed gait");
        return (g.gait, params, phase);
    }
    let gait = NamedGait::ALL[rng.random_range(0..NamedGait::ALL.len())];
    let draw = |rng: &mut R, r: [f64; 2]| if r[0] < r[1] { rng.random_range(r[0]..=r[1]) } else { r[0] };
    let frequency = draw(rng, cfg.frequency_range);
    let stance = draw(rng, cfg.stance_range);
    let height = draw(rng, cfg.height_range);
    let params = GaitParams::new(gait.offsets(), frequency, stance, height).expect("sampled gait in range");
    (gait, params, phase)
}

/// Widens each boundary whose edge cell holds the command, if tracking was
/// good enough.
pub fn grid_adaptive_update(
    cfg: &CurriculumConfig,
    extents: &CommandExtents,
    command: &[f64; 3],
    score: f64,
) -> CommandExtents {
    let mut next = *extents;
    if score < cfg.grid_threshold {
        return next;
    }
    for axis in 0..3 {
        let cell = if axis == 2 { cfg.grid_cell_yaw } else { cfg.grid_cell_velocity };
        let cap = cfg.command_caps[axis];
        let r = next.axis_mut(axis);
        let v = command[axis];
        if v >= r[1] - cell && r[1] > 0.0 {
            r[1] = (r[1] + cell).min(cap);
        }
        if v <= r[0] + cell && r[0] < 0.0 {
            r[0] = (r[0] - cell).max(-cap);
        }
    }
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LevelChange {
    Promote,
    Demote,
    Stay,
}

/// One step of the terrain ladder, clamped to `0..=MAX_LEVEL`.
pub fn terrain_promote_demote(cfg: &CurriculumConfig, level: u32, score: f64, traversed_enough: bool) -> (u32, LevelChange) {
    if score >= cfg.promote_threshold && traversed_enough && score > 0.0 {
        ((level + 1).min(MAX_LEVEL), LevelChange::Promote)
    } else if score < cfg.demote_threshold {
        (level.saturating_sub(1), LevelChange::Demote)
    } else {
        (level.min(MAX_LEVEL), LevelChange::Stay)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotCurriculum {
    pub group: GroupTag,
    pub terrain: TerrainType,
    pub level: u32,
    /// Left the roughest flat tile; now on flat ground with grid commands.
    pub grid_mode: bool,
}

impl RobotCurriculum {
    pub fn terrain_key(&self) -> TerrainKey {
        if self.grid_mode || self.group == GroupTag::Common {
            TerrainKey::flat()
        } else {
            TerrainKey {
                kind: self.terrain,
                level: self.level,
                seed: 1000 + 10 * self.terrain.index() as u64 + self.level as u64,
            }
        }
    }
}

/// Half the robots in the common group on flat ground, half adaptive spread
/// evenly over the five terrain types at level 0.
pub fn assign_groups(n: usize) -> Result<Vec<RobotCurriculum>, CurriculumError> {
    if n == 0 || n % 2 == 1 {
        return Err(CurriculumError::OddRobotCount(n));
    }
    let half = n / 2;
    Ok((0..n)
        .map(|i| {
            if i < half {
                RobotCurriculum {
                    group: GroupTag::Common,
                    terrain: TerrainType::RoughFlat,
                    level: 0,
                    grid_mode: false,
                }
            } else {
                RobotCurriculum {
                    group: GroupTag::Adaptive,
                    terrain: TerrainType::ALL[(i - half) % TerrainType::ALL.len()],
                    level: 0,
                    grid_mode: false,
                }
            }
        })
        .collect())
}

/// What the trainer learned about one finished episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeReport {
    pub robot: usize,
    /// Mean task reward as a fraction of its maximum, in `[0, 1]`.
    pub score: f64,
    /// Planar distance from spawn (m).
    pub distance: f64,
    pub tile_length: f64,
    pub last_command: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumState {
    pub robots: Vec<RobotCurriculum>,
    pub extents: CommandExtents,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CurriculumSummary {
    pub mean_level: f64,
    pub max_level: u32,
    pub grid_fraction: f64,
    pub max_vx: f64,
    pub min_vx: f64,
    pub max_vy: f64,
    pub max_yaw: f64,
}

impl CurriculumState {
    pub fn new(cfg: &CurriculumConfig, n: usize) -> Result<Self, CurriculumError> {
        Ok(Self {
            robots: assign_groups(n)?,
            extents: cfg.initial_extents,
        })
    }

    /// Command for a robot's next episode or resample point.
    pub fn sample_command<R: Rng + ?Sized>(&self, cfg: &CurriculumConfig, robot: usize, rng: &mut R) -> [f64; 3] {
        if let (Some(c), GroupTag::Common) = (cfg.fixed_command, self.robots[robot].group) {
            return c;
        }
        if self.robots[robot].grid_mode {
            self.extents.sample(rng)
        } else {
            cfg.base_commands.sample(rng)
        }
    }

    /// Applies an episode's outcome; returns the terrain change, if any.
    pub fn end_episode(&mut self, cfg: &CurriculumConfig, report: &EpisodeReport) -> LevelChange {
        let r = &mut self.robots[report.robot];
        if r.group == GroupTag::Common {
            return LevelChange::Stay;
        }
        if r.grid_mode {
            self.extents = grid_adaptive_update(cfg, &self.extents, &report.last_command, report.score);
            return LevelChange::Stay;
        }
        let far = report.distance >= cfg.promote_distance_fraction * report.tile_length;
        let was_top = r.level == MAX_LEVEL;
        let (level, change) = terrain_promote_demote(cfg, r.level, report.score, far);
        r.level = level;
        if change == LevelChange::Promote && was_top && r.terrain == TerrainType::RoughFlat {
            r.grid_mode = true;
        }
        change
    }

    pub fn summary(&self) -> CurriculumSummary {
        let adaptive: Vec<_> = self.robots.iter().filter(|r| r.group == GroupTag::Adaptive).collect();
        let n = adaptive.len().max(1) as f64;
        CurriculumSummary {
            mean_level: adaptive.iter().map(|r| r.level as f64).sum::<f64>() / n,
            max_level: adaptive.iter().map(|r| r.level).max().unwrap_or(0),
            grid_fraction: adaptive.iter().filter(|r| r.grid_mode).count() as f64 / n,
            max_vx: self.extents.vx[1],
            min_vx: self.extents.vx[0],
            max_vy: self.extents.vy[1],
            max_yaw: self.extents.yaw[1],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gait_draws_are_uniform_and_in_range() {
        let cfg = CurriculumConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut counts = [0usize; 5];
        let n = 100_000;
        for _ in 0..n {
            let (g, p, phase) = sample_gait_episode(&cfg, &mut rng);
            counts[g.index()] += 1;
            assert_eq!(p.offsets, g.offsets());
            assert!((1.0..=4.0).contains(&p.frequency));
            assert!((0.25..=0.75).contains(&p.stance_ratio));
            assert!((0.1..=0.4).contains(&p.base_height));
            assert!((0.0..1.0).contains(&phase.phi1()));
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.2).abs() < 0.01);
        }
    }

    #[test]
    fn fixed_gait_override() {
        let cfg = CurriculumConfig {
            fixed_gait: Some(FixedGait {
                gait: NamedGait::Trotting,
                frequency: 2.0,
                base_height: 0.28,
            }),
            fixed_command: Some([0.5, 0.0, 0.0]),
            ..CurriculumConfig::default()
        };
        cfg.validate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (g, p, _) = sample_gait_episode(&cfg, &mut rng);
        assert_eq!(g, NamedGait::Trotting);
        assert_eq!(p.frequency, 2.0);
        let state = CurriculumState::new(&cfg, 4).unwrap();
        assert_eq!(state.sample_command(&cfg, 0, &mut rng), [0.5, 0.0, 0.0]);
        assert!(state.extents.contains(&state.sample_command(&cfg, 3, &mut rng)));
    }

    #[test]
    fn grid_grows_at_boundary_only() {
        let cfg = CurriculumConfig::default();
        let e = cfg.initial_extents;
        let grown = grid_adaptive_update(&cfg, &e, &[0.9, 0.0, 0.0], 0.9);
        assert_eq!(grown.vx, [-1.0, 1.5]);
        assert_eq!(grown.yaw, e.yaw);
        let same = grid_adaptive_update(&cfg, &e, &[0.9, 0.0, 0.0], 0.2);
        assert_eq!(same, e);
        let inner = grid_adaptive_update(
            &cfg,
            &CommandExtents {
                vx: [-2.0, 2.0],
                ..e
            },
            &[0.0, 0.0, 0.0],
            1.0,
        );
        assert_eq!(inner.vx, [-2.0, 2.0]);
    }

    #[test]
    fn terrain_ladder() {
        let cfg = CurriculumConfig::default();
        assert_eq!(terrain_promote_demote(&cfg, 9, 0.95, true).0, 9);
        assert_eq!(terrain_promote_demote(&cfg, 3, 0.2, true), (2, LevelChange::Demote));
        assert_eq!(terrain_promote_demote(&cfg, 0, 0.0, true).0, 0);
        assert_eq!(terrain_promote_demote(&cfg, 4, 0.9, false), (4, LevelChange::Stay));
        assert_eq!(terrain_promote_demote(&cfg, 4, 0.9, true), (5, LevelChange::Promote));
    }

    #[test]
    fn group_assignment() {
        let g = assign_groups(4096).unwrap();
        let common = g.iter().filter(|r| r.group == GroupTag::Common).count();
        assert_eq!(common, 2048);
        for t in TerrainType::ALL {
            let k = g.iter().filter(|r| r.group == GroupTag::Adaptive && r.terrain == t).count();
            assert!((409..=410).contains(&k));
        }
        let g = assign_groups(10).unwrap();
        for t in TerrainType::ALL {
            assert_eq!(g.iter().filter(|r| r.group == GroupTag::Adaptive && r.terrain == t).count(), 1);
        }
        assert!(assign_groups(7).is_err());
        assert!(assign_groups(0).is_err());
    }

    #[test]
    fn roughest_flat_graduates_to_grid() {
        let cfg = CurriculumConfig::default();
        let mut s = CurriculumState::new(&cfg, 10).unwrap();
        let idx = 5;
        assert_eq!(s.robots[idx].terrain, TerrainType::RoughFlat);
        s.robots[idx].level = MAX_LEVEL;
        let report = EpisodeReport {
            robot: idx,
            score: 0.95,
            distance: 8.0,
            tile_length: 12.0,
            last_command: [0.5, 0.0, 0.0],
        };
        s.end_episode(&cfg, &report);
        assert!(s.robots[idx].grid_mode);
        assert_eq!(s.robots[idx].terrain_key(), TerrainKey::flat());
        s.end_episode(
            &cfg,
            &EpisodeReport {
                last_command: [1.0, 0.0, 0.0],
                ..report
            },
        );
        assert_eq!(s.extents.vx[1], 1.5);
        // Common robots never move.
        assert_eq!(s.end_episode(&cfg, &EpisodeReport { robot: 0, ..report }), LevelChange::Stay);
    }

    proptest! {
        #[test]
        fn extents_stay_capped_and_monotone(
            updates in proptest::collection::vec((-5.0f64..5.0, -2.0f64..2.0, -4.0f64..4.0, 0.0f64..1.0), 1..200)
        ) {
            let cfg = CurriculumConfig::default();
            let mut e = cfg.initial_extents;
            for (vx, vy, w, score) in updates {
                let next = grid_adaptive_update(&cfg, &e, &[vx, vy, w], score);
                prop_assert!(next.within(&cfg.command_caps));
                prop_assert!(next.contains_extents(&e));
                e = next;
            }
        }

        #[test]
        fn zero_score_never_promotes(level in 0u32..=9, far in any::<bool>()) {
            let cfg = CurriculumConfig::default();
            let (next, change) = terrain_promote_demote(&cfg, level, 0.0, far);
            prop_assert!(next <= level);
            prop_assert_ne!(change, LevelChange::Promote);
        }

        #[test]
        fn samples_lie_within_extents(seed in any::<u64>()) {
            let cfg = CurriculumConfig::default();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = CurriculumState::new(&cfg, 10).unwrap();
            s.robots[7].grid_mode = true;
            for i in 0..10 {
                prop_assert!(s.extents.contains(&s.sample_command(&cfg, i, &mut rng)));
            }
        }
    }
}
