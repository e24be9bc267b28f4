//! Batch quadruped simulator: terrain tiles, domain randomization, trunk and
//! leg dynamics with penalty contacts, and the per-robot episode wrapper.

mod env;
mod randomization;
mod robot;
mod terrain;

pub use env::{
    check_termination, heightmap_scan, Env, EnvSnapshot, EpisodeSpec, EpisodeStatus, ObsScales, SimConfig, StepOutcome, TerrainKey,
    CONTACT_FORCE_THRESHOLD, SCAN_HALF_LENGTH, SCAN_HALF_WIDTH, SCAN_NX, SCAN_NY,
};
pub use randomization::{apply_randomization, sample_push, PhysicalParams, RandomizationProfile};
pub use robot::{step_robot, ExternalForce, PhysicsConfig, RobotState};
pub use terrain::{generate_terrain, TerrainConfig, TerrainField, TerrainType, MAX_LEVEL};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("unknown terrain type '{0}'")]
    UnknownTerrain(String),
    #[error("bad heightfield: {0}")]
    BadHeightfield(String),
    #[error("terrain level {0} out of range 0..=9")]
    InvalidLevel(u32),
    #[error("invalid simulator config: {0}")]
    InvalidConfig(String),
    #[error("simulation fault: {0}")]
    Fault(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
