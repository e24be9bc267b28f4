use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimError;

/// Ranges for per-episode physics perturbations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RandomizationProfile {
    pub friction: [f64; 2],
    /// Mass added to the trunk (kg).
    pub added_mass: [f64; 2],
    pub motor_strength: [f64; 2],
    /// Observation delay in control steps, inclusive range.
    pub latency_steps: [u32; 2],
    pub push_interval: f64,
    pub push_max_velocity: f64,
}

impl Default for RandomizationProfile {
    fn default() -> Self {
        Self {
            friction: [0.4, 1.25],
            added_mass: [-1.0, 3.0],
            motor_strength: [0.9, 1.1],
            latency_steps: [0, 1],
            push_interval: 8.0,
            push_max_velocity: 0.5,
        }
    }
}

impl RandomizationProfile {
    /// Nominal physics with no perturbation and no pushes.
    pub fn disabled(friction: f64) -> Self {
        Self {
            friction: [friction, friction],
            added_mass: [0.0, 0.0],
            motor_strength: [1.0, 1.0],
            latency_steps: [0, 0],
            push_interval: f64::INFINITY,
            push_max_velocity: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !ordered(self.friction) || self.friction[0] < 0.0 {
            return Err(SimError::InvalidConfig("friction range".into()));
        }
        if !ordered(self.added_mass) || !ordered(self.motor_strength) || self.motor_strength[0] <= 0.0 {
            return Err(SimError::InvalidConfig("mass / motor range".into()));
        }
        if self.latency_steps[0] > self.latency_steps[1] {
            return Err(SimError::InvalidConfig("latency range".into()));
        }
        if !(self.push_interval > 0.0) || !(self.push_max_velocity >= 0.0) {
            return Err(SimError::InvalidConfig("push schedule".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub friction: f64,
    pub added_mass: f64,
    pub motor_strength: f64,
    pub latency_steps: u32,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            friction: 0.8,
            added_mass: 0.0,
            motor_strength: 1.0,
            latency_steps: 0,
        }
    }
}

fn draw<R: Rng + ?Sized>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

/// Samples one episode's physical parameters.
pub fn apply_randomization<R: Rng + ?Sized>(profile: &RandomizationProfile, rng: &mut R) -> PhysicalParams {
    PhysicalParams {
        friction: draw(rng, profile.friction),
        added_mass: draw(rng, profile.added_mass),
        motor_strength: draw(rng, profile.motor_strength),
        latency_steps: rng.random_range(profile.latency_steps[0]..=profile.latency_steps[1]),
    }
}

/// Horizontal velocity change of one push.
pub fn sample_push<R: Rng + ?Sized>(profile: &RandomizationProfile, rng: &mut R) -> [f64; 2] {
    if profile.push_max_velocity <= 0.0 {
        return [0.0; 2];
    }
    let speed = rng.random_range(0.0..=profile.push_max_velocity);
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    [speed * angle.cos(), speed * angle.sin()]
}
