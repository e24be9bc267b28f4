//! Gait parameterization, the per-leg periodic phase machine and the
//! probabilistic desired-contact schedule.
//!
//! Legs are ordered front-left, front-right, rear-left, rear-right. Only the
//! front-left phase is stored; the other three legs are derived from it with
//! fixed offsets, so the legs can never drift apart.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Width of the normal CDF used by the contact schedule.
pub const CONTACT_SIGMA: f64 = 0.05;

/// Number of legs.
pub const NUM_LEGS: usize = 4;

/// Length of the encoded gait vector.
pub const GAIT_VECTOR_DIM: usize = 8;

/// Length of the partial gait vector that conditions the discriminator.
pub const PARTIAL_GAIT_DIM: usize = 5;

pub const LEG_NAMES: [&str; NUM_LEGS] = ["FL", "FR", "RL", "RR"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaitError {
    #[error("non-finite {name}: {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("unknown gait `{0}` (expected walking, trotting, pacing, pronking or bounding)")]
    UnknownGait(String),
}

fn check_finite(name: &'static str, value: f64) -> Result<f64, GaitError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(GaitError::NonFinite { name, value })
    }
}

fn check_unit_interval(name: &'static str, value: f64) -> Result<f64, GaitError> {
    check_finite(name, value)?;
    if (0.0..1.0).contains(&value) {
        Ok(value)
    } else {
        Err(GaitError::OutOfRange {
            name,
            value,
            range: "[0, 1)",
        })
    }
}

fn check_stance_ratio(value: f64) -> Result<f64, GaitError> {
    check_finite("stance ratio", value)?;
    if value > 0.0 && value < 1.0 {
        Ok(value)
    } else {
        Err(GaitError::OutOfRange {
            name: "stance ratio",
            value,
            range: "(0, 1)",
        })
    }
}

/// Fractional part in `[0, 1)`.
///
/// `x - floor(x)` can round up to exactly 1.0 for tiny negative inputs; that
/// case is folded back to 0.
pub fn wrap_unit(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// The five gaits of the motion dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum NamedGait {
    Walking,
    Trotting,
    Pacing,
    Pronking,
    Bounding,
}

impl NamedGait {
    pub const ALL: [NamedGait; 5] = [
        NamedGait::Walking,
        NamedGait::Trotting,
        NamedGait::Pacing,
        NamedGait::Pronking,
        NamedGait::Bounding,
    ];

    /// Phase offsets of FR, RL and RR relative to FL.
    pub fn offsets(self) -> [f64; 3] {
        match self {
            NamedGait::Walking => [0.5, 0.25, 0.75],
            NamedGait::Trotting => [0.5, 0.5, 0.0],
            NamedGait::Pacing => [0.5, 0.0, 0.5],
            NamedGait::Pronking => [0.0, 0.0, 0.0],
            NamedGait::Bounding => [0.0, 0.5, 0.5],
        }
    }

    /// Stance ratio used for this gait in the motion dataset.
    pub fn stance_ratio(self) -> f64 {
        match self {
            NamedGait::Walking => 0.75,
            _ => 0.5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NamedGait::Walking => "walking",
            NamedGait::Trotting => "trotting",
            NamedGait::Pacing => "pacing",
            NamedGait::Pronking => "pronking",
            NamedGait::Bounding => "bounding",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for NamedGait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NamedGait {
    type Err = GaitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "walking" | "walk" => Ok(NamedGait::Walking),
            "trotting" | "trot" => Ok(NamedGait::Trotting),
            "pacing" | "pace" => Ok(NamedGait::Pacing),
            "pronking" | "pronk" => Ok(NamedGait::Pronking),
            "bounding" | "bound" => Ok(NamedGait::Bounding),
            _ => Err(GaitError::UnknownGait(s.to_string())),
        }
    }
}

/// Looks up `(offsets, stance ratio)` for a gait name.
pub fn named_gait(name: &str) -> Result<([f64; 3], f64), GaitError> {
    let gait: NamedGait = name.parse()?;
    Ok((gait.offsets(), gait.stance_ratio()))
}

/// Gait command: phase offsets, stepping frequency, stance ratio and target
/// base height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitParams {
    pub offsets: [f64; 3],
    /// Stepping frequency in Hz.
    pub frequency: f64,
    pub stance_ratio: f64,
    /// Commanded base height in meters.
    pub base_height: f64,
}

impl GaitParams {
    pub fn new(
        offsets: [f64; 3],
        frequency: f64,
        stance_ratio: f64,
        base_height: f64,
    ) -> Result<Self, GaitError> {
        let params = Self {
            offsets,
            frequency,
            stance_ratio,
            base_height,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn from_named(
        gait: NamedGait,
        frequency: f64,
        base_height: f64,
    ) -> Result<Self, GaitError> {
        Self::new(gait.offsets(), frequency, gait.stance_ratio(), base_height)
    }

    pub fn validate(&self) -> Result<(), GaitError> {
        for &o in &self.offsets {
            check_unit_interval("phase offset", o)?;
        }
        check_finite("frequency", self.frequency)?;
        if self.frequency < 0.0 {
            return Err(GaitError::OutOfRange {
                name: "frequency",
                value: self.frequency,
                range: "[0, inf)",
            });
        }
        check_stance_ratio(self.stance_ratio)?;
        check_finite("base height", self.base_height)?;
        Ok(())
    }

    pub fn partial(&self) -> PartialGaitParams {
        PartialGaitParams {
            offsets: self.offsets,
            stance_ratio: self.stance_ratio,
            frequency: self.frequency,
        }
    }
}

/// Time-invariant part of the gait command that conditions the
/// discriminator: `(φ₂, φ₃, φ₄, φ_stance, f)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialGaitParams {
    pub offsets: [f64; 3],
    pub stance_ratio: f64,
    pub frequency: f64,
}

impl PartialGaitParams {
    pub fn to_array(&self) -> [f64; PARTIAL_GAIT_DIM] {
        [
            self.offsets[0],
            self.offsets[1],
            self.offsets[2],
            self.stance_ratio,
            self.frequency,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            offsets: [v[0], v[1], v[2]],
            stance_ratio: v[3],
            frequency: v[4],
        }
    }

    pub fn from_named(gait: NamedGait, frequency: f64) -> Self {
        Self {
            offsets: gait.offsets(),
            stance_ratio: gait.stance_ratio(),
            frequency,
        }
    }
}

/// Phase of the front-left leg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    phi1: f64,
}

impl PhaseState {
    pub fn new(phi1: f64) -> Result<Self, GaitError> {
        Ok(Self {
            phi1: check_unit_interval("phase", phi1)?,
        })
    }

    pub fn phi1(&self) -> f64 {
        self.phi1
    }
}

impl Default for PhaseState {
    fn default() -> Self {
        Self { phi1: 0.0 }
    }
}

/// One control step of the phase machine: `φ₁ ← frac(φ₁ + f·dt)`.
pub fn advance_phase(state: PhaseState, frequency: f64, dt: f64) -> Result<PhaseState, GaitError> {
    check_finite("frequency", frequency)?;
    check_finite("dt", dt)?;
    if frequency < 0.0 {
        return Err(GaitError::OutOfRange {
            name: "frequency",
            value: frequency,
            range: "[0, inf)",
        });
    }
    if dt <= 0.0 {
        return Err(GaitError::OutOfRange {
            name: "dt",
            value: dt,
            range: "(0, inf)",
        });
    }
    Ok(PhaseState {
        phi1: wrap_unit(state.phi1 + frequency * dt),
    })
}

/// Phases of all four legs given FL's phase and the three offsets.
pub fn leg_phases(state: PhaseState, offsets: [f64; 3]) -> [f64; NUM_LEGS] {
    let p = state.phi1;
    [
        p,
        wrap_unit(p + offsets[0]),
        wrap_unit(p + offsets[1]),
        wrap_unit(p + offsets[2]),
    ]
}

/// `[sin 2πφ₁, cos 2πφ₁, φ₂, φ₃, φ₄, f, φ_stance, h_b^cmd]`
pub fn encode_gait_vector(state: PhaseState, params: &GaitParams) -> [f64; GAIT_VECTOR_DIM] {
    let angle = 2.0 * std::f64::consts::PI * state.phi1;
    [
        angle.sin(),
        angle.cos(),
        params.offsets[0],
        params.offsets[1],
        params.offsets[2],
        params.frequency,
        params.stance_ratio,
        params.base_height,
    ]
}

/// Normal CDF with standard deviation `sigma`, via `libm::erfc` (FreeBSD
/// msun port, error below one ulp).
pub fn normal_cdf(x: f64, sigma: f64) -> f64 {
    0.5 * libm::erfc(-x / (sigma * std::f64::consts::SQRT_2))
}

/// Piecewise-linear remap that sends the stance window to `[0, 0.5]` and the
/// swing window to `(0.5, 1)`.
pub fn remap_phase(phi: f64, stance_ratio: f64) -> f64 {
    if phi <= stance_ratio {
        0.5 * phi / stance_ratio
    } else {
        0.5 + 0.5 * (phi - stance_ratio) / (1.0 - stance_ratio)
    }
}

/// Desired stance probability of a single leg at phase `phi`.
pub fn desired_contact(phi: f64, stance_ratio: f64, sigma: f64) -> f64 {
    let r = remap_phase(phi, stance_ratio);
    normal_cdf(r, sigma) * (1.0 - normal_cdf(r - 0.5, sigma))
        + normal_cdf(r - 1.0, sigma) * (1.0 - normal_cdf(r - 1.5, sigma))
}

/// Desired stance probability of every leg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactSchedule {
    pub desired: [f64; NUM_LEGS],
}

impl ContactSchedule {
    /// Legs that should be in stance (`C > 0.5`).
    pub fn stance_mask(&self) -> [bool; NUM_LEGS] {
        self.desired.map(|c| c > 0.5)
    }

    /// A schedule that asks for stance on every leg.
    pub fn all_stance() -> Self {
        Self {
            desired: [1.0; NUM_LEGS],
        }
    }
}

pub fn desired_contact_schedule(
    phases: &[f64; NUM_LEGS],
    stance_ratio: f64,
    sigma: f64,
) -> Result<ContactSchedule, GaitError> {
    check_stance_ratio(stance_ratio)?;
    check_finite("sigma", sigma)?;
    if sigma <= 0.0 {
        return Err(GaitError::OutOfRange {
            name: "sigma",
            value: sigma,
            range: "(0, inf)",
        });
    }
    for &p in phases {
        check_unit_interval("phase", p)?;
    }
    Ok(ContactSchedule {
        desired: phases.map(|p| desired_contact(p, stance_ratio, sigma)),
    })
}
