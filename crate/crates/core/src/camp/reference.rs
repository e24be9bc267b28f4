use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{CampError, CampState};
use crate::gait::{self, NamedGait, PartialGaitParams, PhaseState, NUM_LEGS};
use crate::kinematics::Morphology;

/// Shape of the analytic reference motions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceConfig {
    pub base_height: f64,
    pub swing_height: f64,
    /// Forward speed for the 2 Hz trajectories.
    pub slow_speed: f64,
    /// Forward speed for the 4 Hz trajectories.
    pub fast_speed: f64,
    pub control_dt: f64,
    pub frames: usize,
    /// Front-left phase at frame 0; kept off the contact boundaries.
    pub initial_phase: f64,
    pub morphology: Morphology,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            base_height: 0.3,
            swing_height: 0.09,
            slow_speed: 0.5,
            fast_speed: 1.5,
            control_dt: 0.02,
            frames: 100,
            initial_phase: 0.013,
            morphology: Morphology::default(),
        }
    }
}

impl ReferenceConfig {
    pub fn speed_for(&self, frequency: f64) -> f64 {
        if frequency >= 3.0 {
            self.fast_speed
        } else {
            self.slow_speed
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMotion {
    pub gait: NamedGait,
    pub params: PartialGaitParams,
    pub forward_speed: f64,
    pub states: Vec<CampState>,
    /// Kinematic foot contact per frame (foot on the ground).
    pub contacts: Vec<[bool; NUM_LEGS]>,
    /// Leg phases per frame.
    pub phases: Vec<[f64; NUM_LEGS]>,
}

impl ReferenceMotion {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn label(&self) -> String {
        format!("{}_{}hz", self.gait.name(), self.params.frequency)
    }
}

/// Foot position relative to its hip (world-aligned, trunk level) at leg
/// phase `phi`.
fn foot_target(cfg: &ReferenceConfig, phi: f64, stance: f64, frequency: f64, speed: f64) -> (f64, f64) {
    let half_stride = speed * (stance / frequency) / 2.0;
    if phi > 0.0 && phi < stance {
        let u = phi / stance;
        (half_stride - 2.0 * half_stride * u, 0.0)
    } else {
        let u = if phi >= stance { (phi - stance) / (1.0 - stance) } else { 1.0 };
        let x = -half_stride + half_stride * (1.0 - (std::f64::consts::PI * u).cos());
        let z = cfg.swing_height * 0.5 * (1.0 - (std::f64::consts::TAU * u).cos());
        (x, z)
    }
}

fn joints_at(
    cfg: &ReferenceConfig,
    offsets: [f64; 3],
    stance: f64,
    frequency: f64,
    speed: f64,
    t: f64,
) -> Result<([f64; 12], [f64; NUM_LEGS], [f64; NUM_LEGS]), CampError> {
    let phi1 = gait::wrap_unit(cfg.initial_phase + frequency * t);
    let phases = gait::leg_phases(PhaseState::new(phi1)?, offsets);
    let m = &cfg.morphology;
    let mut q = [0.0; 12];
    let mut heights = [0.0; NUM_LEGS];
    for leg in 0..NUM_LEGS {
        let (x, z) = foot_target(cfg, phases[leg], stance, frequency, speed);
        let target = Vector3::new(x, Morphology::side(leg) * m.abduction_offset, z - cfg.base_height);
        let qi = m.inverse(leg, target)?;
        q[3 * leg..3 * leg + 3].copy_from_slice(&qi);
        heights[leg] = z;
    }
    Ok((q, phases, heights))
}

/// Builds one periodic reference trajectory for a named gait.
pub fn generate_reference_motion(
    cfg: &ReferenceConfig,
    gait: NamedGait,
    frequency: f64,
    forward_speed: f64,
) -> Result<ReferenceMotion, CampError> {
    if !(frequency > 0.0) || !forward_speed.is_finite() {
        return Err(CampError::InvalidReference(format!(
            "frequency {frequency} / speed {forward_speed}"
        )));
    }
    let offsets = gait.offsets();
    let stance = gait.stance_ratio();
    let h = 1e-5;
    let mut states = Vec::with_capacity(cfg.frames);
    let mut contacts = Vec::with_capacity(cfg.frames);
    let mut phases = Vec::with_capacity(cfg.frames);
    for k in 0..cfg.frames {
        let t = k as f64 * cfg.control_dt;
        let (q, ph, heights) = joints_at(cfg, offsets, stance, frequency, forward_speed, t)?;
        let (qp, _, _) = joints_at(cfg, offsets, stance, frequency, forward_speed, t + h)?;
        let (qm, _, _) = joints_at(cfg, offsets, stance, frequency, forward_speed, t - h)?;
        let mut dq = [0.0; 12];
        for j in 0..12 {
            dq[j] = (qp[j] - qm[j]) / (2.0 * h);
        }
        // Contact from forward kinematics of the solved joints.
        let mut contact = [false; NUM_LEGS];
        for leg in 0..NUM_LEGS {
            let p = cfg.morphology.foot_in_hip(leg, [q[3 * leg], q[3 * leg + 1], q[3 * leg + 2]]);
            contact[leg] = p.z + cfg.base_height <= 1e-6;
            debug_assert!((p.z + cfg.base_height - heights[leg]).abs() < 1e-9);
        }
        states.push(CampState {
            joint_pos: q,
            joint_vel: dq,
            base_lin_vel: [forward_speed, 0.0, 0.0],
            base_ang_vel: [0.0; 3],
        });
        contacts.push(contact);
        phases.push(ph);
    }
    Ok(ReferenceMotion {
        gait,
        params: PartialGaitParams::from_named(gait, frequency),
        forward_speed,
        states,
        contacts,
        phases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stance_feet_are_stationary_in_world() {
        let cfg = ReferenceConfig::default();
        let m = generate_reference_motion(&cfg, NamedGait::Trotting, 2.0, 0.5).unwrap();
        let dt = cfg.control_dt;
        for k in 0..m.len() - 1 {
            for leg in 0..4 {
                if m.contacts[k][leg] && m.contacts[k + 1][leg] {
                    let q0 = &m.states[k].joint_pos[3 * leg..3 * leg + 3];
                    let q1 = &m.states[k + 1].joint_pos[3 * leg..3 * leg + 3];
                    let p0 = cfg.morphology.foot_in_hip(leg, [q0[0], q0[1], q0[2]]);
                    let p1 = cfg.morphology.foot_in_hip(leg, [q1[0], q1[1], q1[2]]);
                    let world_dx = (p1.x + 0.5 * (k + 1) as f64 * dt) - (p0.x + 0.5 * k as f64 * dt);
                    assert!(world_dx.abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn swing_peak_height() {
        let cfg = ReferenceConfig {
            initial_phase: 0.0,
            ..ReferenceConfig::default()
        };
        let (x, z) = foot_target(&cfg, 0.75, 0.5, 2.0, 0.5);
        assert!((z - 0.09).abs() < 1e-12);
        assert!(x.abs() < 1e-12);
    }

    #[test]
    fn joint_velocity_matches_frame_difference_in_stance() {
        let cfg = ReferenceConfig::default();
        let m = generate_reference_motion(&cfg, NamedGait::Walking, 2.0, 0.5).unwrap();
        let mut checked = 0;
        for k in 1..m.len() - 1 {
            for leg in 0..4 {
                if !(m.contacts[k - 1][leg] && m.contacts[k][leg] && m.contacts[k + 1][leg]) {
                    continue;
                }
                for j in 3 * leg..3 * leg + 3 {
                    let fd = (m.states[k + 1].joint_pos[j] - m.states[k - 1].joint_pos[j]) / (2.0 * cfg.control_dt);
                    assert!((fd - m.states[k].joint_vel[j]).abs() < 0.02, "{fd} vs {}", m.states[k].joint_vel[j]);
                    checked += 1;
                }
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn rejects_bad_frequency() {
        let cfg = ReferenceConfig::default();
        assert!(generate_reference_motion(&cfg, NamedGait::Pacing, 0.0, 0.5).is_err());
    }
}
