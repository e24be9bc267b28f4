//! Leg geometry and closed-form kinematics of a Go1-class quadruped.
//!
//! Each leg has hip abduction (about body x), hip pitch and knee pitch (about
//! the abducted y axis). Angles follow the usual convention where the
//! nominal stand is `(0, 0.9, -1.8)` and knee angles are negative.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gait::NUM_LEGS;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("foot target {0:?} is out of reach for leg {1}")]
    Unreachable([f64; 3], usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Morphology {
    /// Hip positions in the body frame, legs ordered FL, FR, RL, RR.
    pub hip_offsets: [[f64; 3]; NUM_LEGS],
    pub abduction_offset: f64,
    pub thigh_length: f64,
    pub calf_length: f64,
    pub nominal_pose: [f64; 3],
    pub joint_lower: [f64; 3],
    pub joint_upper: [f64; 3],
}

impl Default for Morphology {
    fn default() -> Self {
        let (x, y) = (0.1881, 0.04675);
        Self {
            hip_offsets: [[x, y, 0.0], [x, -y, 0.0], [-x, y, 0.0], [-x, -y, 0.0]],
            abduction_offset: 0.08,
            thigh_length: 0.213,
            calf_length: 0.213,
            nominal_pose: [0.0, 0.9, -1.8],
            joint_lower: [-0.8, -1.0, -2.7],
            joint_upper: [0.8, 3.0, -0.9],
        }
    }
}

impl Morphology {
    /// +1 for left legs, -1 for right legs.
    pub fn side(leg: usize) -> f64 {
        if leg % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn nominal_joints(&self) -> [f64; 12] {
        let mut q = [0.0; 12];
        for leg in 0..NUM_LEGS {
            q[3 * leg..3 * leg + 3].copy_from_slice(&self.nominal_pose);
        }
        q
    }

    pub fn clamp_joint(&self, j: usize, q: f64) -> f64 {
        q.clamp(self.joint_lower[j % 3], self.joint_upper[j % 3])
    }

    /// Foot position relative to the hip, body frame.
    pub fn foot_in_hip(&self, leg: usize, q: [f64; 3]) -> Vector3<f64> {
        let (l1, l2, l3) = (self.abduction_offset, self.thigh_length, self.calf_length);
        let s = Self::side(leg);
        let x = -l2 * q[1].sin() - l3 * (q[1] + q[2]).sin();
        let yp = s * l1;
        let zp = -l2 * q[1].cos() - l3 * (q[1] + q[2]).cos();
        let (s1, c1) = q[0].sin_cos();
        Vector3::new(x, c1 * yp - s1 * zp, s1 * yp + c1 * zp)
    }

    /// Foot position in the body frame.
    pub fn foot_in_body(&self, leg: usize, q: [f64; 3]) -> Vector3<f64> {
        Vector3::from(self.hip_offsets[leg]) + self.foot_in_hip(leg, q)
    }

    /// Knee position in the body frame.
    pub fn knee_in_body(&self, leg: usize, q: [f64; 3]) -> Vector3<f64> {
        let s = Self::side(leg);
        let l2 = self.thigh_length;
        let x = -l2 * q[1].sin();
        let yp = s * self.abduction_offset;
        let zp = -l2 * q[1].cos();
        let (s1, c1) = q[0].sin_cos();
        Vector3::from(self.hip_offsets[leg]) + Vector3::new(x, c1 * yp - s1 * zp, s1 * yp + c1 * zp)
    }

    /// d(foot_in_body)/dq, columns ordered abduction, hip, knee.
    pub fn foot_jacobian(&self, leg: usize, q: [f64; 3]) -> Matrix3<f64> {
        let (l2, l3) = (self.thigh_length, self.calf_length);
        let p = self.foot_in_hip(leg, q);
        let x = p.x;
        let zp = -l2 * q[1].cos() - l3 * (q[1] + q[2]).cos();
        let s23 = (q[1] + q[2]).sin();
        let c23 = (q[1] + q[2]).cos();
        let (s1, c1) = q[0].sin_cos();
        let rot = |v: Vector3<f64>| Vector3::new(v.x, c1 * v.y - s1 * v.z, s1 * v.y + c1 * v.z);
        let d1 = Vector3::new(0.0, -p.z, p.y);
        let d2 = rot(Vector3::new(zp, 0.0, -x));
        let d3 = rot(Vector3::new(-l3 * c23, 0.0, l3 * s23));
        Matrix3::from_columns(&[d1, d2, d3])
    }

    /// Joint angles placing the foot at `p` (relative to the hip, body frame).
    pub fn inverse(&self, leg: usize, p: Vector3<f64>) -> Result<[f64; 3], KinematicsError> {
        let (l1, l2, l3) = (self.abduction_offset, self.thigh_length, self.calf_length);
        let s = Self::side(leg);
        let err = || KinematicsError::Unreachable([p.x, p.y, p.z], leg);
        let r2 = p.y * p.y + p.z * p.z;
        if r2 < l1 * l1 {
            return Err(err());
        }
        let zp = -(r2 - l1 * l1).sqrt();
        let q1 = wrap_angle(p.z.atan2(p.y) - zp.atan2(s * l1));
        let d2 = p.x * p.x + zp * zp;
        let c3 = (d2 - l2 * l2 - l3 * l3) / (2.0 * l2 * l3);
        if !(-1.0..=1.0).contains(&c3) {
            return Err(err());
        }
        let q3 = -c3.acos();
        let (a, b) = (l2 + l3 * q3.cos(), l3 * q3.sin());
        let q2 = (-p.x).atan2(-zp) - b.atan2(a);
        Ok([q1, q2, q3])
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let t = std::f64::consts::TAU;
    let w = (a + std::f64::consts::PI).rem_euclid(t) - std::f64::consts::PI;
    if w <= -std::f64::consts::PI {
        w + t
    } else {
        w
    }
}
