//! Trunk rigid body on four massless 3-DoF legs with penalty foot contacts.
//!
//! Each substep solves a linearized implicit Euler update over the 18
//! generalized velocities (trunk linear, trunk angular in world frame, 12
//! joint rates). Contact and PD stiffness/damping enter the system matrix,
//! which keeps stiff ground contact stable at the 200 Hz physics rate.

use nalgebra::{Matrix3, SMatrix, SVector, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::randomization::PhysicalParams;
use super::terrain::TerrainField;
use super::SimError;
use crate::gait::NUM_LEGS;
use crate::kinematics::Morphology;

type Mat18 = SMatrix<f64, 18, 18>;
type Vec18 = SVector<f64, 18>;
type Jac = SMatrix<f64, 3, 18>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsConfig {
    pub morphology: Morphology,
    pub trunk_mass: f64,
    pub trunk_inertia: [f64; 3],
    pub trunk_half_extents: [f64; 3],
    /// Reflected rotor inertia per joint (kg m^2).
    pub armature: f64,
    pub kp: f64,
    pub kd: f64,
    pub torque_limit: f64,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    /// Tangential spring to the touchdown point, giving static friction.
    pub tangential_stiffness: f64,
    pub tangential_damping: f64,
    pub gravity: f64,
    pub control_dt: f64,
    pub substeps: usize,
    pub action_scale: f64,
    /// Pins the trunk in place (test rig).
    pub fixed_base: bool,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            morphology: Morphology::default(),
            trunk_mass: 6.0,
            trunk_inertia: [0.08, 0.25, 0.3],
            trunk_half_extents: [0.188, 0.047, 0.057],
            armature: 0.01,
            kp: 20.0,
            kd: 0.5,
            torque_limit: 23.7,
            contact_stiffness: 2e4,
            contact_damping: 200.0,
            tangential_stiffness: 1e4,
            tangential_damping: 300.0,
            gravity: 9.81,
            control_dt: 0.02,
            substeps: 4,
            action_scale: 0.5,
            fixed_base: false,
        }
    }
}

impl PhysicsConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            self.trunk_mass,
            self.armature,
            self.torque_limit,
            self.contact_stiffness,
            self.control_dt,
            self.action_scale,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || self.trunk_inertia.iter().any(|v| !(*v > 0.0)) {
            return Err(SimError::InvalidConfig("physics constants must be positive".into()));
        }
        if self.substeps == 0 || self.kp < 0.0 || self.kd < 0.0 || self.contact_damping < 0.0 {
            return Err(SimError::InvalidConfig("physics gains".into()));
        }
        Ok(())
    }

    pub fn substep_dt(&self) -> f64 {
        self.control_dt / self.substeps as f64
    }

    /// Trunk height at which the nominal pose just touches flat ground.
    pub fn stand_height(&self) -> f64 {
        -self.morphology.foot_in_hip(0, self.morphology.nominal_pose).z
    }
}

/// A force applied to the trunk for one control step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ExternalForce {
    pub force: Vector3<f64>,
    /// Application point in the body frame.
    pub point: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    /// World frame.
    pub lin_vel: Vector3<f64>,
    /// World frame.
    pub ang_vel: Vector3<f64>,
    pub q: [f64; 12],
    pub dq: [f64; 12],
    /// Mean applied torque over the last control step.
    pub torque: [f64; 12],
    pub foot_pos: [Vector3<f64>; NUM_LEGS],
    pub foot_vel: [Vector3<f64>; NUM_LEGS],
    /// Mean ground reaction per foot over the last control step (world).
    pub foot_force: [Vector3<f64>; NUM_LEGS],
    pub external: ExternalForce,
    /// Stiction anchor of each foot while in contact.
    pub anchors: [Option<Vector3<f64>>; NUM_LEGS],
}

impl RobotState {
    /// Nominal pose with the feet resting on the terrain under `xy`.
    pub fn standing(cfg: &PhysicsConfig, terrain: &TerrainField, xy: [f64; 2], yaw: f64) -> Self {
        let ground = cfg
            .morphology
            .hip_offsets
            .iter()
            .map(|h| {
                let c = yaw.cos();
                let s = yaw.sin();
                terrain.height(xy[0] + c * h[0] - s * h[1], xy[1] + s * h[0] + c * h[1])
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let mut s = Self {
            position: Vector3::new(xy[0], xy[1], ground + cfg.stand_height()),
            orientation: UnitQuaternion::from_euler_angles(0.0, 0.0, yaw),
            lin_vel: Vector3::zeros(),
            ang_vel: Vector3::zeros(),
            q: cfg.morphology.nominal_joints(),
            dq: [0.0; 12],
            torque: [0.0; 12],
            foot_pos: [Vector3::zeros(); NUM_LEGS],
            foot_vel: [Vector3::zeros(); NUM_LEGS],
            foot_force: [Vector3::zeros(); NUM_LEGS],
            external: ExternalForce::default(),
            anchors: [None; NUM_LEGS],
        };
        s.refresh_feet(cfg);
        s
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.orientation.to_rotation_matrix().into_inner()
    }

    pub fn leg_q(&self, leg: usize) -> [f64; 3] {
        [self.q[3 * leg], self.q[3 * leg + 1], self.q[3 * leg + 2]]
    }

    fn leg_dq(&self, leg: usize) -> Vector3<f64> {
        Vector3::new(self.dq[3 * leg], self.dq[3 * leg + 1], self.dq[3 * leg + 2])
    }

    pub fn lin_vel_body(&self) -> Vector3<f64> {
        self.orientation.inverse_transform_vector(&self.lin_vel)
    }

    pub fn ang_vel_body(&self) -> Vector3<f64> {
        self.orientation.inverse_transform_vector(&self.ang_vel)
    }

    /// Unit gravity direction in the body frame.
    pub fn projected_gravity(&self) -> Vector3<f64> {
        self.orientation.inverse_transform_vector(&Vector3::new(0.0, 0.0, -1.0))
    }

    pub fn yaw(&self) -> f64 {
        self.orientation.euler_angles().2
    }

    pub fn body_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.position + self.orientation.transform_vector(p)
    }

    pub fn refresh_feet(&mut self, cfg: &PhysicsConfig) {
        let r = self.rotation();
        for leg in 0..NUM_LEGS {
            let q = self.leg_q(leg);
            let rel = r * cfg.morphology.foot_in_body(leg, q);
            self.foot_pos[leg] = self.position + rel;
            self.foot_vel[leg] =
                self.lin_vel + self.ang_vel.cross(&rel) + r * cfg.morphology.foot_jacobian(leg, q) * self.leg_dq(leg);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
            && self.lin_vel.iter().all(|v| v.is_finite())
            && self.ang_vel.iter().all(|v| v.is_finite())
            && self.q.iter().chain(&self.dq).all(|v| v.is_finite())
    }

    /// Points on non-foot bodies used for collision counting: four bottom
    /// trunk corners, hips, thigh midpoints, knees, calf midpoints.
    pub fn collision_points(&self, cfg: &PhysicsConfig) -> Vec<Vector3<f64>> {
        let m = &cfg.morphology;
        let [hx, hy, hz] = cfg.trunk_half_extents;
        let mut pts = Vec::with_capacity(20);
        for (sx, sy) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
            pts.push(self.body_point(&Vector3::new(sx * hx, sy * hy, -hz)));
        }
        for leg in 0..NUM_LEGS {
            let q = self.leg_q(leg);
            let hip = Vector3::from(m.hip_offsets[leg]);
            let knee = m.knee_in_body(leg, q);
            let foot = m.foot_in_body(leg, q);
            pts.push(self.body_point(&hip));
            pts.push(self.body_point(&((hip + knee) * 0.5)));
            pts.push(self.body_point(&knee));
            pts.push(self.body_point(&((knee + foot) * 0.5)));
        }
        pts
    }

    /// Number of non-foot collision points at or below the terrain.
    pub fn count_collisions(&self, cfg: &PhysicsConfig, terrain: &TerrainField) -> usize {
        self.collision_points(cfg)
            .iter()
            .filter(|p| p.z <= terrain.height(p.x, p.y))
            .count()
    }

    /// True when any trunk corner or the trunk centre touches the terrain.
    pub fn trunk_contact(&self, cfg: &PhysicsConfig, terrain: &TerrainField) -> bool {
        let [hx, hy, hz] = cfg.trunk_half_extents;
        if self.position.z < terrain.height(self.position.x, self.position.y) + hz {
            return true;
        }
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    let p = self.body_point(&Vector3::new(sx * hx, sy * hy, sz * hz));
                    if p.z <= terrain.height(p.x, p.y) {
                        return true;
                    }
                }
            }
        }
        false
    }
}

struct ContactEval {
    force: Vector3<f64>,
    stiffness: Matrix3<f64>,
    damping: Matrix3<f64>,
    anchor: Option<Vector3<f64>>,
}

fn foot_contact(
    cfg: &PhysicsConfig,
    friction: f64,
    terrain: &TerrainField,
    p: &Vector3<f64>,
    v: &Vector3<f64>,
    anchor: Option<Vector3<f64>>,
) -> ContactEval {
    let none = ContactEval {
        force: Vector3::zeros(),
        stiffness: Matrix3::zeros(),
        damping: Matrix3::zeros(),
        anchor: None,
    };
    let h = terrain.height(p.x, p.y);
    if p.z >= h {
        return none;
    }
    let n = Vector3::from(terrain.normal(p.x, p.y));
    let depth = (h - p.z) * n.z;
    let vn = v.dot(&n);
    let fn_ = cfg.contact_stiffness * depth - cfg.contact_damping * vn;
    if fn_ <= 0.0 {
        return none;
    }
    let nn = n * n.transpose();
    let tangent = Matrix3::identity() - nn;
    let mut anchor = anchor.unwrap_or(*p);
    let stretch = tangent * (p - anchor);
    let vt = tangent * v;
    let mut ft = -stretch * cfg.tangential_stiffness - vt * cfg.tangential_damping;
    let cap = friction * fn_;
    let ft_norm = ft.norm();
    let (k_t, c_t) = if ft_norm > cap {
        ft *= cap / ft_norm;
        // Slide the anchor so the spring alone sits at the friction limit.
        let s_norm = stretch.norm();
        let limit = cap / cfg.tangential_stiffness;
        if s_norm > limit {
            anchor = p - stretch * (limit / s_norm);
        }
        let vt_norm = vt.norm();
        let c = if vt_norm > 0.0 {
            (cap / vt_norm).min(cfg.tangential_damping)
        } else {
            cfg.tangential_damping
        };
        (0.0, c)
    } else {
        (cfg.tangential_stiffness, cfg.tangential_damping)
    };
    ContactEval {
        force: n * fn_ + ft,
        stiffness: nn * cfg.contact_stiffness + tangent * k_t,
        damping: nn * cfg.contact_damping + tangent * c_t,
        anchor: Some(anchor),
    }
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Advances one control step toward the joint targets `q_des`.
pub fn step_robot(
    state: &mut RobotState,
    cfg: &PhysicsConfig,
    params: &PhysicalParams,
    q_des: &[f64; 12],
    terrain: &TerrainField,
    external: ExternalForce,
) -> Result<(), SimError> {
    let dt = cfg.substep_dt();
    let mass = cfg.trunk_mass + params.added_mass;
    let gravity = Vector3::new(0.0, 0.0, -cfg.gravity);
    let inertia_body = Matrix3::from_diagonal(&Vector3::from(cfg.trunk_inertia));
    let mut force_sum = [Vector3::zeros(); NUM_LEGS];
    let mut torque_sum = [0.0; 12];
    state.external = external;

    for _ in 0..cfg.substeps {
        let r = state.rotation();
        let inertia = r * inertia_body * r.transpose();

        let mut m = Mat18::zeros();
        let mut k = Mat18::zeros();
        let mut d = Mat18::zeros();
        let mut q0 = Vec18::zeros();
        for i in 0..3 {
            m[(i, i)] = mass;
        }
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&inertia);
        for j in 0..12 {
            m[(6 + j, 6 + j)] = cfg.armature;
        }

        let ext_arm = r * external.point;
        q0.fixed_rows_mut::<3>(0).copy_from(&(gravity * mass + external.force));
        let gyro = state.ang_vel.cross(&(inertia * state.ang_vel));
        q0.fixed_rows_mut::<3>(3).copy_from(&(ext_arm.cross(&external.force) - gyro));

        for j in 0..12 {
            let s = params.motor_strength;
            let raw = s * (cfg.kp * (q_des[j] - state.q[j]) - cfg.kd * state.dq[j]);
            let tau = raw.clamp(-cfg.torque_limit, cfg.torque_limit);
            if raw.abs() < cfg.torque_limit {
                k[(6 + j, 6 + j)] += s * cfg.kp;
                d[(6 + j, 6 + j)] += s * cfg.kd;
            }
            q0[6 + j] += tau;
            torque_sum[j] += tau;
        }

        for leg in 0..NUM_LEGS {
            let q = state.leg_q(leg);
            let rel = r * cfg.morphology.foot_in_body(leg, q);
            let jac = r * cfg.morphology.foot_jacobian(leg, q);
            let p = state.position + rel;
            let v = state.lin_vel + state.ang_vel.cross(&rel) + jac * state.leg_dq(leg);
            let c = foot_contact(cfg, params.friction, terrain, &p, &v, state.anchors[leg]);
            state.anchors[leg] = c.anchor;
            if c.anchor.is_none() {
                continue;
            }
            let mut g = Jac::zeros();
            g.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
            g.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(&rel)));
            g.fixed_view_mut::<3, 3>(0, 6 + 3 * leg).copy_from(&jac);
            let gt = g.transpose();
            q0 += gt * c.force;
            k += gt * c.stiffness * g;
            d += gt * c.damping * g;
            force_sum[leg] += c.force;
        }

        let mut u = Vec18::zeros();
        u.fixed_rows_mut::<3>(0).copy_from(&state.lin_vel);
        u.fixed_rows_mut::<3>(3).copy_from(&state.ang_vel);
        for j in 0..12 {
            u[6 + j] = state.dq[j];
        }
        let mut a = m + d * dt + k * (dt * dt);
        let mut b = m * u + q0 * dt + d * u * dt;
        if cfg.fixed_base {
            for i in 0..6 {
                for j in 0..18 {
                    a[(i, j)] = 0.0;
                    a[(j, i)] = 0.0;
                }
                a[(i, i)] = 1.0;
                b[i] = 0.0;
            }
        }
        let u_next = a.lu().solve(&b).ok_or(SimError::Fault("singular dynamics".into()))?;
        if u_next.iter().any(|v| !v.is_finite()) {
            return Err(SimError::Fault("non-finite velocity".into()));
        }

        if !cfg.fixed_base {
            // Trapezoidal position update: exact in free flight.
            state.position += (state.lin_vel + u_next.fixed_rows::<3>(0)) * (0.5 * dt);
            let spin = UnitQuaternion::from_scaled_axis(u_next.fixed_rows::<3>(3) * dt);
            state.orientation = UnitQuaternion::new_normalize((spin * state.orientation).into_inner());
        }
        state.lin_vel = u_next.fixed_rows::<3>(0).into_owned();
        state.ang_vel = u_next.fixed_rows::<3>(3).into_owned();
        for j in 0..12 {
            let mut dq = u_next[6 + j];
            let mut q = state.q[j] + dq * dt;
            let (lo, hi) = (cfg.morphology.joint_lower[j % 3], cfg.morphology.joint_upper[j % 3]);
            if q < lo {
                q = lo;
                dq = dq.max(0.0);
            } else if q > hi {
                q = hi;
                dq = dq.min(0.0);
            }
            state.q[j] = q;
            state.dq[j] = dq;
        }
    }

    let n = cfg.substeps as f64;
    for leg in 0..NUM_LEGS {
        state.foot_force[leg] = force_sum[leg] / n;
    }
    for j in 0..12 {
        state.torque[j] = torque_sum[j] / n;
    }
    state.refresh_feet(cfg);
    if !state.is_finite() {
        return Err(SimError::Fault("non-finite state".into()));
    }
    Ok(())
}
