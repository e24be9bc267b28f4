//! Per-step reward terms and their group-gated sum.

use serde::{Deserialize, Serialize};

use crate::gait::{ContactSchedule, NUM_LEGS};

/// How the norms in the penalty and tracking terms are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    #[default]
    Literal,
    Squared,
}

impl NormMode {
    fn apply(self, sq: f64) -> f64 {
        match self {
            NormMode::Literal => sq.sqrt(),
            NormMode::Squared => sq,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupTag {
    Common,
    Adaptive,
}

impl GroupTag {
    pub fn is_common(self) -> bool {
        self == GroupTag::Common
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub lin_vel_weight: f64,
    pub ang_vel_weight: f64,
    pub tracking_sigma: f64,
    pub torque_weight: f64,
    pub joint_acc_weight: f64,
    pub joint_motion_weight: f64,
    pub height_weight: f64,
    pub collision_weight: f64,
    pub style_weight: f64,
    pub contact_weight: f64,
    /// Force scale (N) in the swing-leg contact penalty.
    pub contact_force_scale: f64,
    /// Speed scale (m/s) in the stance-leg slip penalty.
    pub contact_speed_scale: f64,
    /// Height command used for the adaptive group.
    pub adaptive_height: f64,
    pub norm_mode: NormMode,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            lin_vel_weight: 1.0,
            ang_vel_weight: 0.5,
            tracking_sigma: 0.15,
            torque_weight: 1e-4,
            joint_acc_weight: 2.5e-7,
            joint_motion_weight: 0.1,
            height_weight: 1.0,
            collision_weight: 0.1,
            style_weight: 0.5,
            contact_weight: 1.0,
            contact_force_scale: 50.0,
            contact_speed_scale: 1.25,
            adaptive_height: 0.3,
            norm_mode: NormMode::Literal,
        }
    }
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn task_reward(cfg: &RewardConfig, v_cmd_xy: [f64; 2], v_xy: [f64; 2], w_cmd: f64, w: f64) -> f64 {
    let dv = cfg.norm_mode.apply(sq_dist(&v_cmd_xy, &v_xy));
    let dw = cfg.norm_mode.apply((w_cmd - w) * (w_cmd - w));
    cfg.lin_vel_weight * (-dv / cfg.tracking_sigma).exp()
        + cfg.ang_vel_weight * (-dw / cfg.tracking_sigma).exp()
}

/// Regularization terms other than the height penalty.
pub fn motion_penalty(
    cfg: &RewardConfig,
    torque: &[f64],
    joint_acc: &[f64],
    q_prev: &[f64],
    q_now: &[f64],
    n_collision: usize,
) -> f64 {
    let m = cfg.norm_mode;
    -cfg.torque_weight * m.apply(sq_norm(torque))
        - cfg.joint_acc_weight * m.apply(sq_norm(joint_acc))
        - cfg.joint_motion_weight * m.apply(sq_dist(q_prev, q_now))
        - cfg.collision_weight * n_collision as f64
}

pub fn height_penalty(cfg: &RewardConfig, height_cmd: f64, height: f64) -> f64 {
    let d = height_cmd - height;
    -cfg.height_weight * cfg.norm_mode.apply(d * d)
}

#[allow(clippy::too_many_arguments)]
pub fn regularization_reward(
    cfg: &RewardConfig,
    torque: &[f64],
    joint_acc: &[f64],
    q_prev: &[f64],
    q_now: &[f64],
    height_cmd: f64,
    height: f64,
    n_collision: usize,
) -> f64 {
    motion_penalty(cfg, torque, joint_acc, q_prev, q_now, n_collision)
        + height_penalty(cfg, height_cmd, height)
}

/// Penalizes loaded swing legs and sliding stance legs.
pub fn contact_reward(
    cfg: &RewardConfig,
    schedule: &ContactSchedule,
    foot_forces: &[[f64; 3]; NUM_LEGS],
    foot_xy_speeds: &[f64; NUM_LEGS],
) -> f64 {
    let mut r = 0.0;
    for i in 0..NUM_LEGS {
        let c = schedule.desired[i];
        let f = sq_norm(&foot_forces[i]).sqrt();
        r -= (1.0 - c) * (1.0 - (-f / cfg.contact_force_scale).exp());
        r -= c * (1.0 - (-foot_xy_speeds[i].abs() / cfg.contact_speed_scale).exp());
    }
    cfg.contact_weight * r
}

/// Discriminator score mapped into [0, 1].
pub fn style_score(d: f64) -> f64 {
    (1.0 - 0.25 * (d - 1.0) * (d - 1.0)).max(0.0)
}

pub fn style_reward(cfg: &RewardConfig, d: f64) -> f64 {
    cfg.style_weight * style_score(d)
}

/// Everything measured during one control step that the reward needs.
#[derive(Debug, Clone, PartialEq)]
pub struct StepQuantities {
    pub v_cmd_xy: [f64; 2],
    pub v_xy: [f64; 2],
    pub yaw_rate_cmd: f64,
    pub yaw_rate: f64,
    pub torque: [f64; 12],
    pub joint_acc: [f64; 12],
    pub q_prev: [f64; 12],
    pub q_now: [f64; 12],
    pub height_cmd: f64,
    pub height: f64,
    pub n_collision: usize,
    pub schedule: ContactSchedule,
    pub foot_forces: [[f64; 3]; NUM_LEGS],
    pub foot_xy_speeds: [f64; NUM_LEGS],
    pub d_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub task: f64,
    pub regularization: f64,
    pub style: f64,
    pub contact: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn from_parts(task: f64, regularization: f64, style: f64, contact: f64) -> Self {
        Self {
            task,
            regularization,
            style,
            contact,
            total: task + regularization + style + contact,
        }
    }

    pub fn accumulate(&mut self, other: &RewardBreakdown) {
        self.task += other.task;
        self.regularization += other.regularization;
        self.style += other.style;
        self.contact += other.contact;
        self.total += other.total;
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            task: self.task * s,
            regularization: self.regularization * s,
            style: self.style * s,
            contact: self.contact * s,
            total: self.total * s,
        }
    }
}

/// Sums the four reward groups. The adaptive group gets no style or contact
/// reward and tracks a fixed base height.
pub fn total_reward(cfg: &RewardConfig, q: &StepQuantities, group: GroupTag) -> RewardBreakdown {
    let task = task_reward(cfg, q.v_cmd_xy, q.v_xy, q.yaw_rate_cmd, q.yaw_rate);
    let motion = motion_penalty(cfg, &q.torque, &q.joint_acc, &q.q_prev, &q.q_now, q.n_collision);
    match group {
        GroupTag::Common => RewardBreakdown::from_parts(
            task,
            motion + height_penalty(cfg, q.height_cmd, q.height),
            style_reward(cfg, q.d_score),
            contact_reward(cfg, &q.schedule, &q.foot_forces, &q.foot_xy_speeds),
        ),
        GroupTag::Adaptive => RewardBreakdown::from_parts(
            task,
            motion + height_penalty(cfg, cfg.adaptive_height, q.height),
            0.0,
            0.0,
        ),
    }
}
