use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::randomization::{apply_randomization, sample_push, PhysicalParams, RandomizationProfile};
use super::robot::{step_robot, ExternalForce, PhysicsConfig, RobotState};
use super::terrain::{generate_terrain, TerrainConfig, TerrainField, TerrainType};
use super::SimError;
use crate::camp::CampState;
use crate::gait::{
    advance_phase, desired_contact_schedule, encode_gait_vector, leg_phases, ContactSchedule, GaitParams, PhaseState,
    CONTACT_SIGMA, GAIT_VECTOR_DIM, NUM_LEGS,
};
use crate::nets::{HISTORY_DIM, HISTORY_LEN, OBS_DIM, PRIV_DIM, SCAN_DIM, VEL_DIM};
use crate::reward::{GroupTag, StepQuantities};

pub const SCAN_NX: usize = 17;
pub const SCAN_NY: usize = 11;
pub const SCAN_HALF_LENGTH: f64 = 0.8;
pub const SCAN_HALF_WIDTH: f64 = 0.5;
/// Normal force above which a foot counts as in contact (N).
pub const CONTACT_FORCE_THRESHOLD: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObsScales {
    pub ang_vel: f64,
    pub joint_vel: f64,
    pub force: f64,
}

impl Default for ObsScales {
    fn default() -> Self {
        Self {
            ang_vel: 0.25,
            joint_vel: 0.05,
            force: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub physics: PhysicsConfig,
    pub terrain: TerrainConfig,
    pub randomization: RandomizationProfile,
    pub obs_scales: ObsScales,
    /// Episode timeout in seconds.
    pub episode_length: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            physics: PhysicsConfig::default(),
            terrain: TerrainConfig::default(),
            randomization: RandomizationProfile::default(),
            obs_scales: ObsScales::default(),
            episode_length: 20.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.episode_length > 0.0) {
            return Err(SimError::InvalidConfig("episode length".into()));
        }
        self.physics.validate()?;
        self.randomization.validate()
    }
}

/// Identifies a generated tile so it can be rebuilt instead of stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TerrainKey {
    pub kind: TerrainType,
    pub level: u32,
    pub seed: u64,
}

impl TerrainKey {
    pub fn flat() -> Self {
        Self {
            kind: TerrainType::RoughFlat,
            level: 0,
            seed: 0,
        }
    }

    pub fn build(&self, cfg: &TerrainConfig) -> Result<TerrainField, SimError> {
        generate_terrain(cfg, self.kind, self.level, self.seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub gait: GaitParams,
    pub phase: PhaseState,
    /// `(v_x, v_y, ω_z)` in the heading frame.
    pub command: [f64; 3],
    pub group: GroupTag,
    pub spawn: [f64; 2],
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpisodeStatus {
    Running,
    /// Fall, trunk collision or numerical fault.
    Terminated,
    TimedOut,
}

impl EpisodeStatus {
    pub fn is_done(self) -> bool {
        self != EpisodeStatus::Running
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub quantities: StepQuantities,
    pub camp_prev: CampState,
    pub camp_next: CampState,
    pub status: EpisodeStatus,
    pub contacts: [bool; NUM_LEGS],
    pub fault: bool,
}

/// Serializable form of an [`Env`]; the tile is rebuilt from its key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSnapshot {
    pub robot: RobotState,
    pub params: PhysicalParams,
    pub terrain_key: TerrainKey,
    pub gait: GaitParams,
    pub phase: PhaseState,
    pub command: [f64; 3],
    pub group: GroupTag,
    pub elapsed: f64,
    pub spawn: [f64; 2],
    pub prev_action: [f64; 12],
    pub pending: Vec<Vec<f64>>,
    pub history: Vec<Vec<f64>>,
    #[serde(with = "crate::checkpoint::f64_bits")]
    pub next_push: f64,
    pub rng: ChaCha8Rng,
}

/// One simulated robot with its gait clock, command and observation history.
#[derive(Debug, Clone)]
pub struct Env {
    pub robot: RobotState,
    pub params: PhysicalParams,
    pub terrain: Arc<TerrainField>,
    pub terrain_key: TerrainKey,
    pub gait: GaitParams,
    pub phase: PhaseState,
    pub command: [f64; 3],
    pub group: GroupTag,
    pub elapsed: f64,
    pub spawn: [f64; 2],
    prev_action: [f64; 12],
    /// Newest last; holds `latency + 1` raw observations.
    pending: VecDeque<[f64; OBS_DIM]>,
    /// Newest last; always `HISTORY_LEN` delivered observations.
    history: VecDeque<[f64; OBS_DIM]>,
    next_push: f64,
    rng: ChaCha8Rng,
}

impl Env {
    pub fn new(cfg: &SimConfig, spec: EpisodeSpec, terrain: Arc<TerrainField>, key: TerrainKey, seed: u64) -> Self {
        let robot = RobotState::standing(&cfg.physics, &terrain, spec.spawn, spec.yaw);
        let mut env = Self {
            robot,
            params: PhysicalParams::default(),
            terrain,
            terrain_key: key,
            gait: spec.gait,
            phase: spec.phase,
            command: spec.command,
            group: spec.group,
            elapsed: 0.0,
            spawn: spec.spawn,
            prev_action: [0.0; 12],
            pending: VecDeque::new(),
            history: VecDeque::new(),
            next_push: f64::INFINITY,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        env.reset(cfg, spec, None);
        env
    }

    /// Starts a new episode, optionally on a different tile.
    pub fn reset(&mut self, cfg: &SimConfig, spec: EpisodeSpec, terrain: Option<(Arc<TerrainField>, TerrainKey)>) {
        if let Some((t, k)) = terrain {
            self.terrain = t;
            self.terrain_key = k;
        }
        self.params = apply_randomization(&cfg.randomization, &mut self.rng);
        self.robot = RobotState::standing(&cfg.physics, &self.terrain, spec.spawn, spec.yaw);
        self.gait = spec.gait;
        self.phase = spec.phase;
        self.command = spec.command;
        self.group = spec.group;
        if self.group == GroupTag::Adaptive {
            self.gait.base_height = crate::reward::RewardConfig::default().adaptive_height;
        }
        self.spawn = spec.spawn;
        self.elapsed = 0.0;
        self.prev_action = [0.0; 12];
        self.next_push = cfg.randomization.push_interval;
        let first = self.raw_observation(cfg);
        self.pending = std::iter::repeat_n(first, self.params.latency_steps as usize + 1).collect();
        self.history = std::iter::repeat_n(first, HISTORY_LEN).collect();
    }

    pub fn snapshot(&self) -> EnvSnapshot {
        EnvSnapshot {
            robot: self.robot.clone(),
            params: self.params,
            terrain_key: self.terrain_key,
            gait: self.gait,
            phase: self.phase,
            command: self.command,
            group: self.group,
            elapsed: self.elapsed,
            spawn: self.spawn,
            prev_action: self.prev_action,
            pending: self.pending.iter().map(|o| o.to_vec()).collect(),
            history: self.history.iter().map(|o| o.to_vec()).collect(),
            next_push: self.next_push,
            rng: self.rng.clone(),
        }
    }

    pub fn from_snapshot(snap: EnvSnapshot, terrain: Arc<TerrainField>) -> Result<Self, SimError> {
        let rows = |v: Vec<Vec<f64>>| -> Result<VecDeque<[f64; OBS_DIM]>, SimError> {
            v.into_iter()
                .map(|r| {
                    <[f64; OBS_DIM]>::try_from(r.as_slice())
                        .map_err(|_| SimError::InvalidConfig("observation width in snapshot".into()))
                })
                .collect()
        };
        let history = rows(snap.history)?;
        let pending = rows(snap.pending)?;
        if history.len() != HISTORY_LEN || pending.is_empty() {
            return Err(SimError::InvalidConfig("observation queues in snapshot".into()));
        }
        Ok(Self {
            robot: snap.robot,
            params: snap.params,
            terrain,
            terrain_key: snap.terrain_key,
            gait: snap.gait,
            phase: snap.phase,
            command: snap.command,
            group: snap.group,
            elapsed: snap.elapsed,
            spawn: snap.spawn,
            prev_action: snap.prev_action,
            pending,
            history,
            next_push: snap.next_push,
            rng: snap.rng,
        })
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn set_command(&mut self, command: [f64; 3]) {
        self.command = command;
    }

    fn raw_observation(&self, cfg: &SimConfig) -> [f64; OBS_DIM] {
        let mut o = [0.0; OBS_DIM];
        let g = self.robot.projected_gravity();
        let w = self.robot.ang_vel_body() * cfg.obs_scales.ang_vel;
        o[..3].copy_from_slice(g.as_slice());
        o[3..6].copy_from_slice(w.as_slice());
        let nominal = cfg.physics.morphology.nominal_joints();
        for j in 0..12 {
            o[6 + j] = self.robot.q[j] - nominal[j];
            o[18 + j] = self.robot.dq[j] * cfg.obs_scales.joint_vel;
            o[30 + j] = self.prev_action[j];
        }
        o
    }

    /// The observation the policy sees now, after sensor latency.
    pub fn observation(&self) -> [f64; OBS_DIM] {
        *self.pending.front().expect("observation queue")
    }

    /// The last `HISTORY_LEN` delivered observations, oldest first.
    pub fn history_flat(&self) -> [f64; HISTORY_DIM] {
        let mut h = [0.0; HISTORY_DIM];
        for (i, o) in self.history.iter().enumerate() {
            h[i * OBS_DIM..(i + 1) * OBS_DIM].copy_from_slice(o);
        }
        h
    }

    pub fn gait_vector(&self) -> [f64; GAIT_VECTOR_DIM] {
        encode_gait_vector(self.phase, &self.gait)
    }

    pub fn schedule(&self) -> ContactSchedule {
        let phases = leg_phases(self.phase, self.gait.offsets);
        desired_contact_schedule(&phases, self.gait.stance_ratio, CONTACT_SIGMA).unwrap_or_else(|_| ContactSchedule::all_stance())
    }

    /// Body-frame base velocity, the estimator's regression target.
    pub fn velocity_label(&self) -> [f64; VEL_DIM] {
        let v = self.robot.lin_vel_body();
        [v.x, v.y, v.z]
    }

    pub fn privileged(&self, cfg: &SimConfig) -> [f64; PRIV_DIM] {
        let mut p = [0.0; PRIV_DIM];
        p[..3].copy_from_slice(self.robot.lin_vel_body().as_slice());
        let s = cfg.obs_scales.force;
        for leg in 0..NUM_LEGS {
            let f = self.robot.orientation.inverse_transform_vector(&self.robot.foot_force[leg]) * s;
            p[3 + 3 * leg..6 + 3 * leg].copy_from_slice(f.as_slice());
        }
        let fe = self.robot.orientation.inverse_transform_vector(&self.robot.external.force) * s;
        p[15..18].copy_from_slice(fe.as_slice());
        p[18..21].copy_from_slice(self.robot.external.point.as_slice());
        p
    }

    pub fn height_scan(&self) -> [f64; SCAN_DIM] {
        heightmap_scan(&self.robot, &self.terrain)
    }

    pub fn base_height(&self) -> f64 {
        let p = self.robot.position;
        p.z - self.terrain.height(p.x, p.y)
    }

    pub fn camp_state(&self) -> CampState {
        CampState {
            joint_pos: self.robot.q,
            joint_vel: self.robot.dq,
            base_lin_vel: self.robot.lin_vel_body().into(),
            base_ang_vel: self.robot.ang_vel_body().into(),
        }
    }

    pub fn contacts(&self) -> [bool; NUM_LEGS] {
        std::array::from_fn(|leg| {
            let f = &self.robot.foot_force[leg];
            let n = Vector3::from(self.terrain.normal(self.robot.foot_pos[leg].x, self.robot.foot_pos[leg].y));
            f.dot(&n) > CONTACT_FORCE_THRESHOLD
        })
    }

    /// Forward distance covered along the tile since the episode began.
    pub fn traversed(&self) -> f64 {
        self.robot.position.x - self.spawn[0]
    }

    pub fn step(&mut self, cfg: &SimConfig, action: &[f64; 12]) -> StepOutcome {
        let phys = &cfg.physics;
        let camp_prev = self.camp_state();
        let q_prev = self.robot.q;
        let dq_prev = self.robot.dq;
        let a: [f64; 12] = std::array::from_fn(|j| {
            let v = action[j];
            if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 }
        });
        let nominal = phys.morphology.nominal_joints();
        let q_des: [f64; 12] = std::array::from_fn(|j| nominal[j] + phys.action_scale * a[j]);

        let mut external = ExternalForce::default();
        if self.elapsed >= self.next_push {
            let dv = sample_push(&cfg.randomization, &mut self.rng);
            let mass = phys.trunk_mass + self.params.added_mass;
            let [hx, hy, hz] = phys.trunk_half_extents;
            external = ExternalForce {
                force: Vector3::new(dv[0], dv[1], 0.0) * (mass / phys.control_dt),
                point: Vector3::new(
                    self.rng.random_range(-hx..=hx),
                    self.rng.random_range(-hy..=hy),
                    self.rng.random_range(-hz..=hz),
                ),
            };
            self.next_push += cfg.randomization.push_interval;
        }

        let fault = step_robot(&mut self.robot, phys, &self.params, &q_des, &self.terrain, external).is_err();
        self.phase = advance_phase(self.phase, self.gait.frequency, phys.control_dt).unwrap_or(self.phase);
        self.elapsed += phys.control_dt;
        self.prev_action = a;

        let schedule = self.schedule();
        let status = if fault {
            EpisodeStatus::Terminated
        } else {
            check_termination(&self.robot, &self.terrain, cfg, self.elapsed)
        };

        let v = self.robot.lin_vel_body();
        let w = self.robot.ang_vel_body();
        let quantities = StepQuantities {
            v_cmd_xy: [self.command[0], self.command[1]],
            v_xy: [v.x, v.y],
            yaw_rate_cmd: self.command[2],
            yaw_rate: w.z,
            torque: self.robot.torque,
            joint_acc: std::array::from_fn(|j| (self.robot.dq[j] - dq_prev[j]) / phys.control_dt),
            q_prev,
            q_now: self.robot.q,
            height_cmd: self.gait.base_height,
            height: self.base_height(),
            n_collision: self.robot.count_collisions(phys, &self.terrain),
            schedule,
            foot_forces: std::array::from_fn(|leg| self.robot.foot_force[leg].into()),
            foot_xy_speeds: std::array::from_fn(|leg| self.robot.foot_vel[leg].xy().norm()),
            d_score: 0.0,
        };
        let quantities = sanitize(quantities);

        if self.robot.is_finite() {
            let raw = self.raw_observation(cfg);
            self.pending.push_back(raw);
            while self.pending.len() > self.params.latency_steps as usize + 1 {
                self.pending.pop_front();
            }
            let delivered = self.observation();
            self.history.push_back(delivered);
            self.history.pop_front();
        }

        StepOutcome {
            camp_prev,
            camp_next: self.camp_state(),
            contacts: self.contacts(),
            quantities,
            status,
            fault,
        }
    }
}

fn sanitize(mut q: StepQuantities) -> StepQuantities {
    let fix = |v: &mut f64| {
        if !v.is_finite() {
            *v = 0.0;
        }
    };
    q.v_xy.iter_mut().for_each(fix);
    fix(&mut q.yaw_rate);
    fix(&mut q.height);
    q.torque.iter_mut().chain(&mut q.joint_acc).chain(&mut q.q_now).for_each(fix);
    q.foot_xy_speeds.iter_mut().for_each(fix);
    q.foot_forces.iter_mut().flatten().for_each(fix);
    q
}

/// Trunk contact or a non-finite state ends the episode; otherwise it times
/// out once `elapsed` reaches the episode length.
pub fn check_termination(robot: &RobotState, terrain: &TerrainField, cfg: &SimConfig, elapsed: f64) -> EpisodeStatus {
    if !robot.is_finite() || robot.trunk_contact(&cfg.physics, terrain) {
        EpisodeStatus::Terminated
    } else if elapsed >= cfg.episode_length - 1e-9 {
        EpisodeStatus::TimedOut
    } else {
        EpisodeStatus::Running
    }
}

/// Terrain height relative to the base on a yaw-aligned grid around the
/// robot, ordered x-major from rear-right.
pub fn heightmap_scan(robot: &RobotState, terrain: &TerrainField) -> [f64; SCAN_DIM] {
    let yaw = robot.yaw();
    let (s, c) = yaw.sin_cos();
    let mut out = [0.0; SCAN_DIM];
    let dx = 2.0 * SCAN_HALF_LENGTH / (SCAN_NX - 1) as f64;
    let dy = 2.0 * SCAN_HALF_WIDTH / (SCAN_NY - 1) as f64;
    for ix in 0..SCAN_NX {
        let lx = -SCAN_HALF_LENGTH + ix as f64 * dx;
        for iy in 0..SCAN_NY {
            let ly = -SCAN_HALF_WIDTH + iy as f64 * dy;
            let x = robot.position.x + c * lx - s * ly;
            let y = robot.position.y + s * lx + c * ly;
            out[ix * SCAN_NY + iy] = terrain.height(x, y) - robot.position.z;
        }
    }
    out
}
