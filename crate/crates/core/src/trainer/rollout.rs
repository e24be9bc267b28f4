use ndarray::{Array2, Axis};

use crate::nets::{
    ActorBatch, CriticExtras, ACTION_DIM, CMD_DIM, GAIT_DIM, HISTORY_DIM, LATENT_DIM, OBS_DIM, PRIV_DIM, SCAN_DIM,
    VEL_DIM,
};
use crate::reward::{GroupTag, RewardBreakdown};
use crate::sim::{Env, SimConfig};

/// Everything read from one environment before acting.
#[derive(Debug, Clone)]
pub struct EnvInputs {
    pub history: [f64; HISTORY_DIM],
    pub command: [f64; CMD_DIM],
    pub gait: [f64; GAIT_DIM],
    pub obs: [f64; OBS_DIM],
    pub privileged: [f64; PRIV_DIM],
    pub scan: [f64; SCAN_DIM],
    pub velocity: [f64; VEL_DIM],
    pub group: GroupTag,
}

impl EnvInputs {
    pub fn gather(env: &Env, cfg: &SimConfig) -> Self {
        Self {
            history: env.history_flat(),
            command: env.command,
            gait: env.gait_vector(),
            obs: env.observation(),
            privileged: env.privileged(cfg),
            scan: env.height_scan(),
            velocity: env.velocity_label(),
            group: env.group,
        }
    }
}

fn stack<const D: usize>(rows: impl Iterator<Item = [f64; D]>, n: usize) -> Array2<f64> {
    let mut m = Array2::zeros((n, D));
    for (mut dst, src) in m.rows_mut().into_iter().zip(rows) {
        dst.assign(&ndarray::ArrayView1::from(&src[..]));
    }
    m
}

/// Actor-side batch for one step across all environments. Common robots take
/// the encoder path, adaptive robots the generator path.
pub fn actor_batch(inputs: &[EnvInputs]) -> ActorBatch {
    let n = inputs.len();
    ActorBatch {
        history: stack(inputs.iter().map(|i| i.history), n),
        command: stack(inputs.iter().map(|i| i.command), n),
        gait: stack(inputs.iter().map(|i| i.gait), n),
        obs: stack(inputs.iter().map(|i| i.obs), n),
        use_encoder: inputs.iter().map(|i| i.group.is_common()).collect(),
    }
}

pub fn critic_extras(inputs: &[EnvInputs]) -> CriticExtras {
    let n = inputs.len();
    CriticExtras {
        privileged: stack(inputs.iter().map(|i| i.privileged), n),
        scan: stack(inputs.iter().map(|i| i.scan), n),
    }
}

/// One iteration of experience, time-major: row `t * num_envs + i`.
#[derive(Debug, Clone)]
pub struct RolloutBatch {
    pub num_envs: usize,
    pub horizon: usize,
    pub history: Array2<f64>,
    pub command: Array2<f64>,
    pub gait: Array2<f64>,
    pub obs: Array2<f64>,
    pub privileged: Array2<f64>,
    pub scan: Array2<f64>,
    pub latent: Array2<f64>,
    pub actions: Array2<f64>,
    /// Estimator labels: true body-frame base velocity.
    pub velocity: Array2<f64>,
    pub groups: Vec<GroupTag>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    /// Training rewards, including the timeout bootstrap.
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub breakdown: Vec<RewardBreakdown>,
    pub height_cmd: Vec<f64>,
    /// Discriminator score of the policy transition (common rows only).
    pub d_scores: Vec<Option<f64>>,
    /// Fraction of legs whose contact matches the schedule (common rows only).
    pub contact_match: Vec<Option<f64>>,
    /// Squared planar velocity tracking error.
    pub tracking_sq: Vec<f64>,
    pub faults: usize,
    /// Value of the state after the last step, per environment.
    pub bootstrap: Vec<f64>,
}

impl RolloutBatch {
    pub fn new(num_envs: usize, horizon: usize) -> Self {
        let len = num_envs * horizon;
        Self {
            num_envs,
            horizon,
            history: Array2::zeros((len, HISTORY_DIM)),
            command: Array2::zeros((len, CMD_DIM)),
            gait: Array2::zeros((len, GAIT_DIM)),
            obs: Array2::zeros((len, OBS_DIM)),
            privileged: Array2::zeros((len, PRIV_DIM)),
            scan: Array2::zeros((len, SCAN_DIM)),
            latent: Array2::zeros((len, LATENT_DIM)),
            actions: Array2::zeros((len, ACTION_DIM)),
            velocity: Array2::zeros((len, VEL_DIM)),
            groups: Vec::with_capacity(len),
            log_probs: Vec::with_capacity(len),
            values: Vec::with_capacity(len),
            rewards: Vec::with_capacity(len),
            dones: Vec::with_capacity(len),
            breakdown: Vec::with_capacity(len),
            height_cmd: Vec::with_capacity(len),
            d_scores: Vec::with_capacity(len),
            contact_match: Vec::with_capacity(len),
            tracking_sq: Vec::with_capacity(len),
            faults: 0,
            bootstrap: vec![0.0; num_envs],
        }
    }

    pub fn len(&self) -> usize {
        self.num_envs * self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stores the observation side of step `t`.
    pub fn record_inputs(&mut self, t: usize, inputs: &[EnvInputs], latent: &Array2<f64>, actions: &Array2<f64>) {
        let base = t * self.num_envs;
        for (i, inp) in inputs.iter().enumerate() {
            let k = base + i;
            let put = |m: &mut Array2<f64>, v: &[f64]| m.row_mut(k).assign(&ndarray::ArrayView1::from(v));
            put(&mut self.history, &inp.history);
            put(&mut self.command, &inp.command);
            put(&mut self.gait, &inp.gait);
            put(&mut self.obs, &inp.obs);
            put(&mut self.privileged, &inp.privileged);
            put(&mut self.scan, &inp.scan);
            put(&mut self.velocity, &inp.velocity);
            self.groups.push(inp.group);
        }
        self.latent
            .slice_mut(ndarray::s![base..base + self.num_envs, ..])
            .assign(latent);
        self.actions
            .slice_mut(ndarray::s![base..base + self.num_envs, ..])
            .assign(actions);
    }

    pub fn actor_rows(&self, rows: &[usize]) -> ActorBatch {
        ActorBatch {
            history: self.history.select(Axis(0), rows),
            command: self.command.select(Axis(0), rows),
            gait: self.gait.select(Axis(0), rows),
            obs: self.obs.select(Axis(0), rows),
            use_encoder: rows.iter().map(|&k| self.groups[k].is_common()).collect(),
        }
    }

    pub fn critic_rows(&self, rows: &[usize]) -> CriticExtras {
        CriticExtras {
            privileged: self.privileged.select(Axis(0), rows),
            scan: self.scan.select(Axis(0), rows),
        }
    }

    pub fn all_rows(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }
}
