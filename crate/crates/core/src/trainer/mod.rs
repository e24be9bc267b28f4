//! PPO training loop with discriminator co-training and the two-group latent
//! construction.
//!
//! One iteration runs rollout, discriminator update, advantage estimation,
//! policy update and metrics, in that order. Rollouts fan out over the
//! executor on a frozen parameter snapshot; every parameter change happens on
//! the calling thread afterwards.

mod metrics;
mod ppo;
mod rollout;

pub use metrics::{read_metrics, IterationMetrics, MetricsWriter, METRICS_COLUMNS};
pub use ppo::{
    clipped_surrogate, compute_gae, estimator_loss, loss_and_gradient, normalize_advantages, Advantages, LossStats,
    PpoConfig,
};
pub use rollout::{actor_batch, critic_extras, EnvInputs, RolloutBatch};

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{clip_grad_norm, Adam, AdamConfig, AutodiffError};
use crate::camp::{rows_to_matrix, transition_row, CampDataset, CampError, Discriminator, TransitionBuffer};
use crate::checkpoint::{CheckpointError, Container};
use crate::config::{ConfigError, GroupSplit, RunConfig};
use crate::curriculum::{sample_gait_episode, CurriculumError, CurriculumState, EpisodeReport, RobotCurriculum};
use crate::gait::{GaitParams, NamedGait, PhaseState, NUM_LEGS};
use crate::nets::{gaussian_log_prob, NetError, PolicyNets, ACTION_DIM};
use crate::parallel::{Executor, ExecutorError};
use crate::reward::{total_reward, GroupTag};
use crate::sim::{Env, EnvSnapshot, EpisodeSpec, EpisodeStatus, SimError, TerrainField, TerrainKey, TerrainType};

pub const CHECKPOINT_FILE: &str = "checkpoint.mgck";
pub const METRICS_FILE: &str = "metrics.csv";

#[derive(Debug, thiserror::Error)]
pub enum TrainerError {
    #[error("invalid trainer config: {0}")]
    Config(String),
    #[error(transparent)]
    ConfigFile(#[from] ConfigError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Camp(#[from] CampError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Curriculum(#[from] CurriculumError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Executor(#[from] ExecutorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("corrupt trainer state: {0}")]
    State(String),
}

/// Per-environment bookkeeping for the episode in progress.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeAcc {
    pub task_sum: f64,
    pub steps: u64,
    pub since_resample: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DiscUpdateStats {
    pub updates: usize,
    pub loss: f64,
    pub mean_real: f64,
    pub mean_fake: f64,
}

#[derive(Serialize, Deserialize)]
struct TrainerState {
    iteration: usize,
    curriculum: CurriculumState,
    rng: ChaCha8Rng,
    update_rng: ChaCha8Rng,
    envs: Vec<EnvSnapshot>,
    episodes: Vec<EpisodeAcc>,
    buffer_next: usize,
    buffer_total: u64,
}

/// Splits `items` into `k` contiguous parts whose sizes differ by at most one.
pub fn split_even<T: Clone>(items: &[T], k: usize) -> Vec<Vec<T>> {
    let k = k.clamp(1, items.len().max(1));
    let base = items.len() / k;
    let extra = items.len() % k;
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for p in 0..k {
        let len = base + usize::from(p < extra);
        out.push(items[start..start + len].to_vec());
        start += len;
    }
    out
}

fn curriculum_for(config: &RunConfig) -> Result<CurriculumState, TrainerError> {
    let n = config.num_envs;
    let robot = |group, terrain| RobotCurriculum {
        group,
        terrain,
        level: 0,
        grid_mode: false,
    };
    Ok(match config.groups {
        GroupSplit::Mixed => CurriculumState::new(&config.curriculum, n)?,
        GroupSplit::CommonOnly => CurriculumState {
            robots: vec![robot(GroupTag::Common, TerrainType::RoughFlat); n],
            extents: config.curriculum.initial_extents,
        },
        GroupSplit::AdaptiveOnly => CurriculumState {
            robots: (0..n)
                .map(|i| robot(GroupTag::Adaptive, TerrainType::ALL[i % TerrainType::ALL.len()]))
                .collect(),
            extents: config.curriculum.initial_extents,
        },
    })
}

fn mean_or_nan(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

pub struct Trainer {
    pub config: RunConfig,
    pub nets: PolicyNets,
    pub policy_adam: Adam,
    pub disc: Discriminator,
    pub buffer: TransitionBuffer,
    pub curriculum: CurriculumState,
    pub envs: Vec<Env>,
    pub dataset: CampDataset,
    /// Completed iterations.
    pub iteration: usize,
    episodes: Vec<EpisodeAcc>,
    terrains: HashMap<TerrainKey, Arc<TerrainField>>,
    rng: ChaCha8Rng,
    update_rng: ChaCha8Rng,
    executor: Executor,
}

impl Trainer {
    pub fn new(config: RunConfig, dataset: CampDataset, executor: Executor) -> Result<Self, TrainerError> {
        config.validate()?;
        if dataset.pair_count() == 0 {
            return Err(CampError::EmptyDataset.into());
        }
        let seed = config.seed;
        let nets = PolicyNets::new(config.nets.clone(), seed)?;
        let policy_adam = Adam::for_params(
            AdamConfig {
                lr: config.ppo.learning_rate,
                ..AdamConfig::default()
            },
            &nets.params(),
        )?;
        let disc = Discriminator::new(config.discriminator.clone(), seed.wrapping_add(100))?;
        let buffer = TransitionBuffer::new(config.discriminator.buffer_capacity);
        let curriculum = curriculum_for(&config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let update_rng = ChaCha8Rng::seed_from_u64(rng.random());
        let n = config.num_envs;
        let mut trainer = Self {
            config,
            nets,
            policy_adam,
            disc,
            buffer,
            curriculum,
            envs: Vec::with_capacity(n),
            dataset,
            iteration: 0,
            episodes: vec![EpisodeAcc::default(); n],
            terrains: HashMap::new(),
            rng,
            update_rng,
            executor,
        };
        for i in 0..n {
            let spec = trainer.episode_spec(i);
            let key = trainer.curriculum.robots[i].terrain_key();
            let terrain = trainer.terrain(key)?;
            let env_seed = trainer.rng.random();
            trainer
                .envs
                .push(Env::new(&trainer.config.sim, spec, terrain, key, env_seed));
        }
        Ok(trainer)
    }

    pub fn executor(&self) -> &Executor {
        &self.executor
    }

    fn terrain(&mut self, key: TerrainKey) -> Result<Arc<TerrainField>, TrainerError> {
        if let Some(t) = self.terrains.get(&key) {
            return Ok(Arc::clone(t));
        }
        let t = Arc::new(key.build(&self.config.sim.terrain)?);
        self.terrains.insert(key, Arc::clone(&t));
        Ok(t)
    }

    /// Draws the next episode for robot `i` from its group's distribution.
    fn episode_spec(&mut self, i: usize) -> EpisodeSpec {
        let cfg = &self.config;
        let rc = self.curriculum.robots[i];
        let (gait, phase) = match rc.group {
            GroupTag::Common => {
                let (_, g, p) = sample_gait_episode(&cfg.curriculum, &mut self.rng);
                (g, p)
            }
            GroupTag::Adaptive => (
                GaitParams::from_named(NamedGait::Trotting, 2.0, cfg.reward.adaptive_height)
                    .expect("adaptive gait in range"),
                PhaseState::new(self.rng.random_range(0.0..1.0)).expect("unit phase"),
            ),
        };
        let command = self.curriculum.sample_command(&cfg.curriculum, i, &mut self.rng);
        let flat = rc.terrain_key() == TerrainKey::flat();
        let (spawn, yaw) = if flat {
            ([0.0, 0.0], self.rng.random_range(-PI..PI))
        } else {
            ([0.0, self.rng.random_range(-0.5..0.5)], 0.0)
        };
        EpisodeSpec {
            gait,
            phase,
            command,
            group: rc.group,
            spawn,
            yaw,
        }
    }

    fn end_episode(&mut self, i: usize) -> Result<(), TrainerError> {
        let acc = self.episodes[i];
        let env = &self.envs[i];
        let max_task = self.config.reward.lin_vel_weight + self.config.reward.ang_vel_weight;
        let mean_task = if acc.steps > 0 {
            acc.task_sum / acc.steps as f64
        } else {
            0.0
        };
        let dx = env.robot.position.x - env.spawn[0];
        let dy = env.robot.position.y - env.spawn[1];
        let distance = (dx * dx + dy * dy).sqrt();
        let report = EpisodeReport {
            robot: i,
            score: if max_task > 0.0 { mean_task / max_task } else { 0.0 },
            distance: if distance.is_finite() { distance } else { 0.0 },
            tile_length: self.config.sim.terrain.length,
            last_command: env.command,
        };
        self.curriculum.end_episode(&self.config.curriculum, &report);
        let spec = self.episode_spec(i);
        let key = self.curriculum.robots[i].terrain_key();
        let terrain = if key != self.envs[i].terrain_key {
            Some((self.terrain(key)?, key))
        } else {
            None
        };
        self.envs[i].reset(&self.config.sim, spec, terrain);
        self.episodes[i] = EpisodeAcc::default();
        Ok(())
    }

    /// Runs every environment for one horizon under the current parameters.
    /// Style rewards use the discriminator as it stands before this
    /// iteration's update.
    pub fn collect_rollout(&mut self) -> Result<RolloutBatch, TrainerError> {
        let n = self.envs.len();
        let horizon = self.config.ppo.horizon;
        let gamma = self.config.ppo.gamma;
        let dt = self.config.sim.physics.control_dt;
        let resample = self.config.curriculum.command_resample_interval;
        let scale = self.nets.config.action_scale;
        let std = self.nets.std();
        let mut batch = RolloutBatch::new(n, horizon);

        for t in 0..horizon {
            let sim = &self.config.sim;
            let inputs = self.executor.map(&self.envs, |_, e| EnvInputs::gather(e, sim));
            let actor = actor_batch(&inputs);
            let extras = critic_extras(&inputs);
            let out = self.nets.act(&actor)?;
            let values = self
                .nets
                .values(actor.command.view(), actor.obs.view(), &extras, out.latent.view())?;

            let mut actions = Array2::zeros((n, ACTION_DIM));
            let mut log_probs = Vec::with_capacity(n);
            for i in 0..n {
                let mean = out.mean.row(i).to_vec();
                for j in 0..ACTION_DIM {
                    let eps: f64 = self.rng.sample(StandardNormal);
                    actions[[i, j]] = mean[j] + std[j] * eps;
                }
                log_probs.push(gaussian_log_prob(&mean, &std, &actions.row(i).to_vec()));
            }
            batch.record_inputs(t, &inputs, &out.latent, &actions);

            let normalized: Vec<[f64; ACTION_DIM]> = (0..n)
                .map(|i| std::array::from_fn(|j| actions[[i, j]] / scale))
                .collect();
            let outcomes = self
                .executor
                .map_mut(&mut self.envs, |i, e| e.step(sim, &normalized[i]));

            let mut fake_rows = Vec::new();
            let mut fake_env = Vec::new();
            for (i, o) in outcomes.iter().enumerate() {
                if self.envs[i].group.is_common() && !o.fault {
                    fake_rows.push(transition_row(&o.camp_prev, &o.camp_next, &self.envs[i].gait.partial()));
                    fake_env.push(i);
                }
            }
            let mut d_scores = vec![None; n];
            if !fake_rows.is_empty() {
                let scores = self.disc.score_rows(&rows_to_matrix(&fake_rows))?;
                for (k, &i) in fake_env.iter().enumerate() {
                    d_scores[i] = Some(scores[k]);
                }
            }
            for row in &fake_rows {
                self.buffer.push(*row);
            }

            for (i, o) in outcomes.into_iter().enumerate() {
                let group = self.envs[i].group;
                let mut q = o.quantities;
                q.d_score = d_scores[i].unwrap_or(0.0);
                let parts = total_reward(&self.config.reward, &q, group);
                let done = o.status.is_done();
                let mut reward = parts.total;
                if o.status == EpisodeStatus::TimedOut {
                    reward += gamma * values[i];
                }
                if o.fault {
                    batch.faults += 1;
                }
                let matches = (0..NUM_LEGS)
                    .filter(|&leg| o.contacts[leg] == (q.schedule.desired[leg] > 0.5))
                    .count();
                let ex = q.v_cmd_xy[0] - q.v_xy[0];
                let ey = q.v_cmd_xy[1] - q.v_xy[1];

                batch.log_probs.push(log_probs[i]);
                batch.values.push(values[i]);
                batch.rewards.push(reward);
                batch.dones.push(done);
                batch.breakdown.push(parts);
                batch.height_cmd.push(q.height_cmd);
                batch.d_scores.push(d_scores[i]);
                batch
                    .contact_match
                    .push(group.is_common().then(|| matches as f64 / NUM_LEGS as f64));
                batch.tracking_sq.push(ex * ex + ey * ey);

                let acc = &mut self.episodes[i];
                acc.task_sum += parts.task;
                acc.steps += 1;
                acc.since_resample += dt;
                if done {
                    self.end_episode(i)?;
                } else if acc.since_resample >= resample - 1e-9 {
                    acc.since_resample = 0.0;
                    let cmd = self
                        .curriculum
                        .sample_command(&self.config.curriculum, i, &mut self.rng);
                    self.envs[i].set_command(cmd);
                }
            }
        }

        let sim = &self.config.sim;
        let inputs = self.executor.map(&self.envs, |_, e| EnvInputs::gather(e, sim));
        let actor = actor_batch(&inputs);
        let out = self.nets.act(&actor)?;
        batch.bootstrap = self
            .nets
            .values(
                actor.command.view(),
                actor.obs.view(),
                &critic_extras(&inputs),
                out.latent.view(),
            )?
            .to_vec();
        Ok(batch)
    }

    /// Dataset transitions against buffered policy transitions. Skipped while
    /// the buffer holds fewer rows than one batch.
    pub fn update_discriminator(&mut self) -> Result<DiscUpdateStats, TrainerError> {
        let bs = self.config.discriminator.batch_size;
        let mut stats = DiscUpdateStats::default();
        if self.buffer.len() < bs {
            return Ok(stats);
        }
        for _ in 0..self.config.discriminator.updates_per_iteration {
            let real = self.dataset.sample_real_rows(bs, &mut self.update_rng)?;
            let fake = self
                .buffer
                .sample(bs, &mut self.update_rng)
                .ok_or_else(|| TrainerError::State("buffer emptied".into()))?;
            match self.disc.update(&real, &fake) {
                Ok(s) => {
                    stats.updates += 1;
                    stats.loss += s.loss;
                    stats.mean_real += s.mean_real;
                    stats.mean_fake += s.mean_fake;
                }
                Err(_) => break,
            }
        }
        if stats.updates > 0 {
            let k = stats.updates as f64;
            stats.loss /= k;
            stats.mean_real /= k;
            stats.mean_fake /= k;
        }
        Ok(stats)
    }

    /// Loss and gradient over `rows`, evaluated in fixed shards and reduced in
    /// shard order.
    pub fn gradient(
        &self,
        batch: &RolloutBatch,
        rows: &[usize],
        advantages: &[f64],
        targets: &[f64],
    ) -> Result<(LossStats, Vec<Array2<f64>>), TrainerError> {
        let cfg = &self.config.ppo;
        let shards = split_even(rows, cfg.shards);
        let nets = &self.nets;
        let results = self
            .executor
            .map(&shards, |_, s| loss_and_gradient(nets, batch, s, advantages, targets, cfg));
        let mut stats = LossStats::default();
        let mut grads: Vec<Array2<f64>> = Vec::new();
        for (shard, res) in shards.iter().zip(results) {
            let (s, g) = res?;
            let w = shard.len() as f64 / rows.len() as f64;
            stats.add_scaled(&s, w);
            if grads.is_empty() {
                grads = g.into_iter().map(|x| x * w).collect();
            } else {
                for (acc, x) in grads.iter_mut().zip(g) {
                    acc.scaled_add(w, &x);
                }
            }
        }
        Ok((stats, grads))
    }

    /// Minibatched clipped-surrogate epochs. A non-finite loss or gradient
    /// restores the parameters and optimizer from before the update; the
    /// returned flag reports that.
    pub fn ppo_update(
        &mut self,
        batch: &RolloutBatch,
        advantages: &[f64],
        targets: &[f64],
    ) -> Result<(LossStats, bool), TrainerError> {
        let snapshot = (self.nets.clone(), self.policy_adam.clone());
        let mut order = batch.all_rows();
        let mut total = LossStats::default();
        let mut steps = 0usize;
        for _ in 0..self.config.ppo.epochs {
            order.shuffle(&mut self.update_rng);
            for rows in split_even(&order, self.config.ppo.minibatches) {
                if rows.is_empty() {
                    continue;
                }
                let (stats, mut grads) = self.gradient(batch, &rows, advantages, targets)?;
                let finite = stats.total.is_finite() && grads.iter().all(|g| g.iter().all(|v| v.is_finite()));
                if !finite {
                    (self.nets, self.policy_adam) = snapshot;
                    return Ok((total, true));
                }
                clip_grad_norm(&mut grads, self.config.ppo.max_grad_norm);
                let mut params = self.nets.params_mut();
                self.policy_adam.update(&mut params, &grads)?;
                total.add_scaled(&stats, 1.0);
                steps += 1;
            }
        }
        if self.nets.params().iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            (self.nets, self.policy_adam) = snapshot;
            return Ok((total, true));
        }
        if steps > 0 {
            let s = total;
            total = LossStats::default();
            total.add_scaled(&s, 1.0 / steps as f64);
        }
        Ok((total, false))
    }

    /// One full iteration.
    pub fn train_step(&mut self) -> Result<IterationMetrics, TrainerError> {
        let start = Instant::now();
        let batch = self.collect_rollout()?;
        let disc = self.update_discriminator()?;
        let gae = compute_gae(
            &batch.rewards,
            &batch.values,
            &batch.dones,
            &batch.bootstrap,
            self.config.ppo.gamma,
            self.config.ppo.lambda,
        );
        let mut adv = gae.advantages;
        normalize_advantages(&mut adv);
        let (loss, skipped) = self.ppo_update(&batch, &adv, &gae.targets)?;

        let len = batch.len().max(1) as f64;
        let sum = |f: fn(&crate::reward::RewardBreakdown) -> f64| batch.breakdown.iter().map(f).sum::<f64>() / len;
        let nan_if_none = |v: f64, ok: bool| if ok { v } else { f64::NAN };
        let metrics = IterationMetrics {
            iteration: self.iteration,
            reward_total: sum(|b| b.total),
            reward_task: sum(|b| b.task),
            reward_regularization: sum(|b| b.regularization),
            reward_style: sum(|b| b.style),
            reward_contact: sum(|b| b.contact),
            tracking_rmse: (batch.tracking_sq.iter().sum::<f64>() / len).sqrt(),
            contact_match: mean_or_nan(batch.contact_match.iter().flatten().copied()),
            d_real: nan_if_none(disc.mean_real, disc.updates > 0),
            d_fake: nan_if_none(disc.mean_fake, disc.updates > 0),
            d_policy: mean_or_nan(batch.d_scores.iter().flatten().copied()),
            disc_loss: nan_if_none(disc.loss, disc.updates > 0),
            policy_loss: loss.policy,
            value_loss: loss.value,
            entropy: loss.entropy,
            estimator_loss: loss.estimator,
            approx_kl: loss.approx_kl,
            clip_fraction: loss.clip_fraction,
            episodes: batch.dones.iter().filter(|&&d| d).count(),
            faults: batch.faults,
            buffer_len: self.buffer.len(),
            update_skipped: skipped,
            curriculum: self.curriculum.summary(),
            wall_time: if self.executor.is_sequential() {
                0.0
            } else {
                start.elapsed().as_secs_f64()
            },
        };
        self.iteration += 1;
        Ok(metrics)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<(), TrainerError> {
        let mut c = Container::new();
        self.nets.save_into(&mut c, "policy/");
        let (m, v) = self.policy_adam.moments();
        for (i, (a, b)) in m.iter().zip(v).enumerate() {
            c.put_matrix(&format!("policy_adam/m/{i}"), a);
            c.put_matrix(&format!("policy_adam/v/{i}"), b);
        }
        c.put_tensor("policy_adam/step", &[], vec![self.policy_adam.step_count() as f64]);
        self.disc.save_into(&mut c, "disc/");
        let (data, buffer_next, buffer_total) = self.buffer.to_flat();
        c.put_tensor("buffer", &[data.len()], data);
        c.put_bytes("config", self.config.to_toml().into_bytes());
        let state = TrainerState {
            iteration: self.iteration,
            curriculum: self.curriculum.clone(),
            rng: self.rng.clone(),
            update_rng: self.update_rng.clone(),
            envs: self.envs.iter().map(Env::snapshot).collect(),
            episodes: self.episodes.clone(),
            buffer_next,
            buffer_total,
        };
        let json = serde_json::to_vec(&state).map_err(|e| TrainerError::State(e.to_string()))?;
        c.put_bytes("state", json);
        c.save(path)?;
        Ok(())
    }

    /// Rebuilds a trainer exactly as it was when `path` was written.
    pub fn load_checkpoint(path: &Path, dataset: CampDataset, executor: Executor) -> Result<Self, TrainerError> {
        let c = Container::load(path)?;
        let text = std::str::from_utf8(c.bytes("config")?).map_err(|e| TrainerError::State(e.to_string()))?;
        let config = RunConfig::from_toml(text)?;
        let mut t = Trainer::new(config, dataset, executor)?;
        t.nets.load_from(&c, "policy/")?;
        let mut first = Vec::new();
        let mut second = Vec::new();
        for (i, p) in t.nets.params().iter().enumerate() {
            first.push(c.matrix_like(&format!("policy_adam/m/{i}"), p.dim())?);
            second.push(c.matrix_like(&format!("policy_adam/v/{i}"), p.dim())?);
        }
        let (_, step) = c.tensor("policy_adam/step")?;
        t.policy_adam
            .restore(step.first().copied().unwrap_or(0.0) as u64, first, second)?;
        t.disc.load_from(&c, "disc/")?;

        let state: TrainerState =
            serde_json::from_slice(c.bytes("state")?).map_err(|e| TrainerError::State(e.to_string()))?;
        let (_, data) = c.tensor("buffer")?;
        t.buffer = TransitionBuffer::from_flat(
            t.config.discriminator.buffer_capacity,
            data,
            state.buffer_next,
            state.buffer_total,
        )
        .ok_or_else(|| TrainerError::State("transition buffer".into()))?;
        if state.envs.len() != t.config.num_envs || state.episodes.len() != t.config.num_envs {
            return Err(TrainerError::State("environment count".into()));
        }
        let mut envs = Vec::with_capacity(state.envs.len());
        for snap in state.envs {
            let terrain = t.terrain(snap.terrain_key)?;
            envs.push(Env::from_snapshot(snap, terrain)?);
        }
        t.envs = envs;
        t.episodes = state.episodes;
        t.curriculum = state.curriculum;
        t.rng = state.rng;
        t.update_rng = state.update_rng;
        t.iteration = state.iteration;
        Ok(t)
    }
}

/// Reads only the run config and policy networks from a checkpoint.
pub fn load_policy(path: &Path) -> Result<(RunConfig, PolicyNets), TrainerError> {
    let c = Container::load(path)?;
    let text = std::str::from_utf8(c.bytes("config")?).map_err(|e| TrainerError::State(e.to_string()))?;
    let config = RunConfig::from_toml(text)?;
    let mut nets = PolicyNets::new(config.nets.clone(), config.seed)?;
    nets.load_from(&c, "policy/")?;
    Ok((config, nets))
}

/// Where a training run keeps its files.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub config: PathBuf,
}

impl RunPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            checkpoint: dir.join(CHECKPOINT_FILE),
            metrics: dir.join(METRICS_FILE),
            config: dir.join("config.toml"),
        }
    }
}

/// Trains for the configured number of iterations, writing metrics every
/// iteration and checkpoints at the configured interval and at the end. With
/// `resume`, continues from the checkpoint in `out_dir` if there is one,
/// up to `config.iterations`; every other setting comes from the checkpoint.
pub fn run_training(
    config: RunConfig,
    dataset: CampDataset,
    executor: Executor,
    out_dir: &Path,
    resume: bool,
    mut on_iteration: impl FnMut(&IterationMetrics),
) -> Result<Vec<IterationMetrics>, TrainerError> {
    fs::create_dir_all(out_dir)?;
    let paths = RunPaths::in_dir(out_dir);
    let (mut trainer, mut writer) = if resume && paths.checkpoint.exists() {
        let mut t = Trainer::load_checkpoint(&paths.checkpoint, dataset, executor)?;
        // Only the target length may change on resume.
        t.config.iterations = config.iterations;
        let w = MetricsWriter::resume(&paths.metrics, t.iteration)?;
        (t, w)
    } else {
        config.save(&paths.config)?;
        (Trainer::new(config, dataset, executor)?, MetricsWriter::create(&paths.metrics)?)
    };
    let mut rows = Vec::new();
    let total = trainer.config.iterations;
    let interval = trainer.config.checkpoint_interval;
    while trainer.iteration < total {
        let m = trainer.train_step()?;
        writer.append(&m)?;
        on_iteration(&m);
        rows.push(m);
        if interval > 0 && trainer.iteration % interval == 0 {
            trainer.save_checkpoint(&paths.checkpoint)?;
        }
    }
    trainer.save_checkpoint(&paths.checkpoint)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camp::ReferenceConfig;
    use crate::curriculum::FixedGait;
    use std::sync::OnceLock;

    fn dataset() -> CampDataset {
        static DATA: OnceLock<CampDataset> = OnceLock::new();
        DATA.get_or_init(|| CampDataset::build(&ReferenceConfig::default()).unwrap())
            .clone()
    }

    fn small(groups: GroupSplit, n: usize) -> RunConfig {
        let mut c = RunConfig::default();
        c.num_envs = n;
        c.groups = groups;
        c.ppo.horizon = 6;
        c.ppo.epochs = 1;
        c.ppo.minibatches = 2;
        c.discriminator.batch_size = 8;
        c.discriminator.hidden = vec![32, 16];
        c
    }

    #[test]
    fn policy_loads_without_dataset() {
        let t = Trainer::new(small(GroupSplit::Mixed, 2), dataset(), Executor::sequential()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(CHECKPOINT_FILE);
        t.save_checkpoint(&path).unwrap();
        let (config, nets) = load_policy(&path).unwrap();
        assert_eq!(config, t.config);
        assert_eq!(nets, t.nets);
    }

    #[test]
    fn split_even_sizes() {
        let v: Vec<usize> = (0..10).collect();
        let parts = split_even(&v, 4);
        assert_eq!(parts.iter().map(Vec::len).collect::<Vec<_>>(), [3, 3, 2, 2]);
        assert_eq!(parts.concat(), v);
        assert_eq!(split_even(&v[..2], 4).len(), 2);
    }

    #[test]
    fn latent_source_follows_group() {
        let mut t = Trainer::new(small(GroupSplit::Mixed, 4), dataset(), Executor::sequential()).unwrap();
        let batch = t.collect_rollout().unwrap();
        let rows = batch.all_rows();
        let actor = batch.actor_rows(&rows);
        let enc = crate::nets::project_rows(&t.nets.encoder.forward(actor.gait.view()).unwrap());
        let gen_in = ndarray::concatenate![ndarray::Axis(1), actor.command, actor.obs];
        let gen = crate::nets::project_rows(&t.nets.generator.forward(gen_in.view()).unwrap());
        for k in rows {
            let expect = if batch.groups[k].is_common() { enc.row(k) } else { gen.row(k) };
            let diff = (&batch.latent.row(k) - &expect).mapv(f64::abs).sum();
            assert!(diff < 1e-12, "row {k}");
        }
    }

    #[test]
    fn stored_log_probs_recompute() {
        let mut t = Trainer::new(small(GroupSplit::Mixed, 4), dataset(), Executor::sequential()).unwrap();
        let batch = t.collect_rollout().unwrap();
        let out = t.nets.act(&batch.actor_rows(&batch.all_rows())).unwrap();
        let std = t.nets.std();
        for k in 0..batch.len() {
            let lp = gaussian_log_prob(&out.mean.row(k).to_vec(), &std, &batch.actions.row(k).to_vec());
            assert!((lp - batch.log_probs[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn adaptive_rows_have_no_style_or_contact() {
        let mut t = Trainer::new(small(GroupSplit::Mixed, 4), dataset(), Executor::sequential()).unwrap();
        let batch = t.collect_rollout().unwrap();
        for k in 0..batch.len() {
            if !batch.groups[k].is_common() {
                assert_eq!(batch.breakdown[k].style, 0.0);
                assert_eq!(batch.breakdown[k].contact, 0.0);
                assert_eq!(batch.height_cmd[k], 0.3);
                assert!(batch.d_scores[k].is_none());
            } else {
                assert!(batch.d_scores[k].is_some());
            }
        }
    }

    #[test]
    fn both_latent_paths_get_gradient() {
        let mut t = Trainer::new(small(GroupSplit::Mixed, 4), dataset(), Executor::sequential()).unwrap();
        let batch = t.collect_rollout().unwrap();
        let gae = compute_gae(&batch.rewards, &batch.values, &batch.dones, &batch.bootstrap, 0.99, 0.95);
        let mut adv = gae.advantages;
        normalize_advantages(&mut adv);
        let (_, grads) = t.gradient(&batch, &batch.all_rows(), &adv, &gae.targets).unwrap();
        for (name, range) in t.nets.param_groups() {
            let norm: f64 = grads[range].iter().map(|g| g.iter().map(|v| v * v).sum::<f64>()).sum();
            assert!(norm > 0.0, "{name} has zero gradient");
        }
    }

    #[test]
    fn actor_gradient_ignores_privileged_inputs() {
        let mut t = Trainer::new(small(GroupSplit::Mixed, 4), dataset(), Executor::sequential()).unwrap();
        let batch = t.collect_rollout().unwrap();
        let adv: Vec<f64> = (0..batch.len()).map(|k| (k as f64 * 0.37).sin()).collect();
        let targets: Vec<f64> = (0..batch.len()).map(|k| (k as f64 * 0.11).cos()).collect();
        let rows = batch.all_rows();
        let (_, g1) = t.gradient(&batch, &rows, &adv, &targets).unwrap();
        let mut perturbed = batch.clone();
        perturbed.privileged.mapv_inplace(|v| v + 0.7);
        perturbed.scan.mapv_inplace(|v| -3.0 * v + 0.2);
        let (_, g2) = t.gradient(&perturbed, &rows, &adv, &targets).unwrap();
        for (name, range) in t.nets.param_groups() {
            let same = g1[range.clone()] == g2[range.clone()];
            if name == "critic" {
                assert!(!same, "critic must see privileged inputs");
            } else {
                assert!(same, "{name} gradient depends on privileged inputs");
            }
        }
    }

    #[test]
    fn estimator_loss_falls_on_fixed_slice() {
        let mut t = Trainer::new(small(GroupSplit::Mixed, 4), dataset(), Executor::sequential()).unwrap();
        let batch = t.collect_rollout().unwrap();
        let rows = batch.all_rows();
        let mut cfg = t.config.ppo.clone();
        cfg.value_coef = 0.0;
        cfg.entropy_coef = 0.0;
        let zeros = vec![0.0; batch.len()];
        let mut losses = Vec::new();
        for _ in 0..40 {
            let (s, g) = loss_and_gradient(&t.nets, &batch, &rows, &zeros, &zeros, &cfg).unwrap();
            losses.push(s.estimator);
            let mut params = t.nets.params_mut();
            t.policy_adam.update(&mut params, &g).unwrap();
        }
        let first: f64 = losses[..10].iter().sum();
        let last: f64 = losses[30..].iter().sum();
        assert!(last < 0.5 * first, "{first} -> {last}");
    }

    #[test]
    fn gradient_independent_of_thread_count() {
        let cfg = small(GroupSplit::Mixed, 4);
        let mut a = Trainer::new(cfg.clone(), dataset(), Executor::sequential()).unwrap();
        let batch = a.collect_rollout().unwrap();
        let adv: Vec<f64> = (0..batch.len()).map(|k| (k as f64 * 0.37).sin()).collect();
        let targets: Vec<f64> = (0..batch.len()).map(|k| (k as f64 * 0.11).cos()).collect();
        let (_, g1) = a.gradient(&batch, &batch.all_rows(), &adv, &targets).unwrap();
        a.executor = Executor::new(3).unwrap();
        let (_, g2) = a.gradient(&batch, &batch.all_rows(), &adv, &targets).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn adaptive_only_leaves_buffer_stagnant() {
        let mut t = Trainer::new(small(GroupSplit::AdaptiveOnly, 4), dataset(), Executor::sequential()).unwrap();
        for _ in 0..2 {
            t.train_step().unwrap();
        }
        assert_eq!(t.buffer.len(), 0);
        assert_eq!(t.buffer.total_pushed(), 0);
    }

    #[test]
    fn common_rollout_fills_buffer() {
        let mut t = Trainer::new(small(GroupSplit::CommonOnly, 3), dataset(), Executor::sequential()).unwrap();
        let m = t.train_step().unwrap();
        assert_eq!(t.buffer.total_pushed(), 18);
        assert!(m.d_real.is_finite());
        assert_eq!(m.curriculum.mean_level, 0.0);
    }

    #[test]
    fn fixed_gait_and_command_apply() {
        let mut cfg = small(GroupSplit::CommonOnly, 2);
        cfg.curriculum.fixed_gait = Some(FixedGait {
            gait: NamedGait::Trotting,
            frequency: 2.0,
            base_height: 0.25,
        });
        cfg.curriculum.fixed_command = Some([0.5, 0.0, 0.0]);
        let t = Trainer::new(cfg, dataset(), Executor::sequential()).unwrap();
        for e in &t.envs {
            assert_eq!(e.command, [0.5, 0.0, 0.0]);
            assert_eq!(e.gait.offsets, NamedGait::Trotting.offsets());
        }
    }

    #[test]
    fn non_finite_update_restores_parameters() {
        let mut t = Trainer::new(small(GroupSplit::Mixed, 4), dataset(), Executor::sequential()).unwrap();
        let batch = t.collect_rollout().unwrap();
        let before = t.nets.clone();
        let adv = vec![f64::NAN; batch.len()];
        let targets = vec![0.0; batch.len()];
        let (_, skipped) = t.ppo_update(&batch, &adv, &targets).unwrap();
        assert!(skipped);
        assert_eq!(t.nets, before);
        assert_eq!(t.policy_adam.step_count(), 0);
    }

    #[test]
    fn resume_reproduces_next_iteration() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.mgck");
        let cfg = small(GroupSplit::Mixed, 4);
        let mut a = Trainer::new(cfg, dataset(), Executor::sequential()).unwrap();
        a.train_step().unwrap();
        a.save_checkpoint(&path).unwrap();
        let next_a = a.train_step().unwrap();
        let mut b = Trainer::load_checkpoint(&path, dataset(), Executor::sequential()).unwrap();
        assert_eq!(b.iteration, 1);
        let next_b = b.train_step().unwrap();
        assert_eq!(next_a.csv_row(), next_b.csv_row());
        assert_eq!(a.nets, b.nets);
    }
}
