//! The actor's five sub-networks, the asymmetric critic, and the
//! hypersphere projection of gait latents.
//!
//! Batched forward passes take one row per environment. Every `*_graph`
//! function records the same computation on a [`Tape`] for the PPO update.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Activation, AutodiffError, BoundMlp, Mlp, MlpSpec, Tape, Var};
use crate::checkpoint::{CheckpointError, Container};

pub const OBS_DIM: usize = 42;
pub const CMD_DIM: usize = 3;
pub const PRIV_DIM: usize = 21;
pub const SCAN_DIM: usize = 187;
pub const LATENT_DIM: usize = 16;
pub const HISTORY_LEN: usize = 5;
pub const HISTORY_DIM: usize = OBS_DIM * HISTORY_LEN;
pub const ENCODED_DIM: usize = 32;
pub const VEL_DIM: usize = 3;
pub const ACTION_DIM: usize = 12;
pub const GAIT_DIM: usize = crate::gait::GAIT_VECTOR_DIM;
pub const GENERATOR_INPUT_DIM: usize = CMD_DIM + OBS_DIM;
pub const ACTOR_INPUT_DIM: usize = CMD_DIM + ENCODED_DIM + VEL_DIM + LATENT_DIM;
pub const CRITIC_INPUT_DIM: usize = CMD_DIM + OBS_DIM + PRIV_DIM + SCAN_DIM + LATENT_DIM;

/// Guard against dividing by a vanishing latent norm.
pub const LATENT_EPS: f64 = 1e-8;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("history must hold exactly {HISTORY_LEN} observations, got {0}")]
    HistoryLength(usize),
    #[error("latent norm {0:e} is too small to project")]
    NearZeroLatent(f64),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Unit-norm gait-skill embedding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentCode(pub [f64; LATENT_DIM]);

impl LatentCode {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn cosine(&self, other: &LatentCode) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum::<f64>() / (self.norm() * other.norm())
    }
}

/// Projects `raw` onto the unit sphere.
pub fn project_hypersphere(raw: &[f64; LATENT_DIM]) -> Result<LatentCode, NetError> {
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > LATENT_EPS) {
        return Err(NetError::NearZeroLatent(norm));
    }
    Ok(LatentCode(raw.map(|v| v / norm)))
}

/// Row-wise projection used by the batched forward pass; norms are floored at
/// [`LATENT_EPS`].
pub fn project_rows(raw: &Array2<f64>) -> Array2<f64> {
    let norms = raw
        .mapv(|v| v * v)
        .sum_axis(Axis(1))
        .mapv(|v| 1.0 / v.sqrt().max(LATENT_EPS))
        .insert_axis(Axis(1));
    raw * &norms
}

fn project_rows_graph(tape: &Tape, raw: Var) -> Var {
    let width = tape.shape(raw).1;
    let norm = tape.sqrt(tape.sum_cols(tape.square(raw)));
    let inv = tape.recip(tape.clamp(norm, LATENT_EPS, f64::INFINITY));
    tape.mul(raw, tape.broadcast_cols(inv, width))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodedHistory(pub [f64; ENCODED_DIM]);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityEstimate(pub [f64; VEL_DIM]);

/// Diagonal Gaussian over joint-offset actions (radians).
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    pub mean: [f64; ACTION_DIM],
    pub std: [f64; ACTION_DIM],
}

impl ActionDistribution {
    pub fn log_prob(&self, action: &[f64]) -> f64 {
        gaussian_log_prob(&self.mean, &self.std, action)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; ACTION_DIM] {
        let mut a = self.mean;
        for (ai, s) in a.iter_mut().zip(&self.std) {
            let n: f64 = rng.sample(StandardNormal);
            *ai += s * n;
        }
        a
    }

    pub fn entropy(&self) -> f64 {
        self.std
            .iter()
            .map(|s| s.ln() + 0.5 * (LN_2PI + 1.0))
            .sum()
    }
}

/// Diagonal-Gaussian log density.
pub fn gaussian_log_prob(mean: &[f64], std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(std)
        .zip(action)
        .map(|((m, s), a)| {
            let z = (a - m) / s;
            -0.5 * z * z - s.ln() - 0.5 * LN_2PI
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    /// Joint offset (rad) reached at full tanh output.
    pub action_scale: f64,
    pub init_log_std: f64,
    pub actor_output_gain: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            action_scale: 0.5,
            init_log_std: 0.2f64.ln(),
            actor_output_gain: 0.01,
        }
    }
}

/// Batch of actor-side inputs, one row per environment.
#[derive(Debug, Clone)]
pub struct ActorBatch {
    pub history: Array2<f64>,
    pub command: Array2<f64>,
    pub gait: Array2<f64>,
    pub obs: Array2<f64>,
    /// `true` for rows whose latent comes from the gait encoder.
    pub use_encoder: Vec<bool>,
}

impl ActorBatch {
    pub fn rows(&self) -> usize {
        self.use_encoder.len()
    }
}

#[derive(Debug, Clone)]
pub struct ActorOutput {
    pub encoded: Array2<f64>,
    pub velocity: Array2<f64>,
    pub latent: Array2<f64>,
    /// Action means in radians.
    pub mean: Array2<f64>,
}

/// Critic-only inputs; the command and partial observation are shared with
/// [`ActorBatch`].
#[derive(Debug, Clone)]
pub struct CriticExtras {
    pub privileged: Array2<f64>,
    pub scan: Array2<f64>,
}

/// The seven policy-side parameter groups, in optimizer order.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNets {
    pub stm: Mlp,
    pub estimator: Mlp,
    pub encoder: Mlp,
    pub generator: Mlp,
    pub low_level: Mlp,
    pub log_std: Array2<f64>,
    pub critic: Mlp,
    pub config: NetConfig,
}

/// Tape handles for every policy parameter.
pub struct BoundPolicy {
    pub stm: BoundMlp,
    pub estimator: BoundMlp,
    pub encoder: BoundMlp,
    pub generator: BoundMlp,
    pub low_level: BoundMlp,
    pub log_std: Var,
    pub critic: BoundMlp,
}

impl BoundPolicy {
    pub fn all_vars(&self) -> Vec<Var> {
        let mut v = Vec::new();
        v.extend(&self.stm.vars);
        v.extend(&self.estimator.vars);
        v.extend(&self.encoder.vars);
        v.extend(&self.generator.vars);
        v.extend(&self.low_level.vars);
        v.push(self.log_std);
        v.extend(&self.critic.vars);
        v
    }
}

/// Recorded actor computation.
pub struct ActorGraph {
    pub encoded: Var,
    pub velocity: Var,
    pub latent: Var,
    pub mean: Var,
}

pub const NETWORK_NAMES: [&str; 6] = [
    "stm",
    "estimator",
    "gait_encoder",
    "gait_generator",
    "low_level",
    "critic",
];

impl PolicyNets {
    pub fn new(config: NetConfig, seed: u64) -> Result<Self, NetError> {
        let stm = Mlp::init(
            MlpSpec::new(HISTORY_DIM, &[256, 128], ENCODED_DIM, Activation::Linear),
            seed,
        )?;
        let estimator = Mlp::init(
            MlpSpec::new(ENCODED_DIM, &[64, 32], VEL_DIM, Activation::Linear),
            seed.wrapping_add(1),
        )?;
        let encoder = Mlp::init(
            MlpSpec::new(GAIT_DIM, &[64, 32], LATENT_DIM, Activation::Linear),
            seed.wrapping_add(2),
        )?;
        let generator = Mlp::init(
            MlpSpec::new(GENERATOR_INPUT_DIM, &[128, 64], LATENT_DIM, Activation::Linear),
            seed.wrapping_add(3),
        )?;
        let low_level = Mlp::init(
            MlpSpec::new(ACTOR_INPUT_DIM, &[256, 128, 64], ACTION_DIM, Activation::Tanh)
                .with_output_gain(config.actor_output_gain),
            seed.wrapping_add(4),
        )?;
        let critic = Mlp::init(
            MlpSpec::new(CRITIC_INPUT_DIM, &[512, 256, 128], 1, Activation::Linear),
            seed.wrapping_add(5),
        )?;
        Ok(Self {
            stm,
            estimator,
            encoder,
            generator,
            low_level,
            log_std: Array2::from_elem((1, ACTION_DIM), config.init_log_std),
            critic,
            config,
        })
    }

    fn networks(&self) -> [&Mlp; 6] {
        [
            &self.stm,
            &self.estimator,
            &self.encoder,
            &self.generator,
            &self.low_level,
            &self.critic,
        ]
    }

    pub fn params(&self) -> Vec<&Array2<f64>> {
        let mut p = Vec::new();
        p.extend(self.stm.params());
        p.extend(self.estimator.params());
        p.extend(self.encoder.params());
        p.extend(self.generator.params());
        p.extend(self.low_level.params());
        p.push(&self.log_std);
        p.extend(self.critic.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut p = Vec::new();
        p.extend(self.stm.params_mut());
        p.extend(self.estimator.params_mut());
        p.extend(self.encoder.params_mut());
        p.extend(self.generator.params_mut());
        p.extend(self.low_level.params_mut());
        p.push(&mut self.log_std);
        p.extend(self.critic.params_mut());
        p
    }

    /// Index ranges of each group inside [`PolicyNets::params`].
    pub fn param_groups(&self) -> Vec<(&'static str, std::ops::Range<usize>)> {
        let sizes = [
            ("stm", self.stm.params().len()),
            ("estimator", self.estimator.params().len()),
            ("gait_encoder", self.encoder.params().len()),
            ("gait_generator", self.generator.params().len()),
            ("low_level", self.low_level.params().len()),
            ("log_std", 1),
            ("critic", self.critic.params().len()),
        ];
        let mut start = 0;
        sizes
            .iter()
            .map(|&(name, n)| {
                let r = start..start + n;
                start += n;
                (name, r)
            })
            .collect()
    }

    pub fn std(&self) -> [f64; ACTION_DIM] {
        let mut s = [0.0; ACTION_DIM];
        for (o, l) in s.iter_mut().zip(self.log_std.iter()) {
            *o = l.exp();
        }
        s
    }

    pub fn stm_encode(&self, history: &[[f64; OBS_DIM]]) -> Result<EncodedHistory, NetError> {
        if history.len() != HISTORY_LEN {
            return Err(NetError::HistoryLength(history.len()));
        }
        let row = Array2::from_shape_fn((1, HISTORY_DIM), |(_, j)| history[j / OBS_DIM][j % OBS_DIM]);
        let out = self.stm.forward(row.view())?;
        let mut h = [0.0; ENCODED_DIM];
        h.iter_mut().zip(out.iter()).for_each(|(a, b)| *a = *b);
        Ok(EncodedHistory(h))
    }

    pub fn estimate_velocity(&self, h: &EncodedHistory) -> VelocityEstimate {
        let row = Array2::from_shape_vec((1, ENCODED_DIM), h.0.to_vec()).unwrap();
        let out = self.estimator.forward(row.view()).expect("estimator input width");
        VelocityEstimate([out[[0, 0]], out[[0, 1]], out[[0, 2]]])
    }

    pub fn encode_gait(&self, gait: &[f64; GAIT_DIM]) -> LatentCode {
        let row = Array2::from_shape_vec((1, GAIT_DIM), gait.to_vec()).unwrap();
        let raw = self.encoder.forward(row.view()).expect("encoder input width");
        latent_from_row(&project_rows(&raw))
    }

    pub fn generate_latent(&self, command: &[f64; CMD_DIM], obs: &[f64; OBS_DIM]) -> LatentCode {
        let mut v = command.to_vec();
        v.extend_from_slice(obs);
        let row = Array2::from_shape_vec((1, GENERATOR_INPUT_DIM), v).unwrap();
        let raw = self.generator.forward(row.view()).expect("generator input width");
        latent_from_row(&project_rows(&raw))
    }

    pub fn actor_forward(
        &self,
        command: &[f64; CMD_DIM],
        h: &EncodedHistory,
        v: &VelocityEstimate,
        z: &LatentCode,
    ) -> ActionDistribution {
        let mut input = command.to_vec();
        input.extend_from_slice(&h.0);
        input.extend_from_slice(&v.0);
        input.extend_from_slice(&z.0);
        let row = Array2::from_shape_vec((1, ACTOR_INPUT_DIM), input).unwrap();
        let mean = self.low_level.forward(row.view()).expect("actor input width") * self.config.action_scale;
        let mut m = [0.0; ACTION_DIM];
        m.iter_mut().zip(mean.iter()).for_each(|(a, b)| *a = *b);
        ActionDistribution {
            mean: m,
            std: self.std(),
        }
    }

    pub fn critic_forward(
        &self,
        command: &[f64; CMD_DIM],
        obs: &[f64; OBS_DIM],
        privileged: &[f64; PRIV_DIM],
        scan: &[f64; SCAN_DIM],
        z: &LatentCode,
    ) -> f64 {
        let mut input = command.to_vec();
        input.extend_from_slice(obs);
        input.extend_from_slice(privileged);
        input.extend_from_slice(scan);
        input.extend_from_slice(&z.0);
        let row = Array2::from_shape_vec((1, CRITIC_INPUT_DIM), input).unwrap();
        self.critic.forward(row.view()).expect("critic input width")[[0, 0]]
    }

    /// Latents for a batch: encoder rows use the gait vector, the rest use
    /// the generator.
    pub fn latents(&self, batch: &ActorBatch) -> Result<Array2<f64>, NetError> {
        let n = batch.rows();
        let mut z = Array2::zeros((n, LATENT_DIM));
        if batch.use_encoder.iter().any(|&e| e) {
            let enc = project_rows(&self.encoder.forward(batch.gait.view())?);
            for (i, _) in batch.use_encoder.iter().enumerate().filter(|(_, &e)| e) {
                z.row_mut(i).assign(&enc.row(i));
            }
        }
        if batch.use_encoder.iter().any(|&e| !e) {
            let input = concatenate![Axis(1), batch.command, batch.obs];
            let gen = project_rows(&self.generator.forward(input.view())?);
            for (i, _) in batch.use_encoder.iter().enumerate().filter(|(_, &e)| !e) {
                z.row_mut(i).assign(&gen.row(i));
            }
        }
        Ok(z)
    }

    /// Batched actor forward pass.
    pub fn act(&self, batch: &ActorBatch) -> Result<ActorOutput, NetError> {
        let encoded = self.stm.forward(batch.history.view())?;
        let velocity = self.estimator.forward(encoded.view())?;
        let latent = self.latents(batch)?;
        let input = concatenate![Axis(1), batch.command, encoded, velocity, latent];
        let mean = self.low_level.forward(input.view())? * self.config.action_scale;
        Ok(ActorOutput {
            encoded,
            velocity,
            latent,
            mean,
        })
    }

    /// Batched critic forward pass.
    pub fn values(
        &self,
        command: ArrayView2<'_, f64>,
        obs: ArrayView2<'_, f64>,
        extras: &CriticExtras,
        latent: ArrayView2<'_, f64>,
    ) -> Result<Array1<f64>, NetError> {
        let input = concatenate![
            Axis(1),
            command,
            obs,
            extras.privileged.view(),
            extras.scan.view(),
            latent
        ];
        Ok(self.critic.forward(input.view())?.column(0).to_owned())
    }

    pub fn bind(&self, tape: &Tape) -> BoundPolicy {
        BoundPolicy {
            stm: self.stm.bind(tape),
            estimator: self.estimator.bind(tape),
            encoder: self.encoder.bind(tape),
            generator: self.generator.bind(tape),
            low_level: self.low_level.bind(tape),
            log_std: tape.variable(self.log_std.clone()),
            critic: self.critic.bind(tape),
        }
    }

    /// Recorded actor pass. The critic never appears here, and neither do the
    /// privileged state nor the terrain scan.
    pub fn actor_graph(
        &self,
        tape: &Tape,
        bound: &BoundPolicy,
        batch: &ActorBatch,
    ) -> Result<ActorGraph, NetError> {
        let n = batch.rows();
        let history = tape.constant(batch.history.clone());
        let command = tape.constant(batch.command.clone());
        let encoded = self.stm.forward_tape(tape, &bound.stm, history)?;
        let velocity = self.estimator.forward_tape(tape, &bound.estimator, encoded)?;

        let any_enc = batch.use_encoder.iter().any(|&e| e);
        let any_gen = batch.use_encoder.iter().any(|&e| !e);
        let enc_latent = if any_enc {
            let gait = tape.constant(batch.gait.clone());
            let raw = self.encoder.forward_tape(tape, &bound.encoder, gait)?;
            Some(project_rows_graph(tape, raw))
        } else {
            None
        };
        let gen_latent = if any_gen {
            let input = tape.constant(concatenate![Axis(1), batch.command, batch.obs]);
            let raw = self.generator.forward_tape(tape, &bound.generator, input)?;
            Some(project_rows_graph(tape, raw))
        } else {
            None
        };
        let latent = match (enc_latent, gen_latent) {
            (Some(e), None) => e,
            (None, Some(g)) => g,
            (Some(e), Some(g)) => {
                let mask = Array2::from_shape_fn((n, LATENT_DIM), |(i, _)| {
                    if batch.use_encoder[i] {
                        1.0
                    } else {
                        0.0
                    }
                });
                let inv = mask.mapv(|v| 1.0 - v);
                let e = tape.mul(e, tape.constant(mask));
                let g = tape.mul(g, tape.constant(inv));
                tape.add(e, g)
            }
            (None, None) => unreachable!("empty batch"),
        };
        let input = tape.concat(&[command, encoded, velocity, latent]);
        let squashed = self.low_level.forward_tape(tape, &bound.low_level, input)?;
        let mean = tape.scale(squashed, self.config.action_scale);
        Ok(ActorGraph {
            encoded,
            velocity,
            latent,
            mean,
        })
    }

    /// Per-row Gaussian log-probabilities of `actions` (`n×1`).
    pub fn log_prob_graph(&self, tape: &Tape, bound: &BoundPolicy, mean: Var, actions: &Array2<f64>) -> Var {
        let n = actions.nrows();
        let a = tape.constant(actions.clone());
        let diff = tape.sub(a, mean);
        let inv_std = tape.broadcast_rows(tape.exp(tape.neg(bound.log_std)), n);
        let z = tape.mul(diff, inv_std);
        let quad = tape.scale(tape.sum_cols(tape.square(z)), -0.5);
        let log_det = tape.broadcast_rows(tape.sum(bound.log_std), n);
        let with_det = tape.sub(quad, log_det);
        tape.offset(with_det, -0.5 * LN_2PI * ACTION_DIM as f64)
    }

    /// Entropy of the action distribution (`1×1`).
    pub fn entropy_graph(&self, tape: &Tape, bound: &BoundPolicy) -> Var {
        tape.offset(
            tape.sum(bound.log_std),
            0.5 * (LN_2PI + 1.0) * ACTION_DIM as f64,
        )
    }

    /// Recorded critic pass (`n×1`). The latent enters as a constant.
    pub fn critic_graph(
        &self,
        tape: &Tape,
        bound: &BoundPolicy,
        command: &Array2<f64>,
        obs: &Array2<f64>,
        extras: &CriticExtras,
        latent: &Array2<f64>,
    ) -> Result<Var, NetError> {
        let input = tape.constant(concatenate![
            Axis(1),
            command.view(),
            obs.view(),
            extras.privileged.view(),
            extras.scan.view(),
            latent.view()
        ]);
        Ok(self.critic.forward_tape(tape, &bound.critic, input)?)
    }

    pub fn save_into(&self, c: &mut Container, prefix: &str) {
        for (name, net) in NETWORK_NAMES.iter().zip(self.networks()) {
            for (i, p) in net.params().iter().enumerate() {
                c.put_matrix(&format!("{prefix}{name}/{i}"), p);
            }
        }
        c.put_matrix(&format!("{prefix}log_std"), &self.log_std);
    }

    /// Loads parameters saved by [`PolicyNets::save_into`] into a network of
    /// the same architecture.
    pub fn load_from(&mut self, c: &Container, prefix: &str) -> Result<(), CheckpointError> {
        let nets: [&mut Mlp; 6] = [
            &mut self.stm,
            &mut self.estimator,
            &mut self.encoder,
            &mut self.generator,
            &mut self.low_level,
            &mut self.critic,
        ];
        for (name, net) in NETWORK_NAMES.iter().zip(nets) {
            for (i, p) in net.params_mut().into_iter().enumerate() {
                let m = c.matrix_like(&format!("{prefix}{name}/{i}"), p.dim())?;
                p.assign(&m);
            }
        }
        self.log_std = c.matrix_like(&format!("{prefix}log_std"), (1, ACTION_DIM))?;
        Ok(())
    }
}

fn latent_from_row(m: &Array2<f64>) -> LatentCode {
    let mut z = [0.0; LATENT_DIM];
    z.iter_mut()
        .zip(m.slice(s![0, ..]).iter())
        .for_each(|(a, b)| *a = *b);
    LatentCode(z)
}
