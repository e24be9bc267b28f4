use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::rollout::RolloutBatch;
use super::TrainerError;
use crate::autodiff::{Tape, Var};
use crate::nets::PolicyNets;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub learning_rate: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub estimator_coef: f64,
    pub max_grad_norm: f64,
    /// Steps per environment per iteration.
    pub horizon: usize,
    /// Fixed split of every minibatch for gradient evaluation. Gradients are
    /// reduced in shard order, so results do not depend on the thread count.
    pub shards: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            epochs: 5,
            minibatches: 4,
            learning_rate: 3e-4,
            value_coef: 1.0,
            entropy_coef: 0.005,
            estimator_coef: 1.0,
            max_grad_norm: 1.0,
            horizon: 24,
            shards: 4,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), TrainerError> {
        let bad = |m: &str| Err(TrainerError::Config(m.into()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        if !(self.clip > 0.0) {
            return bad("clip must be positive");
        }
        if self.epochs == 0 || self.minibatches == 0 || self.horizon == 0 || self.shards == 0 {
            return bad("epochs, minibatches, horizon and shards must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.max_grad_norm > 0.0) {
            return bad("learning rate and gradient clip must be positive");
        }
        for c in [self.value_coef, self.entropy_coef, self.estimator_coef] {
            if !c.is_finite() || c < 0.0 {
                return bad("loss coefficients must be finite and non-negative");
            }
        }
        Ok(())
    }
}

/// Advantages and value targets, time-major like the rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Advantages {
    pub advantages: Vec<f64>,
    pub targets: Vec<f64>,
}

/// Generalized advantage estimation over a time-major batch (`t * n + i`).
/// `bootstrap` holds the value after the last step of each environment; a
/// done step cuts the recursion.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: &[f64],
    gamma: f64,
    lambda: f64,
) -> Advantages {
    let n = bootstrap.len();
    let len = rewards.len();
    assert!(n > 0 && len % n == 0 && values.len() == len && dones.len() == len);
    let horizon = len / n;
    let mut advantages = vec![0.0; len];
    let mut targets = vec![0.0; len];
    for i in 0..n {
        let mut next_adv = 0.0;
        let mut next_value = bootstrap[i];
        let mut next_return = bootstrap[i];
        for t in (0..horizon).rev() {
            let k = t * n + i;
            let live = if dones[k] { 0.0 } else { 1.0 };
            let delta = rewards[k] + gamma * next_value * live - values[k];
            next_adv = delta + gamma * lambda * live * next_adv;
            advantages[k] = next_adv;
            // The λ-return, equal to A + V but exact when γ = 0.
            next_return = rewards[k] + gamma * live * ((1.0 - lambda) * next_value + lambda * next_return);
            targets[k] = next_return;
            next_value = values[k];
        }
    }
    Advantages { advantages, targets }
}

/// Shifts and scales to zero mean and unit (population) deviation; returns the
/// statistics used.
pub fn normalize_advantages(adv: &mut [f64]) -> (f64, f64) {
    if adv.is_empty() {
        return (0.0, 0.0);
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    let denom = std + 1e-8;
    for a in adv.iter_mut() {
        *a = (*a - mean) / denom;
    }
    (mean, std)
}

/// `mean(min(r·A, clip(r, 1−ε, 1+ε)·A))` for an `n×1` ratio.
pub fn clipped_surrogate(tape: &Tape, ratio: Var, advantages: &Array2<f64>, clip: f64) -> Var {
    let adv = tape.constant(advantages.clone());
    let unclipped = tape.mul(ratio, adv);
    let clipped = tape.mul(tape.clamp(ratio, 1.0 - clip, 1.0 + clip), adv);
    tape.mean(tape.minimum(unclipped, clipped))
}

/// Row mean of the summed squared error over the velocity axes.
pub fn estimator_loss(tape: &Tape, predicted: Var, labels: &Array2<f64>) -> Var {
    let diff = tape.sub(predicted, tape.constant(labels.clone()));
    tape.mean(tape.sum_cols(tape.square(diff)))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossStats {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub estimator: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

impl LossStats {
    pub(crate) fn add_scaled(&mut self, o: &LossStats, w: f64) {
        self.total += w * o.total;
        self.policy += w * o.policy;
        self.value += w * o.value;
        self.entropy += w * o.entropy;
        self.estimator += w * o.estimator;
        self.approx_kl += w * o.approx_kl;
        self.clip_fraction += w * o.clip_fraction;
    }
}

/// Total loss and its gradient (in [`PolicyNets::params`] order) on a subset
/// of rollout rows.
pub fn loss_and_gradient(
    nets: &PolicyNets,
    batch: &RolloutBatch,
    rows: &[usize],
    advantages: &[f64],
    targets: &[f64],
    cfg: &PpoConfig,
) -> Result<(LossStats, Vec<Array2<f64>>), TrainerError> {
    let m = rows.len();
    let column = |src: &[f64]| Array2::from_shape_fn((m, 1), |(r, _)| src[rows[r]]);
    let actor = batch.actor_rows(rows);
    let extras = batch.critic_rows(rows);
    let actions = batch.actions.select(Axis(0), rows);
    let labels = batch.velocity.select(Axis(0), rows);
    let old_logp = column(&batch.log_probs);
    let adv = column(advantages);
    let ret = column(targets);

    let tape = Tape::new();
    let bound = nets.bind(&tape);
    let graph = nets.actor_graph(&tape, &bound, &actor)?;
    let logp = nets.log_prob_graph(&tape, &bound, graph.mean, &actions);
    let log_ratio = tape.sub(logp, tape.constant(old_logp));
    let ratio = tape.exp(log_ratio);
    let surrogate = clipped_surrogate(&tape, ratio, &adv, cfg.clip);
    let policy = tape.neg(surrogate);

    let latent = tape.value(graph.latent).clone();
    let value = nets.critic_graph(&tape, &bound, &actor.command, &actor.obs, &extras, &latent)?;
    let value_loss = tape.mean(tape.square(tape.sub(value, tape.constant(ret))));
    let entropy = nets.entropy_graph(&tape, &bound);
    let est = estimator_loss(&tape, graph.velocity, &labels);

    let total = tape.add(
        tape.add(policy, tape.scale(value_loss, cfg.value_coef)),
        tape.add(
            tape.scale(entropy, -cfg.entropy_coef),
            tape.scale(est, cfg.estimator_coef),
        ),
    );
    let grads = tape.backward(total, &bound.all_vars())?;

    let lr = tape.value(log_ratio).clone();
    let approx_kl = lr.iter().map(|l| l.exp() - 1.0 - l).sum::<f64>() / m as f64;
    let clip_fraction = lr
        .iter()
        .filter(|l| (l.exp() - 1.0).abs() > cfg.clip)
        .count() as f64
        / m as f64;
    let stats = LossStats {
        total: tape.scalar(total),
        policy: tape.scalar(policy),
        value: tape.scalar(value_loss),
        entropy: tape.scalar(entropy),
        estimator: tape.scalar(est),
        approx_kl,
        clip_fraction,
    };
    Ok((stats, grads))
}
