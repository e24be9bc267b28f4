use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{CampError, DISC_INPUT_DIM};
use crate::autodiff::{clip_grad_norm, Activation, Adam, AdamConfig, Mlp, MlpSpec, Tape, Var};
use crate::checkpoint::{CheckpointError, Container};
use crate::reward::style_score;

/// What the gradient penalty differentiates with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyMode {
    /// Per-sample gradient with respect to the discriminator input.
    #[default]
    Input,
    /// Gradient of the batch-mean score with respect to the parameters.
    Parameter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscriminatorConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub penalty_weight: f64,
    pub penalty_mode: PenaltyMode,
    /// Real and fake batch size per update.
    pub batch_size: usize,
    pub updates_per_iteration: usize,
    pub max_grad_norm: f64,
    pub buffer_capacity: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            hidden: vec![1024, 512],
            learning_rate: 1e-4,
            penalty_weight: 10.0,
            penalty_mode: PenaltyMode::Input,
            batch_size: 128,
            updates_per_iteration: 2,
            max_grad_norm: 10.0,
            buffer_capacity: 100_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiscLoss {
    pub total: f64,
    pub real_term: f64,
    pub fake_term: f64,
    pub penalty: f64,
    pub mean_real: f64,
    pub mean_fake: f64,
    /// Gradients of `total` in [`Mlp::params`] order.
    pub grads: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscStats {
    pub loss: f64,
    pub penalty: f64,
    pub mean_real: f64,
    pub mean_fake: f64,
}

fn penalty_graph(tape: &Tape, net_vars: &[Var], x: Var, d_real: Var, mode: PenaltyMode) -> Result<Var, CampError> {
    match mode {
        PenaltyMode::Input => {
            let g = tape.grad(tape.sum(d_real), &[x])?[0];
            let norms = tape.sqrt(tape.offset(tape.sum_cols(tape.square(g)), 1e-12));
            Ok(tape.mean(norms))
        }
        PenaltyMode::Parameter => {
            let gs = tape.grad(tape.mean(d_real), net_vars)?;
            let sq: Vec<Var> = gs.iter().map(|&g| tape.sum(tape.square(g))).collect();
            let mut acc = sq[0];
            for &s in &sq[1..] {
                acc = tape.add(acc, s);
            }
            Ok(tape.sqrt(tape.offset(acc, 1e-12)))
        }
    }
}

/// Least-squares adversarial loss with real targets +1, fake targets -1,
/// and a gradient-norm penalty evaluated on the real batch.
pub fn discriminator_loss(
    net: &Mlp,
    real: &Array2<f64>,
    fake: &Array2<f64>,
    penalty_weight: f64,
    mode: PenaltyMode,
) -> Result<DiscLoss, CampError> {
    for m in [real, fake] {
        if m.ncols() != net.input_dim() {
            return Err(CampError::Dimension {
                expected: net.input_dim(),
                actual: m.ncols(),
            });
        }
    }
    if real.nrows() == 0 || fake.nrows() == 0 {
        return Err(CampError::EmptyDataset);
    }
    let tape = Tape::new();
    let bound = net.bind(&tape);
    let x_real = tape.variable(real.clone());
    let x_fake = tape.constant(fake.clone());
    let d_real = net.forward_tape(&tape, &bound, x_real)?;
    let d_fake = net.forward_tape(&tape, &bound, x_fake)?;
    let real_term = tape.mean(tape.square(tape.offset(d_real, -1.0)));
    let fake_term = tape.mean(tape.square(tape.offset(d_fake, 1.0)));
    let penalty = penalty_graph(&tape, &bound.vars, x_real, d_real, mode)?;
    let total = tape.add(tape.add(real_term, fake_term), tape.scale(penalty, 0.5 * penalty_weight));
    let grads = tape.backward(total, &bound.vars)?;
    let mean = |v: Var| tape.value(v).mean().unwrap_or(0.0);
    Ok(DiscLoss {
        total: tape.scalar(total),
        real_term: tape.scalar(real_term),
        fake_term: tape.scalar(fake_term),
        penalty: 0.5 * penalty_weight * tape.scalar(penalty),
        mean_real: mean(d_real),
        mean_fake: mean(d_fake),
        grads,
    })
}

/// Gait-conditioned discriminator with its own optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub net: Mlp,
    pub adam: Adam,
    pub config: DiscriminatorConfig,
}

impl Discriminator {
    pub fn new(config: DiscriminatorConfig, seed: u64) -> Result<Self, CampError> {
        let net = Mlp::init(
            MlpSpec::new(DISC_INPUT_DIM, &config.hidden, 1, Activation::Linear),
            seed,
        )?;
        let adam = Adam::for_params(
            AdamConfig {
                lr: config.learning_rate,
                ..AdamConfig::default()
            },
            &net.params(),
        )?;
        Ok(Self { net, adam, config })
    }

    /// Scores for a batch of input rows.
    pub fn score_rows(&self, rows: &Array2<f64>) -> Result<Array1<f64>, CampError> {
        if rows.ncols() != DISC_INPUT_DIM {
            return Err(CampError::Dimension {
                expected: DISC_INPUT_DIM,
                actual: rows.ncols(),
            });
        }
        Ok(self.net.forward(rows.view())?.column(0).to_owned())
    }

    pub fn score(&self, row: &[f64; DISC_INPUT_DIM]) -> f64 {
        let m = Array2::from_shape_vec((1, DISC_INPUT_DIM), row.to_vec()).unwrap();
        self.net.forward(m.view()).expect("discriminator width")[[0, 0]]
    }

    pub fn style_scores(&self, rows: &Array2<f64>) -> Result<Array1<f64>, CampError> {
        Ok(self.score_rows(rows)?.mapv(style_score))
    }

    /// One gradient step on a real/fake pair of batches.
    pub fn update(&mut self, real: &Array2<f64>, fake: &Array2<f64>) -> Result<DiscStats, CampError> {
        let mut loss = discriminator_loss(
            &self.net,
            real,
            fake,
            self.config.penalty_weight,
            self.config.penalty_mode,
        )?;
        if !loss.total.is_finite() {
            return Err(CampError::InvalidReference("non-finite discriminator loss".into()));
        }
        clip_grad_norm(&mut loss.grads, self.config.max_grad_norm);
        let mut params = self.net.params_mut();
        self.adam.update(&mut params, &loss.grads)?;
        Ok(DiscStats {
            loss: loss.total,
            penalty: loss.penalty,
            mean_real: loss.mean_real,
            mean_fake: loss.mean_fake,
        })
    }

    pub fn save_into(&self, c: &mut Container, prefix: &str) {
        for (i, p) in self.net.params().iter().enumerate() {
            c.put_matrix(&format!("{prefix}net/{i}"), p);
        }
        let (m, v) = self.adam.moments();
        for (i, (a, b)) in m.iter().zip(v).enumerate() {
            c.put_matrix(&format!("{prefix}adam/m/{i}"), a);
            c.put_matrix(&format!("{prefix}adam/v/{i}"), b);
        }
        c.put_tensor(&format!("{prefix}adam/step"), &[], vec![self.adam.step_count() as f64]);
    }

    pub fn load_from(&mut self, c: &Container, prefix: &str) -> Result<(), CheckpointError> {
        let mut first = Vec::new();
        let mut second = Vec::new();
        for (i, p) in self.net.params_mut().into_iter().enumerate() {
            let dim = p.dim();
            p.assign(&c.matrix_like(&format!("{prefix}net/{i}"), dim)?);
            first.push(c.matrix_like(&format!("{prefix}adam/m/{i}"), dim)?);
            second.push(c.matrix_like(&format!("{prefix}adam/v/{i}"), dim)?);
        }
        let (_, step) = c.tensor(&format!("{prefix}adam/step"))?;
        let step = step.first().copied().unwrap_or(0.0) as u64;
        self.adam
            .restore(step, first, second)
            .map_err(|e| CheckpointError::Malformed(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
    }

    fn linear(dim: usize, weights: &[f64], bias: f64) -> Mlp {
        let mut net = Mlp::init(MlpSpec::new(dim, &[], 1, Activation::Linear), 0).unwrap();
        let mut p = net.params_mut();
        for (i, w) in weights.iter().enumerate() {
            p[0][[i, 0]] = *w;
        }
        p[1][[0, 0]] = bias;
        net
    }

    #[test]
    fn adversarial_terms_at_fixed_outputs() {
        let x = random(8, 3, 1);
        let one = linear(3, &[0.0; 3], 1.0);
        let l = discriminator_loss(&one, &x, &x, 10.0, PenaltyMode::Input).unwrap();
        assert!(l.real_term.abs() < 1e-15);
        assert!((l.fake_term - 4.0).abs() < 1e-15);
        let zero = linear(3, &[0.0; 3], 0.0);
        let l = discriminator_loss(&zero, &x, &x, 10.0, PenaltyMode::Input).unwrap();
        assert!((l.real_term + l.fake_term - 2.0).abs() < 1e-15);
    }

    #[test]
    fn linear_penalty_is_half_alpha_weight_norm() {
        let w = [0.3, -1.2, 0.4];
        let net = linear(3, &w, 0.1);
        let x = random(16, 3, 2);
        let l = discriminator_loss(&net, &x, &x, 10.0, PenaltyMode::Input).unwrap();
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((l.penalty - 5.0 * norm).abs() < 1e-9);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        for mode in [PenaltyMode::Input, PenaltyMode::Parameter] {
            let net = Mlp::init(MlpSpec::new(4, &[5, 3], 1, Activation::Linear), 3).unwrap();
            let real = random(6, 4, 4);
            let fake = random(6, 4, 5);
            let l = discriminator_loss(&net, &real, &fake, 10.0, mode).unwrap();
            for (pi, g) in l.grads.iter().enumerate() {
                for idx in 0..g.len().min(6) {
                    let (r, c) = (idx / g.ncols(), idx % g.ncols());
                    let eval = |d: f64| {
                        let mut n = net.clone();
                        n.params_mut()[pi][[r, c]] += d;
                        discriminator_loss(&n, &real, &fake, 10.0, mode).unwrap().total
                    };
                    let h = 1e-6;
                    let fd = (eval(h) - eval(-h)) / (2.0 * h);
                    let err = (fd - g[[r, c]]).abs() / fd.abs().max(g[[r, c]].abs()).max(1e-6);
                    assert!(err < 1e-4, "{mode:?} param {pi} [{r},{c}] fd {fd} an {}", g[[r, c]]);
                }
            }
        }
    }

    #[test]
    fn rejects_wrong_width() {
        let d = Discriminator::new(
            DiscriminatorConfig {
                hidden: vec![8],
                ..DiscriminatorConfig::default()
            },
            0,
        )
        .unwrap();
        assert!(matches!(
            d.score_rows(&Array2::zeros((2, 64))),
            Err(CampError::Dimension { .. })
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let cfg = DiscriminatorConfig {
            hidden: vec![16, 8],
            ..DiscriminatorConfig::default()
        };
        let mut a = Discriminator::new(cfg.clone(), 1).unwrap();
        a.update(&random(8, DISC_INPUT_DIM, 1), &random(8, DISC_INPUT_DIM, 2)).unwrap();
        let mut c = Container::new();
        a.save_into(&mut c, "disc/");
        let mut b = Discriminator::new(cfg, 7).unwrap();
        b.load_from(&c, "disc/").unwrap();
        assert_eq!(a, b);
    }
}
