use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::AutodiffError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected adaptive-moment optimizer over a fixed list of tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Array2<f64>>,
    second: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, shapes: &[(usize, usize)]) -> Result<Self, AutodiffError> {
        if !(config.lr > 0.0) {
            return Err(AutodiffError::InvalidLearningRate(config.lr));
        }
        Ok(Self {
            config,
            step: 0,
            first: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            second: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
        })
    }

    pub fn for_params(config: AdamConfig, params: &[&Array2<f64>]) -> Result<Self, AutodiffError> {
        let shapes: Vec<_> = params.iter().map(|p| p.dim()).collect();
        Self::new(config, &shapes)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn set_lr(&mut self, lr: f64) -> Result<(), AutodiffError> {
        if !(lr > 0.0) {
            return Err(AutodiffError::InvalidLearningRate(lr));
        }
        self.config.lr = lr;
        Ok(())
    }

    /// Moment buffers, first moments then second moments.
    pub fn moments(&self) -> (&[Array2<f64>], &[Array2<f64>]) {
        (&self.first, &self.second)
    }

    pub fn restore(
        &mut self,
        step: u64,
        first: Vec<Array2<f64>>,
        second: Vec<Array2<f64>>,
    ) -> Result<(), AutodiffError> {
        let same = |a: &[Array2<f64>], b: &[Array2<f64>]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.dim() == y.dim())
        };
        if !same(&first, &self.first) || !same(&second, &self.second) {
            return Err(AutodiffError::ShapeMismatch("optimizer moments".into()));
        }
        self.step = step;
        self.first = first;
        self.second = second;
        Ok(())
    }

    pub fn update(
        &mut self,
        params: &mut [&mut Array2<f64>],
        grads: &[Array2<f64>],
    ) -> Result<(), AutodiffError> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(AutodiffError::ShapeMismatch(format!(
                "adam expects {} tensors, got {} params / {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            if p.dim() != g.dim() {
                return Err(AutodiffError::ShapeMismatch(format!(
                    "param {:?} vs grad {:?}",
                    p.dim(),
                    g.dim()
                )));
            }
            Zip::from(&mut **p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
        Ok(())
    }
}

/// Scales `grads` in place so their global L2 norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Array2<f64>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .map(|g| g.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.mapv_inplace(|v| v * s);
        }
    }
    norm
}
