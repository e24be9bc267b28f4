use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::{elu_array, Tape, Var};
use super::AutodiffError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Elu,
    Tanh,
}

impl Activation {
    fn apply(self, x: Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Linear => x,
            Activation::Elu => elu_array(&x),
            Activation::Tanh => x.mapv(f64::tanh),
        }
    }

    fn apply_tape(self, tape: &Tape, x: Var) -> Var {
        match self {
            Activation::Linear => x,
            Activation::Elu => tape.elu(x),
            Activation::Tanh => tape.tanh(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    /// Init gain of the output layer.
    pub output_gain: f64,
}

impl MlpSpec {
    /// ELU hidden layers, unit output gain.
    pub fn new(
        input_dim: usize,
        hidden_dims: &[usize],
        output_dim: usize,
        output_activation: Activation,
    ) -> Self {
        Self {
            input_dim,
            hidden_dims: hidden_dims.to_vec(),
            output_dim,
            hidden_activation: Activation::Elu,
            output_activation,
            output_gain: 1.0,
        }
    }

    pub fn with_output_gain(mut self, gain: f64) -> Self {
        self.output_gain = gain;
        self
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in self.hidden_dims.iter().chain(std::iter::once(&self.output_dim)) {
            dims.push((prev, h));
            prev = h;
        }
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// One affine layer: `y = x·W + b` with `W` stored `in×out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Dense>,
}

/// Tape handles for one network's parameters, in [`Mlp::params`] order.
#[derive(Debug, Clone)]
pub struct BoundMlp {
    pub vars: Vec<Var>,
}

impl Mlp {
    /// Scaled-uniform fan-in initialization: weights `U(-a, a)` with
    /// `a = gain·sqrt(3/fan_in)` (variance `gain²/fan_in`), zero biases.
    /// Hidden layers use gain √2, the output layer `spec.output_gain`.
    pub fn init(spec: MlpSpec, seed: u64) -> Result<Self, AutodiffError> {
        if spec.input_dim == 0 || spec.output_dim == 0 || spec.hidden_dims.contains(&0) {
            return Err(AutodiffError::ZeroDimension);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = spec.layer_dims();
        let last = dims.len() - 1;
        let layers = dims
            .iter()
            .enumerate()
            .map(|(i, &(fan_in, fan_out))| {
                let gain = if i == last {
                    spec.output_gain
                } else {
                    std::f64::consts::SQRT_2
                };
                let a = gain * (3.0 / fan_in as f64).sqrt();
                let weight = Array2::from_shape_simple_fn((fan_in, fan_out), || {
                    if a > 0.0 {
                        rng.random_range(-a..a)
                    } else {
                        0.0
                    }
                });
                Dense {
                    weight,
                    bias: Array2::zeros((1, fan_out)),
                }
            })
            .collect();
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim
    }

    pub fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    /// Parameters as `[W0, b0, W1, b1, ...]`.
    pub fn params(&self) -> Vec<&Array2<f64>> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Forward pass without recording.
    pub fn forward(&self, input: ArrayView2<'_, f64>) -> Result<Array2<f64>, AutodiffError> {
        if input.ncols() != self.spec.input_dim {
            return Err(AutodiffError::DimensionMismatch {
                expected: self.spec.input_dim,
                actual: input.ncols(),
            });
        }
        let last = self.layers.len() - 1;
        let mut x = input.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = x.dot(&layer.weight) + &layer.bias;
            let act = if i == last {
                self.spec.output_activation
            } else {
                self.spec.hidden_activation
            };
            x = act.apply(z);
        }
        Ok(x)
    }

    /// Registers the parameters on `tape` as gradient-tracked leaves.
    pub fn bind(&self, tape: &Tape) -> BoundMlp {
        BoundMlp {
            vars: self
                .params()
                .into_iter()
                .map(|p| tape.variable(p.clone()))
                .collect(),
        }
    }

    /// Registers the parameters as constants.
    pub fn bind_frozen(&self, tape: &Tape) -> BoundMlp {
        BoundMlp {
            vars: self
                .params()
                .into_iter()
                .map(|p| tape.constant(p.clone()))
                .collect(),
        }
    }

    /// Recorded forward pass; numerically identical to [`Mlp::forward`].
    pub fn forward_tape(
        &self,
        tape: &Tape,
        bound: &BoundMlp,
        input: Var,
    ) -> Result<Var, AutodiffError> {
        let cols = tape.shape(input).1;
        if cols != self.spec.input_dim {
            return Err(AutodiffError::DimensionMismatch {
                expected: self.spec.input_dim,
                actual: cols,
            });
        }
        let last = self.layers.len() - 1;
        let mut x = input;
        for i in 0..self.layers.len() {
            let z = tape.add_row(tape.matmul(x, bound.vars[2 * i]), bound.vars[2 * i + 1]);
            let act = if i == last {
                self.spec.output_activation
            } else {
                self.spec.hidden_activation
            };
            x = act.apply_tape(tape, z);
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn init_is_deterministic() {
        let spec = MlpSpec::new(8, &[64, 32], 16, Activation::Linear);
        let a = Mlp::init(spec.clone(), 7).unwrap();
        let b = Mlp::init(spec, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.params().iter().all(|p| p.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(Mlp::init(MlpSpec::new(0, &[4], 1, Activation::Linear), 0).is_err());
        assert!(Mlp::init(MlpSpec::new(3, &[0], 1, Activation::Linear), 0).is_err());
        assert!(Mlp::init(MlpSpec::new(3, &[4], 0, Activation::Linear), 0).is_err());
    }

    #[test]
    fn no_hidden_layers_is_affine() {
        let mut net = Mlp::init(MlpSpec::new(2, &[], 1, Activation::Linear), 1).unwrap();
        assert_eq!(net.layers().len(), 1);
        {
            let mut p = net.params_mut();
            p[0].assign(&array![[2.0], [-1.0]]);
            p[1].assign(&array![[0.5]]);
        }
        let y = net.forward(array![[1.0, 3.0]].view()).unwrap();
        assert_eq!(y, array![[2.0 - 3.0 + 0.5]]);
    }

    #[test]
    fn stm_sized_parameter_count() {
        let spec = MlpSpec::new(42 * 5, &[256, 128], 32, Activation::Linear);
        assert_eq!(spec.param_count(), 210 * 256 + 256 + 256 * 128 + 128 + 128 * 32 + 32);
        assert_eq!(spec.param_count(), 91_040);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut net = Mlp::init(MlpSpec::new(3, &[5], 2, Activation::Linear), 3).unwrap();
        for p in net.params_mut() {
            p.fill(0.0);
        }
        let y = net.forward(array![[1.0, -2.0, 4.0]].view()).unwrap();
        assert_eq!(y, Array2::<f64>::zeros((1, 2)));
    }

    #[test]
    fn tanh_head_maps_zero_to_zero() {
        let mut net = Mlp::init(MlpSpec::new(1, &[], 1, Activation::Tanh), 3).unwrap();
        net.params_mut()[0].fill(1.0);
        assert_eq!(net.forward(array![[0.0]].view()).unwrap()[[0, 0]], 0.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let net = Mlp::init(MlpSpec::new(3, &[4], 1, Activation::Linear), 3).unwrap();
        let err = net.forward(array![[1.0, 2.0]].view()).unwrap_err();
        assert!(matches!(
            err,
            AutodiffError::DimensionMismatch { expected: 3, actual: 2 }
        ));
    }

    #[test]
    fn tape_forward_matches_plain_forward_bitwise() {
        let net = Mlp::init(MlpSpec::new(4, &[8, 6], 3, Activation::Tanh), 11).unwrap();
        let x = array![[0.1, -0.3, 2.0, 0.7], [1.0, 0.0, -1.0, 0.5]];
        let plain = net.forward(x.view()).unwrap();
        let tape = Tape::new();
        let bound = net.bind(&tape);
        let xv = tape.constant(x);
        let y = net.forward_tape(&tape, &bound, xv).unwrap();
        assert_eq!(*tape.value(y), plain);
    }
}
