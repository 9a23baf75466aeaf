//! Dense feedforward index networks with analytic parameter gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NetError;

/// Hidden-layer nonlinearity.
///
/// `Relu` is available for comparison runs but is flagged non-smooth: the
/// convergence analysis of the training loop assumes a smooth objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Relu,
}

impl Activation {
    pub fn is_smooth(self) -> bool {
        !matches!(self, Activation::Relu)
    }

    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => super::sigma_m(z, 1.0),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `a = apply(z)`.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn tag(self) -> u64 {
        match self {
            Activation::Tanh => 0,
            Activation::Sigmoid => 1,
            Activation::Relu => 2,
        }
    }

    pub(super) fn to_tag(self) -> u64 {
        self.tag()
    }

    pub(super) fn from_tag(tag: u64) -> Result<Self, NetError> {
        match tag {
            0 => Ok(Activation::Tanh),
            1 => Ok(Activation::Sigmoid),
            2 => Ok(Activation::Relu),
            other => Err(NetError::Format(format!("unknown activation tag {other}"))),
        }
    }
}

/// A dense feedforward network mapping an encoded state to a scalar index
/// estimate. Hidden layers use [`Activation`]; the output layer is linear.
///
/// Flat parameter layout (used by gradients, updates, and checkpoints):
/// layer by layer, weights in row-major `[out][in]` order, then biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layer_dims: Vec<usize>,
    /// `weights[l][o * in_dim + i]` connects input `i` to output `o` of layer `l`.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    activation: Activation,
}

fn validate_dims(layer_dims: &[usize]) -> Result<(), NetError> {
    let ok = layer_dims.len() >= 2
        && layer_dims.iter().all(|&d| d >= 1)
        && *layer_dims.last().unwrap() == 1;
    if ok {
        Ok(())
    } else {
        Err(NetError::BadLayerDims(layer_dims.to_vec()))
    }
}

impl DenseNet {
    /// All-zero parameters.
    pub fn zeros(layer_dims: Vec<usize>, activation: Activation) -> Result<Self, NetError> {
        validate_dims(&layer_dims)?;
        let weights = layer_dims
            .windows(2)
            .map(|w| vec![0.0; w[0] * w[1]])
            .collect();
        let biases = layer_dims[1..].iter().map(|&d| vec![0.0; d]).collect();
        Ok(Self {
            layer_dims,
            weights,
            biases,
            activation,
        })
    }

    /// Uniform init on `[-scale, scale]` for weights, zero biases.
    pub fn random<R: Rng + ?Sized>(
        layer_dims: Vec<usize>,
        activation: Activation,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self, NetError> {
        let mut net = Self::zeros(layer_dims, activation)?;
        for layer in &mut net.weights {
            for w in layer.iter_mut() {
                *w = rng.random_range(-scale..=scale);
            }
        }
        Ok(net)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub(super) fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub(super) fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub(super) fn from_parts(
        layer_dims: Vec<usize>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        activation: Activation,
    ) -> Result<Self, NetError> {
        validate_dims(&layer_dims)?;
        let expect_w: Vec<usize> = layer_dims.windows(2).map(|w| w[0] * w[1]).collect();
        let expect_b: Vec<usize> = layer_dims[1..].to_vec();
        let got_w: Vec<usize> = weights.iter().map(Vec::len).collect();
        let got_b: Vec<usize> = biases.iter().map(Vec::len).collect();
        if got_w != expect_w || got_b != expect_b {
            return Err(NetError::Format("layer shapes do not match layer_dims".into()));
        }
        Ok(Self {
            layer_dims,
            weights,
            biases,
            activation,
        })
    }

    fn check_input(&self, input: &[f64]) -> Result<(), NetError> {
        if input.len() != self.input_dim() {
            return Err(NetError::InputDimMismatch {
                expected: self.input_dim(),
                found: input.len(),
            });
        }
        Ok(())
    }

    /// Scalar index estimate `f_θ(s)` for an encoded state.
    pub fn forward(&self, input: &[f64]) -> Result<f64, NetError> {
        self.check_input(input)?;
        let mut a = input.to_vec();
        for l in 0..self.num_layers() {
            a = self.layer_forward(l, &a);
        }
        Ok(a[0])
    }

    fn layer_forward(&self, l: usize, input: &[f64]) -> Vec<f64> {
        let in_dim = self.layer_dims[l];
        let out_dim = self.layer_dims[l + 1];
        let last = l == self.num_layers() - 1;
        let mut out = Vec::with_capacity(out_dim);
        for o in 0..out_dim {
            let row = &self.weights[l][o * in_dim..(o + 1) * in_dim];
            let z: f64 =
                row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + self.biases[l][o];
            out.push(if last { z } else { self.activation.apply(z) });
        }
        out
    }

    /// Analytic gradient `∇_θ f_θ(s)` in the flat layout.
    pub fn param_grad(&self, input: &[f64]) -> Result<Vec<f64>, NetError> {
        self.param_grad_masked(input, None)
    }

    /// As [`Self::param_grad`], with frozen layers zeroed out.
    pub fn param_grad_masked(
        &self,
        input: &[f64],
        frozen_layers: Option<&[bool]>,
    ) -> Result<Vec<f64>, NetError> {
        self.check_input(input)?;
        let layers = self.num_layers();
        // Forward pass, keeping each layer's activation output.
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(layers + 1);
        activations.push(input.to_vec());
        for l in 0..layers {
            let next = self.layer_forward(l, &activations[l]);
            activations.push(next);
        }

        // Backward pass: delta[o] = ∂f/∂z_l[o].
        let mut grad = vec![0.0; self.param_count()];
        let mut delta = vec![1.0]; // linear scalar output
        let mut offset = self.param_count();
        for l in (0..layers).rev() {
            let in_dim = self.layer_dims[l];
            let out_dim = self.layer_dims[l + 1];
            let block = out_dim * in_dim + out_dim;
            offset -= block;
            let frozen = frozen_layers.is_some_and(|f| f.get(l).copied().unwrap_or(false));
            if !frozen {
                for o in 0..out_dim {
                    let g = delta[o];
                    let w_base = offset + o * in_dim;
                    for (i, &x) in activations[l].iter().enumerate() {
                        grad[w_base + i] = g * x;
                    }
                    grad[offset + out_dim * in_dim + o] = g;
                }
            }
            if l > 0 {
                let mut prev_delta = vec![0.0; in_dim];
                for o in 0..out_dim {
                    let row = &self.weights[l][o * in_dim..(o + 1) * in_dim];
                    for (i, &w) in row.iter().enumerate() {
                        prev_delta[i] += delta[o] * w;
                    }
                }
                for (i, d) in prev_delta.iter_mut().enumerate() {
                    *d *= self
                        .activation
                        .derivative_from_output(activations[l][i]);
                }
                delta = prev_delta;
            }
        }
        Ok(grad)
    }

    /// Parameters in the flat layout.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in 0..self.num_layers() {
            out.extend_from_slice(&self.weights[l]);
            out.extend_from_slice(&self.biases[l]);
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<(), NetError> {
        if params.len() != self.param_count() {
            return Err(NetError::ParamCountMismatch {
                expected: self.param_count(),
                found: params.len(),
            });
        }
        let mut cursor = 0;
        for l in 0..self.num_layers() {
            let wl = self.weights[l].len();
            self.weights[l].copy_from_slice(&params[cursor..cursor + wl]);
            cursor += wl;
            let bl = self.biases[l].len();
            self.biases[l].copy_from_slice(&params[cursor..cursor + bl]);
            cursor += bl;
        }
        Ok(())
    }

    /// In-place `θ ← θ + scale·delta`; rejects non-finite results.
    pub fn apply_step(&mut self, delta: &[f64], scale: f64) -> Result<(), NetError> {
        if delta.len() != self.param_count() {
            return Err(NetError::ParamCountMismatch {
                expected: self.param_count(),
                found: delta.len(),
            });
        }
        let mut cursor = 0;
        for l in 0..self.num_layers() {
            for w in self.weights[l].iter_mut() {
                *w += scale * delta[cursor];
                if !w.is_finite() {
                    return Err(NetError::NonFiniteParam(cursor));
                }
                cursor += 1;
            }
            for b in self.biases[l].iter_mut() {
                *b += scale * delta[cursor];
                if !b.is_finite() {
                    return Err(NetError::NonFiniteParam(cursor));
                }
                cursor += 1;
            }
        }
        Ok(())
    }
}
