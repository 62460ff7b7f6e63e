//! Dense feed-forward networks with hand-written backpropagation.
//!
//! Each layer computes `z = act(W z_prev + b)` with `W` stored row-major
//! (`outputs × inputs`). Everything here is `f64`; the largest matrix the
//! toolkit builds is 48×48.

mod gradcheck;
mod loss;
mod train;

pub use gradcheck::{numerical_gradients, max_relative_error};
pub use loss::{loss_mape, loss_mse, loss_weighted_mse, ratio_from_std, Loss, WeightedMseConfig, DEFAULT_MAPE_EPSILON};
pub use train::{train, HistoryEntry, InputNoise, LossHistory, Samples, TrainConfig};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    Linear,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    fn derivative_at_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::InvalidConfig(format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    inputs: usize,
    outputs: usize,
    /// Row-major `outputs × inputs`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(
        inputs: usize,
        outputs: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::InvalidConfig("layer sizes must be positive".into()));
        }
        if weights.len() != inputs * outputs {
            return Err(Error::Shape { expected: inputs * outputs, got: weights.len() });
        }
        if bias.len() != outputs {
            return Err(Error::Shape { expected: outputs, got: bias.len() });
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("layer parameters must be finite".into()));
        }
        Ok(Self { inputs, outputs, weights, bias, activation })
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Result<Self> {
        Self::new(inputs, outputs, vec![0.0; inputs * outputs], vec![0.0; outputs], activation)
    }

    /// Uniform weights in `[-scale, scale]`, zero bias. `None` picks the
    /// Glorot bound `sqrt(6 / (fan_in + fan_out))`.
    pub fn random(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        scale: Option<f64>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let s = scale.unwrap_or_else(|| (6.0 / (inputs + outputs) as f64).sqrt());
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidConfig(format!("init scale {s} must be positive")));
        }
        let weights = (0..inputs * outputs).map(|_| rng.random_range(-s..=s)).collect();
        Self::new(inputs, outputs, weights, vec![0.0; outputs], activation)
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub(crate) fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// `W[row][col]`.
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.inputs + col]
    }

    /// Returns the layer with `W` replaced by its transpose (and sizes
    /// swapped), bias and activation supplied by the caller.
    pub fn transposed(&self, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        let mut w = vec![0.0; self.weights.len()];
        for r in 0..self.outputs {
            for c in 0..self.inputs {
                w[c * self.outputs + r] = self.weights[r * self.inputs + c];
            }
        }
        Self::new(self.outputs, self.inputs, w, bias, activation)
    }

    fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.weights[r * self.inputs..(r + 1) * self.inputs];
            let pre = self.bias[r] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            *o = self.activation.apply(pre);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<DenseLayer>,
}

/// Activations recorded by [`Network::forward`]: the input followed by every
/// layer output.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationCache {
    activations: Vec<Vec<f64>>,
}

impl ActivationCache {
    pub fn activations(&self) -> &[Vec<f64>] {
        &self.activations
    }

    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache holds the input at least")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient { weights: vec![0.0; l.weights.len()], bias: vec![0.0; l.outputs] })
                .collect(),
        }
    }

    fn clear(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|v| *v = 0.0);
            l.bias.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied())
    }
}

impl Network {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::Shape { expected: pair[0].outputs, got: pair[1].inputs });
            }
        }
        Ok(Self { layers })
    }

    /// Random network over `sizes` (e.g. `[48, 24, 48]`): `hidden` activation
    /// on every layer except the last, which uses `output`.
    pub fn random(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        scale: Option<f64>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::InvalidConfig("need at least input and output sizes".into()));
        }
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                DenseLayer::random(sizes[i], sizes[i + 1], act, scale, rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().expect("non-empty").outputs
    }

    /// Layer widths from input to output.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_size()).chain(self.layers.iter().map(|l| l.outputs)).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_size() {
            return Err(Error::Shape { expected: self.input_size(), got: x.len() });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ActivationCache)> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        for layer in &self.layers {
            let mut out = vec![0.0; layer.outputs];
            layer.forward_into(activations.last().expect("non-empty"), &mut out);
            activations.push(out);
        }
        let output = activations.last().expect("non-empty").clone();
        Ok((output, ActivationCache { activations }))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x).map(|(y, _)| y)
    }

    /// Output of layer `index` (1-based count of layers applied).
    pub fn code_at(&self, x: &[f64], depth: usize) -> Result<Vec<f64>> {
        let (_, cache) = self.forward(x)?;
        cache
            .activations
            .get(depth)
            .cloned()
            .ok_or(Error::Shape { expected: self.layers.len(), got: depth })
    }

    /// Analytic gradients of `loss(target, output)` with respect to every
    /// weight and bias, using activations from a matching forward pass.
    pub fn backward(&self, cache: &ActivationCache, target: &[f64], loss: &Loss) -> Result<Gradients> {
        if cache.activations.len() != self.layers.len() + 1
            || cache.activations.iter().zip(self.sizes()).any(|(a, n)| a.len() != n)
        {
            return Err(Error::StaleCache);
        }
        if target.len() != self.output_size() {
            return Err(Error::Shape { expected: self.output_size(), got: target.len() });
        }
        loss.check(self.output_size())?;
        let mut grads = Gradients::zeros_like(self);
        let mut scratch = BackpropScratch::new(self);
        self.accumulate(&cache.activations, target, loss, &mut grads, &mut scratch);
        Ok(grads)
    }

    /// Adds the gradient for one sample into `grads`.
    pub(crate) fn accumulate(
        &self,
        activations: &[Vec<f64>],
        target: &[f64],
        loss: &Loss,
        grads: &mut Gradients,
        scratch: &mut BackpropScratch,
    ) {
        let last = self.layers.len() - 1;
        let delta = &mut scratch.deltas[last];
        loss.output_gradient_into(target, &activations[last + 1], delta);
        for (d, &y) in delta.iter_mut().zip(&activations[last + 1]) {
            *d *= self.layers[last].activation.derivative_at_output(y);
        }
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let input = &activations[li];
            let (lower, upper) = scratch.deltas.split_at_mut(li);
            let delta = &upper[0];
            let g = &mut grads.layers[li];
            for r in 0..layer.outputs {
                let d = delta[r];
                g.bias[r] += d;
                let row = &mut g.weights[r * layer.inputs..(r + 1) * layer.inputs];
                for (gw, &x) in row.iter_mut().zip(input) {
                    *gw += d * x;
                }
            }
            if li > 0 {
                let prev = &mut lower[li - 1];
                let prev_act = self.layers[li - 1].activation;
                for (c, p) in prev.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for r in 0..layer.outputs {
                        s += layer.weights[r * layer.inputs + c] * delta[r];
                    }
                    *p = s * prev_act.derivative_at_output(input[c]);
                }
            }
        }
    }

    /// `params -= step * grads`.
    pub(crate) fn apply_update(&mut self, grads: &Gradients, step: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, gw) in layer.weights.iter_mut().zip(&g.weights) {
                *w -= step * gw;
            }
            for (b, gb) in layer.bias.iter_mut().zip(&g.bias) {
                *b -= step * gb;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

/// Reusable buffers for the training loop.
pub(crate) struct BackpropScratch {
    deltas: Vec<Vec<f64>>,
    activations: Vec<Vec<f64>>,
}

impl BackpropScratch {
    pub(crate) fn new(net: &Network) -> Self {
        Self {
            deltas: net.layers.iter().map(|l| vec![0.0; l.outputs]).collect(),
            activations: net.sizes().into_iter().map(|n| vec![0.0; n]).collect(),
        }
    }

    /// Forward pass into the scratch buffers; returns the output slice.
    pub(crate) fn forward<'a>(&'a mut self, net: &Network, x: &[f64]) -> &'a [f64] {
        self.activations[0].copy_from_slice(x);
        for (i, layer) in net.layers.iter().enumerate() {
            let (done, rest) = self.activations.split_at_mut(i + 1);
            layer.forward_into(&done[i], &mut rest[0]);
        }
        self.activations.last().expect("non-empty")
    }

    /// Backward pass over the activations left by [`Self::forward`].
    pub(crate) fn backward(&mut self, net: &Network, target: &[f64], loss: &Loss, grads: &mut Gradients) {
        let activations = std::mem::take(&mut self.activations);
        net.accumulate(&activations, target, loss, grads, self);
        self.activations = activations;
    }
}
