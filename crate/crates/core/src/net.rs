//! A small fully connected network with a linear output head, trained by
//! manual backpropagation and RMSProp with inverse learning-rate decay.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_at_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }
}

/// Weights (fan_in × fan_out) and bias (fan_out) of one affine layer.
/// Also used to hold the gradients of those parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros_like(&self) -> Self {
        Dense {
            weights: Array2::zeros(self.weights.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }

    fn same_shape(&self, other: &Dense) -> bool {
        self.weights.dim() == other.weights.dim() && self.bias.dim() == other.bias.dim()
    }
}

/// Parameter gradients, one [`Dense`] per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())
        })
    }
}

/// Joint predictor f(x; θ) with `layer_dims = [d_in, hidden..., outputs]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    activation: Activation,
    layers: Vec<Dense>,
}

/// Post-activation values of every layer input, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `inputs[l]` is the input to layer `l`; `inputs[0]` is the batch itself.
    inputs: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

fn validate_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::Config(format!(
            "need at least input and output dimensions, got {layer_dims:?}"
        )));
    }
    if layer_dims.contains(&0) {
        return Err(Error::Config(format!(
            "layer dimensions must be positive, got {layer_dims:?}"
        )));
    }
    Ok(())
}

impl MlpModel {
    pub fn from_layers(
        layer_dims: Vec<usize>,
        activation: Activation,
        layers: Vec<Dense>,
    ) -> Result<Self> {
        validate_dims(&layer_dims)?;
        if layers.len() != layer_dims.len() - 1 {
            return Err(Error::Shape(format!(
                "{} layers for dimensions {layer_dims:?}",
                layers.len()
            )));
        }
        for (l, layer) in layers.iter().enumerate() {
            let expected = (layer_dims[l], layer_dims[l + 1]);
            if layer.weights.dim() != expected || layer.bias.len() != expected.1 {
                return Err(Error::Shape(format!(
                    "layer {l}: weights {:?} and bias {} for expected {expected:?}",
                    layer.weights.dim(),
                    layer.bias.len()
                )));
            }
        }
        Ok(Self {
            layer_dims,
            activation,
            layers,
        })
    }

    /// Uniform ±√(6/(fan_in+fan_out)) weights, zero biases.
    pub fn init(layer_dims: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        Self::init_with_rng(layer_dims, activation, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn init_with_rng<R: Rng + ?Sized>(
        layer_dims: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        validate_dims(layer_dims)?;
        let layers = layer_dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Dense {
                    weights: Array2::from_shape_simple_fn((fan_in, fan_out), || {
                        rng.random_range(-limit..limit)
                    }),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            activation,
            layers,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, inputs: ArrayView2<'_, f64>) -> Result<()> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input width {} but the model expects {}",
                inputs.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(inputs)?;
        let last = self.layers.len() - 1;
        let mut x = self.affine(0, inputs);
        if last > 0 {
            x.mapv_inplace(|v| self.activation.apply(v));
        }
        for l in 1..=last {
            x = self.affine(l, x.view());
            if l < last {
                x.mapv_inplace(|v| self.activation.apply(v));
            }
        }
        Ok(x)
    }

    pub fn forward_trace(&self, inputs: ArrayView2<'_, f64>) -> Result<ForwardTrace> {
        self.check_input(inputs)?;
        let last = self.layers.len() - 1;
        let mut trace = Vec::with_capacity(self.layers.len());
        trace.push(inputs.to_owned());
        for l in 0..last {
            let mut h = self.affine(l, trace[l].view());
            h.mapv_inplace(|v| self.activation.apply(v));
            trace.push(h);
        }
        let output = self.affine(last, trace[last].view());
        Ok(ForwardTrace {
            inputs: trace,
            output,
        })
    }

    fn affine(&self, l: usize, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let layer = &self.layers[l];
        x.dot(&layer.weights) + &layer.bias
    }

    /// Reverse-mode gradients of Σ output_gradient ⊙ f(inputs) with respect
    /// to every weight and bias.
    pub fn backward(
        &self,
        inputs: ArrayView2<'_, f64>,
        output_gradient: ArrayView2<'_, f64>,
    ) -> Result<Gradients> {
        let trace = self.forward_trace(inputs)?;
        self.backward_from_trace(&trace, output_gradient)
    }

    pub fn backward_from_trace(
        &self,
        trace: &ForwardTrace,
        output_gradient: ArrayView2<'_, f64>,
    ) -> Result<Gradients> {
        if output_gradient.dim() != trace.output.dim() {
            return Err(Error::Shape(format!(
                "output gradient is {:?} but the forward output is {:?}",
                output_gradient.dim(),
                trace.output.dim()
            )));
        }
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut delta = output_gradient.to_owned();
        for l in (0..self.layers.len()).rev() {
            let input = &trace.inputs[l];
            grads.push(Dense {
                weights: input.t().dot(&delta),
                bias: delta.sum_axis(Axis(0)),
            });
            if l > 0 {
                let mut back = delta.dot(&self.layers[l].weights.t());
                back.zip_mut_with(input, |d, &a| *d *= self.activation.derivative_at_output(a));
                delta = back;
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            layers: self.layers.iter().map(Dense::zeros_like).collect(),
        }
    }

    /// Flattened parameters in checkpoint order: every weight matrix
    /// row-major, then every bias vector.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weights.iter());
        }
        for l in &self.layers {
            out.extend(l.bias.iter());
        }
        out
    }

    fn set_flat_params(&mut self, values: &[f64]) {
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w = it.next().unwrap());
        }
        for l in &mut self.layers {
            l.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
    }
}

/// RMSProp hyperparameters and the inverse decay schedule
/// lr(t) = base_lr · (1 + γ·t)^(−power).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub base_lr: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub decay_gamma: f64,
    pub decay_power: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            base_lr: 1e-3,
            rho: 0.9,
            epsilon: 1e-8,
            decay_gamma: 1e-4,
            decay_power: 0.75,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.base_lr > 0.0
            && self.rho > 0.0
            && self.rho < 1.0
            && self.epsilon > 0.0
            && self.decay_gamma >= 0.0
            && self.decay_power > 0.0
            && [
                self.base_lr,
                self.epsilon,
                self.decay_gamma,
                self.decay_power,
            ]
            .iter()
            .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid optimizer settings {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    config: OptimizerConfig,
    accumulators: Vec<Dense>,
    step_count: u64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, model: &MlpModel) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            accumulators: model.layers.iter().map(Dense::zeros_like).collect(),
            step_count: 0,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn accumulators(&self) -> &[Dense] {
        &self.accumulators
    }

    pub fn effective_lr(&self) -> f64 {
        let c = &self.config;
        c.base_lr * (1.0 + c.decay_gamma * self.step_count as f64).powf(-c.decay_power)
    }

    /// One RMSProp update at the current learning rate. On error neither the
    /// model nor the state is modified.
    pub fn rmsprop_step(&mut self, model: &mut MlpModel, gradients: &Gradients) -> Result<()> {
        if gradients.layers.len() != model.layers.len()
            || gradients
                .layers
                .iter()
                .zip(&model.layers)
                .any(|(g, p)| !g.same_shape(p))
        {
            return Err(Error::Shape(
                "gradient shapes do not match model parameters".into(),
            ));
        }
        if !gradients.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite gradient at optimizer step {}",
                self.step_count
            )));
        }
        let lr = self.effective_lr();
        let (rho, eps) = (self.config.rho, self.config.epsilon);
        let update = |param: &mut f64, acc: &mut f64, g: f64| {
            *acc = rho * *acc + (1.0 - rho) * g * g;
            *param -= lr * g / (acc.sqrt() + eps);
        };
        for ((layer, acc), grad) in model
            .layers
            .iter_mut()
            .zip(&mut self.accumulators)
            .zip(&gradients.layers)
        {
            ndarray::Zip::from(&mut layer.weights)
                .and(&mut acc.weights)
                .and(&grad.weights)
                .for_each(|p, a, &g| update(p, a, g));
            ndarray::Zip::from(&mut layer.bias)
                .and(&mut acc.bias)
                .and(&grad.bias)
                .for_each(|p, a, &g| update(p, a, g));
        }
        self.step_count += 1;
        Ok(())
    }
}

pub const CHECKPOINT_FORMAT: &str = "moonlite-mlp";
pub const CHECKPOINT_VERSION: u32 = 1;
const MAX_HEADER_BYTES: usize = 1 << 16;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    format: String,
    version: u32,
    layer_dims: Vec<usize>,
    activation: Activation,
}

impl MlpModel {
    /// Checkpoint bytes: one line of JSON header terminated by `\n`, then
    /// [`MlpModel::flat_params`] as little-endian f64.
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            layer_dims: self.layer_dims.clone(),
            activation: self.activation,
        };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        for v in self.flat_params() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let newline = bytes
            .iter()
            .take(MAX_HEADER_BYTES)
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format(path, 0, "no checkpoint header line found"))?;
        let header: CheckpointHeader = serde_json::from_slice(&bytes[..newline])
            .map_err(|e| Error::format(path, 0, format!("malformed checkpoint header: {e}")))?;
        if header.format != CHECKPOINT_FORMAT || header.version != CHECKPOINT_VERSION {
            return Err(Error::format(
                path,
                0,
                format!(
                    "unsupported checkpoint {} v{}",
                    header.format, header.version
                ),
            ));
        }
        validate_dims(&header.layer_dims).map_err(|e| Error::format(path, 0, e.to_string()))?;
        let mut model = MlpModel {
            layers: header
                .layer_dims
                .windows(2)
                .map(|w| Dense {
                    weights: Array2::zeros((w[0], w[1])),
                    bias: Array1::zeros(w[1]),
                })
                .collect(),
            layer_dims: header.layer_dims,
            activation: header.activation,
        };
        let payload_start = newline + 1;
        let payload = &bytes[payload_start..];
        let expected = model.num_params() * 8;
        if payload.len() < expected {
            return Err(Error::format(
                path,
                bytes.len() as u64,
                format!(
                    "truncated parameters: expected {expected} bytes, found {} ({} values short)",
                    payload.len(),
                    (expected - payload.len()).div_ceil(8)
                ),
            ));
        }
        if payload.len() > expected {
            return Err(Error::format(
                path,
                (payload_start + expected) as u64,
                format!(
                    "{} trailing bytes after parameters",
                    payload.len() - expected
                ),
            ));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        model.set_flat_params(&values);
        Ok(model)
    }

    pub fn write_checkpoint(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&self.to_checkpoint_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_checkpoint(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes, path)
    }
}
