//! Small conditional MLP velocity model with hand-written backpropagation.
//!
//! Network input is `concat(state, condition, t, 1 - t)`. Hidden layers use the
//! configured activation; the output layer is affine. `widths[0]` counts the
//! state plus the two time features, so a model over a 2-d state has
//! `widths[0] == 4` whatever its condition dimension, and the last width must
//! equal the state dimension.

mod dataset;
mod io;
mod train;

pub use dataset::{synth_av_dataset, AvSample, CoupledAvDataset, CoupledAvParams};
pub use io::{load_model, model_from_bytes, model_to_bytes, save_model, MODEL_FORMAT_VERSION, MODEL_MAGIC};
pub use train::{train, Optimizer, TrainConfig, TrainReport, EVAL_SEED};

use crate::error::{FlowError, Result};
use crate::field::VelocityField;
use crate::rng::Rng64;
use crate::tensor::{Condition, TensorState};

/// Number of time features appended to the input.
pub const TIME_FEATURES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `a`.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// One affine layer; `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn forward_into(&self, input: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.inputs).zip(&self.bias))
        {
            *o = b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    widths: Vec<usize>,
    condition_dim: usize,
    activation: Activation,
    layers: Vec<Layer>,
}

/// Initializes a tanh model; see [`MlpModel::init`].
pub fn mlp_init(widths: &[usize], condition_dim: usize, seed: u64) -> Result<MlpModel> {
    MlpModel::init(widths, condition_dim, Activation::Tanh, seed)
}

impl MlpModel {
    /// Fan-in scaled uniform initialization: weights `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`,
    /// biases zero. Requires at least one hidden layer.
    pub fn init(widths: &[usize], condition_dim: usize, activation: Activation, seed: u64) -> Result<Self> {
        if widths.len() < 3 {
            return Err(FlowError::InvalidConfig(format!(
                "need at least one hidden layer, got widths {widths:?}"
            )));
        }
        check_widths(widths)?;
        let mut rng = Rng64::new(seed);
        let layers = layer_shapes(widths, condition_dim)
            .map(|(inputs, outputs)| {
                let bound = 1.0 / (inputs as f64).sqrt();
                let weights = (0..inputs * outputs)
                    .map(|_| bound * (2.0 * rng.uniform() - 1.0))
                    .collect();
                Layer {
                    inputs,
                    outputs,
                    weights,
                    bias: vec![0.0; outputs],
                }
            })
            .collect();
        Ok(Self {
            widths: widths.to_vec(),
            condition_dim,
            activation,
            layers,
        })
    }

    /// Assembles a model from explicit layers; zero hidden layers is allowed.
    pub fn from_layers(
        widths: &[usize],
        condition_dim: usize,
        activation: Activation,
        layers: Vec<Layer>,
    ) -> Result<Self> {
        check_widths(widths)?;
        let shapes: Vec<_> = layer_shapes(widths, condition_dim).collect();
        if shapes.len() != layers.len() {
            return Err(FlowError::InvalidConfig(format!(
                "{} layers for widths {widths:?}",
                layers.len()
            )));
        }
        for (i, ((inputs, outputs), layer)) in shapes.iter().zip(&layers).enumerate() {
            if layer.inputs != *inputs
                || layer.outputs != *outputs
                || layer.weights.len() != inputs * outputs
                || layer.bias.len() != *outputs
            {
                return Err(FlowError::InvalidConfig(format!(
                    "layer {i} does not match shape {outputs}x{inputs}"
                )));
            }
            if layer.weights.iter().chain(&layer.bias).any(|v| !v.is_finite()) {
                return Err(FlowError::InvalidConfig(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(Self {
            widths: widths.to_vec(),
            condition_dim,
            activation,
            layers,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated widths")
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Sets every weight and bias to zero.
    pub fn zero_parameters(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
            l.bias.iter_mut().for_each(|b| *b = 0.0);
        }
    }

    fn assemble_input(&self, x: &[f64], c: &[f64], t: f64, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(x);
        out.extend_from_slice(c);
        out.push(t);
        out.push(1.0 - t);
    }

    /// Forward pass keeping every layer's post-activation output.
    /// `acts[0]` is the input, `acts[L]` the linear output.
    fn forward_cached(&self, acts: &mut Vec<Vec<f64>>) {
        acts.truncate(1);
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; layer.outputs];
            layer.forward_into(&acts[i], &mut out);
            if i + 1 < self.layers.len() {
                out.iter_mut().for_each(|z| *z = self.activation.apply(*z));
            }
            acts.push(out);
        }
    }

    /// Raw forward pass on slices.
    pub fn forward_raw(&self, x: &[f64], c: &[f64], t: f64) -> Vec<f64> {
        let mut input = Vec::with_capacity(self.input_dim());
        self.assemble_input(x, c, t, &mut input);
        let mut acts = vec![input];
        self.forward_cached(&mut acts);
        acts.pop().expect("at least one layer")
    }

    fn empty_gradients(&self) -> Gradients {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    /// Mean squared-error loss over the batch and its gradient.
    pub fn loss_and_gradients(&self, batch: &[FmSample]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(FlowError::InvalidInput("empty batch".into()));
        }
        let mut grads = self.empty_gradients();
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        let mut acts: Vec<Vec<f64>> = vec![Vec::new()];
        for sample in batch {
            self.check_sample(sample)?;
            self.assemble_input(sample.x_t.data(), sample.condition.vector(), sample.t, &mut acts[0]);
            self.forward_cached(&mut acts);
            let out = acts.last().expect("output");
            let mut delta: Vec<f64> = out
                .iter()
                .zip(sample.target.data())
                .map(|(o, y)| o - y)
                .collect();
            loss += delta.iter().map(|d| d * d).sum::<f64>() * scale;
            delta.iter_mut().for_each(|d| *d *= 2.0 * scale);

            for l in (0..self.layers.len()).rev() {
                let layer = &self.layers[l];
                let input = &acts[l];
                let g = &mut grads.layers[l];
                for (j, &dj) in delta.iter().enumerate() {
                    g.bias[j] += dj;
                    let row = &mut g.weights[j * layer.inputs..(j + 1) * layer.inputs];
                    for (gw, &a) in row.iter_mut().zip(input) {
                        *gw += dj * a;
                    }
                }
                if l > 0 {
                    let mut prev = vec![0.0; layer.inputs];
                    for (j, &dj) in delta.iter().enumerate() {
                        let row = &layer.weights[j * layer.inputs..(j + 1) * layer.inputs];
                        for (p, &w) in prev.iter_mut().zip(row) {
                            *p += w * dj;
                        }
                    }
                    for (p, &a) in prev.iter_mut().zip(input) {
                        *p *= self.activation.derivative_from_output(a);
                    }
                    delta = prev;
                }
            }
        }
        Ok((loss, grads))
    }

    /// Mean squared-error loss over the batch.
    pub fn loss(&self, batch: &[FmSample]) -> Result<f64> {
        if batch.is_empty() {
            return Err(FlowError::InvalidInput("empty batch".into()));
        }
        let mut loss = 0.0;
        for sample in batch {
            self.check_sample(sample)?;
            let out = self.forward_raw(sample.x_t.data(), sample.condition.vector(), sample.t);
            loss += out
                .iter()
                .zip(sample.target.data())
                .map(|(o, y)| (o - y) * (o - y))
                .sum::<f64>();
        }
        Ok(loss / batch.len() as f64)
    }

    fn check_sample(&self, s: &FmSample) -> Result<()> {
        let d = self.output_dim();
        if s.x_t.len() != d {
            return Err(FlowError::shape(&[d], s.x_t.shape()));
        }
        if s.target.len() != d {
            return Err(FlowError::shape(&[d], s.target.shape()));
        }
        s.condition.check_dim(self.condition_dim)
    }

    fn param_mut(&mut self, index: usize) -> &mut f64 {
        let mut i = index;
        for l in &mut self.layers {
            if i < l.weights.len() {
                return &mut l.weights[i];
            }
            i -= l.weights.len();
            if i < l.bias.len() {
                return &mut l.bias[i];
            }
            i -= l.bias.len();
        }
        panic!("parameter index {index} out of range");
    }
}

fn check_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(FlowError::InvalidConfig(format!("too few widths: {widths:?}")));
    }
    if widths.iter().any(|&w| w == 0) {
        return Err(FlowError::InvalidConfig(format!("zero width in {widths:?}")));
    }
    let state = widths[0].checked_sub(TIME_FEATURES).filter(|&s| s > 0);
    if state != Some(widths[widths.len() - 1]) {
        return Err(FlowError::InvalidConfig(format!(
            "widths {widths:?}: first width must be the output (state) width plus {TIME_FEATURES} time features"
        )));
    }
    Ok(())
}

fn layer_shapes(widths: &[usize], condition_dim: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
    widths.windows(2).enumerate().map(move |(i, w)| {
        let inputs = if i == 0 { w[0] + condition_dim } else { w[0] };
        (inputs, w[1])
    })
}

impl VelocityField for MlpModel {
    fn state_dim(&self) -> usize {
        self.output_dim()
    }

    fn condition_dim(&self) -> usize {
        self.condition_dim
    }

    fn velocity(&self, x: &TensorState, c: &Condition, t: f64) -> Result<TensorState> {
        self.check_inputs(x, c)?;
        let out = self.forward_raw(x.data(), c.vector(), t);
        TensorState::new(out, x.shape().to_vec(), x.modality())
    }
}

/// Forward pass as a velocity field.
pub fn mlp_forward(model: &MlpModel, x: &TensorState, c: &Condition, t: f64) -> Result<TensorState> {
    model.velocity(x, c, t)
}

/// One regression example of the flow-matching objective.
#[derive(Debug, Clone)]
pub struct FmSample {
    pub x_t: TensorState,
    pub condition: Condition,
    pub t: f64,
    pub target: TensorState,
}

/// Gradient with the same layout as the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }
}

pub fn mlp_backward(model: &MlpModel, batch: &[FmSample]) -> Result<Gradients> {
    model.loss_and_gradients(batch).map(|(_, g)| g)
}

/// Largest relative error between backprop and central differences:
/// `|analytic - fd| / (|analytic| + |fd| + 1e-12)` over all parameters.
pub fn grad_check(model: &MlpModel, batch: &[FmSample], fd_step: f64) -> Result<f64> {
    if !(fd_step > 0.0 && fd_step <= 1e-2) {
        return Err(FlowError::InvalidInput(format!(
            "finite-difference step must lie in (0, 1e-2], got {fd_step}"
        )));
    }
    let analytic = mlp_backward(model, batch)?.flat();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = *probe.param_mut(i);
        *probe.param_mut(i) = orig + fd_step;
        let up = probe.loss(batch)?;
        *probe.param_mut(i) = orig - fd_step;
        let down = probe.loss(batch)?;
        *probe.param_mut(i) = orig;
        let fd = (up - down) / (2.0 * fd_step);
        worst = worst.max((a - fd).abs() / (a.abs() + fd.abs() + 1e-12));
    }
    Ok(worst)
}
