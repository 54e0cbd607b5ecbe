//! Small fully connected networks with exact reverse-mode gradients.
//!
//! Batches are row-major: `batch * width` values, one sample per row.

mod checkpoint;
mod optim;

pub use checkpoint::{load_network, read_network, save_network, write_network, CHECKPOINT_MAGIC};
pub use optim::{Adam, AdamConfig};

use rand::Rng;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            _ => Err(invalid("activation", format!("unknown `{s}`"))),
        }
    }

    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    // derivative expressed through the activation output `y` (and `z` for relu)
    fn slope(&self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs x inputs`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs], activation }
    }
}

/// Output transform after the last layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Identity,
    /// Squash to (0,1) with a sigmoid, then map affinely onto `[low, high]` per output.
    Bounded { low: Vec<f64>, high: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
    pub head: Head,
}

/// Gradients with the same shapes as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn scale(&mut self, k: f64) {
        for w in self.weights.iter_mut().chain(self.bias.iter_mut()) {
            for x in w.iter_mut() {
                *x *= k;
            }
        }
    }
}

/// Values kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    pub batch: usize,
    /// Input to each layer, then the final layer output.
    acts: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
    /// Network output after the head.
    pub output: Vec<f64>,
}

impl Trace {
    /// Final-layer values before the head (the squashing logits for bounded heads).
    pub fn logits(&self) -> &[f64] {
        self.acts.last().expect("trace has at least the input")
    }
}

impl Network {
    /// Layer widths `sizes[0] -> ... -> sizes[last]`, `hidden` on inner layers,
    /// identity on the last layer. Weights and biases drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new<R: Rng>(sizes: &[usize], hidden: Activation, head: Head, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(invalid("sizes", format!("{sizes:?} needs two or more positive widths")));
        }
        let out = *sizes.last().unwrap();
        if let Head::Bounded { low, high } = &head {
            if low.len() != out || high.len() != out {
                return Err(Error::Shape { expected: out, got: low.len().min(high.len()) });
            }
            if low.iter().zip(high).any(|(l, h)| !(l < h)) {
                return Err(invalid("head", "every lower bound must be below its upper bound"));
            }
        }
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for w in sizes.windows(2) {
            let last = layers.len() == sizes.len() - 2;
            let act = if last { Activation::Identity } else { hidden };
            let mut layer = Layer::zeros(w[0], w[1], act);
            let bound = 1.0 / (w[0] as f64).sqrt();
            for x in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *x = rng.random_range(-bound..bound);
            }
            layers.push(layer);
        }
        Ok(Self { layers, head })
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(invalid("layers", "network has no layers"));
        }
        for w in self.layers.windows(2) {
            if w[0].outputs != w[1].inputs {
                return Err(Error::Shape { expected: w[0].outputs, got: w[1].inputs });
            }
        }
        for l in &self.layers {
            if l.weights.len() != l.inputs * l.outputs {
                return Err(Error::Shape { expected: l.inputs * l.outputs, got: l.weights.len() });
            }
            if l.bias.len() != l.outputs {
                return Err(Error::Shape { expected: l.outputs, got: l.bias.len() });
            }
            if l.weights.iter().chain(&l.bias).any(|x| !x.is_finite()) {
                return Err(invalid("weights", "non-finite parameter"));
            }
        }
        if let Head::Bounded { low, high } = &self.head {
            let out = self.output_width();
            if low.len() != out || high.len() != out {
                return Err(Error::Shape { expected: out, got: low.len() });
            }
        }
        Ok(())
    }

    /// Output for a single input vector.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_batch(input, 1)?.output)
    }

    pub fn forward_batch(&self, input: &[f64], batch: usize) -> Result<Trace> {
        let width = self.input_width();
        if input.len() != width * batch {
            return Err(Error::Shape { expected: width * batch, got: input.len() });
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        acts.push(input.to_vec());
        for layer in &self.layers {
            let x = acts.last().unwrap();
            let mut z = vec![0.0; batch * layer.outputs];
            for b in 0..batch {
                let xb = &x[b * layer.inputs..(b + 1) * layer.inputs];
                let zb = &mut z[b * layer.outputs..(b + 1) * layer.outputs];
                for (o, zo) in zb.iter_mut().enumerate() {
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    *zo = layer.bias[o] + dot(row, xb);
                }
            }
            let y: Vec<f64> = z.iter().map(|&v| layer.activation.apply(v)).collect();
            pre.push(z);
            acts.push(y);
        }
        let last = acts.last().unwrap();
        let output = match &self.head {
            Head::Identity => last.clone(),
            Head::Bounded { low, high } => {
                let out = low.len();
                last.iter()
                    .enumerate()
                    .map(|(k, &v)| {
                        let j = k % out;
                        low[j] + (high[j] - low[j]) * Activation::Sigmoid.apply(v)
                    })
                    .collect()
            }
        };
        Ok(Trace { batch, acts, pre, output })
    }

    /// Gradient through the head: from d(loss)/d(output) to d(loss)/d(logits).
    pub fn head_backward(&self, trace: &Trace, grad_output: &[f64]) -> Result<Vec<f64>> {
        if grad_output.len() != trace.output.len() {
            return Err(Error::Shape { expected: trace.output.len(), got: grad_output.len() });
        }
        Ok(match &self.head {
            Head::Identity => grad_output.to_vec(),
            Head::Bounded { low, high } => {
                let out = low.len();
                trace
                    .logits()
                    .iter()
                    .zip(grad_output)
                    .enumerate()
                    .map(|(k, (&v, &g))| {
                        let j = k % out;
                        let s = Activation::Sigmoid.apply(v);
                        g * (high[j] - low[j]) * s * (1.0 - s)
                    })
                    .collect()
            }
        })
    }

    /// Parameter gradients of `sum(grad_output * output)` over the batch, and
    /// the gradient with respect to the input.
    pub fn backward(&self, trace: &Trace, grad_output: &[f64]) -> Result<(Grads, Vec<f64>)> {
        let g = self.head_backward(trace, grad_output)?;
        self.backward_logits(trace, &g)
    }

    /// Like [`Network::backward`] but starting from the gradient at the logits.
    pub fn backward_logits(&self, trace: &Trace, grad_logits: &[f64]) -> Result<(Grads, Vec<f64>)> {
        let batch = trace.batch;
        let out = self.output_width();
        if grad_logits.len() != batch * out {
            return Err(Error::Shape { expected: batch * out, got: grad_logits.len() });
        }
        let mut grads = Grads::zeros_like(self);
        let mut upstream = grad_logits.to_vec();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let z = &trace.pre[li];
            let y = &trace.acts[li + 1];
            let x = &trace.acts[li];
            let dz: Vec<f64> = (0..z.len()).map(|k| upstream[k] * layer.activation.slope(z[k], y[k])).collect();
            let gw = &mut grads.weights[li];
            let gb = &mut grads.bias[li];
            let mut dx = vec![0.0; batch * layer.inputs];
            for b in 0..batch {
                let xb = &x[b * layer.inputs..(b + 1) * layer.inputs];
                let dxb = &mut dx[b * layer.inputs..(b + 1) * layer.inputs];
                for o in 0..layer.outputs {
                    let d = dz[b * layer.outputs + o];
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    let grow = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                    for i in 0..layer.inputs {
                        grow[i] += d * xb[i];
                        dxb[i] += d * row[i];
                    }
                }
            }
            upstream = dx;
        }
        Ok((grads, upstream))
    }

    /// Flattened parameters in layer order, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            v.extend_from_slice(&l.weights);
            v.extend_from_slice(&l.bias);
        }
        v
    }

    fn same_shape(&self, other: &Network) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::Shape { expected: self.layers.len(), got: other.layers.len() });
        }
        for (a, b) in self.layers.iter().zip(&other.layers) {
            if a.inputs != b.inputs || a.outputs != b.outputs {
                return Err(Error::Shape { expected: a.weights.len(), got: b.weights.len() });
            }
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `target <- rate*main + (1-rate)*target`, element-wise.
pub fn soft_update(target: &mut Network, main: &Network, rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(invalid("rate", format!("{rate} outside [0, 1]")));
    }
    target.same_shape(main)?;
    for (t, m) in target.layers.iter_mut().zip(&main.layers) {
        for (x, y) in t.weights.iter_mut().zip(&m.weights).chain(t.bias.iter_mut().zip(&m.bias)) {
            *x = rate * y + (1.0 - rate) * *x;
        }
    }
    Ok(())
}
