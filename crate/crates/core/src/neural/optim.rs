use super::{Grads, Network};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_rate(learning_rate: f64) -> Self {
        Self { learning_rate, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning_rate", format!("{} must be positive", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(invalid("beta", "moment decays must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(invalid("epsilon", "must be positive"));
        }
        Ok(())
    }
}

/// Adam moments for one network. Steps descend the supplied gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub steps: u64,
    first: Grads,
    second: Grads,
}

impl Adam {
    pub fn new(net: &Network, config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, steps: 0, first: Grads::zeros_like(net), second: Grads::zeros_like(net) })
    }

    pub fn step(&mut self, net: &mut Network, grads: &Grads) -> Result<()> {
        check_shapes(&self.first, grads)?;
        if net.layers.len() != grads.weights.len() {
            return Err(Error::Shape { expected: grads.weights.len(), got: net.layers.len() });
        }
        self.steps += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let c1 = 1.0 - beta1.powi(self.steps.min(i32::MAX as u64) as i32);
        let c2 = 1.0 - beta2.powi(self.steps.min(i32::MAX as u64) as i32);
        for (li, layer) in net.layers.iter_mut().enumerate() {
            let groups = [
                (&mut layer.weights, &grads.weights[li], &mut self.first.weights[li], &mut self.second.weights[li]),
                (&mut layer.bias, &grads.bias[li], &mut self.first.bias[li], &mut self.second.bias[li]),
            ];
            for (p, g, m, v) in groups {
                for k in 0..p.len() {
                    m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                    v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                    let mh = m[k] / c1;
                    let vh = v[k] / c2;
                    p[k] -= learning_rate * mh / (vh.sqrt() + epsilon);
                }
            }
        }
        Ok(())
    }
}

fn check_shapes(a: &Grads, b: &Grads) -> Result<()> {
    if a.weights.len() != b.weights.len() {
        return Err(Error::Shape { expected: a.weights.len(), got: b.weights.len() });
    }
    for (x, y) in a.weights.iter().zip(&b.weights).chain(a.bias.iter().zip(&b.bias)) {
        if x.len() != y.len() {
            return Err(Error::Shape { expected: x.len(), got: y.len() });
        }
    }
    Ok(())
}
