//! Federated averaging of a softmax-regression classifier over node shards
//! whose sizes come from the equilibrium update periods.
//!
//! The model is a flat vector: `classes` rows of `dim` weights followed by
//! `classes` biases.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::game::{NodeParams, TaskParams};
use crate::num::sig6;

#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub dim: usize,
    /// Row-major, `len * dim`.
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.features[k * self.dim..(k + 1) * self.dim]
    }

    pub fn subset(&self, idx: &[usize]) -> Samples {
        let mut features = Vec::with_capacity(idx.len() * self.dim);
        for &k in idx {
            features.extend_from_slice(self.row(k));
        }
        Samples { dim: self.dim, features, labels: idx.iter().map(|&k| self.labels[k]).collect() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub classes: usize,
    pub train: Samples,
    pub test: Samples,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataConfig {
    pub classes: usize,
    pub dim: usize,
    /// Distance of each class center from the origin, in noise standard deviations.
    pub separation: f64,
    pub train_size: usize,
    pub test_size: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { classes: 4, dim: 10, separation: 3.0, train_size: 4000, test_size: 1000 }
    }
}

/// Gaussian clusters with unit noise around random centers at distance
/// `separation`. Labels cycle through the classes, so counts differ by at most one.
pub fn generate_dataset(config: &DataConfig, seed: u64) -> Result<Dataset> {
    if config.classes < 2 || config.dim < 1 {
        return Err(invalid("dataset", "need at least two classes and one dimension"));
    }
    if !(config.separation >= 0.0 && config.separation.is_finite()) {
        return Err(invalid("separation", "must be finite and non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..config.classes)
        .map(|_| {
            let v: Vec<f64> = (0..config.dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.iter().map(|x| config.separation * x / norm).collect()
        })
        .collect();
    let draw = |count: usize, rng: &mut ChaCha8Rng| {
        let mut features = Vec::with_capacity(count * config.dim);
        let mut labels = Vec::with_capacity(count);
        for k in 0..count {
            let c = k % config.classes;
            for j in 0..config.dim {
                let e: f64 = rng.sample(StandardNormal);
                features.push(centers[c][j] + e);
            }
            labels.push(c);
        }
        Samples { dim: config.dim, features, labels }
    };
    let train = draw(config.train_size, &mut rng);
    let test = draw(config.test_size, &mut rng);
    Ok(Dataset { classes: config.classes, train, test })
}

/// Reads rows of numbers separated by commas or whitespace, the last one an
/// integer class label. Blank lines and lines starting with `#` are skipped.
pub fn read_samples<R: BufRead>(input: R) -> Result<Samples> {
    let mut dim = None;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        let bad = |what: &str| invalid("dataset", format!("line {}: {what}", n + 1));
        if cells.len() < 2 {
            return Err(bad("need at least one feature and a label"));
        }
        let d = cells.len() - 1;
        if *dim.get_or_insert(d) != d {
            return Err(bad("row width differs from the first row"));
        }
        for c in &cells[..d] {
            features.push(c.parse::<f64>().map_err(|_| bad("bad feature"))?);
        }
        labels.push(cells[d].parse::<usize>().map_err(|_| bad("bad label"))?);
    }
    let dim = dim.ok_or_else(|| invalid("dataset", "no rows"))?;
    Ok(Samples { dim, features, labels })
}

/// Shuffles imported samples and holds out the last `test_fraction` as test data.
pub fn split_dataset(samples: Samples, test_fraction: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(invalid("test_fraction", "must lie in [0, 1)"));
    }
    let classes = samples.labels.iter().max().map_or(0, |m| m + 1).max(2);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test_len = (samples.len() as f64 * test_fraction).round() as usize;
    let cut = samples.len() - test_len;
    Ok(Dataset { classes, train: samples.subset(&order[..cut]), test: samples.subset(&order[cut..]) })
}

/// Disjoint shards of the requested sizes drawn from a seeded shuffle.
pub fn partition_data(data: &Samples, sizes: &[usize], seed: u64) -> Result<Vec<Samples>> {
    let total: usize = sizes.iter().sum();
    if total > data.len() {
        return Err(Error::Oversubscribed { requested: total, available: data.len() });
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut start = 0;
    Ok(sizes
        .iter()
        .map(|&s| {
            let shard = data.subset(&order[start..start + s]);
            start += s;
            shard
        })
        .collect())
}

/// Samples a node collects over the task at `period`, rounded, at least one.
pub fn shard_sizes(nodes: &[NodeParams], periods: &[f64], task: &TaskParams) -> Result<Vec<usize>> {
    if nodes.len() != periods.len() {
        return Err(Error::Shape { expected: nodes.len(), got: periods.len() });
    }
    Ok(nodes
        .iter()
        .zip(periods)
        .map(|(n, &p)| ((task.horizon / p * n.rate).round() as usize).max(1))
        .collect())
}

pub fn model_width(dim: usize, classes: usize) -> usize {
    classes * (dim + 1)
}

fn logits(w: &[f64], x: &[f64], classes: usize) -> Vec<f64> {
    let dim = x.len();
    (0..classes)
        .map(|c| w[classes * dim + c] + w[c * dim..(c + 1) * dim].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Mean cross-entropy over `data` and its gradient.
pub fn loss_and_gradient(w: &[f64], data: &Samples, classes: usize) -> Result<(f64, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::EmptyShard);
    }
    let dim = data.dim;
    if w.len() != model_width(dim, classes) {
        return Err(Error::Shape { expected: model_width(dim, classes), got: w.len() });
    }
    let mut loss = 0.0;
    let mut g = vec![0.0; w.len()];
    for k in 0..data.len() {
        let x = data.row(k);
        let y = data.labels[k];
        let z = logits(w, x, classes);
        let p = softmax(&z);
        loss -= p[y].max(1e-300).ln();
        for c in 0..classes {
            let d = p[c] - if c == y { 1.0 } else { 0.0 };
            for j in 0..dim {
                g[c * dim + j] += d * x[j];
            }
            g[classes * dim + c] += d;
        }
    }
    let n = data.len() as f64;
    g.iter_mut().for_each(|v| *v /= n);
    Ok((loss / n, g))
}

pub fn accuracy(w: &[f64], data: &Samples, classes: usize) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let hits = (0..data.len())
        .filter(|&k| {
            let z = logits(w, data.row(k), classes);
            let best = (0..classes).fold(0, |b, c| if z[c] > z[b] { c } else { b });
            best == data.labels[k]
        })
        .count();
    hits as f64 / data.len() as f64
}

/// Full-batch gradient descent on one shard.
pub fn local_train(w: &[f64], shard: &Samples, classes: usize, epochs: usize, rate: f64) -> Result<Vec<f64>> {
    if shard.is_empty() {
        return Err(Error::EmptyShard);
    }
    let mut w = w.to_vec();
    for _ in 0..epochs {
        let (_, g) = loss_and_gradient(&w, shard, classes)?;
        for (a, b) in w.iter_mut().zip(&g) {
            *a -= rate * b;
        }
    }
    Ok(w)
}

/// Weighted average of local models, weights proportional to shard sizes.
pub fn aggregate(locals: &[(Vec<f64>, f64)]) -> Result<Vec<f64>> {
    let total: f64 = locals.iter().map(|l| l.1).sum();
    if locals.is_empty() || !(total > 0.0) {
        return Err(Error::ZeroWeights);
    }
    let width = locals[0].0.len();
    let mut out = vec![0.0; width];
    for (w, d) in locals {
        if w.len() != width {
            return Err(Error::Shape { expected: width, got: w.len() });
        }
        if *d < 0.0 {
            return Err(invalid("weight", "shard sizes are non-negative"));
        }
        let share = d / total;
        for (o, v) in out.iter_mut().zip(w) {
            *o += share * v;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlConfig {
    pub local_epochs: usize,
    pub learning_rate: f64,
    pub rounds: usize,
    /// Samples per time unit for each node.
    pub compute_rates: Vec<f64>,
    /// Communication time added to every round.
    pub overhead: f64,
}

impl FlConfig {
    pub fn new(nodes: usize) -> Self {
        Self { local_epochs: 1, learning_rate: 0.5, rounds: 30, compute_rates: vec![100.0; nodes], overhead: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    /// Size-weighted mean of the shard losses, i.e. the loss over their union.
    pub global_loss: f64,
    pub test_accuracy: f64,
    pub time: f64,
}

/// Modeled length of one synchronous round: slowest participating node plus overhead.
pub fn round_time(shards: &[Samples], config: &FlConfig) -> f64 {
    let compute = shards
        .iter()
        .zip(&config.compute_rates)
        .filter(|(s, _)| !s.is_empty())
        .map(|(s, r)| s.len() as f64 / r)
        .fold(0.0, f64::max);
    compute + config.overhead
}

/// Starts from the zero model; record 0 describes it before any training.
pub fn run_federated(
    config: &FlConfig,
    shards: &[Samples],
    test: &Samples,
    classes: usize,
) -> Result<(Vec<f64>, Vec<RoundRecord>)> {
    if config.rounds < 1 {
        return Err(invalid("rounds", "need at least one round"));
    }
    if config.compute_rates.len() != shards.len() {
        return Err(Error::Shape { expected: shards.len(), got: config.compute_rates.len() });
    }
    if config.compute_rates.iter().any(|r| !(*r > 0.0)) {
        return Err(invalid("compute_rates", "must be positive"));
    }
    let dim = shards.iter().find(|s| !s.is_empty()).ok_or(Error::ZeroWeights)?.dim;
    let mut w = vec![0.0; model_width(dim, classes)];
    let step = round_time(shards, config);
    let global_loss = |w: &[f64]| -> Result<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        for s in shards.iter().filter(|s| !s.is_empty()) {
            num += s.len() as f64 * loss_and_gradient(w, s, classes)?.0;
            den += s.len() as f64;
        }
        Ok(num / den)
    };
    let mut records = vec![RoundRecord { round: 0, global_loss: global_loss(&w)?, test_accuracy: accuracy(&w, test, classes), time: 0.0 }];
    for round in 1..=config.rounds {
        let locals: Vec<(Vec<f64>, f64)> = shards
            .iter()
            .filter(|s| !s.is_empty())
            .map(|s| Ok((local_train(&w, s, classes, config.local_epochs, config.learning_rate)?, s.len() as f64)))
            .collect::<Result<_>>()?;
        w = aggregate(&locals)?;
        records.push(RoundRecord {
            round,
            global_loss: global_loss(&w)?,
            test_accuracy: accuracy(&w, test, classes),
            time: step * round as f64,
        });
    }
    Ok((w, records))
}

/// `round, global_loss, test_accuracy, modeled_time_cumulative`.
pub fn write_rounds_csv<W: Write>(records: &[RoundRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["round", "global_loss", "test_accuracy", "modeled_time_cumulative"])?;
    for r in records {
        w.write_record([r.round.to_string(), sig6(r.global_loss), sig6(r.test_accuracy), sig6(r.time)])?;
    }
    w.flush()?;
    Ok(())
}
