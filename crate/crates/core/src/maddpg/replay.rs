use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{invalid, Error, Result};

/// One round of play, every vector indexed server first.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observations: Vec<Vec<f64>>,
    /// Joint action as box fractions: bids for every node, then periods.
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_observations: Vec<Vec<f64>>,
    /// No bootstrap from the next state.
    pub terminal: bool,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(invalid("capacity", "must be positive"));
        }
        Ok(Self { capacity, items: VecDeque::with_capacity(capacity.min(1 << 16)) })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends, dropping the oldest transition when full.
    pub fn push(&mut self, t: Transition) -> Result<()> {
        if t.rewards.iter().any(|r| !r.is_finite()) {
            return Err(invalid("reward", "non-finite reward"));
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
        Ok(())
    }

    pub fn get(&self, k: usize) -> Option<&Transition> {
        self.items.get(k)
    }

    /// Distinct positions drawn uniformly; position 0 is the oldest entry.
    pub fn sample_indices<R: Rng>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
        if batch == 0 || batch > self.items.len() {
            return Err(Error::Underfilled { held: self.items.len(), wanted: batch });
        }
        Ok(sample(rng, self.items.len(), batch).into_vec())
    }

    pub fn sample<R: Rng>(&self, batch: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        Ok(self.sample_indices(batch, rng)?.into_iter().map(|k| &self.items[k]).collect())
    }
}
