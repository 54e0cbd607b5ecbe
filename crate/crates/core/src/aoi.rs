//! Cycle model of a caching node: data freshness (average AoI), service
//! latency, collected volume, quality and the server-side satisfaction score.
//!
//! A node refreshes its cache every `period` time units. Each cycle consists of
//! `c = period/slot - idle_slots` collection slots followed by `idle_slots`
//! slots of training and upload.

use crate::error::{invalid, Error, Result};

/// Smallest admissible gap between the period and the idle span `a*t`.
pub const MIN_GAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleParams {
    /// Update period of the cache.
    pub period: f64,
    /// Non-collection slots per cycle.
    pub idle_slots: u32,
    /// Slot length.
    pub slot: f64,
    /// Task duration.
    pub horizon: f64,
    /// Samples collected per slot.
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatisfactionParams {
    pub quality_weight: f64,
    pub latency_weight: f64,
    pub quality_scale: f64,
}

impl CycleParams {
    pub fn new(period: f64, idle_slots: u32, slot: f64, horizon: f64, rate: f64) -> Self {
        Self { period, idle_slots, slot, horizon, rate }
    }

    pub fn with_period(self, period: f64) -> Self {
        Self { period, ..self }
    }

    pub fn idle_span(&self) -> f64 {
        self.idle_slots as f64 * self.slot
    }

    /// Collection slots per cycle (real-valued when the period is not a slot multiple).
    pub fn collection_slots(&self) -> f64 {
        self.period / self.slot - self.idle_slots as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.idle_slots < 1 {
            return Err(invalid("idle_slots", "must be at least 1"));
        }
        if !(self.slot > 0.0 && self.slot.is_finite()) {
            return Err(invalid("slot", format!("{} is not positive", self.slot)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid("horizon", format!("{} is not positive", self.horizon)));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(invalid("rate", format!("{} is not positive", self.rate)));
        }
        if !self.period.is_finite() || self.period - self.idle_span() < MIN_GAP {
            return Err(Error::DegenerateCycle { period: self.period, idle_span: self.idle_span() });
        }
        Ok(())
    }
}

impl SatisfactionParams {
    pub fn new(quality_weight: f64, latency_weight: f64, quality_scale: f64) -> Self {
        Self { quality_weight, latency_weight, quality_scale }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.quality_weight) {
            return Err(invalid("quality_weight", "must be finite and non-negative"));
        }
        if !ok(self.latency_weight) {
            return Err(invalid("latency_weight", "must be finite and non-negative"));
        }
        if !(ok(self.quality_scale) && self.quality_scale > 0.0) {
            return Err(invalid("quality_scale", "must be finite and positive"));
        }
        Ok(())
    }
}

pub fn average_aoi(p: &CycleParams) -> Result<f64> {
    p.validate()?;
    Ok(aoi_unchecked(p.period, p.idle_slots as f64, p.slot))
}

pub fn average_service_latency(p: &CycleParams) -> Result<f64> {
    p.validate()?;
    Ok(latency_unchecked(p.period, p.idle_slots as f64, p.slot))
}

pub fn data_size(p: &CycleParams) -> Result<f64> {
    p.validate()?;
    Ok(p.horizon / p.period * p.rate)
}

pub fn model_quality(p: &CycleParams, s: &SatisfactionParams) -> Result<f64> {
    p.validate()?;
    s.validate()?;
    Ok(quality_unchecked(p, s.quality_scale))
}

pub fn satisfaction(p: &CycleParams, s: &SatisfactionParams) -> Result<f64> {
    p.validate()?;
    s.validate()?;
    Ok(satisfaction_unchecked(p, s))
}

// tθ/(θ-at) + t²(a²-a)/(2(θ-at))
pub(crate) fn aoi_unchecked(period: f64, a: f64, t: f64) -> f64 {
    let gap = period - a * t;
    t * period / gap + t * t * (a * a - a) / (2.0 * gap)
}

pub(crate) fn latency_unchecked(period: f64, a: f64, t: f64) -> f64 {
    let gap = period - a * t;
    gap.powi(3) / (2.0 * t * period) + 3.0 * gap * gap / (2.0 * period) + a * t * t / period
}

pub(crate) fn quality_unchecked(p: &CycleParams, scale: f64) -> f64 {
    let a = p.idle_slots as f64;
    let t = p.slot;
    let gap = p.period - a * t;
    scale * p.horizon * p.rate * gap / (p.period * (t * p.period + t * t * (a * a - a) / 2.0))
}

pub(crate) fn satisfaction_unchecked(p: &CycleParams, s: &SatisfactionParams) -> f64 {
    s.quality_weight * quality_unchecked(p, s.quality_scale)
        - s.latency_weight * latency_unchecked(p.period, p.idle_slots as f64, p.slot)
}

/// Period at which service latency bottoms out. Latency falls before it and
/// rises after it, so every latency sublevel set is an interval.
pub fn latency_turning_period(idle_slots: u32, slot: f64) -> f64 {
    let a = idle_slots as f64;
    let t = slot;
    // sign of dE/dθ is the sign of this cubic in the gap, increasing for gap > 0
    let h = |x: f64| x.powi(3) / t + 1.5 * (a + 1.0) * x * x + 3.0 * a * t * x - a * t * t;
    let (mut lo, mut hi) = (0.0, t.max(1.0));
    while h(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    a * t + 0.5 * (lo + hi)
}

/// Result of enumerating one cycle slot by slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleOracle {
    pub aoi: f64,
    pub latency: f64,
}

/// Brute-force averages over the `c + a` equally likely arrival slots.
///
/// A request landing in collection slot `n` sees fresh data (age `t`) and
/// waits `c*t + t - (n-1)*t` until upload. One landing `j` slots into the
/// idle span sees data aged `j*t` and waits a single slot.
pub fn discrete_cycle_oracle(c: u32, a: u32, t: f64) -> Result<CycleOracle> {
    if c < 1 {
        return Err(invalid("c", "needs at least one collection slot"));
    }
    if a < 1 {
        return Err(invalid("a", "needs at least one idle slot"));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid("t", format!("{t} is not positive")));
    }
    let slots = c + a;
    let mut age_sum = 0.0;
    let mut wait_sum = 0.0;
    for n in 1..=slots {
        if n <= c {
            age_sum += t;
            wait_sum += c as f64 * t + t - (n - 1) as f64 * t;
        } else {
            let j = n - c;
            age_sum += j as f64 * t;
            wait_sum += t;
        }
    }
    let p = 1.0 / slots as f64;
    Ok(CycleOracle { aoi: age_sum * p, latency: wait_sum * p })
}

/// Symbolic first-line AoI over integer slot counts.
pub fn slot_form_aoi(c: u32, a: u32, t: f64) -> f64 {
    let (c, a) = (c as f64, a as f64);
    (c + 1.0 + (a - 1.0) * (a + 2.0) / 2.0) * t / (c + a)
}

/// Symbolic first-line latency over integer slot counts.
pub fn slot_form_latency(c: u32, a: u32, t: f64) -> f64 {
    let (c, a) = (c as f64, a as f64);
    (c * (c + 3.0) / 2.0 + a) * t / (c + a)
}
