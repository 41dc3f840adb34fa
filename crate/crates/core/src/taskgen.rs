//! Random task sets for property and oracle suites.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task_model::{TaskSet, TaskSpec, WcetProfile};
use crate::time::Duration;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskGenParams {
    pub n_min: usize,
    pub n_max: usize,
    /// Total LL utilization is drawn uniformly from `[u_min, u_max]`.
    pub u_min: f64,
    pub u_max: f64,
    /// Candidate periods; small LCMs keep oracle runs short.
    pub periods_ms: Vec<u64>,
    pub quantum: Duration,
    /// High/low cost ratio ranges for detection and association.
    pub detection_ratio: (f64, f64),
    pub association_ratio: (f64, f64),
    /// Draw a random quantum-aligned phase below each period.
    pub random_phases: bool,
}

impl Default for TaskGenParams {
    fn default() -> Self {
        TaskGenParams {
            n_min: 2,
            n_max: 5,
            u_min: 0.3,
            u_max: 1.2,
            periods_ms: vec![20, 25, 40, 50, 100, 200],
            quantum: Duration::from_micros(100),
            detection_ratio: (1.0, 1.6),
            association_ratio: (1.5, 3.5),
            random_phases: false,
        }
    }
}

impl TaskGenParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_min == 0 || self.n_min > self.n_max {
            return bad("task count range is empty");
        }
        if !(self.u_min > 0.0 && self.u_min <= self.u_max && self.u_max.is_finite()) {
            return bad("invalid utilization range");
        }
        if self.periods_ms.is_empty() || self.periods_ms.contains(&0) {
            return bad("periods must be positive");
        }
        if self.quantum.is_zero()
            || self
                .periods_ms
                .iter()
                .any(|&p| !Duration::from_millis(p).is_multiple_of(self.quantum))
        {
            return bad("quantum must divide every period");
        }
        for (lo, hi) in [self.detection_ratio, self.association_ratio] {
            if !(lo >= 1.0 && lo <= hi && hi.is_finite()) {
                return bad("cost ratios must satisfy 1 <= lo <= hi");
            }
        }
        Ok(())
    }
}

/// UUniFast: `n` utilizations summing to `total`, uniform over the simplex.
pub fn uunifast<R: Rng + ?Sized>(rng: &mut R, n: usize, total: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut sum = total;
    for i in 1..n {
        let next = sum * rng.gen::<f64>().powf(1.0 / (n - i) as f64);
        out.push(sum - next);
        sum = next;
    }
    if n > 0 {
        out.push(sum);
    }
    out
}

fn round_to(d: f64, q: u64) -> u64 {
    ((d / q as f64).round() as u64) * q
}

/// Quantum-aligned profile whose LL requirement is `ll_us`.
pub fn random_profile<R: Rng + ?Sized>(
    rng: &mut R,
    ll_us: u64,
    params: &TaskGenParams,
) -> WcetProfile {
    let q = params.quantum.as_micros();
    let infer_low = round_to(ll_us as f64 * rng.gen_range(0.4..0.7), q).min(ll_us - q);
    let assoc_low = ll_us - infer_low;
    let (dl, dh) = params.detection_ratio;
    let (al, ah) = params.association_ratio;
    let infer_high = infer_low + round_to(infer_low as f64 * (rng.gen_range(dl..=dh) - 1.0), q);
    let assoc_high =
        assoc_low + round_to(assoc_low as f64 * (rng.gen_range(al..=ah) - 1.0), q).max(q);
    let us = Duration::from_micros;
    WcetProfile {
        pre: Duration::ZERO,
        infer_low: us(infer_low),
        infer_high: us(infer_high),
        assoc_low: us(assoc_low),
        assoc_high: us(assoc_high),
        post: Duration::ZERO,
    }
}

/// A rate-monotonic task set drawn from `params`.
pub fn random_taskset<R: Rng + ?Sized>(rng: &mut R, params: &TaskGenParams) -> Result<TaskSet> {
    params.validate()?;
    let n = rng.gen_range(params.n_min..=params.n_max);
    let total = rng.gen_range(params.u_min..=params.u_max);
    let q = params.quantum.as_micros();
    let tasks = uunifast(rng, n, total)
        .into_iter()
        .enumerate()
        .map(|(i, u)| {
            let period_ms = *params.periods_ms.choose(rng).expect("non-empty periods");
            let period = Duration::from_millis(period_ms);
            let ll = round_to(u * period.as_micros() as f64, q).clamp(q, period.as_micros());
            let mut spec = TaskSpec::new(i as u32, period, random_profile(rng, ll, params));
            if params.random_phases {
                let slots = period.as_micros() / q;
                spec = spec.with_phase(Duration::from_micros(rng.gen_range(0..slots) * q));
            }
            spec
        })
        .collect();
    TaskSet::rate_monotonic(tasks)
}
