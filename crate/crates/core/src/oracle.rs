//! Brute-force checkers: a quantum-stepped NPFP^min simulator for the
//! offline analysis and an exhaustive continuation check for online grants.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::analysis::Snapshot;
use crate::error::{Error, Result};
use crate::task_model::TaskSet;
use crate::time::{Duration, Instant};

pub const DEFAULT_QUANTUM: Duration = Duration::from_micros(100);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickSimConfig {
    pub quantum: Duration,
    /// First release of each task, in priority order.
    pub offsets: Vec<Duration>,
    /// Execution time of a one-shot job released at 0 below every task's
    /// priority.
    pub blocker: Option<Duration>,
    /// Defaults to `2 * hyperperiod + max period` past the latest offset.
    pub horizon: Option<Duration>,
    /// Only misses of tasks with rank `<= watch` are reported.
    pub watch: Option<usize>,
}

impl TickSimConfig {
    /// Synchronous release at 0, no blocker.
    pub fn synchronous(taskset: &TaskSet) -> Self {
        TickSimConfig {
            quantum: DEFAULT_QUANTUM,
            offsets: vec![Duration::ZERO; taskset.len()],
            blocker: None,
            horizon: None,
            watch: None,
        }
    }

    /// Worst-case pattern for rank `level`: the largest lower-priority
    /// minimum requirement starts one quantum before a synchronous release of
    /// every task. Misses are watched up to `level`.
    pub fn critical_instant(taskset: &TaskSet, level: usize) -> Self {
        let blocking = (level + 1..taskset.len())
            .map(|j| taskset.min_wcet(j))
            .max()
            .filter(|b| !b.is_zero());
        let offset = if blocking.is_some() {
            DEFAULT_QUANTUM
        } else {
            Duration::ZERO
        };
        TickSimConfig {
            quantum: DEFAULT_QUANTUM,
            offsets: vec![offset; taskset.len()],
            blocker: blocking,
            horizon: None,
            watch: Some(level),
        }
    }

    pub fn with_quantum(mut self, quantum: Duration) -> Self {
        self.quantum = quantum;
        self
    }

    pub fn with_horizon(mut self, horizon: Duration) -> Self {
        self.horizon = Some(horizon);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickMiss {
    pub task_id: u32,
    pub job: u64,
    /// `None` when the job was still unfinished at the horizon.
    pub lateness: Option<Duration>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissReport {
    pub horizon: Duration,
    pub misses: Vec<TickMiss>,
    /// Largest observed response time per task, in priority order.
    pub max_response: Vec<Duration>,
    pub completed_jobs: u64,
}

impl MissReport {
    pub fn is_clean(&self) -> bool {
        self.misses.is_empty()
    }
}

fn quanta(d: Duration, q: Duration, what: impl FnOnce() -> String) -> Result<u64> {
    if d.is_multiple_of(q) {
        Ok(d.as_micros() / q.as_micros())
    } else {
        Err(Error::QuantumMismatch {
            quantum: q.as_micros(),
            what: what(),
        })
    }
}

#[derive(Clone, Copy)]
struct TickJob {
    task: usize,
    index: u64,
    release: u64,
    deadline: u64,
}

/// Exact NPFP^min schedule at quantum resolution. Every job runs its LL
/// requirement; the blocker (if any) has the lowest priority.
pub fn tick_simulate_min(taskset: &TaskSet, config: &TickSimConfig) -> Result<MissReport> {
    let q = config.quantum;
    if q.is_zero() {
        return Err(Error::QuantumMismatch {
            quantum: 0,
            what: "zero quantum".to_string(),
        });
    }
    let n = taskset.len();
    if config.offsets.len() != n {
        return Err(Error::Config(format!(
            "{} offsets for {n} tasks",
            config.offsets.len()
        )));
    }
    let mut period = Vec::with_capacity(n);
    let mut cost = Vec::with_capacity(n);
    let mut offset = Vec::with_capacity(n);
    for (i, t) in taskset.iter().enumerate() {
        period.push(quanta(t.period, q, || format!("period of task {}", t.id))?);
        cost.push(quanta(taskset.min_wcet(i), q, || {
            format!("minimum WCET of task {}", t.id)
        })?);
        offset.push(quanta(config.offsets[i] + t.phase, q, || {
            format!("offset of task {}", t.id)
        })?);
    }
    let blocker = match config.blocker {
        Some(b) => Some(quanta(b, q, || "blocker".to_string())?),
        None => None,
    };
    let horizon = match config.horizon {
        Some(h) => quanta(h, q, || "horizon".to_string())?,
        None => {
            let h = taskset.hyperperiod().ok_or(Error::InvalidHorizon)?;
            let latest = offset.iter().copied().max().unwrap_or(0);
            latest
                + quanta(h * 2 + taskset.max_period(), q, || {
                    "hyperperiod".to_string()
                })?
        }
    };
    let watch = config.watch.unwrap_or(n.saturating_sub(1));

    let mut queues: Vec<VecDeque<TickJob>> = vec![VecDeque::new(); n];
    let mut next_index = vec![0u64; n];
    let mut blocker_pending = blocker.filter(|&b| b > 0);
    // (job, remaining) where job.task == n marks the blocker
    let mut running: Option<(TickJob, u64)> = None;
    let mut report = MissReport {
        horizon: q * horizon,
        max_response: vec![Duration::ZERO; n],
        ..MissReport::default()
    };

    for t in 0..=horizon {
        if let Some((job, 0)) = running {
            running = None;
            if job.task < n {
                report.completed_jobs += 1;
                let resp = q * (t - job.release);
                let slot = &mut report.max_response[job.task];
                *slot = (*slot).max(resp);
                if t > job.deadline && job.task <= watch {
                    report.misses.push(TickMiss {
                        task_id: taskset.task(job.task).id,
                        job: job.index,
                        lateness: Some(q * (t - job.deadline)),
                    });
                }
            }
        }
        if t == horizon {
            break;
        }
        for i in 0..n {
            if t >= offset[i] && (t - offset[i]) % period[i] == 0 {
                queues[i].push_back(TickJob {
                    task: i,
                    index: next_index[i],
                    release: t,
                    deadline: t + period[i],
                });
                next_index[i] += 1;
            }
        }
        if running.is_none() {
            if let Some(i) = queues.iter().position(|q| !q.is_empty()) {
                let job = queues[i].pop_front().expect("non-empty queue");
                running = Some((job, cost[i]));
            } else if let Some(b) = blocker_pending.take() {
                let job = TickJob {
                    task: n,
                    index: 0,
                    release: t,
                    deadline: u64::MAX,
                };
                running = Some((job, b));
            }
        }
        if let Some((_, remaining)) = running.as_mut() {
            *remaining -= 1;
        }
    }

    let unfinished = running
        .map(|(job, _)| job)
        .into_iter()
        .chain(queues.iter().flatten().copied());
    for job in unfinished {
        if job.task < n && job.task <= watch && job.deadline < horizon {
            report.misses.push(TickMiss {
                task_id: taskset.task(job.task).id,
                job: job.index,
                lateness: None,
            });
        }
    }
    Ok(report)
}

/// Whether granting `budget` to the active job of task `k` at
/// `snapshot.now`, followed by pure NPFP^min with every later job at its LL
/// requirement, meets every deadline.
///
/// The default horizon runs until the first idle instant after the grant
/// plus one hyperperiod.
pub fn exhaustive_future_check(
    taskset: &TaskSet,
    snapshot: &Snapshot,
    k: usize,
    budget: Duration,
    horizon: Option<Instant>,
) -> bool {
    let n = taskset.len();
    let t0 = snapshot.now;
    let hyper = taskset
        .hyperperiod()
        .unwrap_or_else(|| taskset.max_period() * 64);
    let hard_cap = t0 + hyper * 4 + taskset.max_period() * 2;

    // pending deadlines per task; active jobs first
    let mut queues: Vec<VecDeque<Instant>> = vec![VecDeque::new(); n];
    let mut next_release = vec![Instant::ZERO; n];
    for i in 0..n {
        let r = snapshot.next_release(i);
        if snapshot.is_active(i) && i != k {
            queues[i].push_back(r);
        }
        next_release[i] = r;
    }
    if !snapshot.is_active(k) {
        return false;
    }
    let mut now = t0 + budget;
    if now > snapshot.next_release(k) {
        return false;
    }
    let mut end = horizon;

    loop {
        if let Some(h) = end {
            if now >= h {
                return true;
            }
        }
        if now >= hard_cap {
            return true;
        }
        for i in 0..n {
            while next_release[i] <= now {
                let r = next_release[i];
                let period = taskset.task(i).period;
                queues[i].push_back(r + period);
                next_release[i] = r + period;
            }
        }
        match queues.iter().position(|q| !q.is_empty()) {
            Some(i) => {
                let deadline = queues[i].pop_front().expect("non-empty queue");
                now += taskset.min_wcet(i);
                if now > deadline {
                    return false;
                }
            }
            None => {
                if end.is_none() {
                    end = Some(now + hyper);
                }
                now = next_release
                    .iter()
                    .copied()
                    .min()
                    .expect("non-empty task set");
            }
        }
    }
}
