//! Event-driven non-preemptive uniprocessor kernel with the minimum-execution
//! policy, the flexible confidence-driven policy (with and without priority
//! inversion) and static single-pair baselines.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{feasible_for, GateWork, Snapshot, TaskStatus};
use crate::error::{Error, Result};
use crate::task_model::{Job, JobState, PairChoice, TaskSet};
use crate::time::{Duration, Instant};

/// Supplies the expected confidence gain of running a task's next frame
/// under a pair, and observes completed frames.
pub trait ConfidenceSource {
    fn expected_gain(&self, task: usize, pair: PairChoice) -> f64;

    fn job_completed(
        &mut self,
        _task: usize,
        _job_index: u64,
        _pair: PairChoice,
        _finish: Instant,
    ) {
    }
}

/// Reports no gain for any pair; the flexible policy then grants LL only,
/// to the highest-priority job the gate admits.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoConfidence;

impl ConfidenceSource for NoConfidence {
    fn expected_gain(&self, _task: usize, _pair: PairChoice) -> f64 {
        0.0
    }
}

impl<F> ConfidenceSource for F
where
    F: Fn(usize, PairChoice) -> f64,
{
    fn expected_gain(&self, task: usize, pair: PairChoice) -> f64 {
        self(task, pair)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Policy {
    /// Highest-priority active job, always LL.
    Min,
    /// Gate every (active job, pair), run the largest expected gain.
    Flex,
    /// As `Flex`, but only the highest-priority active job is considered.
    FlexNpi,
    /// Highest-priority active job with a fixed pair.
    Static(PairChoice),
}

impl Policy {
    pub const ALL: [Policy; 7] = [
        Policy::Min,
        Policy::Flex,
        Policy::FlexNpi,
        Policy::Static(PairChoice::LL),
        Policy::Static(PairChoice::HL),
        Policy::Static(PairChoice::LH),
        Policy::Static(PairChoice::HH),
    ];

    /// Pair whose WCETs the offline analysis must assume.
    pub fn analysis_pair(self) -> PairChoice {
        match self {
            Policy::Static(p) => p,
            _ => PairChoice::LL,
        }
    }

    pub fn is_flexible(self) -> bool {
        matches!(self, Policy::Flex | Policy::FlexNpi)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Min => f.write_str("min"),
            Policy::Flex => f.write_str("flex"),
            Policy::FlexNpi => f.write_str("flex-npi"),
            Policy::Static(p) => write!(f, "static-{p}"),
        }
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(Policy::Min),
            "flex" => Ok(Policy::Flex),
            "flex-npi" => Ok(Policy::FlexNpi),
            _ => s
                .strip_prefix("static-")
                .and_then(|p| p.parse().ok())
                .map(Policy::Static)
                .ok_or_else(|| Error::UnknownPolicy(s.to_string())),
        }
    }
}

impl Serialize for Policy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Policy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Actual execution time of a started job.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionTimeModel {
    WcetExact,
    /// `floor(fraction * budget)`, at least 1 us.
    Scaled(f64),
    /// Uniform in `[ceil(low_fraction * budget), budget]`.
    Stochastic {
        seed: u64,
        low_fraction: f64,
    },
}

impl ExecutionTimeModel {
    /// Parses `wcet`, `scaled:<f>` or `stochastic:<f>`; `seed` feeds the
    /// stochastic variant.
    pub fn parse(s: &str, seed: u64) -> Result<Self> {
        let bad = || Error::InvalidExecModel(s.to_string());
        let fraction = |v: &str| -> Result<f64> {
            let f: f64 = v.parse().map_err(|_| bad())?;
            if (0.0..=1.0).contains(&f) {
                Ok(f)
            } else {
                Err(bad())
            }
        };
        match s.split_once(':') {
            None if s == "wcet" => Ok(ExecutionTimeModel::WcetExact),
            Some(("scaled", v)) => Ok(ExecutionTimeModel::Scaled(fraction(v)?)),
            Some(("stochastic", v)) => Ok(ExecutionTimeModel::Stochastic {
                seed,
                low_fraction: fraction(v)?,
            }),
            _ => Err(bad()),
        }
    }

    fn sampler(&self) -> ExecSampler {
        let rng = match self {
            ExecutionTimeModel::Stochastic { seed, .. } => Some(ChaCha8Rng::seed_from_u64(*seed)),
            _ => None,
        };
        ExecSampler { model: *self, rng }
    }
}

struct ExecSampler {
    model: ExecutionTimeModel,
    rng: Option<ChaCha8Rng>,
}

impl ExecSampler {
    fn sample(&mut self, budget: Duration) -> Duration {
        let b = budget.as_micros();
        if b == 0 {
            return budget;
        }
        let us = match self.model {
            ExecutionTimeModel::WcetExact => b,
            ExecutionTimeModel::Scaled(f) => ((b as f64 * f).floor() as u64).max(1),
            ExecutionTimeModel::Stochastic { low_fraction, .. } => {
                let lo = ((b as f64 * low_fraction).ceil() as u64).clamp(1, b);
                // rng exists for the stochastic model
                self.rng.as_mut().map_or(b, |r| r.gen_range(lo..=b))
            }
        };
        Duration::from_micros(us.min(b))
    }
}

/// A scheduling decision at a decision instant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub task: usize,
    pub pair: PairChoice,
    pub budget: Duration,
    /// A higher-priority job was active when this one was chosen.
    pub inverted: bool,
    /// Expected gain of the chosen assignment when it came from the gate.
    pub gain: Option<f64>,
}

fn fixed_pair_choice(taskset: &TaskSet, snapshot: &Snapshot, pair: PairChoice) -> Option<Decision> {
    let task = snapshot.highest_priority_active()?;
    Some(Decision {
        task,
        pair,
        budget: taskset.wcet(task, pair),
        inverted: false,
        gain: None,
    })
}

/// Highest-priority active job for its minimum requirement.
pub fn npfp_min_decide(taskset: &TaskSet, snapshot: &Snapshot) -> Option<Decision> {
    fixed_pair_choice(taskset, snapshot, PairChoice::LL)
}

fn gain_key(g: f64) -> f64 {
    if g.is_nan() {
        f64::NEG_INFINITY
    } else {
        g
    }
}

fn flex_over(
    taskset: &TaskSet,
    snapshot: &Snapshot,
    candidates: &[usize],
    source: &dyn ConfidenceSource,
    work: &mut GateWork,
) -> Option<Decision> {
    let hp = snapshot.highest_priority_active()?;
    let feasible = feasible_for(taskset, snapshot, candidates, work);
    // largest gain; ties: higher priority, cheaper budget, pair order
    let best = feasible
        .iter()
        .map(|a| (a, gain_key(source.expected_gain(a.task, a.pair))))
        .min_by(|(a, ga), (b, gb)| {
            gb.total_cmp(ga)
                .then(a.task.cmp(&b.task))
                .then(a.budget.cmp(&b.budget))
                .then(a.pair.ordinal().cmp(&b.pair.ordinal()))
        });
    match best {
        Some((a, gain)) => Some(Decision {
            task: a.task,
            pair: a.pair,
            budget: a.budget,
            inverted: a.task != hp,
            gain: Some(gain),
        }),
        None => npfp_min_decide(taskset, snapshot),
    }
}

/// Flexible decision over every active job; falls back to the minimum
/// policy when nothing passes the gate.
pub fn npfp_flex_decide(
    taskset: &TaskSet,
    snapshot: &Snapshot,
    source: &dyn ConfidenceSource,
    work: &mut GateWork,
) -> Option<Decision> {
    let candidates: Vec<usize> = snapshot.active_tasks().collect();
    flex_over(taskset, snapshot, &candidates, source, work)
}

/// Flexible decision restricted to the highest-priority active job.
pub fn flex_npi_decide(
    taskset: &TaskSet,
    snapshot: &Snapshot,
    source: &dyn ConfidenceSource,
    work: &mut GateWork,
) -> Option<Decision> {
    let hp = snapshot.highest_priority_active()?;
    flex_over(taskset, snapshot, &[hp], source, work)
}

pub fn decide(
    policy: Policy,
    taskset: &TaskSet,
    snapshot: &Snapshot,
    source: &dyn ConfidenceSource,
    work: &mut GateWork,
) -> Option<Decision> {
    match policy {
        Policy::Min => npfp_min_decide(taskset, snapshot),
        Policy::Flex => npfp_flex_decide(taskset, snapshot, source, work),
        Policy::FlexNpi => flex_npi_decide(taskset, snapshot, source, work),
        Policy::Static(p) => fixed_pair_choice(taskset, snapshot, p),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionCause {
    ReleaseIntoIdle,
    JobCompletion,
}

/// One executed job.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecRecord {
    pub start: Instant,
    pub finish: Instant,
    pub task: usize,
    pub task_id: u32,
    pub job: u64,
    pub release: Instant,
    pub deadline: Instant,
    pub pair: PairChoice,
    pub budget: Duration,
    pub actual: Duration,
    pub inverted: bool,
    pub gain: Option<f64>,
    pub miss: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissRecord {
    pub task_id: u32,
    pub job: u64,
    pub deadline: Instant,
    /// `None` when the job had not completed by the end of the run.
    pub finish: Option<Instant>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub time: Instant,
    pub cause: DecisionCause,
    pub active_jobs: usize,
    pub gate_work: GateWork,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub horizon: Duration,
    pub records: Vec<ExecRecord>,
    pub misses: Vec<MissRecord>,
    pub idle: Vec<(Instant, Instant)>,
    pub decisions: Vec<DecisionRecord>,
    /// Scheduler state at every decision, when requested.
    pub snapshots: Vec<Snapshot>,
}

impl Trace {
    pub fn miss_count(&self) -> usize {
        self.misses.len()
    }

    /// Executed jobs per pair, in [`PairChoice::ALL`] order.
    pub fn pair_histogram(&self) -> [u64; 4] {
        let mut h = [0; 4];
        for r in &self.records {
            h[r.pair.ordinal()] += 1;
        }
        h
    }

    pub fn inversions(&self) -> usize {
        self.records.iter().filter(|r| r.inverted).count()
    }
}

/// Gate work per decision instant.
pub fn scheduler_work_counter(trace: &Trace) -> Vec<(Instant, u64)> {
    trace
        .decisions
        .iter()
        .map(|d| (d.time, d.gate_work.total()))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub policy: Policy,
    pub horizon: Duration,
    pub exec_model: ExecutionTimeModel,
    #[serde(default)]
    pub capture_snapshots: bool,
}

impl SimConfig {
    pub fn new(policy: Policy, horizon: Duration) -> Self {
        SimConfig {
            policy,
            horizon,
            exec_model: ExecutionTimeModel::WcetExact,
            capture_snapshots: false,
        }
    }

    pub fn with_exec_model(mut self, model: ExecutionTimeModel) -> Self {
        self.exec_model = model;
        self
    }

    pub fn capturing_snapshots(mut self) -> Self {
        self.capture_snapshots = true;
        self
    }
}

struct Running {
    task: usize,
    job: Job,
    finish: Instant,
    record: usize,
}

/// Runs `taskset` under `config`; jobs are released strictly before the
/// horizon and jobs started before it run to completion.
pub fn simulate(
    taskset: &TaskSet,
    config: &SimConfig,
    source: &mut dyn ConfidenceSource,
) -> Result<Trace> {
    if config.horizon.is_zero() {
        return Err(Error::InvalidHorizon);
    }
    let n = taskset.len();
    let end = Instant::ZERO + config.horizon;
    let release_at = |i: usize, k: u64| {
        let t = taskset.task(i);
        Instant::ZERO + t.phase + t.period * k
    };
    let mut next_index = vec![0u64; n];
    let mut pending: Vec<VecDeque<Job>> = vec![VecDeque::new(); n];
    let mut running: Option<Running> = None;
    let mut sampler = config.exec_model.sampler();
    let mut trace = Trace {
        horizon: config.horizon,
        ..Trace::default()
    };
    let mut idle_since = Some(Instant::ZERO);
    let mut now = Instant::ZERO;

    loop {
        let mut cause = DecisionCause::ReleaseIntoIdle;
        if running.as_ref().is_some_and(|r| r.finish == now) {
            let Running {
                task,
                mut job,
                record,
                ..
            } = running.take().expect("checked above");
            job.complete(now);
            let rec = &mut trace.records[record];
            if job.state == JobState::Missed {
                rec.miss = true;
                trace.misses.push(MissRecord {
                    task_id: job.task_id,
                    job: job.index,
                    deadline: job.deadline,
                    finish: Some(now),
                });
            }
            source.job_completed(task, job.index, rec.pair, now);
            cause = DecisionCause::JobCompletion;
            idle_since = Some(now);
        }

        for (i, queue) in pending.iter_mut().enumerate() {
            while release_at(i, next_index[i]) <= now && release_at(i, next_index[i]) < end {
                queue.push_back(taskset.task(i).release_job(next_index[i]));
                next_index[i] += 1;
            }
        }

        if running.is_none() && now < end && pending.iter().any(|q| !q.is_empty()) {
            let snapshot = Snapshot {
                now,
                tasks: (0..n)
                    .map(|i| match pending[i].front() {
                        Some(job) => TaskStatus {
                            active: true,
                            next_release: job.deadline,
                        },
                        None => TaskStatus {
                            active: false,
                            next_release: release_at(i, next_index[i]),
                        },
                    })
                    .collect(),
            };
            let mut work = GateWork::default();
            let decision = decide(config.policy, taskset, &snapshot, &*source, &mut work)
                .expect("an active job exists");
            trace.decisions.push(DecisionRecord {
                time: now,
                cause,
                active_jobs: snapshot.active_count(),
                gate_work: work,
            });
            if config.capture_snapshots {
                trace.snapshots.push(snapshot);
            }
            if let Some(since) = idle_since.take() {
                if since < now {
                    trace.idle.push((since, now));
                }
            }
            let mut job = pending[decision.task]
                .pop_front()
                .expect("chosen job is active");
            let actual = sampler.sample(decision.budget);
            job.start(now, decision.pair, decision.budget);
            let finish = now + actual;
            trace.records.push(ExecRecord {
                start: now,
                finish,
                task: decision.task,
                task_id: job.task_id,
                job: job.index,
                release: job.release,
                deadline: job.deadline,
                pair: decision.pair,
                budget: decision.budget,
                actual,
                inverted: decision.inverted,
                gain: decision.gain,
                miss: false,
            });
            running = Some(Running {
                task: decision.task,
                job,
                finish,
                record: trace.records.len() - 1,
            });
            // zero-length jobs complete at the same instant
            continue;
        }

        let next_release = (0..n)
            .map(|i| release_at(i, next_index[i]))
            .filter(|&t| t < end)
            .min();
        let next = match (&running, next_release) {
            (Some(r), Some(t)) => r.finish.min(t),
            (Some(r), None) => r.finish,
            (None, Some(t)) => t,
            (None, None) => break,
        };
        now = next;
    }

    if let Some(since) = idle_since {
        if since < end {
            trace.idle.push((since, end));
        }
    }
    for queue in &pending {
        for job in queue {
            if job.deadline <= end {
                trace.misses.push(MissRecord {
                    task_id: job.task_id,
                    job: job.index,
                    deadline: job.deadline,
                    finish: None,
                });
            }
        }
    }
    Ok(trace)
}
