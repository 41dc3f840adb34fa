//! Single runs, sweeps and their CSV/JSON outputs.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::rta;
use crate::config::{ExperimentConfig, ScenarioSource};
use crate::error::{Error, Result};
use crate::scheduler::{simulate, ExecutionTimeModel, Policy, SimConfig, Trace};
use crate::task_model::{PairChoice, TaskSet};
use crate::time::Duration;
use crate::workload::{generate_scenario, ConfidenceSample, Scenario, TrackingWorld};

/// Frames a task set can consume within `horizon`.
pub fn frames_needed(taskset: &TaskSet, horizon: Duration) -> u64 {
    let shortest = taskset.iter().map(|t| t.period).min().unwrap_or(horizon);
    horizon.div_ceil(shortest) + 1
}

/// Scenario for one seed, sized to the task set and horizon.
pub fn scenario_for(
    source: &ScenarioSource,
    seed: u64,
    taskset: &TaskSet,
    horizon: Duration,
) -> Result<Scenario> {
    let frames = frames_needed(taskset, horizon);
    match source {
        ScenarioSource::Generated(params) => {
            let mut params = params.clone();
            params.n_tasks = taskset.len();
            params.horizon_frames = frames;
            generate_scenario(seed, &params)
        }
        ScenarioSource::Replay(s) => {
            if s.tasks.len() < taskset.len() || s.horizon_frames < frames {
                return Err(Error::Config(format!(
                    "replay scenario has {} tasks and {} frames; need {} and {frames}",
                    s.tasks.len(),
                    s.horizon_frames,
                    taskset.len()
                )));
            }
            Ok(s.clone())
        }
    }
}

pub struct RunOutput {
    pub trace: Trace,
    pub world: TrackingWorld,
}

pub fn run(
    taskset: &TaskSet,
    policy: Policy,
    horizon: Duration,
    exec_model: ExecutionTimeModel,
    scenario: Scenario,
) -> Result<RunOutput> {
    let mut world = TrackingWorld::new(scenario);
    let cfg = SimConfig::new(policy, horizon).with_exec_model(exec_model);
    let trace = simulate(taskset, &cfg, &mut world)?;
    if let Some(e) = world.error() {
        return Err(Error::InvalidScenario(e.to_string()));
    }
    Ok(RunOutput { trace, world })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct PairHistogram {
    pub LL: u64,
    pub LH: u64,
    pub HL: u64,
    pub HH: u64,
}

impl PairHistogram {
    pub fn from_counts(c: [u64; 4]) -> Self {
        // PairChoice::ALL order
        PairHistogram {
            LL: c[0],
            LH: c[1],
            HL: c[2],
            HH: c[3],
        }
    }

    pub fn get(&self, pair: PairChoice) -> u64 {
        [self.LL, self.LH, self.HL, self.HH][pair.ordinal()]
    }

    pub fn total(&self) -> u64 {
        self.LL + self.LH + self.HL + self.HH
    }

    fn add(&mut self, o: &PairHistogram) {
        self.LL += o.LL;
        self.LH += o.LH;
        self.HL += o.HL;
        self.HH += o.HH;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub id: u32,
    pub jobs: u64,
    pub misses: u64,
    pub mean_confidence: f64,
    pub pair_histogram: PairHistogram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub policy: Policy,
    pub seed: u64,
    pub horizon_us: u64,
    pub offline_schedulable: bool,
    pub jobs: u64,
    pub miss_count: u64,
    pub inversions: u64,
    pub pair_histogram: PairHistogram,
    /// Mean of the per-task time-averaged confidences.
    pub mean_confidence: f64,
    pub tasks: Vec<TaskMetrics>,
    pub mean_gate_work: f64,
}

pub fn run_metrics(taskset: &TaskSet, policy: Policy, seed: u64, out: &RunOutput) -> RunMetrics {
    let trace = &out.trace;
    let per_task_conf = out.world.mean_confidence();
    let tasks: Vec<TaskMetrics> = taskset
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut counts = [0; 4];
            let mut jobs = 0;
            for r in trace.records.iter().filter(|r| r.task == i) {
                counts[r.pair.ordinal()] += 1;
                jobs += 1;
            }
            TaskMetrics {
                id: t.id,
                jobs,
                misses: trace.misses.iter().filter(|m| m.task_id == t.id).count() as u64,
                mean_confidence: per_task_conf.get(i).copied().unwrap_or(0.0),
                pair_histogram: PairHistogram::from_counts(counts),
            }
        })
        .collect();
    let decisions = trace.decisions.len().max(1) as f64;
    RunMetrics {
        policy,
        seed,
        horizon_us: trace.horizon.as_micros(),
        offline_schedulable: rta(taskset, policy.analysis_pair()).schedulable,
        jobs: trace.records.len() as u64,
        miss_count: trace.miss_count() as u64,
        inversions: trace.inversions() as u64,
        pair_histogram: PairHistogram::from_counts(trace.pair_histogram()),
        mean_confidence: tasks.iter().map(|t| t.mean_confidence).sum::<f64>()
            / tasks.len().max(1) as f64,
        tasks,
        mean_gate_work: trace
            .decisions
            .iter()
            .map(|d| d.gate_work.total() as f64)
            .sum::<f64>()
            / decisions,
    }
}

#[derive(Serialize)]
struct TraceRow {
    t_us: u64,
    task: u32,
    job_idx: u64,
    pair: &'static str,
    budget_us: u64,
    actual_us: u64,
    inverted: bool,
    miss: bool,
}

/// One row per executed job, in start order.
pub fn write_trace_csv<W: Write>(trace: &Trace, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in &trace.records {
        out.serialize(TraceRow {
            t_us: r.start.as_micros(),
            task: r.task_id,
            job_idx: r.job,
            pair: r.pair.as_str(),
            budget_us: r.budget.as_micros(),
            actual_us: r.actual.as_micros(),
            inverted: r.inverted,
            miss: r.miss,
        })?;
    }
    // a header even for empty traces
    if trace.records.is_empty() {
        out.write_record([
            "t_us",
            "task",
            "job_idx",
            "pair",
            "budget_us",
            "actual_us",
            "inverted",
            "miss",
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ConfidenceRow {
    t_us: u64,
    task: u32,
    frame: u64,
    tracklets: usize,
    measured: f64,
    predicted_ll: f64,
    predicted_lh: f64,
    predicted_hl: f64,
    predicted_hh: f64,
    granted: &'static str,
}

/// Per-frame confidence samples.
pub fn write_confidence_csv<W: Write>(
    taskset: &TaskSet,
    samples: &[ConfidenceSample],
    w: W,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for s in samples {
        let [ll, lh, hl, hh] = s.predicted;
        out.serialize(ConfidenceRow {
            t_us: s.time.as_micros(),
            task: taskset.task(s.task).id,
            frame: s.frame,
            tracklets: s.tracklets,
            measured: s.measured,
            predicted_ll: ll,
            predicted_lh: lh,
            predicted_hl: hl,
            predicted_hh: hh,
            granted: s.granted.as_str(),
        })?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub taskset: String,
    pub policy: Policy,
    /// Offline verdict under the policy's analysis pair.
    pub schedulable: bool,
    /// Cells failing the offline test are only simulated when forced.
    pub simulated: bool,
    pub runs: usize,
    pub mean_confidence: Option<f64>,
    pub min_confidence: Option<f64>,
    pub max_confidence: Option<f64>,
    pub jobs: u64,
    pub misses: u64,
    pub pair_histogram: PairHistogram,
    pub per_seed: Vec<RunMetrics>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn cell(&self, taskset: &str, policy: Policy) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.taskset == taskset && c.policy == policy)
    }
}

/// Every (task set, policy, seed) combination; cells are ordered by task
/// set, then policy, as listed in the config.
pub fn sweep(cfg: &ExperimentConfig, force: bool) -> Result<SweepReport> {
    let mut jobs = Vec::new();
    for (si, (_, ts)) in cfg.tasksets.iter().enumerate() {
        for (pi, &policy) in cfg.policies.iter().enumerate() {
            if force || rta(ts, policy.analysis_pair()).schedulable {
                for &seed in &cfg.seeds {
                    jobs.push((si, pi, seed));
                }
            }
        }
    }
    let results: Vec<Result<RunMetrics>> = jobs
        .par_iter()
        .map(|&(si, pi, seed)| {
            let ts = &cfg.tasksets[si].1;
            let policy = cfg.policies[pi];
            let scenario = scenario_for(&cfg.scenario, seed, ts, cfg.horizon)?;
            let model = ExecutionTimeModel::parse(&cfg.exec_model, seed)?;
            let out = run(ts, policy, cfg.horizon, model, scenario)?;
            Ok(run_metrics(ts, policy, seed, &out))
        })
        .collect();
    let mut runs = jobs.into_iter().zip(results);
    let mut report = SweepReport::default();
    let mut pending = runs.next();
    for (si, (label, ts)) in cfg.tasksets.iter().enumerate() {
        for (pi, &policy) in cfg.policies.iter().enumerate() {
            let mut per_seed = Vec::new();
            while let Some(((s, p, _), _)) = &pending {
                if (*s, *p) != (si, pi) {
                    break;
                }
                let (_, r) = pending.take().expect("checked above");
                per_seed.push(r?);
                pending = runs.next();
            }
            let confs: Vec<f64> = per_seed.iter().map(|m| m.mean_confidence).collect();
            let mut hist = PairHistogram::default();
            for m in &per_seed {
                hist.add(&m.pair_histogram);
            }
            report.cells.push(SweepCell {
                taskset: label.clone(),
                policy,
                schedulable: rta(ts, policy.analysis_pair()).schedulable,
                simulated: !per_seed.is_empty(),
                runs: per_seed.len(),
                mean_confidence: (!confs.is_empty())
                    .then(|| confs.iter().sum::<f64>() / confs.len() as f64),
                min_confidence: confs.iter().copied().reduce(f64::min),
                max_confidence: confs.iter().copied().reduce(f64::max),
                jobs: per_seed.iter().map(|m| m.jobs).sum(),
                misses: per_seed.iter().map(|m| m.miss_count).sum(),
                pair_histogram: hist,
                per_seed,
            });
        }
    }
    Ok(report)
}

#[derive(Serialize)]
struct SweepRow<'a> {
    taskset: &'a str,
    policy: String,
    schedulable: bool,
    simulated: bool,
    runs: usize,
    mean_confidence: Option<f64>,
    min_confidence: Option<f64>,
    max_confidence: Option<f64>,
    jobs: u64,
    misses: u64,
    ll: u64,
    lh: u64,
    hl: u64,
    hh: u64,
}

pub fn write_sweep_csv<W: Write>(report: &SweepReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for c in &report.cells {
        out.serialize(SweepRow {
            taskset: &c.taskset,
            policy: c.policy.to_string(),
            schedulable: c.schedulable,
            simulated: c.simulated,
            runs: c.runs,
            mean_confidence: c.mean_confidence,
            min_confidence: c.min_confidence,
            max_confidence: c.max_confidence,
            jobs: c.jobs,
            misses: c.misses,
            ll: c.pair_histogram.LL,
            lh: c.pair_histogram.LH,
            hl: c.pair_histogram.HL,
            hh: c.pair_histogram.HH,
        })?;
    }
    out.flush()?;
    Ok(())
}
