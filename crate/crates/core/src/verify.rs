//! Randomized suites that cross-check the analysis and the online gate
//! against the brute-force oracles.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{feasible_assignments, rta_min, Snapshot};
use crate::error::Result;
use crate::oracle::{exhaustive_future_check, tick_simulate_min, TickSimConfig};
use crate::scheduler::{simulate, ConfidenceSource, ExecutionTimeModel, Policy, SimConfig};
use crate::task_model::{PairChoice, TaskSet};
use crate::taskgen::{random_taskset, TaskGenParams};
use crate::time::{Duration, Instant};
use crate::workload::{generate_scenario, ScenarioParams, TrackingWorld};

/// Independent generator for item `index` of a suite.
pub fn item_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Pseudo-random gains that change after every completed frame, so the
/// flexible policy explores upgrades and inversions freely.
#[derive(Clone, Debug)]
pub struct HashGains {
    seed: u64,
    completed: Vec<u64>,
}

impl HashGains {
    pub fn new(seed: u64, tasks: usize) -> Self {
        HashGains {
            seed,
            completed: vec![0; tasks],
        }
    }
}

impl ConfidenceSource for HashGains {
    fn expected_gain(&self, task: usize, pair: PairChoice) -> f64 {
        let h =
            mix(self.seed
                ^ mix(task as u64 ^ mix(pair.ordinal() as u64 ^ mix(self.completed[task]))));
        (h >> 11) as f64 / (1u64 << 53) as f64
    }

    fn job_completed(&mut self, task: usize, _job: u64, _pair: PairChoice, _finish: Instant) {
        self.completed[task] += 1;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RtaDisagreement {
    pub set_index: u64,
    pub level: usize,
    pub taskset: TaskSet,
    pub misses: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RtaSuiteReport {
    pub sets: usize,
    pub schedulable_sets: usize,
    pub simulations: usize,
    pub disagreements: Vec<RtaDisagreement>,
}

impl RtaSuiteReport {
    pub fn passed(&self) -> bool {
        self.disagreements.is_empty()
    }
}

/// For every generated set that the offline analysis accepts, runs the
/// tick simulator from the critical instant of every priority level.
pub fn verify_rta(seed: u64, sets: usize, params: &TaskGenParams) -> Result<RtaSuiteReport> {
    params.validate()?;
    let results: Vec<Result<(bool, usize, Vec<RtaDisagreement>)>> = (0..sets as u64)
        .into_par_iter()
        .map(|i| {
            let ts = random_taskset(&mut item_rng(seed, i), params)?;
            if !rta_min(&ts).schedulable {
                return Ok((false, 0, Vec::new()));
            }
            let mut bad = Vec::new();
            for level in 0..ts.len() {
                let cfg = TickSimConfig::critical_instant(&ts, level).with_quantum(params.quantum);
                let report = tick_simulate_min(&ts, &cfg)?;
                if !report.is_clean() {
                    bad.push(RtaDisagreement {
                        set_index: i,
                        level,
                        taskset: ts.clone(),
                        misses: report.misses.len(),
                    });
                }
            }
            Ok((true, ts.len(), bad))
        })
        .collect();
    let mut report = RtaSuiteReport {
        sets,
        ..RtaSuiteReport::default()
    };
    for r in results {
        let (schedulable, sims, bad) = r?;
        report.schedulable_sets += usize::from(schedulable);
        report.simulations += sims;
        report.disagreements.extend(bad);
    }
    Ok(report)
}

/// Offline-schedulable sets in generation order: item `i` of the result is
/// the `i`-th accepted draw.
pub fn schedulable_sets(
    seed: u64,
    count: usize,
    params: &TaskGenParams,
) -> Result<Vec<(u64, TaskSet)>> {
    params.validate()?;
    let mut out = Vec::with_capacity(count);
    let mut index = 0u64;
    while out.len() < count {
        let ts = random_taskset(&mut item_rng(seed, index), params)?;
        if rta_min(&ts).schedulable {
            out.push((index, ts));
        }
        index += 1;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlexFailure {
    pub set_index: u64,
    pub run_seed: u64,
    pub misses: usize,
    pub error: Option<String>,
}

/// Jobs, upgrades and inversions of one run, plus its failure if any.
type RunTally = (usize, usize, usize, Option<FlexFailure>);

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FlexSuiteReport {
    pub runs: usize,
    pub jobs: usize,
    pub upgrades: usize,
    pub inversions: usize,
    pub failures: Vec<FlexFailure>,
}

impl FlexSuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Confidence-driven flexible runs over `hyperperiods` hyperperiods on
/// `sets` offline-schedulable sets, `seeds` scenarios each.
pub fn verify_flex(
    seed: u64,
    sets: usize,
    seeds: usize,
    hyperperiods: u64,
    params: &TaskGenParams,
    exec_model: ExecutionTimeModel,
) -> Result<FlexSuiteReport> {
    let pool = schedulable_sets(seed, sets, params)?;
    let runs: Vec<(u64, &TaskSet, u64)> = pool
        .iter()
        .flat_map(|(i, ts)| (0..seeds as u64).map(move |s| (*i, ts, s)))
        .collect();
    let results: Vec<Result<RunTally>> = runs
        .par_iter()
        .map(|&(i, ts, s)| {
            let run_seed = seed ^ (i << 8) ^ s;
            let horizon = ts.hyperperiod().unwrap_or(ts.max_period()) * hyperperiods;
            let shortest = ts.task(0).period;
            let scenario = generate_scenario(
                run_seed,
                &ScenarioParams {
                    n_tasks: ts.len(),
                    n_objects: 8,
                    horizon_frames: horizon.div_ceil(shortest) + 1,
                    ..ScenarioParams::default()
                },
            )?;
            let mut world = TrackingWorld::new(scenario);
            let model = match exec_model {
                ExecutionTimeModel::Stochastic { low_fraction, .. } => {
                    ExecutionTimeModel::Stochastic {
                        seed: run_seed,
                        low_fraction,
                    }
                }
                m => m,
            };
            let cfg = SimConfig::new(Policy::Flex, horizon).with_exec_model(model);
            let trace = simulate(ts, &cfg, &mut world)?;
            let upgrades = trace
                .records
                .iter()
                .filter(|r| r.pair != PairChoice::LL)
                .count();
            let failure =
                (trace.miss_count() > 0 || world.error().is_some()).then(|| FlexFailure {
                    set_index: i,
                    run_seed,
                    misses: trace.miss_count(),
                    error: world.error().map(str::to_string),
                });
            Ok((trace.records.len(), upgrades, trace.inversions(), failure))
        })
        .collect();
    let mut report = FlexSuiteReport {
        runs: runs.len(),
        ..FlexSuiteReport::default()
    };
    for r in results {
        let (jobs, upgrades, inversions, failure) = r?;
        report.jobs += jobs;
        report.upgrades += upgrades;
        report.inversions += inversions;
        report.failures.extend(failure);
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateViolation {
    pub set_index: u64,
    pub taskset: TaskSet,
    pub snapshot: Snapshot,
    pub task: usize,
    pub pair: PairChoice,
    pub budget: Duration,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GateSuiteReport {
    pub sets: usize,
    pub snapshots: usize,
    pub grants: usize,
    /// Grants the gate refused although the exhaustive check accepts them.
    pub conservative_rejections: usize,
    pub violations: Vec<GateViolation>,
}

impl GateSuiteReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

const SNAPSHOTS_PER_SET: usize = 200;

fn gate_set_report(seed: u64, index: u64, ts: &TaskSet) -> Result<GateSuiteReport> {
    let run_seed = seed ^ index.rotate_left(17);
    let horizon = ts.hyperperiod().unwrap_or(ts.max_period()) * 2;
    let cfg = SimConfig::new(Policy::Flex, horizon)
        .with_exec_model(ExecutionTimeModel::Stochastic {
            seed: run_seed,
            low_fraction: 0.3,
        })
        .capturing_snapshots();
    let mut gains = HashGains::new(run_seed, ts.len());
    let trace = simulate(ts, &cfg, &mut gains)?;
    let mut report = GateSuiteReport {
        sets: 1,
        ..GateSuiteReport::default()
    };
    for snapshot in trace.snapshots.iter().take(SNAPSHOTS_PER_SET) {
        report.snapshots += 1;
        let admitted = feasible_assignments(ts, snapshot);
        for k in snapshot.active_tasks() {
            for pair in PairChoice::ALL {
                let budget = ts.wcet(k, pair);
                let gate = admitted.iter().any(|a| a.task == k && a.pair == pair);
                let exact = exhaustive_future_check(ts, snapshot, k, budget, None);
                if gate {
                    report.grants += 1;
                    if !exact {
                        report.violations.push(GateViolation {
                            set_index: index,
                            taskset: ts.clone(),
                            snapshot: snapshot.clone(),
                            task: k,
                            pair,
                            budget,
                        });
                    }
                } else if exact {
                    report.conservative_rejections += 1;
                }
            }
        }
    }
    Ok(report)
}

/// Fuzzes decision-instant snapshots from flexible runs with random gains
/// and early completions until at least `snapshots` were checked.
pub fn verify_gate(seed: u64, snapshots: usize, params: &TaskGenParams) -> Result<GateSuiteReport> {
    params.validate()?;
    const BATCH: u64 = 32;
    let mut report = GateSuiteReport::default();
    let mut next = 0u64;
    while report.snapshots < snapshots {
        let batch: Vec<Result<GateSuiteReport>> = (next..next + BATCH)
            .into_par_iter()
            .map(|i| {
                let ts = random_taskset(&mut item_rng(seed, i), params)?;
                if !rta_min(&ts).schedulable {
                    return Ok(GateSuiteReport::default());
                }
                gate_set_report(seed, i, &ts)
            })
            .collect();
        next += BATCH;
        for r in batch {
            let r = r?;
            report.sets += r.sets;
            report.snapshots += r.snapshots;
            report.grants += r.grants;
            report.conservative_rejections += r.conservative_rejections;
            report.violations.extend(r.violations);
        }
    }
    Ok(report)
}

/// Generator settings for the gate suite: small sets with random phases.
pub fn gate_params() -> TaskGenParams {
    TaskGenParams {
        n_min: 2,
        n_max: 4,
        u_min: 0.2,
        u_max: 0.9,
        random_phases: true,
        ..TaskGenParams::default()
    }
}
