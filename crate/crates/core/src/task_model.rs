//! Periodic tracking tasks, the four detection/association workload pairs
//! and per-job lifecycle state.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::{hyperperiod, Duration, Instant};

/// Confidence level of one pipeline stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    Low,
    High,
}

/// A (detection, association) workload choice for one frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairChoice {
    pub detection: Level,
    pub association: Level,
}

impl PairChoice {
    pub const LL: PairChoice = PairChoice::new(Level::Low, Level::Low);
    pub const LH: PairChoice = PairChoice::new(Level::Low, Level::High);
    pub const HL: PairChoice = PairChoice::new(Level::High, Level::Low);
    pub const HH: PairChoice = PairChoice::new(Level::High, Level::High);

    /// Enumeration order used by the flexible scheduler and for tie-breaks.
    pub const ALL: [PairChoice; 4] = [Self::LL, Self::LH, Self::HL, Self::HH];

    pub const fn new(detection: Level, association: Level) -> Self {
        PairChoice {
            detection,
            association,
        }
    }

    /// Position in [`PairChoice::ALL`].
    pub fn ordinal(self) -> usize {
        match (self.detection, self.association) {
            (Level::Low, Level::Low) => 0,
            (Level::Low, Level::High) => 1,
            (Level::High, Level::Low) => 2,
            (Level::High, Level::High) => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        ["LL", "LH", "HL", "HH"][self.ordinal()]
    }
}

impl fmt::Display for PairChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PairChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LL" => Ok(Self::LL),
            "LH" => Ok(Self::LH),
            "HL" => Ok(Self::HL),
            "HH" => Ok(Self::HH),
            _ => Err(Error::Config(format!("unknown pair '{s}'"))),
        }
    }
}

/// Per-component worst-case execution times of one tracking task.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WcetProfile {
    /// RoI identification and cropping.
    pub pre: Duration,
    pub infer_low: Duration,
    pub infer_high: Duration,
    /// IoU-only matching.
    pub assoc_low: Duration,
    /// IoU plus feature cascade.
    pub assoc_high: Duration,
    /// Tracklet confidence update.
    pub post: Duration,
}

impl WcetProfile {
    /// Component maxima of the reference detector/tracker measurements.
    pub fn reference() -> Self {
        let us = Duration::from_micros;
        WcetProfile {
            pre: us(900),
            infer_low: us(17_600),
            infer_high: us(23_200),
            assoc_low: us(9_600),
            assoc_high: us(32_700),
            post: us(900),
        }
    }

    pub fn detection(&self, level: Level) -> Duration {
        self.pre
            + match level {
                Level::Low => self.infer_low,
                Level::High => self.infer_high,
            }
    }

    pub fn association(&self, level: Level) -> Duration {
        self.post
            + match level {
                Level::Low => self.assoc_low,
                Level::High => self.assoc_high,
            }
    }

    pub fn wcet(&self, pair: PairChoice) -> Duration {
        self.detection(pair.detection) + self.association(pair.association)
    }

    pub fn validate(&self, id: u32) -> Result<()> {
        if self.assoc_low >= self.assoc_high {
            return Err(Error::InvalidProfile {
                id,
                reason: "low association must be strictly cheaper than high association",
            });
        }
        if self.infer_low > self.infer_high {
            return Err(Error::InvalidProfile {
                id,
                reason: "low inference must not exceed high inference",
            });
        }
        if self.wcet(PairChoice::LL).is_zero() {
            return Err(Error::InvalidProfile {
                id,
                reason: "minimum execution requirement is zero",
            });
        }
        Ok(())
    }
}

/// WCET of `profile` under `pair`.
pub fn wcet_of(profile: &WcetProfile, pair: PairChoice) -> Duration {
    profile.wcet(pair)
}

/// A strictly periodic tracking task with implicit deadline.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: u32,
    pub period: Duration,
    #[serde(default)]
    pub phase: Duration,
    pub wcet: WcetProfile,
    /// Rank, 0 is the highest priority.
    #[serde(default)]
    pub priority: usize,
}

impl TaskSpec {
    pub fn new(id: u32, period: Duration, wcet: WcetProfile) -> Self {
        TaskSpec {
            id,
            period,
            phase: Duration::ZERO,
            wcet,
            priority: 0,
        }
    }

    pub fn with_phase(mut self, phase: Duration) -> Self {
        self.phase = phase;
        self
    }

    pub fn min_wcet(&self) -> Duration {
        self.wcet.wcet(PairChoice::LL)
    }

    /// The `k`-th job, released at `phase + k * period`.
    pub fn release_job(&self, index: u64) -> Job {
        let release = Instant::ZERO + self.phase + self.period * index;
        Job::new(self.id, index, release, self.period)
    }
}

/// Assigns rate-monotonic ranks: shorter period first, ties by ascending id.
pub fn rm_assign(mut tasks: Vec<TaskSpec>) -> Result<Vec<TaskSpec>> {
    if tasks.is_empty() {
        return Err(Error::EmptyTaskSet);
    }
    let mut seen = HashSet::new();
    for t in &tasks {
        if !seen.insert(t.id) {
            return Err(Error::DuplicateTaskId(t.id));
        }
    }
    let mut order: Vec<usize> = (0..tasks.len()).collect();
    order.sort_by_key(|&i| (tasks[i].period, tasks[i].id));
    for (rank, &i) in order.iter().enumerate() {
        tasks[i].priority = rank;
    }
    Ok(tasks)
}

/// A validated task set stored in priority order: index `i` holds rank `i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TaskSpec>", into = "Vec<TaskSpec>")]
pub struct TaskSet {
    tasks: Vec<TaskSpec>,
}

impl TaskSet {
    /// Builds a set from tasks whose `priority` fields already form a
    /// permutation of `0..n`.
    pub fn new(tasks: Vec<TaskSpec>) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::EmptyTaskSet);
        }
        let n = tasks.len();
        let mut ids = HashSet::new();
        let mut ranks = vec![false; n];
        for t in &tasks {
            if !ids.insert(t.id) {
                return Err(Error::DuplicateTaskId(t.id));
            }
            if t.period.is_zero() {
                return Err(Error::InvalidPeriod(t.id));
            }
            t.wcet.validate(t.id)?;
            match ranks.get_mut(t.priority) {
                Some(slot) if !*slot => *slot = true,
                _ => return Err(Error::InvalidPriorities(n)),
            }
        }
        let mut tasks = tasks;
        tasks.sort_by_key(|t| t.priority);
        Ok(TaskSet { tasks })
    }

    /// Rate-monotonic ranks, then [`TaskSet::new`].
    pub fn rate_monotonic(tasks: Vec<TaskSpec>) -> Result<Self> {
        TaskSet::new(rm_assign(tasks)?)
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn task(&self, index: usize) -> &TaskSpec {
        &self.tasks[index]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TaskSpec> {
        self.tasks.iter()
    }

    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.tasks.iter().position(|t| t.id == id)
    }

    pub fn wcet(&self, index: usize, pair: PairChoice) -> Duration {
        self.tasks[index].wcet.wcet(pair)
    }

    pub fn min_wcet(&self, index: usize) -> Duration {
        self.tasks[index].min_wcet()
    }

    pub fn hyperperiod(&self) -> Option<Duration> {
        hyperperiod(self.tasks.iter().map(|t| t.period))
    }

    pub fn max_period(&self) -> Duration {
        self.tasks
            .iter()
            .map(|t| t.period)
            .max()
            .unwrap_or_default()
    }

    /// Total utilization under `pair`.
    pub fn utilization(&self, pair: PairChoice) -> f64 {
        self.tasks
            .iter()
            .map(|t| t.wcet.wcet(pair).as_micros() as f64 / t.period.as_micros() as f64)
            .sum()
    }
}

impl TryFrom<Vec<TaskSpec>> for TaskSet {
    type Error = Error;
    fn try_from(tasks: Vec<TaskSpec>) -> Result<Self> {
        TaskSet::new(tasks)
    }
}

impl From<TaskSet> for Vec<TaskSpec> {
    fn from(set: TaskSet) -> Self {
        set.tasks
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Pending,
    Running,
    Finished,
    Missed,
}

/// One released instance of a task.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Job {
    pub task_id: u32,
    pub index: u64,
    pub release: Instant,
    pub deadline: Instant,
    pub state: JobState,
    pub granted_pair: Option<PairChoice>,
    pub granted_budget: Option<Duration>,
    pub start: Option<Instant>,
    pub finish: Option<Instant>,
}

impl Job {
    pub fn new(task_id: u32, index: u64, release: Instant, period: Duration) -> Self {
        Job {
            task_id,
            index,
            release,
            deadline: release + period,
            state: JobState::Pending,
            granted_pair: None,
            granted_budget: None,
            start: None,
            finish: None,
        }
    }

    pub fn is_active_at(&self, t: Instant) -> bool {
        self.release <= t && matches!(self.state, JobState::Pending | JobState::Running)
    }

    pub fn start(&mut self, at: Instant, pair: PairChoice, budget: Duration) {
        self.state = JobState::Running;
        self.start = Some(at);
        self.granted_pair = Some(pair);
        self.granted_budget = Some(budget);
    }

    /// Marks completion; a finish after the deadline records a miss.
    pub fn complete(&mut self, at: Instant) {
        self.finish = Some(at);
        self.state = if at > self.deadline {
            JobState::Missed
        } else {
            JobState::Finished
        };
    }
}
