//! JSON ingestion of task sets and experiment configurations.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheduler::{ExecutionTimeModel, Policy};
use crate::task_model::{TaskSet, TaskSpec, WcetProfile};
use crate::time::Duration;
use crate::workload::{Scenario, ScenarioParams};

/// Component WCETs in milliseconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WcetMs {
    #[serde(default)]
    pub pre: f64,
    pub infer_l: f64,
    pub infer_h: f64,
    pub as_l: f64,
    pub as_h: f64,
    #[serde(default)]
    pub post: f64,
}

impl WcetMs {
    pub fn to_profile(&self) -> Result<WcetProfile> {
        let d = Duration::from_millis_f64;
        Ok(WcetProfile {
            pre: d(self.pre)?,
            infer_low: d(self.infer_l)?,
            infer_high: d(self.infer_h)?,
            assoc_low: d(self.as_l)?,
            assoc_high: d(self.as_h)?,
            post: d(self.post)?,
        })
    }

    pub fn from_profile(p: &WcetProfile) -> Self {
        WcetMs {
            pre: p.pre.as_millis_f64(),
            infer_l: p.infer_low.as_millis_f64(),
            infer_h: p.infer_high.as_millis_f64(),
            as_l: p.assoc_low.as_millis_f64(),
            as_h: p.assoc_high.as_millis_f64(),
            post: p.post.as_millis_f64(),
        }
    }
}

/// One task entry: exactly one of `fps` and `period_ms`. A missing
/// `wcet_ms` selects the reference profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEntry {
    pub id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wcet_ms: Option<WcetMs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_ms: Option<f64>,
}

impl TaskEntry {
    pub fn to_spec(&self) -> Result<TaskSpec> {
        let period = match (self.fps, self.period_ms) {
            (Some(f), None) => Duration::from_fps(f)?,
            (None, Some(p)) => Duration::from_millis_f64(p)?,
            _ => {
                return Err(Error::Config(format!(
                    "task {}: give exactly one of fps and period_ms",
                    self.id
                )))
            }
        };
        let profile = match &self.wcet_ms {
            Some(w) => w.to_profile()?,
            None => WcetProfile::reference(),
        };
        let phase = match self.phase_ms {
            Some(p) => Duration::from_millis_f64(p)?,
            None => Duration::ZERO,
        };
        Ok(TaskSpec::new(self.id, period, profile).with_phase(phase))
    }
}

pub fn taskset_from_entries(entries: &[TaskEntry]) -> Result<TaskSet> {
    let specs = entries
        .iter()
        .map(TaskEntry::to_spec)
        .collect::<Result<Vec<_>>>()?;
    TaskSet::rate_monotonic(specs)
}

/// Rate-monotonic set of tasks sharing `profile`, one per frame rate.
pub fn taskset_from_fps(fps: &[f64], profile: &WcetProfile) -> Result<TaskSet> {
    let specs = fps
        .iter()
        .enumerate()
        .map(|(i, &f)| Ok(TaskSpec::new(i as u32, Duration::from_fps(f)?, *profile)))
        .collect::<Result<Vec<_>>>()?;
    TaskSet::rate_monotonic(specs)
}

/// `[start, start + 1, ...]`: `steps` sets, each rate one frame per second
/// higher than the previous.
pub fn fps_ladder(start: &[f64], steps: usize) -> Vec<Vec<f64>> {
    (0..steps)
        .map(|s| start.iter().map(|f| f + s as f64).collect())
        .collect()
}

/// The on-disk configuration; every key is optional so one schema serves
/// task-set files and experiment files alike.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tasks: Option<Vec<TaskEntry>>,
    /// Alternative to `tasks`: one task set per list, sharing `profile_ms`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps_sets: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile_ms: Option<WcetMs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policies: Option<Vec<Policy>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exec_model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioParams>,
    /// Replay file written by a previous run; overrides `scenario`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl ConfigFile {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        // relative paths are relative to the config file
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(p) = cfg.scenario_file.as_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Where the tracking worlds come from.
#[derive(Clone, Debug, PartialEq)]
pub enum ScenarioSource {
    Generated(ScenarioParams),
    Replay(Scenario),
}

/// A fully resolved experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Each entry is a labelled task set.
    pub tasksets: Vec<(String, TaskSet)>,
    pub policies: Vec<Policy>,
    pub seeds: Vec<u64>,
    pub horizon: Duration,
    /// `wcet`, `scaled:<f>` or `stochastic:<f>`.
    pub exec_model: String,
    pub scenario: ScenarioSource,
    pub out_dir: Option<PathBuf>,
}

pub const DEFAULT_HORIZON_MS: f64 = 10_000.0;
pub const DEFAULT_SEED: u64 = 1;

impl ExperimentConfig {
    pub fn resolve(file: &ConfigFile) -> Result<Self> {
        let mut tasksets = Vec::new();
        if let Some(entries) = &file.tasks {
            if entries.is_empty() {
                return Err(Error::EmptyTaskSet);
            }
            tasksets.push(("tasks".to_string(), taskset_from_entries(entries)?));
        }
        if let Some(sets) = &file.fps_sets {
            let profile = match &file.profile_ms {
                Some(w) => w.to_profile()?,
                None => WcetProfile::reference(),
            };
            for fps in sets {
                let label = fps
                    .iter()
                    .map(|f| f.to_string())
                    .collect::<Vec<_>>()
                    .join("/");
                tasksets.push((label, taskset_from_fps(fps, &profile)?));
            }
        }
        if file.tasks.is_none() && file.fps_sets.is_none() {
            return Err(Error::Config("no tasks or fps_sets given".to_string()));
        }
        let horizon = Duration::from_millis_f64(file.horizon_ms.unwrap_or(DEFAULT_HORIZON_MS))?;
        if horizon.is_zero() {
            return Err(Error::InvalidHorizon);
        }
        let exec_model = file
            .exec_model
            .clone()
            .unwrap_or_else(|| "wcet".to_string());
        ExecutionTimeModel::parse(&exec_model, 0)?;
        let scenario = match &file.scenario_file {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                ScenarioSource::Replay(Scenario::from_json(&text)?)
            }
            None => ScenarioSource::Generated(file.scenario.clone().unwrap_or_default()),
        };
        Ok(ExperimentConfig {
            tasksets,
            policies: file
                .policies
                .clone()
                .unwrap_or_else(|| Policy::ALL.to_vec()),
            seeds: file.seeds.clone().unwrap_or_else(|| vec![DEFAULT_SEED]),
            horizon,
            exec_model,
            scenario,
            out_dir: file.out_dir.clone(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::resolve(&ConfigFile::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::rta_min;
    use crate::task_model::PairChoice;

    #[test]
    fn parses_task_entries() {
        let cfg = ConfigFile::from_json(
            r#"{"tasks": [
                {"id": 1, "fps": 6, "wcet_ms": {"pre": 0.9, "infer_l": 17.6, "infer_h": 23.2,
                                                "as_l": 9.6, "as_h": 32.7, "post": 0.9}},
                {"id": 2, "period_ms": 250, "phase_ms": 5}
            ]}"#,
        )
        .unwrap();
        let exp = ExperimentConfig::resolve(&cfg).unwrap();
        let ts = &exp.tasksets[0].1;
        assert_eq!(ts.task(0).period, Duration::from_micros(166_667));
        assert_eq!(ts.task(1).phase, Duration::from_millis(5));
        assert_eq!(ts.wcet(0, PairChoice::LL), ts.wcet(1, PairChoice::LL));
        assert!(rta_min(ts).schedulable);
    }

    #[test]
    fn rejects_malformed_entries() {
        let both = r#"{"tasks": [{"id": 1, "fps": 6, "period_ms": 100}]}"#;
        assert!(ExperimentConfig::resolve(&ConfigFile::from_json(both).unwrap()).is_err());
        let empty = r#"{"tasks": []}"#;
        assert!(matches!(
            ExperimentConfig::resolve(&ConfigFile::from_json(empty).unwrap()),
            Err(Error::EmptyTaskSet)
        ));
        assert!(ConfigFile::from_json(r#"{"taks": []}"#).is_err());
        let bad_policy = r#"{"tasks": [{"id": 1, "fps": 6}], "policies": ["edf"]}"#;
        assert!(ConfigFile::from_json(bad_policy).is_err());
        let bad_model = r#"{"tasks": [{"id": 1, "fps": 6}], "exec_model": "gamma"}"#;
        assert!(ExperimentConfig::resolve(&ConfigFile::from_json(bad_model).unwrap()).is_err());
    }

    #[test]
    fn fps_sets_share_profile() {
        let cfg = ConfigFile {
            fps_sets: Some(fps_ladder(&[6.0, 4.0], 5)),
            ..ConfigFile::default()
        };
        let exp = ExperimentConfig::resolve(&cfg).unwrap();
        assert_eq!(exp.tasksets.len(), 5);
        assert_eq!(exp.tasksets[4].0, "10/8");
        assert_eq!(exp.policies.len(), 7);
        assert_eq!(
            exp.tasksets[4].1.task(0).period,
            Duration::from_micros(100_000)
        );
    }

    #[test]
    fn missing_scenario_file_is_config_error() {
        let cfg = ConfigFile {
            fps_sets: Some(vec![vec![6.0]]),
            scenario_file: Some(PathBuf::from("/nonexistent/scenario.json")),
            ..ConfigFile::default()
        };
        assert!(matches!(
            ExperimentConfig::resolve(&cfg),
            Err(Error::Config(_))
        ));
    }
}
