//! Python bindings: task sets, response-time analysis, simulation runs and
//! the confidence primitives.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;
use serde_json::Value;

use rtmot::confidence::{self, AppearanceState, MotionState};
use rtmot::config::{ConfigFile, ExperimentConfig, WcetMs};
use rtmot::experiment::{run, run_metrics, scenario_for};
use rtmot::taskgen::TaskGenParams;
use rtmot::{verify, Duration, ExecutionTimeModel, PairChoice, Policy};

fn err(e: rtmot::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py(py: Python<'_>, v: &Value) -> PyResult<Py<PyAny>> {
    match v {
        Value::Null => Ok(py.None()),
        Value::Bool(b) => b.into_py_any(py),
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            (Some(u), _) => u.into_py_any(py),
            (None, Some(i)) => i.into_py_any(py),
            _ => n.as_f64().unwrap_or(f64::NAN).into_py_any(py),
        },
        Value::String(s) => s.into_py_any(py),
        Value::Array(a) => {
            let items = a
                .iter()
                .map(|x| to_py(py, x))
                .collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_py_any(py)
        }
        Value::Object(m) => {
            let d = PyDict::new(py);
            for (k, x) in m {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_py_any(py)
        }
    }
}

fn serialize(py: Python<'_>, v: &impl serde::Serialize) -> PyResult<Py<PyAny>> {
    let value = serde_json::to_value(v).map_err(|e| err(e.into()))?;
    to_py(py, &value)
}

fn parse_pair(s: &str) -> PyResult<PairChoice> {
    s.parse().map_err(err)
}

fn parse_policy(s: &str) -> PyResult<Policy> {
    s.parse().map_err(err)
}

/// Per-stage worst-case execution times in milliseconds.
#[pyclass(name = "WcetProfile", module = "rtmot_py", frozen, from_py_object)]
#[derive(Clone)]
struct PyWcetProfile {
    inner: rtmot::WcetProfile,
}

#[pymethods]
impl PyWcetProfile {
    #[new]
    fn new(
        pre: f64,
        infer_l: f64,
        infer_h: f64,
        as_l: f64,
        as_h: f64,
        post: f64,
    ) -> PyResult<Self> {
        let ms = WcetMs {
            pre,
            infer_l,
            infer_h,
            as_l,
            as_h,
            post,
        };
        Ok(PyWcetProfile {
            inner: ms.to_profile().map_err(err)?,
        })
    }

    /// The measured reference profile.
    #[staticmethod]
    fn reference() -> Self {
        PyWcetProfile {
            inner: rtmot::WcetProfile::reference(),
        }
    }

    fn wcet_ms(&self, pair: &str) -> PyResult<f64> {
        Ok(rtmot::wcet_of(&self.inner, parse_pair(pair)?).as_millis_f64())
    }

    fn __repr__(&self) -> String {
        let w = WcetMs::from_profile(&self.inner);
        format!(
            "WcetProfile(pre={}, infer_l={}, infer_h={}, as_l={}, as_h={}, post={})",
            w.pre, w.infer_l, w.infer_h, w.as_l, w.as_h, w.post
        )
    }
}

/// Rate-monotonic set of periodic tracking tasks.
#[pyclass(name = "TaskSet", module = "rtmot_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTaskSet {
    inner: rtmot::TaskSet,
}

#[pymethods]
impl PyTaskSet {
    /// One task per frame rate, all sharing `profile` (reference if omitted).
    #[staticmethod]
    #[pyo3(signature = (fps, profile=None))]
    fn from_fps(fps: Vec<f64>, profile: Option<PyWcetProfile>) -> PyResult<Self> {
        let profile = profile.map_or_else(rtmot::WcetProfile::reference, |p| p.inner);
        Ok(PyTaskSet {
            inner: rtmot::config::taskset_from_fps(&fps, &profile).map_err(err)?,
        })
    }

    /// The `tasks` list of a JSON config.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let cfg =
            ExperimentConfig::resolve(&ConfigFile::from_json(text).map_err(err)?).map_err(err)?;
        let (_, ts) = cfg
            .tasksets
            .into_iter()
            .next()
            .ok_or_else(|| PyValueError::new_err("config holds no task set"))?;
        Ok(PyTaskSet { inner: ts })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn periods_us(&self) -> Vec<u64> {
        self.inner.iter().map(|t| t.period.as_micros()).collect()
    }

    #[getter]
    fn ids(&self) -> Vec<u32> {
        self.inner.iter().map(|t| t.id).collect()
    }

    fn wcet_us(&self, index: usize, pair: &str) -> PyResult<u64> {
        if index >= self.inner.len() {
            return Err(PyValueError::new_err(format!("no task at index {index}")));
        }
        Ok(self.inner.wcet(index, parse_pair(pair)?).as_micros())
    }

    fn __repr__(&self) -> String {
        let periods: Vec<String> = self.inner.iter().map(|t| t.period.to_string()).collect();
        format!("TaskSet([{}])", periods.join(", "))
    }
}

/// Response times when every job runs under `pair`.
#[pyfunction]
#[pyo3(signature = (taskset, pair="LL"))]
fn rta(py: Python<'_>, taskset: &PyTaskSet, pair: &str) -> PyResult<Py<PyAny>> {
    serialize(py, &rtmot::rta(&taskset.inner, parse_pair(pair)?))
}

/// Offline verdict for a policy name such as `flex` or `static-HH`.
#[pyfunction]
fn schedulable(taskset: &PyTaskSet, policy: &str) -> PyResult<bool> {
    Ok(rtmot::rta(&taskset.inner, parse_policy(policy)?.analysis_pair()).schedulable)
}

#[pyfunction]
fn wcet_of(profile: &PyWcetProfile, pair: &str) -> PyResult<f64> {
    profile.wcet_ms(pair)
}

/// One run over a generated tracking scenario; returns the metrics dict,
/// with the executed jobs under `trace`.
#[pyfunction]
#[pyo3(signature = (taskset, policy="flex", horizon_ms=10_000.0, seed=1, exec_model="wcet"))]
fn simulate(
    py: Python<'_>,
    taskset: &PyTaskSet,
    policy: &str,
    horizon_ms: f64,
    seed: u64,
    exec_model: &str,
) -> PyResult<Py<PyAny>> {
    let policy = parse_policy(policy)?;
    let horizon = Duration::from_millis_f64(horizon_ms).map_err(err)?;
    let model = ExecutionTimeModel::parse(exec_model, seed).map_err(err)?;
    let ts = &taskset.inner;
    let out = py
        .detach(|| {
            let source = rtmot::config::ScenarioSource::Generated(Default::default());
            let scenario = scenario_for(&source, seed, ts, horizon)?;
            run(ts, policy, horizon, model, scenario)
        })
        .map_err(err)?;
    let metrics = run_metrics(ts, policy, seed, &out);
    let mut value = serde_json::to_value(&metrics).map_err(|e| err(e.into()))?;
    let trace: Vec<Value> = out
        .trace
        .records
        .iter()
        .map(|r| {
            serde_json::json!({
                "t_us": r.start.as_micros(),
                "task": r.task_id,
                "job_idx": r.job,
                "pair": r.pair.as_str(),
                "budget_us": r.budget.as_micros(),
                "actual_us": r.actual.as_micros(),
                "inverted": r.inverted,
                "miss": r.miss,
            })
        })
        .collect();
    value["trace"] = Value::Array(trace);
    to_py(py, &value)
}

/// Critical-instant tick simulation of random sets the analysis accepts.
#[pyfunction]
#[pyo3(signature = (seed=1, sets=100))]
fn verify_rta(py: Python<'_>, seed: u64, sets: usize) -> PyResult<Py<PyAny>> {
    let r = py
        .detach(|| verify::verify_rta(seed, sets, &TaskGenParams::default()))
        .map_err(err)?;
    let value = serde_json::json!({
        "sets": r.sets,
        "schedulable_sets": r.schedulable_sets,
        "simulations": r.simulations,
        "disagreements": r.disagreements.len(),
    });
    to_py(py, &value)
}

/// Box as (x, y, w, h) plus velocity (vx, vy).
type Motion = (f64, f64, f64, f64, f64, f64);

fn motion(m: Motion) -> MotionState {
    MotionState::new(m.0, m.1, m.2, m.3).with_velocity(m.4, m.5)
}

#[pyfunction]
fn lambda_size(prev: Motion, cur: Motion) -> PyResult<f64> {
    confidence::lambda_size(&motion(prev), &motion(cur)).map_err(err)
}

#[pyfunction]
fn lambda_velocity(prev: Motion, cur: Motion) -> f64 {
    confidence::lambda_velocity(&motion(prev), &motion(cur))
}

#[pyfunction]
fn lambda_appearance(prev: Vec<f64>, cur: Vec<f64>) -> PyResult<f64> {
    confidence::lambda_appearance(&AppearanceState(prev), &AppearanceState(cur)).map_err(err)
}

#[pymodule]
fn rtmot_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyWcetProfile>()?;
    m.add_class::<PyTaskSet>()?;
    m.add_function(wrap_pyfunction!(rta, m)?)?;
    m.add_function(wrap_pyfunction!(schedulable, m)?)?;
    m.add_function(wrap_pyfunction!(wcet_of, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(verify_rta, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_size, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_velocity, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_appearance, m)?)?;
    m.add(
        "POLICIES",
        Policy::ALL
            .iter()
            .map(|p| p.to_string())
            .collect::<Vec<_>>(),
    )?;
    Ok(())
}
