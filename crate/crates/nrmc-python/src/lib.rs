//! Python module `nrmc_py`: the sampling library behind a thin dict-based
//! surface.
//!
//! The `Experiment` class takes the same keys a config file holds, resolves
//! them eagerly (so mistakes raise `ValueError` before anything runs), and
//! hands results back as plain dicts. The retained-variable primitives are
//! exposed directly so the update rule can be poked at from a notebook
//! without a chain around it. Configuration mistakes map to `ValueError`,
//! runtime failures to `RuntimeError`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList, PyTuple};

use nrmc::chain::{self, AcceptancePolicy, RngHandle};
use nrmc::diagnostics;
use nrmc::harness::{self, ExperimentConfig, ExperimentOutcome, ResolvedExperiment, PRESET_NAMES};

fn to_py_err(err: nrmc::Error) -> PyErr {
    if err.is_config() {
        PyValueError::new_err(err.to_string())
    } else {
        PyRuntimeError::new_err(err.to_string())
    }
}

/// The library guards `v` with debug assertions; re-check here so a bad
/// argument raises instead of aborting the interpreter.
fn check_v(v: f64) -> PyResult<()> {
    if (-1.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(PyValueError::new_err(format!(
            "v must lie in [-1, 1], got {v}"
        )))
    }
}

/// Deterministic generator with the library's draw order. Two `Rng`s built
/// from the same seed produce identical streams, so Python-side experiments
/// replay exactly.
#[pyclass]
pub struct Rng {
    inner: RngHandle,
}

#[pymethods]
impl Rng {
    #[new]
    fn new(seed: u64) -> Self {
        Self {
            inner: RngHandle::new(seed),
        }
    }

    /// Uniform on `[0, 1)`.
    fn uniform(&mut self) -> f64 {
        self.inner.uniform()
    }

    /// Uniform on `[-1, 1)`.
    fn uniform_signed(&mut self) -> f64 {
        self.inner.uniform_signed()
    }

    fn standard_normal(&mut self) -> f64 {
        self.inner.standard_normal()
    }

    /// Gamma with the given shape, scaled to mean 1.
    fn gamma_mean_one(&mut self, shape: f64) -> PyResult<f64> {
        self.inner.gamma_mean_one(shape).map_err(to_py_err)
    }

    fn __repr__(&self) -> &'static str {
        "Rng(...)"
    }
}

/// Translate the retained variable by `delta`, plus uniform noise on
/// `[-noise, noise]` when `noise > 0`, wrapping back into `[-1, 1]`.
/// `rng` is consulted only when there is noise to draw.
#[pyfunction]
#[pyo3(signature = (v, delta, noise = 0.0, rng = None))]
fn advance_slice(v: f64, delta: f64, noise: f64, rng: Option<PyRefMut<'_, Rng>>) -> PyResult<f64> {
    check_v(v)?;
    if !(noise >= 0.0) {
        return Err(PyValueError::new_err(format!(
            "noise must be >= 0, got {noise}"
        )));
    }
    let policy = AcceptancePolicy::NonReversible {
        delta,
        noise_half_width: noise,
    };
    match rng {
        Some(mut rng) => Ok(chain::advance_slice(v, &policy, &mut rng.inner)),
        // No draw happens without noise, so any handle does.
        None if noise == 0.0 => Ok(chain::advance_slice(v, &policy, &mut RngHandle::new(0))),
        None => Err(PyValueError::new_err("noise > 0 requires an Rng")),
    }
}

/// Decide acceptance of a proposal with log density ratio `log_ratio` from
/// the retained variable `v`. Returns `(accepted, new_v)`; on acceptance
/// `new_v` is the rescaled variable, on rejection it is `v` unchanged.
#[pyfunction]
fn accept_with_slice(v: f64, log_ratio: f64) -> PyResult<(bool, f64)> {
    check_v(v)?;
    let decision = chain::accept_with_slice(v, log_ratio).map_err(to_py_err)?;
    Ok((decision.accepted, decision.new_v))
}

/// Baseline rule: accept when a fresh uniform falls below the density
/// ratio.
#[pyfunction]
fn accept_standard(log_ratio: f64, mut rng: PyRefMut<'_, Rng>) -> PyResult<bool> {
    chain::accept_standard(&mut rng.inner, log_ratio).map_err(to_py_err)
}

/// Autocorrelation time of a scalar series, summed to `max_lag`. Centers
/// on `known_mean` when given, the sample mean otherwise. Returns a dict
/// with `tau`, `tau_stderr` (NaN when the series is too short to batch),
/// `mean_used`, and `mean_source`.
#[pyfunction]
#[pyo3(signature = (values, max_lag, known_mean = None))]
fn act(
    py: Python<'_>,
    values: Vec<f64>,
    max_lag: usize,
    known_mean: Option<f64>,
) -> PyResult<Py<PyDict>> {
    let (estimate, stderr) =
        diagnostics::act_with_stderr(&values, max_lag, known_mean).map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("tau", estimate.tau)?;
    out.set_item("tau_stderr", stderr)?;
    out.set_item("mean_used", estimate.mean_used)?;
    out.set_item("mean_source", estimate.mean_source.to_string())?;
    Ok(out.into())
}

/// Random-walk proposal width for a raw stepsize: `step / sqrt(dim)`.
#[pyfunction]
fn scale_rwm(step_raw: f64, dim: usize) -> f64 {
    harness::scale_rwm(step_raw, dim)
}

/// Langevin stepsize and persistence for a raw stepsize:
/// `(step / dim**(1/6), alpha_base ** eta)`.
#[pyfunction]
fn scale_langevin(step_raw: f64, alpha_base: f64, dim: usize) -> (f64, f64) {
    harness::scale_langevin(step_raw, alpha_base, dim)
}

/// Updates per recorded group paired with the Langevin scaling:
/// `floor(10 * dim**(1/3))`.
#[pyfunction]
fn langevin_group_size(dim: usize) -> usize {
    harness::langevin_group_size(dim)
}

/// Cost-weighted autocorrelation ratio `(tau_a * cost_a) / (tau_b *
/// cost_b)`; above 1 means `b` wins.
#[pyfunction]
fn efficiency_ratio(tau_a: f64, cost_a: f64, tau_b: f64, cost_b: f64) -> PyResult<f64> {
    harness::efficiency_ratio(tau_a, cost_a, tau_b, cost_b).map_err(to_py_err)
}

/// Preset names, in the order the CLI lists them.
#[pyfunction]
fn presets() -> Vec<&'static str> {
    PRESET_NAMES.to_vec()
}

/// One-line description of a preset.
#[pyfunction]
fn preset_summary(name: &str) -> PyResult<&'static str> {
    let summary = harness::preset_summary(name);
    if summary.is_empty() {
        return Err(PyValueError::new_err(format!("unknown preset '{name}'")));
    }
    Ok(summary)
}

/// str() mirrors the config-file surface: one parser, one set of messages.
/// Sequences are comma-joined for keys like `scalars`.
fn render_config_value(value: &Bound<'_, PyAny>) -> PyResult<String> {
    let items: Option<Vec<Bound<'_, PyAny>>> = if let Ok(list) = value.cast::<PyList>() {
        Some(list.iter().collect())
    } else if let Ok(tuple) = value.cast::<PyTuple>() {
        Some(tuple.iter().collect())
    } else {
        None
    };
    match items {
        Some(items) => {
            let mut parts = Vec::with_capacity(items.len());
            for item in items {
                parts.push(item.str()?.extract::<String>()?);
            }
            Ok(parts.join(","))
        }
        None => value.str()?.extract::<String>(),
    }
}

/// An experiment resolved from the keys a config file holds.
///
/// Values are coerced through `str()`, so `{"dim": 40}` and `{"dim": "40"}`
/// mean the same thing; lists and tuples become comma-joined strings (for
/// `scalars`); `None` values are skipped. Resolution happens in the
/// constructor, so a bad configuration raises `ValueError` before anything
/// runs.
#[pyclass]
pub struct Experiment {
    resolved: ResolvedExperiment,
}

#[pymethods]
impl Experiment {
    #[new]
    fn new(config: &Bound<'_, PyDict>) -> PyResult<Self> {
        let mut cfg = ExperimentConfig::default();
        for (key, value) in config.iter() {
            let key: String = key
                .extract()
                .map_err(|_| PyValueError::new_err("config keys must be strings"))?;
            if value.is_none() {
                continue;
            }
            let rendered = render_config_value(&value)?;
            cfg.set(&key, &rendered).map_err(to_py_err)?;
        }
        let resolved = harness::resolve(&cfg).map_err(to_py_err)?;
        Ok(Self { resolved })
    }

    /// Burn in, run, and summarize: `{"rejection_rate": float, "scalars":
    /// [{"name", "mean_source", "mean_estimate", "tau", "tau_stderr"}]}`.
    fn run(&self, py: Python<'_>) -> PyResult<Py<PyDict>> {
        let resolved = self.resolved.clone();
        let outcome = py
            .detach(move || harness::run_outcome(&resolved))
            .map_err(to_py_err)?;
        outcome_dict(py, &outcome)
    }

    /// Burn in, then trace the next `n_updates` accept/reject decisions as
    /// `(update, u, rejected)` triples, where `u` is the uniform the
    /// decision tested.
    fn trace(&self, py: Python<'_>, n_updates: usize) -> PyResult<Vec<(usize, f64, bool)>> {
        let resolved = self.resolved.clone();
        let rows = py
            .detach(move || harness::run_trace(&resolved, n_updates))
            .map_err(to_py_err)?;
        Ok(rows.into_iter().map(|r| (r.update, r.u, r.rejected)).collect())
    }

    /// Run and render the outcome in the CLI's CSV format, header included:
    /// one row per scalar, byte-identical to `nrmc run` with the same
    /// configuration.
    fn csv(&self, py: Python<'_>) -> PyResult<String> {
        let resolved = self.resolved.clone();
        py.detach(move || -> nrmc::Result<String> {
            let outcome = harness::run_outcome(&resolved)?;
            let rows = harness::rows_for(&resolved, &outcome, None);
            let mut buf = Vec::new();
            harness::write_csv(&rows, &mut buf).expect("writing to a Vec cannot fail");
            Ok(String::from_utf8(buf).expect("rows are ASCII"))
        })
        .map_err(to_py_err)
    }

    /// Every concrete parameter the run will use, as a dict. Unused knobs
    /// (e.g. `delta` under the standard policy) come back as `None`.
    fn resolved(&self, py: Python<'_>) -> PyResult<Py<PyDict>> {
        let r = &self.resolved;
        let out = PyDict::new(py);
        out.set_item("preset", r.preset.clone())?;
        out.set_item("target", r.target_name.clone())?;
        out.set_item("dim", r.dim)?;
        out.set_item("rho", r.rho)?;
        out.set_item("kernel", r.kernel.to_string())?;
        out.set_item("policy", r.policy_kind.to_string())?;
        out.set_item("delta", r.delta)?;
        out.set_item("noise", r.noise)?;
        out.set_item("step_raw", r.step_raw)?;
        out.set_item("step", r.step)?;
        out.set_item("alpha_base", r.alpha_base)?;
        out.set_item("alpha", r.alpha)?;
        out.set_item("leapfrog_steps", r.leapfrog_steps)?;
        out.set_item("jitter_shape", r.jitter_shape)?;
        out.set_item("updates_per_group", r.updates_per_group)?;
        out.set_item("gibbs_every", r.gibbs_every)?;
        out.set_item("groups", r.groups)?;
        out.set_item("burnin", r.burnin)?;
        out.set_item("seed", r.seed)?;
        out.set_item("max_lag", r.max_lag)?;
        let scalar_names: Vec<String> = r.scalars.iter().map(|s| s.name.clone()).collect();
        out.set_item("scalars", scalar_names)?;
        out.set_item("grad_evals_per_group", r.grad_evals_per_group)?;
        Ok(out.into())
    }

    fn __repr__(&self) -> String {
        let r = &self.resolved;
        let what = match &r.preset {
            Some(preset) => format!("preset='{preset}'"),
            None => format!("target='{}'", r.target_name),
        };
        format!(
            "Experiment({what}, kernel='{}', policy='{}', groups={})",
            r.kernel, r.policy_kind, r.groups
        )
    }
}

fn outcome_dict(py: Python<'_>, outcome: &ExperimentOutcome) -> PyResult<Py<PyDict>> {
    let out = PyDict::new(py);
    out.set_item("rejection_rate", outcome.rejection_rate)?;
    let scalars = PyList::empty(py);
    for s in &outcome.scalars {
        let entry = PyDict::new(py);
        entry.set_item("name", s.name.clone())?;
        entry.set_item("mean_source", s.mean_source.to_string())?;
        entry.set_item("mean_estimate", s.mean_estimate)?;
        entry.set_item("tau", s.tau)?;
        entry.set_item("tau_stderr", s.tau_stderr)?;
        scalars.append(entry)?;
    }
    out.set_item("scalars", scalars)?;
    Ok(out.into())
}

#[pymodule]
pub fn nrmc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Rng>()?;
    m.add_class::<Experiment>()?;
    m.add_function(wrap_pyfunction!(advance_slice, m)?)?;
    m.add_function(wrap_pyfunction!(accept_with_slice, m)?)?;
    m.add_function(wrap_pyfunction!(accept_standard, m)?)?;
    m.add_function(wrap_pyfunction!(act, m)?)?;
    m.add_function(wrap_pyfunction!(scale_rwm, m)?)?;
    m.add_function(wrap_pyfunction!(scale_langevin, m)?)?;
    m.add_function(wrap_pyfunction!(langevin_group_size, m)?)?;
    m.add_function(wrap_pyfunction!(efficiency_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(preset_summary, m)?)?;
    Ok(())
}
