//! Python bindings.
//!
//! Configuration crosses the boundary as the same JSON document the `cmll`
//! command reads, so a file written for the CLI works unchanged here. Long
//! computations release the GIL.

use cmll::cli::{RunConfig, SolutionSummary};
use cmll::experiments::{run_convergence, run_sweep, SweepResult, SweepSpec};
use cmll::model::Instance;
use cmll::schemes::{solve_scheme, Scheme, SchemeSolution};
use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn py_err(e: cmll::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Parse an optional JSON run configuration; `None` means all defaults.
pub fn parse_config(config: Option<&str>) -> cmll::Result<RunConfig> {
    config.map_or_else(|| Ok(RunConfig::default()), RunConfig::from_json)
}

fn csv_text(write: impl FnOnce(&mut Vec<u8>) -> cmll::Result<()>) -> cmll::Result<String> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
}

/// Sweep spec from a configuration, optionally replaced by a named preset.
pub fn sweep_spec(cfg: &RunConfig, preset: Option<&str>, trials: Option<usize>, base_seed: Option<u64>) -> cmll::Result<SweepSpec> {
    let trials = trials.unwrap_or(cfg.sweep.trials);
    let base_seed = base_seed.unwrap_or(cfg.sweep.base_seed);
    match preset {
        Some(name) => SweepSpec::preset(name, trials, base_seed),
        None => Ok(SweepSpec { trials, base_seed, ..cfg.sweep_spec() }),
    }
}

/// Per-iteration CSV of one scheme over `seeds`.
pub fn convergence_csv(cfg: &RunConfig, scheme: Scheme, seeds: &[u64]) -> cmll::Result<String> {
    let result = run_convergence(&cfg.network, scheme, seeds, &cfg.settings)?;
    csv_text(|b| result.write_csv(b))
}

/// One random network draw.
#[pyclass(name = "Instance", module = "cmll_py", frozen)]
pub struct PyInstance {
    inner: Instance,
    config: RunConfig,
}

#[pymethods]
impl PyInstance {
    /// Draw geometry, channels, caches and requests from `seed`.
    #[new]
    #[pyo3(signature = (seed = 0, config = None))]
    fn new(seed: u64, config: Option<&str>) -> PyResult<Self> {
        let config = parse_config(config).map_err(py_err)?;
        let inner = Instance::generate(&config.network, seed).map_err(py_err)?;
        Ok(Self { inner, config })
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn num_errhs(&self) -> usize {
        self.inner.num_errhs()
    }

    #[getter]
    fn num_users(&self) -> usize {
        self.inner.channels.len()
    }

    #[getter]
    fn num_groups(&self) -> usize {
        self.inner.num_groups()
    }

    #[getter]
    fn antennas(&self) -> usize {
        self.inner.config.antennas
    }

    /// File requested by each user.
    #[getter]
    fn requests(&self) -> Vec<usize> {
        self.inner.requests.clone()
    }

    /// Stacked channel of each user, eRRH-major.
    #[getter]
    fn channels(&self) -> Vec<Vec<Complex64>> {
        self.inner.channels.iter().map(|h| h.iter().copied().collect()).collect()
    }

    /// Whether eRRH `errh` caches the file of multicast group `group`.
    fn group_cached(&self, group: usize, errh: usize) -> PyResult<bool> {
        if group >= self.inner.num_groups() || errh >= self.inner.num_errhs() {
            return Err(PyValueError::new_err("group or eRRH index out of range"));
        }
        Ok(self.inner.cached(group, errh))
    }

    /// Same draw with every file cached everywhere.
    fn with_full_cache(&self) -> Self {
        Self { inner: self.inner.with_full_cache(), config: self.config.clone() }
    }

    /// Same draw with empty caches.
    fn with_empty_cache(&self) -> Self {
        Self { inner: self.inner.with_empty_cache(), config: self.config.clone() }
    }

    /// Run `scheme` (fcbt, pcbt, pcpt, tswc or jceo) with the loop settings of the configuration.
    fn solve(&self, py: Python<'_>, scheme: &str) -> PyResult<PySolution> {
        let scheme: Scheme = scheme.parse().map_err(py_err)?;
        let inner = py.allow_threads(|| solve_scheme(scheme, &self.inner, &self.config.settings)).map_err(py_err)?;
        Ok(PySolution { inner, seed: self.inner.seed })
    }
}

/// Result of one scheme on one instance.
#[pyclass(name = "Solution", module = "cmll_py", frozen)]
pub struct PySolution {
    inner: SchemeSolution,
    seed: u64,
}

#[pymethods]
impl PySolution {
    #[getter]
    fn scheme(&self) -> &'static str {
        self.inner.scheme.name()
    }

    /// `"converged"` or `"max_iterations"`.
    #[getter]
    fn status(&self) -> &'static str {
        self.inner.status.name()
    }

    /// Delivery latency in seconds.
    #[getter]
    fn latency(&self) -> f64 {
        self.inner.latency
    }

    /// Fetch delay in seconds.
    #[getter]
    fn tau(&self) -> f64 {
        self.inner.tau
    }

    #[getter]
    fn edge_rates(&self) -> Vec<f64> {
        self.inner.edge_rates.clone()
    }

    #[getter]
    fn joint_rates(&self) -> Vec<f64> {
        self.inner.joint_rates.clone()
    }

    /// Per-eRRH fronthaul rate; `None` where nothing is fetched.
    #[getter]
    fn fronthaul_rates(&self) -> Vec<Option<f64>> {
        self.inner.fronthaul_rates.iter().map(|&g| g.is_finite().then_some(g)).collect()
    }

    #[getter]
    fn relaxed_latency(&self) -> Option<f64> {
        self.inner.relaxed_latency
    }

    #[getter]
    fn approx_error(&self) -> Option<f64> {
        self.inner.approx_error
    }

    /// Objective trace as `(outer_iter, inner_iter, objective)` tuples.
    #[getter]
    fn trace(&self) -> Vec<(usize, usize, f64)> {
        self.inner.trace.iter().map(|t| (t.outer_iter, t.inner_iter, t.objective)).collect()
    }

    /// The JSON document `cmll solve` writes as `solution.json`.
    fn to_json(&self) -> String {
        serde_json::to_string(&SolutionSummary::new(&self.inner, self.seed)).expect("summary serializes")
    }

    fn __repr__(&self) -> String {
        format!("Solution(scheme={}, status={}, latency={:.6})", self.inner.scheme, self.inner.status.name(), self.inner.latency)
    }
}

/// Outcome of a Monte-Carlo sweep.
#[pyclass(name = "SweepResult", module = "cmll_py", frozen)]
pub struct PySweepResult {
    inner: SweepResult,
}

#[pymethods]
impl PySweepResult {
    /// Per-cell `(param_value, scheme, mean_latency_s, stderr_s, trials, failures)`.
    #[getter]
    fn cells(&self) -> Vec<(f64, &'static str, f64, f64, usize, usize)> {
        self.inner.cells.iter().map(|c| (c.param_value, c.scheme.name(), c.mean_latency_s, c.stderr_s, c.trials, c.failures)).collect()
    }

    /// Per-run rows in the format of `sweep.csv`.
    fn rows_csv(&self) -> PyResult<String> {
        csv_text(|b| self.inner.write_csv(b)).map_err(py_err)
    }

    /// Per-cell summary in the format of `summary.csv`.
    fn summary_csv(&self) -> PyResult<String> {
        csv_text(|b| self.inner.write_summary_csv(b)).map_err(py_err)
    }
}

/// Run the sweep of `config` (or a named preset) on all cores.
#[pyfunction]
#[pyo3(signature = (config = None, preset = None, trials = None, base_seed = None))]
fn sweep(py: Python<'_>, config: Option<&str>, preset: Option<&str>, trials: Option<usize>, base_seed: Option<u64>) -> PyResult<PySweepResult> {
    let cfg = parse_config(config).map_err(py_err)?;
    let spec = sweep_spec(&cfg, preset, trials, base_seed).map_err(py_err)?;
    let inner = py.allow_threads(|| run_sweep(&spec, &cfg.settings)).map_err(py_err)?;
    Ok(PySweepResult { inner })
}

/// Per-iteration traces of `scheme` over `seeds` as CSV text.
#[pyfunction]
#[pyo3(signature = (scheme, seeds, config = None))]
fn convergence(py: Python<'_>, scheme: &str, seeds: Vec<u64>, config: Option<&str>) -> PyResult<String> {
    let cfg = parse_config(config).map_err(py_err)?;
    let scheme: Scheme = scheme.parse().map_err(py_err)?;
    py.allow_threads(|| convergence_csv(&cfg, scheme, &seeds)).map_err(py_err)
}

#[pymodule]
fn cmll_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_class::<PySolution>()?;
    m.add_class::<PySweepResult>()?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(convergence, m)?)?;
    m.add("SCHEMES", Scheme::ALL.iter().map(|s| s.name()).collect::<Vec<_>>())?;
    Ok(())
}
