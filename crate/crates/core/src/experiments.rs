//! Monte-Carlo sweeps and convergence traces.
//!
//! Trial `t` of a sweep uses seed `base_seed + t` at every grid point and for
//! every scheme, so all cells of one trial share positions, channels and
//! requests (instance streams are independent, so changing the caching
//! proportion only redraws the cache). Trials run on the ambient rayon pool;
//! results are assembled in job order, so the output does not depend on the
//! number of threads.

use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Instance, NetworkConfig};
use crate::schemes::{solve_scheme, OuterLoopSettings, Scheme, SchemeSolution, SchemeStatus};

/// The swept network parameter.
/// Serialized as its `name`; the lowercase spellings are accepted too.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    /// Fractional caching proportion.
    #[serde(rename = "xi")]
    Xi,
    /// Fronthaul capacity in nats/Hz/s.
    #[serde(rename = "C", alias = "c")]
    C,
    /// File size in nats/Hz.
    #[serde(rename = "S", alias = "s")]
    S,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Xi => "xi",
            SweepParam::C => "C",
            SweepParam::S => "S",
        }
    }

    /// `base` with this parameter set to `value`.
    pub fn apply(self, base: &NetworkConfig, value: f64) -> NetworkConfig {
        let mut cfg = base.clone();
        match self {
            SweepParam::Xi => cfg.cache_fraction = value,
            SweepParam::C => cfg.fronthaul_capacity = value,
            SweepParam::S => cfg.file_size = value,
        }
        cfg
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "xi" => Ok(SweepParam::Xi),
            "c" => Ok(SweepParam::C),
            "s" => Ok(SweepParam::S),
            _ => Err(Error::InvalidConfig(format!("unknown sweep parameter `{s}` (expected xi, C or S)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: SweepParam,
    /// Non-empty and ascending.
    pub grid: Vec<f64>,
    pub network: NetworkConfig,
    pub trials: usize,
    pub base_seed: u64,
    pub schemes: Vec<Scheme>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.grid.is_empty() {
            return bad("sweep grid is empty".into());
        }
        if self.grid.windows(2).any(|w| !(w[0] < w[1])) || self.grid.iter().any(|v| !v.is_finite()) {
            return bad(format!("sweep grid must be finite and strictly ascending, got {:?}", self.grid));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.schemes.is_empty() {
            return bad("scheme list is empty".into());
        }
        if self.base_seed.checked_add(self.trials as u64).is_none() {
            return bad("base_seed + trials overflows".into());
        }
        for &v in &self.grid {
            self.param.apply(&self.network, v).validate()?;
        }
        Ok(())
    }

    /// Named reference sweeps over one parameter each.
    ///
    /// * `cache`: `xi` over `{0, 0.2, ..., 1}` with S = 1.5, C = 2, N_t = 1.
    /// * `fronthaul`: `C` over `{1, 1.5, 2, 2.5, 3}` with S = 1.2, N_t = 4.
    /// * `file-size`: `S` over `{0.8, 1.2, 1.6, 2.0, 2.4}` with C = 1.5, N_t = 4.
    ///
    /// All use P = 20 dB, K_R = 3, K_U = 6, G = 3 and every scheme.
    pub fn preset(name: &str, trials: usize, base_seed: u64) -> Result<Self> {
        let base = NetworkConfig::default();
        let (param, grid, network) = match name {
            "cache" => (SweepParam::Xi, vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0], NetworkConfig { file_size: 1.5, fronthaul_capacity: 2.0, antennas: 1, ..base }),
            "fronthaul" => (SweepParam::C, vec![1.0, 1.5, 2.0, 2.5, 3.0], NetworkConfig { file_size: 1.2, antennas: 4, ..base }),
            "file-size" => (SweepParam::S, vec![0.8, 1.2, 1.6, 2.0, 2.4], NetworkConfig { fronthaul_capacity: 1.5, antennas: 4, ..base }),
            other => return Err(Error::InvalidConfig(format!("unknown preset `{other}` (expected cache, fronthaul or file-size)"))),
        };
        Ok(SweepSpec { param, grid, network, trials, base_seed, schemes: Scheme::ALL.to_vec() })
    }
}

/// One scheme on one trial at one grid point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub param_name: &'static str,
    pub param_value: f64,
    pub scheme: Scheme,
    pub trial: usize,
    pub seed: u64,
    /// Empty when the scheme failed.
    pub latency_s: Option<f64>,
    pub tau_s: Option<f64>,
    /// `converged`, `max_iterations` or `error`.
    pub status: &'static str,
}

/// Aggregate of one (grid point, scheme) cell over the retained trials.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellSummary {
    pub param_value: f64,
    pub scheme: Scheme,
    pub mean_latency_s: f64,
    /// Standard error of the mean (`0` with a single trial).
    pub stderr_s: f64,
    /// Trials that entered the mean.
    pub trials: usize,
    /// Trials where this scheme failed.
    pub failures: usize,
    /// Trials dropped because some scheme failed at this grid point.
    pub excluded: usize,
    pub max_iteration_trials: usize,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub spec: SweepSpec,
    /// Grid-major, then trial, then scheme in spec order.
    pub rows: Vec<SweepRow>,
    /// Grid-major, then scheme in spec order.
    pub cells: Vec<CellSummary>,
    /// Error messages of failed runs as `(grid index, trial, scheme, message)`.
    pub errors: Vec<(usize, usize, Scheme, String)>,
}

impl SweepResult {
    pub fn cell(&self, param_value: f64, scheme: Scheme) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.param_value == param_value && c.scheme == scheme)
    }

    /// Paired per-trial latencies of one scheme at one grid point, restricted
    /// to trials where every scheme returned a solution.
    pub fn paired_latencies(&self, param_value: f64, scheme: Scheme) -> Vec<f64> {
        let retained = self.retained_trials(param_value);
        self.rows
            .iter()
            .filter(|r| r.param_value == param_value && r.scheme == scheme && retained.contains(&r.trial))
            .filter_map(|r| r.latency_s)
            .collect()
    }

    fn retained_trials(&self, param_value: f64) -> Vec<usize> {
        (0..self.spec.trials)
            .filter(|&t| self.rows.iter().filter(|r| r.param_value == param_value && r.trial == t).all(|r| r.latency_s.is_some()))
            .collect()
    }

    /// Whether every run failed.
    pub fn all_failed(&self) -> bool {
        self.rows.iter().all(|r| r.latency_s.is_none())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for cell in &self.cells {
            w.serialize(cell)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct TrialRun {
    grid_index: usize,
    trial: usize,
    outcomes: Vec<std::result::Result<SchemeSolution, String>>,
}

fn run_trial(cfg: &NetworkConfig, seed: u64, schemes: &[Scheme], settings: &OuterLoopSettings) -> Vec<std::result::Result<SchemeSolution, String>> {
    match Instance::generate(cfg, seed) {
        Ok(inst) => schemes.iter().map(|&s| solve_scheme(s, &inst, settings).map_err(|e| e.to_string())).collect(),
        Err(e) => schemes.iter().map(|_| Err(e.to_string())).collect(),
    }
}

/// Run every scheme on every (grid point, trial) pair.
///
/// Scheme errors are recorded per row and never abort the sweep. A trial in
/// which any scheme failed at a grid point is left out of that grid point's
/// means for all schemes.
pub fn run_sweep(spec: &SweepSpec, settings: &OuterLoopSettings) -> Result<SweepResult> {
    spec.validate()?;
    settings.validate()?;
    let jobs: Vec<(usize, usize)> = (0..spec.grid.len()).flat_map(|g| (0..spec.trials).map(move |t| (g, t))).collect();
    let runs: Vec<TrialRun> = jobs
        .par_iter()
        .map(|&(grid_index, trial)| {
            let cfg = spec.param.apply(&spec.network, spec.grid[grid_index]);
            let outcomes = run_trial(&cfg, spec.base_seed + trial as u64, &spec.schemes, settings);
            TrialRun { grid_index, trial, outcomes }
        })
        .collect();

    let mut rows = Vec::with_capacity(runs.len() * spec.schemes.len());
    let mut errors = Vec::new();
    for run in &runs {
        for (&scheme, outcome) in spec.schemes.iter().zip(&run.outcomes) {
            let base = SweepRow {
                param_name: spec.param.name(),
                param_value: spec.grid[run.grid_index],
                scheme,
                trial: run.trial,
                seed: spec.base_seed + run.trial as u64,
                latency_s: None,
                tau_s: None,
                status: "error",
            };
            rows.push(match outcome {
                Ok(sol) => SweepRow { latency_s: Some(sol.latency), tau_s: Some(sol.tau), status: sol.status.name(), ..base },
                Err(msg) => {
                    errors.push((run.grid_index, run.trial, scheme, msg.clone()));
                    base
                }
            });
        }
    }

    let mut cells = Vec::with_capacity(spec.grid.len() * spec.schemes.len());
    for (g, &value) in spec.grid.iter().enumerate() {
        let trial_runs: Vec<&TrialRun> = runs.iter().filter(|r| r.grid_index == g).collect();
        let complete: Vec<&&TrialRun> = trial_runs.iter().filter(|r| r.outcomes.iter().all(|o| o.is_ok())).collect();
        for (s, &scheme) in spec.schemes.iter().enumerate() {
            let values: Vec<f64> = complete.iter().map(|r| r.outcomes[s].as_ref().map(|x| x.latency).unwrap_or(f64::NAN)).collect();
            let (mean, stderr) = mean_stderr(&values);
            let failures = trial_runs.iter().filter(|r| r.outcomes[s].is_err()).count();
            let capped = complete.iter().filter(|r| matches!(&r.outcomes[s], Ok(x) if x.status == SchemeStatus::MaxIterations)).count();
            cells.push(CellSummary {
                param_value: value,
                scheme,
                mean_latency_s: mean,
                stderr_s: stderr,
                trials: values.len(),
                failures,
                excluded: trial_runs.len() - complete.len(),
                max_iteration_trials: capped,
            });
        }
    }
    Ok(SweepResult { spec: spec.clone(), rows, cells, errors })
}

/// Sample mean and standard error; `NaN` mean for an empty sample.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// One trace record of one seed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub scheme: Scheme,
    pub seed: u64,
    pub outer_iter: usize,
    pub inner_iter: usize,
    pub objective: f64,
    /// Empty for schemes without the fetch-time coupling.
    pub approx_error: Option<f64>,
    pub lambda: Option<f64>,
    pub rho: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ConvergenceResult {
    pub rows: Vec<ConvergenceRow>,
    /// Final solution per successful seed, in seed order.
    pub solutions: Vec<(u64, SchemeSolution)>,
    pub failures: Vec<(u64, String)>,
}

impl ConvergenceResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trace `scheme` on one instance per seed.
pub fn run_convergence(network: &NetworkConfig, scheme: Scheme, seeds: &[u64], settings: &OuterLoopSettings) -> Result<ConvergenceResult> {
    network.validate()?;
    settings.validate()?;
    let outcomes: Vec<(u64, std::result::Result<SchemeSolution, String>)> = seeds
        .par_iter()
        .map(|&seed| {
            let out = Instance::generate(network, seed).and_then(|inst| solve_scheme(scheme, &inst, settings)).map_err(|e| e.to_string());
            (seed, out)
        })
        .collect();
    let mut rows = Vec::new();
    let mut solutions = Vec::new();
    let mut failures = Vec::new();
    for (seed, out) in outcomes {
        match out {
            Ok(sol) => {
                rows.extend(sol.trace.iter().map(|t| ConvergenceRow {
                    scheme,
                    seed,
                    outer_iter: t.outer_iter,
                    inner_iter: t.inner_iter,
                    objective: t.objective,
                    approx_error: t.approx_error,
                    lambda: t.lambda,
                    rho: t.rho,
                }));
                solutions.push((seed, sol));
            }
            Err(msg) => failures.push((seed, msg)),
        }
    }
    Ok(ConvergenceResult { rows, solutions, failures })
}
