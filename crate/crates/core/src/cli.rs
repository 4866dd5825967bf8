//! Command-line front end.
//!
//! `cmll solve`, `cmll sweep` and `cmll convergence` read an optional JSON run
//! configuration (see `docs/config.md`), run the library and write CSV/JSON
//! artifacts. Exit codes: `0` success, `2` a solve stopped at an iteration cap,
//! `1` any error (including a sweep where every run failed). Diagnostics go to
//! stderr; stdout carries only the summary.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{run_convergence, run_sweep, SweepParam, SweepSpec};
use crate::linalg::{CMat, CVec};
use crate::model::{Instance, NetworkConfig};
use crate::schemes::{solve_scheme, ExtractionReport, OuterLoopSettings, Scheme, SchemeSolution, SchemeStatus};

pub const SCHEMA_VERSION: u32 = 1;

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

/// Sweep part of a run configuration; the network comes from the top level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub param: SweepParam,
    pub grid: Vec<f64>,
    pub trials: usize,
    pub base_seed: u64,
    pub schemes: Vec<Scheme>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            param: SweepParam::Xi,
            grid: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            trials: 20,
            base_seed: 0,
            schemes: Scheme::ALL.to_vec(),
        }
    }
}

/// Whole run configuration file. Missing keys take their defaults; unknown
/// keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default)]
    pub network: NetworkConfig,
    /// Scheme loop parameters, including the nested `solver` settings.
    #[serde(default)]
    pub settings: OuterLoopSettings,
    #[serde(default)]
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            network: NetworkConfig::default(),
            settings: OuterLoopSettings::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parse and validate a JSON document. Parse errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", cfg.schema_version)));
        }
        cfg.network.validate()?;
        cfg.settings.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn sweep_spec(&self) -> SweepSpec {
        SweepSpec {
            param: self.sweep.param,
            grid: self.sweep.grid.clone(),
            network: self.network.clone(),
            trials: self.sweep.trials,
            base_seed: self.sweep.base_seed,
            schemes: self.sweep.schemes.clone(),
        }
    }
}

/// Serializable digest of a [`SchemeSolution`]. Complex entries are `[re, im]`
/// pairs; unbounded fronthaul rates are `null`.
#[derive(Clone, Debug, Serialize)]
pub struct SolutionSummary {
    pub scheme: Scheme,
    pub seed: u64,
    pub status: SchemeStatus,
    pub latency_s: f64,
    pub tau_s: f64,
    pub edge_rates: Vec<f64>,
    pub joint_rates: Vec<f64>,
    pub fronthaul_rates: Vec<Option<f64>>,
    pub relaxed_latency_s: Option<f64>,
    pub approx_error: Option<f64>,
    pub extraction: Option<ExtractionReport>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub inaccurate_solves: usize,
    pub edge_beams: Vec<Vec<[f64; 2]>>,
    pub joint_beams: Vec<Vec<[f64; 2]>>,
    pub quantization: Vec<Vec<Vec<[f64; 2]>>>,
}

fn vec_pairs(v: &CVec) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn mat_pairs(m: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect()).collect()
}

impl SolutionSummary {
    pub fn new(sol: &SchemeSolution, seed: u64) -> Self {
        Self {
            scheme: sol.scheme,
            seed,
            status: sol.status,
            latency_s: sol.latency,
            tau_s: sol.tau,
            edge_rates: sol.edge_rates.clone(),
            joint_rates: sol.joint_rates.clone(),
            fronthaul_rates: sol.fronthaul_rates.iter().map(|&g| g.is_finite().then_some(g)).collect(),
            relaxed_latency_s: sol.relaxed_latency,
            approx_error: sol.approx_error,
            extraction: sol.extraction.clone(),
            outer_iterations: sol.outer_iterations,
            inner_iterations: sol.inner_iterations,
            inaccurate_solves: sol.inaccurate_solves,
            edge_beams: sol.beams.edge.iter().map(vec_pairs).collect(),
            joint_beams: sol.beams.joint.iter().map(vec_pairs).collect(),
            quantization: sol.beams.quantization.iter().map(mat_pairs).collect(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "cmll", version, about = "Latency-minimizing transmission for cache-aided multicast radio access networks")]
pub struct Cli {
    /// Worker threads for sweeps and convergence runs (1 = serial).
    #[arg(long, global = true, env = "CMLL_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve one instance with one scheme.
    Solve(SolveArgs),
    /// Monte-Carlo sweep over xi, C or S.
    Sweep(SweepArgs),
    /// Per-iteration traces of one scheme over several seeds.
    Convergence(ConvergenceArgs),
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// JSON run configuration; defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scheme: Scheme,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for `solution.json` and `trace.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Reference setup (cache, fronthaul or file-size); replaces the network and sweep sections.
    #[arg(long)]
    pub preset: Option<String>,
    /// Swept parameter: xi, C or S.
    #[arg(long)]
    pub param: Option<SweepParam>,
    /// Comma-separated ascending grid.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub grid: Option<Vec<f64>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub base_seed: Option<u64>,
    /// Comma-separated scheme list.
    #[arg(long, value_delimiter = ',')]
    pub schemes: Option<Vec<Scheme>>,
    /// Output directory for `sweep.csv` and `summary.csv`.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct ConvergenceArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scheme: Scheme,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', required = true)]
    pub seeds: Vec<u64>,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(())
}

fn cmd_solve(args: &SolveArgs, stdout: &mut dyn Write) -> Result<i32> {
    let cfg = RunConfig::load_or_default(args.config.as_deref())?;
    let inst = Instance::generate(&cfg.network, args.seed)?;
    let sol = solve_scheme(args.scheme, &inst, &cfg.settings)?;
    let summary = SolutionSummary::new(&sol, args.seed);
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        fs::write(dir.join("solution.json"), json + "\n")?;
        let mut w = csv::Writer::from_path(dir.join("trace.csv"))?;
        for t in &sol.trace {
            w.serialize(t)?;
        }
        w.flush()?;
    }
    writeln!(stdout, "scheme={} seed={} status={} latency_s={} tau_s={}", sol.scheme, args.seed, sol.status.name(), sol.latency, sol.tau)?;
    Ok(if sol.status == SchemeStatus::Converged { 0 } else { 2 })
}

fn cmd_sweep(args: &SweepArgs, stdout: &mut dyn Write) -> Result<i32> {
    let cfg = RunConfig::load_or_default(args.config.as_deref())?;
    let mut spec = match &args.preset {
        Some(name) => SweepSpec::preset(name, cfg.sweep.trials, cfg.sweep.base_seed)?,
        None => cfg.sweep_spec(),
    };
    if let Some(p) = args.param {
        spec.param = p;
    }
    if let Some(g) = &args.grid {
        spec.grid = g.clone();
    }
    if let Some(t) = args.trials {
        spec.trials = t;
    }
    if let Some(b) = args.base_seed {
        spec.base_seed = b;
    }
    if let Some(s) = &args.schemes {
        spec.schemes = s.clone();
    }
    let result = run_sweep(&spec, &cfg.settings)?;
    for (g, t, scheme, msg) in &result.errors {
        eprintln!("{}={} trial {t} {scheme}: {msg}", spec.param.name(), spec.grid[*g]);
    }
    fs::create_dir_all(&args.out_dir)?;
    result.write_csv(fs::File::create(args.out_dir.join("sweep.csv"))?)?;
    result.write_summary_csv(fs::File::create(args.out_dir.join("summary.csv"))?)?;
    writeln!(stdout, "{:>8} {:>6} {:>12} {:>10} {:>7} {:>9}", spec.param.name(), "scheme", "mean_s", "stderr_s", "trials", "failures")?;
    for c in &result.cells {
        writeln!(stdout, "{:>8} {:>6} {:>12.6} {:>10.6} {:>7} {:>9}", c.param_value, c.scheme, c.mean_latency_s, c.stderr_s, c.trials, c.failures)?;
    }
    Ok(if result.all_failed() { 1 } else { 0 })
}

fn cmd_convergence(args: &ConvergenceArgs, stdout: &mut dyn Write) -> Result<i32> {
    let cfg = RunConfig::load_or_default(args.config.as_deref())?;
    let result = run_convergence(&cfg.network, args.scheme, &args.seeds, &cfg.settings)?;
    for (seed, msg) in &result.failures {
        eprintln!("seed {seed}: {msg}");
    }
    create_parent(&args.out)?;
    result.write_csv(fs::File::create(&args.out)?)?;
    for (seed, sol) in &result.solutions {
        writeln!(stdout, "scheme={} seed={seed} status={} latency_s={} records={}", sol.scheme, sol.status.name(), sol.latency, sol.trace.len())?;
    }
    Ok(if result.solutions.is_empty() { 1 } else { 0 })
}

/// Resolve the worker count: the flag (or `CMLL_THREADS`) if given, else all cores.
fn build_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::InvalidConfig("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::InvalidConfig(e.to_string()))
}

/// Parse `args`, run the command and return the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    // The summary is buffered so the command can run inside the pool.
    let mut summary = Vec::new();
    let outcome = build_pool(cli.threads).and_then(|pool| {
        pool.install(|| match &cli.command {
            Command::Solve(a) => cmd_solve(a, &mut summary),
            Command::Sweep(a) => cmd_sweep(a, &mut summary),
            Command::Convergence(a) => cmd_convergence(a, &mut summary),
        })
    });
    let outcome = outcome.and_then(|code| {
        stdout.write_all(&summary)?;
        stdout.flush()?;
        Ok(code)
    });
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_takes_defaults() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_key_is_named_with_position() {
        let err = RunConfig::from_json("{\n  \"network\": {\"num_errhs\": 3,\n  \"bogus_key\": 1}\n}").unwrap_err().to_string();
        assert!(err.contains("bogus_key"), "{err}");
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn schema_version_is_checked() {
        assert!(RunConfig::from_json("{\"schema_version\": 2}").is_err());
        assert!(RunConfig::from_json("{\"schema_version\": 1}").is_ok());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::from_json("{\"settings\": {\"omega\": 1.5}}").is_err());
        assert!(RunConfig::from_json("{\"network\": {\"cache_fraction\": 2}}").is_err());
    }

    #[test]
    fn default_config_round_trips() {
        let text = serde_json::to_string(&RunConfig::default()).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), RunConfig::default());
    }
}
