//! Latency-minimizing transmission schemes.
//!
//! * [`Scheme::Fcbt`]: every requested file is cached, eRRHs beamform from cache.
//! * [`Scheme::Pcbt`]: uncached parts are fetched first, then everything is sent jointly.
//! * [`Scheme::Pcpt`]: cached parts are sent while fetching, the rest afterwards.
//! * [`Scheme::Tswc`]: no caching, i.e. PCBT on an empty cache.
//! * [`Scheme::Jceo`]: max-min delivery rate baseline without the fetch-time coupling.
//!
//! Each driver alternates between building a convex surrogate around the
//! current iterate ([`crate::ir`]) and solving it ([`crate::solver`]). The
//! partial-caching drivers wrap that loop in penalty-dual updates and finish
//! with rank-one extraction of the lifted beamformers.

mod extract;
mod fcbt;
mod init;
mod partial;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::model::{BeamformerSet, Instance};
use crate::solver::SolverSettings;

pub use extract::{evaluate_beams, randomize_rank_one, Evaluation, ExtractionReport, RelaxedSolution};
pub use fcbt::solve_fcbt;
pub use init::{initialize_fcbt, initialize_partial};
pub use partial::{solve_jceo_baseline, solve_pcbt, solve_pcpt, solve_tswc};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Fcbt,
    Pcbt,
    Pcpt,
    Tswc,
    Jceo,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::Fcbt, Scheme::Pcbt, Scheme::Pcpt, Scheme::Tswc, Scheme::Jceo];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Fcbt => "fcbt",
            Scheme::Pcbt => "pcbt",
            Scheme::Pcpt => "pcpt",
            Scheme::Tswc => "tswc",
            Scheme::Jceo => "jceo",
        }
    }

    /// Whether the scheme runs the penalty-dual outer loop.
    pub fn has_fetch_coupling(self) -> bool {
        matches!(self, Scheme::Pcbt | Scheme::Pcpt | Scheme::Tswc)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scheme `{s}` (expected fcbt, pcbt, pcpt, tswc or jceo)")))
    }
}

/// How the pipelined warm start seeds the per-phase rates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmStartRate {
    /// `nu * min(min_k ln(mu_k) / ln(chi_k), S / (tau0 + theta))`, clamped to the
    /// achievable rate when it overshoots.
    LogQuotient,
    /// `nu * min(min_k ln(mu_k / chi_k), S / (tau0 + theta))`.
    LogRatio,
}

/// Parameters of the successive-approximation and penalty-dual loops.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OuterLoopSettings {
    /// Final stop threshold on relative objective change and on the coupling residual.
    pub epsilon: f64,
    /// Initial residual threshold deciding between multiplier and penalty updates.
    pub varsigma0: f64,
    /// Inner stop threshold of the first outer iteration.
    pub epsilon0: f64,
    pub lambda0: f64,
    pub rho0: f64,
    pub omega: f64,
    /// Rate shrink of the pipelined warm start.
    pub nu: f64,
    /// Power fraction of the partial-caching initialization.
    pub delta: f64,
    pub max_inner_iterations: usize,
    pub max_outer_iterations: usize,
    pub randomization_candidates: usize,
    /// Eigenvalue ratio `lambda_2 / lambda_1` below which a matrix counts as rank one.
    pub rank_one_tolerance: f64,
    pub warm_start_rate: WarmStartRate,
    pub solver: SolverSettings,
}

impl Default for OuterLoopSettings {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            varsigma0: 1e-3,
            epsilon0: 1e-3,
            lambda0: 0.5,
            rho0: 0.5,
            omega: 0.6,
            nu: 0.1,
            delta: 0.5,
            max_inner_iterations: 100,
            max_outer_iterations: 30,
            randomization_candidates: 50,
            rank_one_tolerance: 1e-6,
            warm_start_rate: WarmStartRate::LogQuotient,
            solver: SolverSettings::default(),
        }
    }
}

impl OuterLoopSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.omega > 0.0 && self.omega < 1.0) {
            return bad("omega must lie in (0, 1)");
        }
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return bad("nu must lie in (0, 1)");
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return bad("delta must lie in (0, 1]");
        }
        if !(self.epsilon > 0.0 && self.epsilon0 > 0.0 && self.varsigma0 > 0.0) {
            return bad("epsilon, epsilon0 and varsigma0 must be positive");
        }
        if !(self.rho0 > 0.0) || !self.lambda0.is_finite() {
            return bad("rho0 must be positive and lambda0 finite");
        }
        if self.max_inner_iterations == 0 || self.max_outer_iterations == 0 {
            return bad("iteration caps must be positive");
        }
        if self.randomization_candidates == 0 {
            return bad("randomization_candidates must be positive");
        }
        if !(self.rank_one_tolerance > 0.0 && self.rank_one_tolerance < 1.0) {
            return bad("rank_one_tolerance must lie in (0, 1)");
        }
        self.solver.validate().map_err(Error::InvalidConfig)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeStatus {
    Converged,
    /// An iteration cap was hit; the best iterate is returned.
    MaxIterations,
}

impl SchemeStatus {
    pub fn name(self) -> &'static str {
        match self {
            SchemeStatus::Converged => "converged",
            SchemeStatus::MaxIterations => "max_iterations",
        }
    }
}

/// One inner iteration of a driver. Iteration `0` of every outer round is the
/// objective at its start point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub outer_iter: usize,
    pub inner_iter: usize,
    pub objective: f64,
    /// `|S/theta - min_i g_i|` for the fetch-coupled schemes.
    pub approx_error: Option<f64>,
    pub lambda: Option<f64>,
    pub rho: Option<f64>,
}

/// Outcome of one scheme on one instance.
#[derive(Clone, Debug)]
pub struct SchemeSolution {
    pub scheme: Scheme,
    pub status: SchemeStatus,
    /// Delivery latency in seconds, evaluated on `beams` by the model.
    pub latency: f64,
    /// Fetch delay in seconds (`0` when nothing is fetched).
    pub tau: f64,
    pub beams: BeamformerSet,
    /// Per-group rate of the cache-only phase (empty for single-phase schemes).
    pub edge_rates: Vec<f64>,
    /// Per-group rate of the joint phase (or the only phase).
    pub joint_rates: Vec<f64>,
    pub fronthaul_rates: Vec<f64>,
    /// Latency of the lifted solution before extraction.
    pub relaxed_latency: Option<f64>,
    pub relaxed: Option<RelaxedSolution>,
    pub approx_error: Option<f64>,
    pub extraction: Option<ExtractionReport>,
    pub trace: Vec<TraceRecord>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// Subproblem solves that met the gap but not the stationarity tolerance.
    pub inaccurate_solves: usize,
}

/// Run `scheme` on `inst`.
pub fn solve_scheme(scheme: Scheme, inst: &Instance, settings: &OuterLoopSettings) -> Result<SchemeSolution> {
    match scheme {
        Scheme::Fcbt => solve_fcbt(inst, settings),
        Scheme::Pcbt => solve_pcbt(inst, settings),
        Scheme::Pcpt => solve_pcpt(inst, settings),
        Scheme::Tswc => solve_tswc(inst, settings),
        Scheme::Jceo => solve_jceo_baseline(inst, settings),
    }
}

/// Smallest positive value allowed for rates, times and auxiliaries.
pub(crate) const RATE_FLOOR: f64 = 1e-8;

/// Random streams for scheme-level draws, disjoint from the instance streams.
pub(crate) const STREAM_INIT: u64 = 3;
pub(crate) const STREAM_RANDOMIZATION: u64 = 4;

pub(crate) fn zero_mats(count: usize, dim: usize) -> Vec<CMat> {
    vec![CMat::zeros(dim, dim); count]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!("bogus".parse::<Scheme>().is_err());
    }

    #[test]
    fn default_settings_are_valid() {
        OuterLoopSettings::default().validate().unwrap();
        let bad = OuterLoopSettings { omega: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
