//! Partial-caching drivers.
//!
//! The lifted problems couple the fetch time `theta` to the slowest fronthaul
//! rate through `S / theta = min_i g_i`. The inner loop solves convex
//! surrogates with that coupling moved into a squared-hinge penalty; the outer
//! loop updates the multiplier when the coupling residual has shrunk enough
//! and tightens the penalty otherwise.

use super::extract::{evaluate_beams, randomize_rank_one, RelaxedSolution};
use super::fcbt::solve_fcbt;
use super::init::{initialize_partial, lift_start, LiftedStart};
use super::{OuterLoopSettings, Scheme, SchemeSolution, SchemeStatus, TraceRecord, WarmStartRate, RATE_FLOOR};
use crate::error::{Error, Result};
use crate::ir::{build_partial_ir, restrict, PartialMode, PartialPoint, PenaltyState, ProblemConstants};
use crate::linalg::{quad_form, sub_vec, CMat};
use crate::model::{fronthaul_rates_sdr, BeamKind, Instance};
use crate::solver::{solve, SolveStatus};

/// Relative shrink applied by the warm start so the start is strictly feasible.
const START_MARGIN: f64 = 1e-3;
/// Share of the file every pipelined group keeps for the joint phase. It makes
/// the tail time robust to the residual mismatch between the fetch-time
/// variable and the fetch delay the model computes from the fronthaul rates.
const REMAINING_RESERVE: f64 = 1e-4;

/// Fetch first, then serve cached and fetched parts jointly.
pub fn solve_pcbt(inst: &Instance, settings: &OuterLoopSettings) -> Result<SchemeSolution> {
    settings.validate()?;
    if inst.fetching_errhs().is_empty() {
        return relabel(solve_fcbt(inst, settings)?, Scheme::Pcbt);
    }
    Engine::new(inst, settings, PartialMode::Bypass, Scheme::Pcbt).run()
}

/// Serve cached parts while fetching, then the remainder jointly.
///
/// With nothing to fetch the scheme is cache-only; with nothing cached it is
/// the fetch-first scheme, and both cases are delegated.
pub fn solve_pcpt(inst: &Instance, settings: &OuterLoopSettings) -> Result<SchemeSolution> {
    settings.validate()?;
    if inst.fetching_errhs().is_empty() {
        return relabel(solve_fcbt(inst, settings)?, Scheme::Pcpt);
    }
    if (0..inst.num_groups()).all(|g| inst.caching_errhs(g).is_empty()) {
        return Engine::new(inst, settings, PartialMode::Bypass, Scheme::Pcpt).run();
    }
    Engine::new(inst, settings, PartialMode::Pipelined, Scheme::Pcpt).run()
}

/// The fetch-first scheme on an empty cache.
pub fn solve_tswc(inst: &Instance, settings: &OuterLoopSettings) -> Result<SchemeSolution> {
    settings.validate()?;
    let empty = inst.with_empty_cache();
    Engine::new(&empty, settings, PartialMode::Bypass, Scheme::Tswc).run()
}

/// Max-min joint-phase rate under power and fronthaul limits, ignoring how
/// long the fetch takes; the latency adds the resulting fetch delay.
pub fn solve_jceo_baseline(inst: &Instance, settings: &OuterLoopSettings) -> Result<SchemeSolution> {
    settings.validate()?;
    if inst.fetching_errhs().is_empty() {
        return relabel(solve_fcbt(inst, settings)?, Scheme::Jceo);
    }
    Engine::new(inst, settings, PartialMode::MaxMinRate, Scheme::Jceo).run()
}

fn relabel(mut s: SchemeSolution, scheme: Scheme) -> Result<SchemeSolution> {
    s.scheme = scheme;
    Ok(s)
}

struct Engine<'a> {
    inst: &'a Instance,
    settings: &'a OuterLoopSettings,
    mode: PartialMode,
    scheme: Scheme,
    k: ProblemConstants,
}

/// Received power and interference-plus-noise of every user.
struct Powers {
    mu: Vec<f64>,
    chi: Vec<f64>,
}

impl Powers {
    /// Achievable rate of each group: `min_k ln(mu_k / chi_k)`.
    fn group_rates(&self, inst: &Instance) -> Vec<f64> {
        inst.groups
            .members
            .iter()
            .map(|m| m.iter().map(|&u| (self.mu[u] / self.chi[u]).ln()).fold(f64::INFINITY, f64::min))
            .collect()
    }

    /// `min_k ln(mu_k) / ln(chi_k)` per group.
    fn log_quotients(&self, inst: &Instance) -> Vec<f64> {
        inst.groups
            .members
            .iter()
            .map(|m| m.iter().map(|&u| self.mu[u].ln() / self.chi[u].ln()).fold(f64::INFINITY, f64::min))
            .collect()
    }
}

impl<'a> Engine<'a> {
    fn new(inst: &'a Instance, settings: &'a OuterLoopSettings, mode: PartialMode, scheme: Scheme) -> Self {
        Self { inst, settings, mode, scheme, k: ProblemConstants::new(inst, RATE_FLOOR) }
    }

    fn kind(&self) -> BeamKind {
        if self.mode == PartialMode::Pipelined {
            BeamKind::Pipelined
        } else {
            BeamKind::Bypass
        }
    }

    fn coupled(&self) -> bool {
        self.mode != PartialMode::MaxMinRate
    }

    fn joint_powers(&self, joint: &[CMat], quant: &[CMat]) -> Powers {
        let inst = self.inst;
        let nt = inst.antennas();
        let mut mu = Vec::with_capacity(inst.num_users());
        let mut chi = Vec::with_capacity(inst.num_users());
        for u in 0..inst.num_users() {
            let h = &inst.channels[u];
            let own = inst.groups.group_of_user[u];
            let mut c = self.k.noise;
            let mut signal = 0.0;
            for (g, w) in joint.iter().enumerate() {
                let q = quad_form(h, w);
                if g == own {
                    signal = q;
                } else {
                    c += q;
                }
            }
            for (i, q) in quant.iter().enumerate() {
                c += quad_form(&sub_vec(h, i * nt, nt), q);
            }
            mu.push(c + signal);
            chi.push(c);
        }
        Powers { mu, chi }
    }

    fn edge_powers(&self, edge: &[CMat]) -> Powers {
        let inst = self.inst;
        let nt = inst.antennas();
        let caching: Vec<Vec<usize>> = (0..inst.num_groups()).map(|g| inst.caching_errhs(g)).collect();
        let mut mu = Vec::with_capacity(inst.num_users());
        let mut chi = Vec::with_capacity(inst.num_users());
        for u in 0..inst.num_users() {
            let h = &inst.channels[u];
            let own = inst.groups.group_of_user[u];
            let mut c = self.k.noise;
            let mut signal = 0.0;
            for (g, w) in edge.iter().enumerate() {
                if w.nrows() == 0 {
                    continue;
                }
                let q = quad_form(&restrict(h, &caching[g], nt), w);
                if g == own {
                    signal = q;
                } else {
                    c += q;
                }
            }
            mu.push(c + signal);
            chi.push(c);
        }
        Powers { mu, chi }
    }

    /// Slowest fronthaul rate `min_i (ln|A_i| - ln|Omega_i|)` of a lifted point.
    fn slowest_fronthaul(&self, joint: &[CMat], quant: &[CMat]) -> Result<f64> {
        let g = fronthaul_rates_sdr(self.inst, joint, quant)?;
        Ok(g.into_iter().filter(|r| r.is_finite()).fold(f64::INFINITY, f64::min))
    }

    /// Signed coupling residual `S / theta - min_i g_i`.
    fn residual(&self, p: &PartialPoint) -> Result<f64> {
        Ok(self.k.file_size / p.fetch_time - self.slowest_fronthaul(&p.joint, &p.quant)?)
    }

    /// Rate seed of the pipelined warm start, never above the achievable rate.
    fn seed_rate(&self, quotient: f64, achievable: f64, fetch_time: f64) -> f64 {
        let cap = self.k.file_size / (self.k.fetch_overhead + fetch_time);
        let nu = self.settings.nu;
        let fallback = nu * achievable.min(cap);
        match self.settings.warm_start_rate {
            WarmStartRate::LogRatio => fallback,
            WarmStartRate::LogQuotient => {
                let r = nu * quotient.min(cap);
                if r.is_finite() && r > 0.0 && r < (1.0 - START_MARGIN) * achievable {
                    r
                } else {
                    fallback
                }
            }
        }
    }

    /// Strictly feasible auxiliaries for the given matrices: the fetch time
    /// matches the slowest fronthaul exactly, rates sit just below (bypass)
    /// or a `nu` fraction of (pipelined) the achievable rates, and the
    /// delivery time just above what they imply.
    fn warm_start(&self, joint: Vec<CMat>, quant: Vec<CMat>, edge: Vec<CMat>) -> Result<PartialPoint> {
        let inst = self.inst;
        let groups = inst.num_groups();
        let s = self.k.file_size;
        let m = START_MARGIN;
        let slowest = self.slowest_fronthaul(&joint, &quant)?;
        let fetch_time = if slowest.is_finite() && slowest > 0.0 { s / slowest } else { 1.0 };
        let jp = self.joint_powers(&joint, &quant);
        let achievable2 = jp.group_rates(inst);
        if achievable2.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::Precondition("a multicast group receives no signal at the start point".into()));
        }
        let pipelined = self.mode == PartialMode::Pipelined;
        let joint_rates: Vec<f64> = if pipelined {
            let q = jp.log_quotients(inst);
            (0..groups).map(|g| self.seed_rate(q[g], achievable2[g], fetch_time)).collect()
        } else {
            achievable2.iter().map(|r| (1.0 - m) * r).collect()
        };
        let mut edge_rates = vec![0.0; groups];
        let mut overlap = vec![0.0; groups];
        let mut remaining = vec![0.0; groups];
        let mut delivery: f64 = 0.0;
        if pipelined {
            let ep = self.edge_powers(&edge);
            let achievable1 = ep.group_rates(inst);
            let q = ep.log_quotients(inst);
            for g in 0..groups {
                if edge[g].nrows() == 0 {
                    delivery = delivery.max(s / joint_rates[g]);
                    continue;
                }
                if !(achievable1[g] > 0.0) {
                    return Err(Error::Precondition(format!("group {g} receives no cached-part signal at the start point")));
                }
                let r1 = self.seed_rate(q[g], achievable1[g], fetch_time);
                edge_rates[g] = r1;
                overlap[g] = fetch_time * r1 * (1.0 - m);
                remaining[g] = s - (self.k.fetch_overhead + fetch_time) * r1 + 2.0 * m * fetch_time * r1 + m * s;
                delivery = delivery.max(remaining[g] / joint_rates[g]);
            }
        } else {
            for g in 0..groups {
                delivery = delivery.max(s / joint_rates[g]);
            }
        }
        Ok(PartialPoint {
            delivery_time: (1.0 + m) * delivery,
            fetch_time,
            joint,
            quant,
            joint_rates,
            edge,
            edge_rates,
            overlap,
            remaining,
            slack: vec![0.0; inst.num_errhs()],
        })
    }

    fn run(&self) -> Result<SchemeSolution> {
        let inst = self.inst;
        let st = self.settings;
        let start = initialize_partial(inst, st, self.kind());
        let LiftedStart { joint, quant, edge } = lift_start(inst, &start);
        let mut point = self.warm_start(joint, quant, edge)?;
        let mut penalty = PenaltyState { multiplier: st.lambda0, penalty: st.rho0 };
        let mut varsigma = st.varsigma0;
        // Without the coupling there is no outer loop to tighten the inner threshold.
        let mut inner_eps = if self.coupled() { st.epsilon0 } else { st.epsilon };
        let mut trace = Vec::new();
        let mut inner_total = 0;
        let mut inaccurate = 0;
        let mut outer_done = 0;
        let mut converged = false;
        let reserve = REMAINING_RESERVE * self.k.file_size;
        for outer in 0..st.max_outer_iterations {
            outer_done = outer + 1;
            if outer > 0 && self.mode == PartialMode::Pipelined {
                let p = point.clone();
                point = self.warm_start(p.joint, p.quant, p.edge)?;
            }
            let mut previous: Option<f64> = None;
            let mut inner_converged = false;
            for t in 1..=st.max_inner_iterations {
                let (ir, layout) = build_partial_ir(inst, &self.k, self.mode, &point, penalty, reserve)
                    .ok_or_else(|| Error::Precondition("lifted iterate lost positive definiteness".into()))?;
                debug_assert!(ir.is_strictly_feasible(&ir.start), "previous iterate infeasible for the next surrogate");
                let start_value = ir.objective_value(&ir.start).ok_or_else(|| Error::Precondition("start outside objective domain".into()))?;
                if previous.is_none() {
                    trace.push(self.record(outer, 0, start_value, &point, penalty)?);
                    previous = Some(start_value);
                }
                let report = solve(&ir, &st.solver)?;
                inner_total += 1;
                if report.status == SolveStatus::Inaccurate {
                    inaccurate += 1;
                }
                let value = if report.objective <= start_value {
                    point = layout.read(&report.x, &point);
                    report.objective
                } else {
                    start_value
                };
                trace.push(self.record(outer, t, value, &point, penalty)?);
                let prev = previous.expect("set before the first solve");
                let change = (prev - value).abs() / prev.abs().max(f64::MIN_POSITIVE);
                previous = Some(value);
                if change <= inner_eps {
                    inner_converged = true;
                    break;
                }
            }
            if !self.coupled() {
                converged = inner_converged;
                break;
            }
            let h = self.residual(&point)?;
            if h.abs() <= st.epsilon {
                converged = inner_converged;
                break;
            }
            if h.abs() <= varsigma {
                penalty.multiplier += h / penalty.penalty;
            } else {
                penalty.penalty *= st.omega;
            }
            varsigma = st.omega * h.abs();
            inner_eps = (st.omega * inner_eps).max(st.epsilon);
        }
        self.finish(point, trace, converged, outer_done, inner_total, inaccurate)
    }

    fn record(&self, outer: usize, inner: usize, objective: f64, point: &PartialPoint, penalty: PenaltyState) -> Result<TraceRecord> {
        let coupled = self.coupled();
        Ok(TraceRecord {
            outer_iter: outer,
            inner_iter: inner,
            objective,
            approx_error: if coupled { Some(self.residual(point)?.abs()) } else { None },
            lambda: coupled.then_some(penalty.multiplier),
            rho: coupled.then_some(penalty.penalty),
        })
    }

    fn finish(
        &self,
        point: PartialPoint,
        trace: Vec<TraceRecord>,
        converged: bool,
        outer: usize,
        inner: usize,
        inaccurate: usize,
    ) -> Result<SchemeSolution> {
        let inst = self.inst;
        let approx_error = if self.coupled() { Some(self.residual(&point)?.abs()) } else { None };
        let kind = self.kind();
        let edge = if kind == BeamKind::Pipelined {
            (0..inst.num_groups()).map(|g| embed(inst, g, &point.edge[g])).collect()
        } else {
            Vec::new()
        };
        let relaxed = RelaxedSolution {
            kind,
            joint: point.joint.clone(),
            quant: point.quant.clone(),
            edge,
            joint_targets: point.joint_rates.clone(),
            edge_targets: if kind == BeamKind::Pipelined { point.edge_rates.clone() } else { vec![0.0; inst.num_groups()] },
        };
        let relaxed_latency = relaxed.latency(inst)?;
        let (beams, report) = randomize_rank_one(inst, &relaxed, self.settings, inst.seed)?;
        let ev = evaluate_beams(inst, &beams)?;
        Ok(SchemeSolution {
            scheme: self.scheme,
            status: if converged { SchemeStatus::Converged } else { SchemeStatus::MaxIterations },
            latency: ev.latency,
            tau: ev.tau,
            beams,
            edge_rates: ev.edge_rates,
            joint_rates: ev.joint_rates,
            fronthaul_rates: ev.fronthaul,
            relaxed_latency: Some(relaxed_latency),
            relaxed: Some(relaxed),
            approx_error,
            extraction: Some(report),
            trace,
            outer_iterations: outer,
            inner_iterations: inner,
            inaccurate_solves: inaccurate,
        })
    }
}

/// Stacked `N x N` form of an edge matrix defined on the caching eRRHs of `g`.
fn embed(inst: &Instance, g: usize, m: &CMat) -> CMat {
    let n = inst.stacked_dim();
    let nt = inst.antennas();
    let mut out = CMat::zeros(n, n);
    let caching = inst.caching_errhs(g);
    for (a, &i) in caching.iter().enumerate() {
        for (b, &j) in caching.iter().enumerate() {
            out.view_mut((i * nt, j * nt), (nt, nt)).copy_from(&m.view((a * nt, b * nt), (nt, nt)));
        }
    }
    out
}
