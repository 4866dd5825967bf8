//! Beamformer extraction from lifted (semidefinite-relaxed) solutions.
//!
//! Rank-one matrices are factored exactly. Otherwise Gaussian candidates
//! `U Lambda^(1/2) e` are drawn and each is rescaled by per-group power factors
//! that reach the relaxed target rates with minimum total power. The minimum
//! power vector is the least fixed point of a standard interference function,
//! found by monotone iteration from zero; power and fronthaul limits are
//! increasing in the powers, so checking them at the least fixed point decides
//! feasibility exactly.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{OuterLoopSettings, STREAM_RANDOMIZATION};
use crate::error::Result;
use crate::linalg::{complex_gaussian, hermitian_eigen, hermitian_logdet, inner, quad_form, real_scale_vec, sub_vec, trace_re, CMat, CVec};
use crate::model::{
    delay_tau, fronthaul_rates, fronthaul_rates_sdr, group_rates, latency, sinr_edge, sinr_edge_sdr, sinr_joint,
    sinr_joint_sdr, stream_rng, BeamKind, BeamformerSet, Delivery, Instance,
};

/// Lifted solution of a partial-caching scheme.
#[derive(Clone, Debug)]
pub struct RelaxedSolution {
    /// [`BeamKind::Bypass`] or [`BeamKind::Pipelined`].
    pub kind: BeamKind,
    /// Joint-phase covariance per group, stacked `N x N`.
    pub joint: Vec<CMat>,
    /// Quantization noise per eRRH, zero where nothing is fetched.
    pub quant: Vec<CMat>,
    /// Cache-only-phase covariance per group, stacked `N x N` and zero outside
    /// the caching eRRHs; empty for single-phase schemes.
    pub edge: Vec<CMat>,
    /// Relaxed per-group joint-phase rates the extraction aims for.
    pub joint_targets: Vec<f64>,
    /// Relaxed per-group cache-only-phase rates (`0` where a group has none).
    pub edge_targets: Vec<f64>,
}

/// Rates, delay and latency of a solution under the model evaluators.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub latency: f64,
    pub tau: f64,
    pub edge_rates: Vec<f64>,
    pub joint_rates: Vec<f64>,
    pub fronthaul: Vec<f64>,
}

fn assemble(inst: &Instance, kind: BeamKind, joint_rates: Vec<f64>, edge_rates: Vec<f64>, fronthaul: Vec<f64>) -> Result<Evaluation> {
    let s = inst.config.file_size;
    let tau = delay_tau(inst, &fronthaul);
    let (delivery, edge_rates) = match kind {
        BeamKind::Pipelined => {
            // A group never needs more than the whole file during the fetch.
            let cap = if tau > 0.0 { s / tau } else { f64::INFINITY };
            (Delivery::Pipelined, edge_rates.into_iter().map(|r| r.min(cap)).collect())
        }
        _ => (Delivery::Bypass, Vec::new()),
    };
    let latency = latency(delivery, s, tau, &edge_rates, &joint_rates)?;
    Ok(Evaluation { latency, tau, edge_rates, joint_rates, fronthaul })
}

impl RelaxedSolution {
    /// Latency of the lifted matrices themselves (a relaxation of the deployable latency).
    pub fn latency(&self, inst: &Instance) -> Result<f64> {
        Ok(self.evaluate(inst)?.latency)
    }

    pub(crate) fn evaluate(&self, inst: &Instance) -> Result<Evaluation> {
        let joint_rates = group_rates(inst, &sinr_joint_sdr(inst, &self.joint, &self.quant));
        let edge_rates = if self.kind == BeamKind::Pipelined {
            edge_group_rates(inst, group_rates(inst, &sinr_edge_sdr(inst, &self.edge)))
        } else {
            Vec::new()
        };
        let fronthaul = fronthaul_rates_sdr(inst, &self.joint, &self.quant)?;
        assemble(inst, self.kind, joint_rates, edge_rates, fronthaul)
    }
}

/// Zero the cache-only rate of groups cached nowhere (they have no such phase).
fn edge_group_rates(inst: &Instance, mut rates: Vec<f64>) -> Vec<f64> {
    for (g, r) in rates.iter_mut().enumerate() {
        if inst.caching_errhs(g).is_empty() {
            *r = 0.0;
        }
    }
    rates
}

/// Evaluate deployable beams with the model.
pub fn evaluate_beams(inst: &Instance, set: &BeamformerSet) -> Result<Evaluation> {
    let joint_rates = group_rates(inst, &sinr_joint(inst, &set.joint, &set.quantization));
    let edge_rates = if set.kind == BeamKind::Pipelined {
        edge_group_rates(inst, group_rates(inst, &sinr_edge(inst, &set.edge)))
    } else {
        Vec::new()
    };
    let fronthaul = fronthaul_rates(inst, &set.joint, &set.quantization)?;
    assemble(inst, set.kind, joint_rates, edge_rates, fronthaul)
}

/// What the extraction did.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    /// Every matrix passed the rank-one test and was factored exactly.
    pub rank_one: bool,
    /// No candidate reached the relaxed targets; the dominant-eigenvector
    /// candidate was rescaled to the largest reachable fraction of them.
    pub randomization_infeasible: bool,
    /// Index of the chosen candidate (`0` is the dominant eigenvector).
    pub candidate: Option<usize>,
    /// Achieved fraction of the joint-phase target rates.
    pub joint_scaling: f64,
    /// Achieved fraction of the cache-only-phase target rates.
    pub edge_scaling: f64,
}

struct Spectrum {
    values: Vec<f64>,
    vectors: CMat,
}

impl Spectrum {
    fn of(m: &CMat) -> Self {
        let (values, vectors) = hermitian_eigen(m);
        Self { values: values.into_iter().map(|v| v.max(0.0)).collect(), vectors }
    }

    fn is_rank_one(&self, tolerance: f64) -> bool {
        match self.values.as_slice() {
            [] => true,
            [top, rest @ ..] => *top <= 0.0 || rest.iter().all(|&v| v <= tolerance * top),
        }
    }

    fn dominant(&self) -> CVec {
        if self.values.is_empty() {
            return CVec::zeros(0);
        }
        real_scale_vec(&self.vectors.column(0).into_owned(), self.values[0].sqrt())
    }

    fn draw(&self, e: &CVec) -> CVec {
        let scaled = CVec::from_iterator(self.values.len(), self.values.iter().zip(e.iter()).map(|(l, z)| z * l.sqrt()));
        &self.vectors * scaled
    }
}

/// Minimum per-group power factors for the given SINR targets, or `None` if
/// unreachable within the limits.
struct BoostProblem<'a> {
    inst: &'a Instance,
    dirs: &'a [CVec],
    quant: &'a [CMat],
    /// Groups that take part; others keep factor `0`.
    active: Vec<bool>,
    fronthaul_limited: bool,
    gains: Vec<Vec<f64>>,
    floor: Vec<f64>,
}

impl<'a> BoostProblem<'a> {
    fn new(inst: &'a Instance, dirs: &'a [CVec], quant: &'a [CMat], active: Vec<bool>, fronthaul_limited: bool) -> Self {
        let nt = inst.antennas();
        let gains = (0..inst.num_users())
            .map(|k| dirs.iter().map(|d| inner(&inst.channels[k], d).norm_sqr()).collect())
            .collect();
        let floor = (0..inst.num_users())
            .map(|k| {
                inst.config.noise_power
                    + quant.iter().enumerate().map(|(i, q)| quad_form(&sub_vec(&inst.channels[k], i * nt, nt), q)).sum::<f64>()
            })
            .collect();
        Self { inst, dirs, quant, active, fronthaul_limited, gains, floor }
    }

    fn power_ok(&self, p: &[f64]) -> bool {
        let nt = self.inst.antennas();
        (0..self.inst.num_errhs()).all(|i| {
            let used: f64 = self.dirs.iter().zip(p).map(|(d, &pg)| pg * d.rows(i * nt, nt).norm_squared()).sum::<f64>()
                + self.quant.get(i).map(trace_re).unwrap_or(0.0);
            used <= self.inst.power()
        })
    }

    fn fronthaul_ok(&self, p: &[f64]) -> bool {
        if !self.fronthaul_limited {
            return true;
        }
        let nt = self.inst.antennas();
        let c = self.inst.config.fronthaul_capacity;
        (0..self.inst.num_errhs()).filter(|&i| self.inst.fetch_count(i) > 0).all(|i| {
            let q = &self.quant[i];
            let mut a = q.clone();
            for (g, d) in self.dirs.iter().enumerate() {
                if !self.inst.cached(g, i) {
                    let v = sub_vec(d, i * nt, nt);
                    a += (&v * v.adjoint()) * Complex64::new(p[g], 0.0);
                }
            }
            match (hermitian_logdet(&a), hermitian_logdet(q)) {
                (Some(la), Some(lq)) => la - lq <= c,
                _ => false,
            }
        })
    }

    /// Least fixed point for per-group rate targets.
    fn solve(&self, targets: &[f64]) -> Option<Vec<f64>> {
        let groups = self.dirs.len();
        let sinr: Vec<f64> = targets.iter().map(|r| r.exp_m1()).collect();
        let mut p = vec![0.0_f64; groups];
        for _ in 0..5000 {
            let mut next = vec![0.0_f64; groups];
            for g in (0..groups).filter(|&g| self.active[g]) {
                for &k in &self.inst.groups.members[g] {
                    let own = self.gains[k][g];
                    let interference: f64 =
                        (0..groups).filter(|&o| o != g).map(|o| p[o] * self.gains[k][o]).sum::<f64>() + self.floor[k];
                    if sinr[g] > 0.0 && own <= 0.0 {
                        return None;
                    }
                    if sinr[g] > 0.0 {
                        next[g] = next[g].max(sinr[g] * interference / own);
                    }
                }
            }
            if !self.power_ok(&next) {
                return None;
            }
            let change = next.iter().zip(&p).map(|(a, b)| (a - b).abs() / a.abs().max(1e-300)).fold(0.0, f64::max);
            p = next;
            if change <= 1e-13 {
                return self.fronthaul_ok(&p).then_some(p);
            }
        }
        None
    }

    /// Largest `beta <= 1` such that `beta * targets` is reachable, with its factors.
    fn best_fraction(&self, targets: &[f64]) -> (f64, Vec<f64>) {
        if let Some(p) = self.solve(targets) {
            return (1.0, p);
        }
        let scaled = |b: f64| targets.iter().map(|r| b * r).collect::<Vec<_>>();
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut best = vec![0.0; targets.len()];
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            match self.solve(&scaled(mid)) {
                Some(p) => {
                    lo = mid;
                    best = p;
                }
                None => hi = mid,
            }
        }
        (lo, best)
    }
}

fn apply(dirs: &[CVec], p: &[f64]) -> Vec<CVec> {
    dirs.iter().zip(p).map(|(d, &pg)| real_scale_vec(d, pg.sqrt())).collect()
}

struct Candidate {
    set: BeamformerSet,
    latency: f64,
    joint_scaling: f64,
    edge_scaling: f64,
}

fn boost_candidate(inst: &Instance, relaxed: &RelaxedSolution, joint_dirs: &[CVec], edge_dirs: &[CVec]) -> Result<Candidate> {
    let groups = inst.num_groups();
    let joint_problem = BoostProblem::new(inst, joint_dirs, &relaxed.quant, vec![true; groups], true);
    let (joint_scaling, pj) = joint_problem.best_fraction(&relaxed.joint_targets);
    let joint = apply(joint_dirs, &pj);
    let (edge, edge_scaling) = if relaxed.kind == BeamKind::Pipelined {
        let tau = delay_tau(inst, &fronthaul_rates(inst, &joint, &relaxed.quant)?);
        let cap = if tau > 0.0 { inst.config.file_size / tau } else { f64::INFINITY };
        let active: Vec<bool> = relaxed.edge_targets.iter().map(|&r| r > 0.0).collect();
        let targets: Vec<f64> = relaxed.edge_targets.iter().map(|&r| r.min(cap)).collect();
        let none = zero_quant(inst);
        let edge_problem = BoostProblem::new(inst, edge_dirs, &none, active, false);
        let (b, pe) = edge_problem.best_fraction(&targets);
        (apply(edge_dirs, &pe), b)
    } else {
        (Vec::new(), 1.0)
    };
    let set = BeamformerSet { kind: relaxed.kind, edge, joint, quantization: relaxed.quant.clone() };
    let latency = evaluate_beams(inst, &set)?.latency;
    Ok(Candidate { set, latency, joint_scaling, edge_scaling })
}

fn zero_quant(inst: &Instance) -> Vec<CMat> {
    super::zero_mats(inst.num_errhs(), inst.antennas())
}

/// Deployable beamformers from a lifted solution.
///
/// Exact factorization when every matrix is rank one within
/// `settings.rank_one_tolerance`; otherwise the dominant eigenvector plus
/// `settings.randomization_candidates - 1` Gaussian draws, each with minimum
/// power factors for the relaxed targets, keeping the feasible candidate of
/// least latency. If none reaches the targets, the dominant eigenvector is
/// scaled to the largest reachable fraction and the report is flagged.
pub fn randomize_rank_one(
    inst: &Instance,
    relaxed: &RelaxedSolution,
    settings: &OuterLoopSettings,
    seed: u64,
) -> Result<(BeamformerSet, ExtractionReport)> {
    let joint_spec: Vec<Spectrum> = relaxed.joint.iter().map(Spectrum::of).collect();
    let edge_spec: Vec<Spectrum> = relaxed.edge.iter().map(Spectrum::of).collect();
    let tol = settings.rank_one_tolerance;
    if joint_spec.iter().chain(&edge_spec).all(|s| s.is_rank_one(tol)) {
        let set = BeamformerSet {
            kind: relaxed.kind,
            edge: edge_spec.iter().map(Spectrum::dominant).collect(),
            joint: joint_spec.iter().map(Spectrum::dominant).collect(),
            quantization: relaxed.quant.clone(),
        };
        let report =
            ExtractionReport { rank_one: true, randomization_infeasible: false, candidate: None, joint_scaling: 1.0, edge_scaling: 1.0 };
        return Ok((set, report));
    }

    let mut rng = stream_rng(seed, STREAM_RANDOMIZATION);
    let mut best: Option<(usize, Candidate)> = None;
    let mut dominant: Option<Candidate> = None;
    for c in 0..settings.randomization_candidates {
        let (joint_dirs, edge_dirs): (Vec<CVec>, Vec<CVec>) = if c == 0 {
            (joint_spec.iter().map(Spectrum::dominant).collect(), edge_spec.iter().map(Spectrum::dominant).collect())
        } else {
            let mut draw = |s: &Spectrum| {
                let e = complex_gaussian(&mut rng, s.values.len());
                s.draw(&e)
            };
            let j = joint_spec.iter().map(&mut draw).collect();
            let e = edge_spec.iter().map(&mut draw).collect();
            (j, e)
        };
        let cand = boost_candidate(inst, relaxed, &joint_dirs, &edge_dirs)?;
        let feasible = cand.joint_scaling >= 1.0 && cand.edge_scaling >= 1.0;
        if feasible && best.as_ref().map_or(true, |(_, b)| cand.latency < b.latency) {
            best = Some((c, cand));
        } else if c == 0 {
            dominant = Some(cand);
        }
    }
    let (index, chosen, flagged) = match best {
        Some((i, cand)) => (i, cand, false),
        None => (0, dominant.expect("candidate 0 is always evaluated"), true),
    };
    let report = ExtractionReport {
        rank_one: false,
        randomization_infeasible: flagged,
        candidate: Some(index),
        joint_scaling: chosen.joint_scaling,
        edge_scaling: chosen.edge_scaling,
    };
    Ok((chosen.set, report))
}
