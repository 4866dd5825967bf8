//! Convex subproblems of the three latency-minimization schemes.

use super::surrogate::{phi_affine, phi_bar};
use super::vars::{ComplexVectorVar, HermitianVar};
use super::{Affine, AffineMatrix, ConvexExpr, SubproblemIr, Term};
use crate::linalg::{hermitian_inverse, hermitian_logdet, identity, inner, quad_form, sub_block, sub_vec, CMat, CVec};
use crate::model::Instance;

/// Scalars shared by every subproblem of one instance.
#[derive(Clone, Copy, Debug)]
pub struct ProblemConstants {
    pub file_size: f64,
    pub fetch_overhead: f64,
    pub noise: f64,
    pub power: f64,
    pub capacity: f64,
    pub rate_floor: f64,
}

impl ProblemConstants {
    pub fn new(inst: &Instance, rate_floor: f64) -> Self {
        let c = &inst.config;
        Self {
            file_size: c.file_size,
            fetch_overhead: c.fetch_overhead,
            noise: c.noise_power,
            power: c.power_linear(),
            capacity: c.fronthaul_capacity,
            rate_floor,
        }
    }
}

/// `var >= min(floor, at / 2)`: keeps the next expansion point positive while
/// letting a variable that is legitimately heading to zero keep shrinking.
fn floor_constraint(ir: &mut SubproblemIr, label: &str, var: usize, floor: f64, at: f64) {
    let mut a = Affine::constant(floor.min(0.5 * at));
    a.push(var, -1.0);
    ir.push_inequality(label, ConvexExpr::affine(a));
}

/// `ln S - sum ln(vars) <= 0`.
fn neg_log_sum(ir: &mut SubproblemIr, label: String, log_const: f64, vars: &[usize]) {
    let mut body = ConvexExpr::affine(Affine::constant(log_const));
    for &v in vars {
        body.terms.push(Term::NegLog { coef: 1.0, arg: Affine::var(v) });
    }
    ir.push_inequality(label, body);
}

// ============================================================================
// Cache-only beamforming
// ============================================================================

/// Iterate of the cache-only scheme.
#[derive(Clone, Debug)]
pub struct FcbtPoint {
    pub beams: Vec<CVec>,
    pub delivery_time: f64,
    pub rates: Vec<f64>,
    pub sinr_bounds: Vec<f64>,
    pub interference: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct FcbtLayout {
    pub delivery_time: usize,
    pub rates: Vec<usize>,
    pub sinr_bounds: Vec<usize>,
    pub interference: Vec<usize>,
    pub beams: Vec<ComplexVectorVar>,
}

impl FcbtLayout {
    pub fn read(&self, x: &[f64]) -> FcbtPoint {
        FcbtPoint {
            beams: self.beams.iter().map(|b| b.to_vector(x)).collect(),
            delivery_time: x[self.delivery_time],
            rates: self.rates.iter().map(|&i| x[i]).collect(),
            sinr_bounds: self.sinr_bounds.iter().map(|&i| x[i]).collect(),
            interference: self.interference.iter().map(|&i| x[i]).collect(),
        }
    }
}

/// Exact interference-plus-noise of every user under `beams`.
pub(crate) fn fcbt_interference(inst: &Instance, beams: &[CVec]) -> Vec<f64> {
    (0..inst.num_users())
        .map(|k| {
            let own = inst.groups.group_of_user[k];
            let h = &inst.channels[k];
            let other: f64 = (0..inst.num_groups())
                .filter(|&g| g != own)
                .map(|g| inner(h, &beams[g]).norm_sqr())
                .sum();
            other + inst.config.noise_power
        })
        .collect()
}

/// Convexified cache-only subproblem around `beams_at`.
///
/// The interference expansion point is recomputed exactly from `beams_at`.
/// The start keeps `beams_at` and shrinks every auxiliary variable by the
/// relative `margin` so that it is strictly feasible.
pub fn build_fcbt_ir(inst: &Instance, k: &ProblemConstants, beams_at: &[CVec], margin: f64) -> (SubproblemIr, FcbtLayout) {
    let n = inst.stacked_dim();
    let groups = inst.num_groups();
    let users = inst.num_users();
    let mut ir = SubproblemIr::new();
    let delivery_time = ir.add_scalar("delivery_time");
    let rates: Vec<usize> = (0..groups).map(|g| ir.add_scalar(&format!("rate[{g}]"))).collect();
    let sinr_bounds: Vec<usize> = (0..users).map(|u| ir.add_scalar(&format!("sinr_bound[{u}]"))).collect();
    let interference: Vec<usize> = (0..users).map(|u| ir.add_scalar(&format!("interference[{u}]"))).collect();
    let beams: Vec<ComplexVectorVar> = (0..groups).map(|g| ir.add_vector(&format!("beam[{g}]"), n)).collect();

    let chi_at = fcbt_interference(inst, beams_at);
    for u in 0..users {
        let g = inst.groups.group_of_user[u];
        let h = &inst.channels[u];

        let mut rate_body = ConvexExpr::affine(Affine::var(rates[g]));
        let mut one_plus = Affine::constant(1.0);
        one_plus.push(sinr_bounds[u], 1.0);
        rate_body.terms.push(Term::NegLog { coef: 1.0, arg: one_plus });
        ir.push_inequality(format!("rate[{u}]"), rate_body);

        let z_at = inner(h, &beams_at[g]);
        let (re, im) = beams[g].inner_with(h);
        let mut bound = Affine::var(sinr_bounds[u]);
        bound.add_scaled(&re, -2.0 * z_at.re / chi_at[u]);
        bound.add_scaled(&im, -2.0 * z_at.im / chi_at[u]);
        bound.push(interference[u], (z_at.norm() / chi_at[u]).powi(2));
        ir.push_inequality(format!("sinr_minorant[{u}]"), ConvexExpr::affine(bound));

        let mut rows = Vec::new();
        for other in (0..groups).filter(|&o| o != g) {
            let (re, im) = beams[other].inner_with(h);
            rows.push(re);
            rows.push(im);
        }
        let mut lin = Affine::constant(k.noise);
        lin.push(interference[u], -1.0);
        let mut body = ConvexExpr::affine(lin);
        if !rows.is_empty() {
            body.terms.push(Term::SumSquares { coef: 1.0, rows });
        }
        ir.push_inequality(format!("interference[{u}]"), body);
    }
    for i in 0..inst.num_errhs() {
        let rows: Vec<Affine> = beams.iter().flat_map(|b| b.coordinate_rows(inst.block(i))).collect();
        let body = ConvexExpr::affine(Affine::constant(-k.power)).with(Term::SumSquares { coef: 1.0, rows });
        ir.push_inequality(format!("power[{i}]"), body);
    }
    for g in 0..groups {
        neg_log_sum(&mut ir, format!("latency[{g}]"), k.file_size.ln(), &[delivery_time, rates[g]]);
        floor_constraint(&mut ir, &format!("rate_floor[{g}]"), rates[g], k.rate_floor, f64::INFINITY);
    }
    floor_constraint(&mut ir, "delivery_floor", delivery_time, k.rate_floor, f64::INFINITY);
    ir.set_objective(ConvexExpr::affine(Affine::var(delivery_time)));

    let mut x = vec![0.0; ir.num_vars];
    let mut chi = vec![0.0; users];
    let mut gamma = vec![0.0; users];
    for u in 0..users {
        let g = inst.groups.group_of_user[u];
        chi[u] = chi_at[u] * (1.0 + margin);
        let h = &inst.channels[u];
        let bound = phi_bar(&beams_at[g], chi[u], h, &beams_at[g], chi_at[u]);
        gamma[u] = bound - margin * bound.abs().max(1e-12);
        x[interference[u]] = chi[u];
        x[sinr_bounds[u]] = gamma[u];
    }
    let mut worst: f64 = 0.0;
    for g in 0..groups {
        let r = inst.groups.members[g].iter().map(|&u| gamma[u].ln_1p()).fold(f64::INFINITY, f64::min);
        let r = r * (1.0 - margin);
        x[rates[g]] = r;
        worst = worst.max(k.file_size / r);
    }
    x[delivery_time] = worst * (1.0 + margin);
    for (g, b) in beams.iter().enumerate() {
        b.write(&beams_at[g], &mut x);
    }
    ir.start = x;
    (ir, FcbtLayout { delivery_time, rates, sinr_bounds, interference, beams })
}

// ============================================================================
// Partial caching (fetch then deliver, pipelined, max-min rate)
// ============================================================================

/// Which partial-caching subproblem to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PartialMode {
    /// Fetch, then transmit cached and fetched parts jointly.
    Bypass,
    /// Transmit cached parts while fetching, then jointly.
    Pipelined,
    /// Maximize the minimum joint-phase rate; no fetch-time variable.
    MaxMinRate,
}

/// Augmented-Lagrangian multiplier and penalty weight of the outer loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltyState {
    pub multiplier: f64,
    pub penalty: f64,
}

/// Iterate of the lifted partial-caching schemes.
///
/// `edge` matrices act on the stacked blocks of the eRRHs caching the group's
/// file (ascending order) and are `0 x 0` for groups cached nowhere.
#[derive(Clone, Debug)]
pub struct PartialPoint {
    pub delivery_time: f64,
    pub fetch_time: f64,
    pub joint: Vec<CMat>,
    pub quant: Vec<CMat>,
    pub joint_rates: Vec<f64>,
    pub edge: Vec<CMat>,
    pub edge_rates: Vec<f64>,
    pub overlap: Vec<f64>,
    pub remaining: Vec<f64>,
    pub slack: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct PartialLayout {
    pub mode: PartialMode,
    pub delivery_time: usize,
    pub fetch_time: Option<usize>,
    pub joint: Vec<HermitianVar>,
    pub quant: Vec<Option<HermitianVar>>,
    pub joint_rates: Vec<usize>,
    pub edge: Vec<Option<HermitianVar>>,
    pub edge_rates: Vec<Option<usize>>,
    pub overlap: Vec<Option<usize>>,
    pub remaining: Vec<Option<usize>>,
    pub slack: Vec<Option<usize>>,
}

impl PartialLayout {
    /// Read a point back; absent variables keep the values of `template`.
    pub fn read(&self, x: &[f64], template: &PartialPoint) -> PartialPoint {
        let mut p = template.clone();
        p.delivery_time = x[self.delivery_time];
        if let Some(v) = self.fetch_time {
            p.fetch_time = x[v];
        }
        for (g, v) in self.joint.iter().enumerate() {
            p.joint[g] = v.to_matrix(x);
        }
        for (i, v) in self.quant.iter().enumerate() {
            if let Some(v) = v {
                p.quant[i] = v.to_matrix(x);
            }
        }
        for (g, &v) in self.joint_rates.iter().enumerate() {
            p.joint_rates[g] = x[v];
        }
        for g in 0..self.edge.len() {
            if let Some(v) = self.edge[g] {
                p.edge[g] = v.to_matrix(x);
            }
            if let Some(v) = self.edge_rates[g] {
                p.edge_rates[g] = x[v];
            }
            if let Some(v) = self.overlap[g] {
                p.overlap[g] = x[v];
            }
            if let Some(v) = self.remaining[g] {
                p.remaining[g] = x[v];
            }
        }
        for (i, v) in self.slack.iter().enumerate() {
            if let Some(v) = v {
                p.slack[i] = x[*v];
            }
        }
        p
    }
}

/// Received power (`mu`) and interference-plus-noise (`chi`) of user `u` in the
/// joint phase, as affine forms, plus their values at `at`.
struct JointForms {
    mu: Affine,
    chi: Affine,
    chi_at: f64,
}

fn joint_forms(inst: &Instance, k: &ProblemConstants, u: usize, joint: &[HermitianVar], quant: &[Option<HermitianVar>], at: &PartialPoint) -> JointForms {
    let own = inst.groups.group_of_user[u];
    let h = &inst.channels[u];
    let nt = inst.antennas();
    let mut mu = Affine::constant(k.noise);
    let mut chi = Affine::constant(k.noise);
    let mut chi_at = k.noise;
    for (g, w) in joint.iter().enumerate() {
        let q = w.quad_with(h, 0);
        mu.add_scaled(&q, 1.0);
        if g != own {
            chi.add_scaled(&q, 1.0);
            chi_at += quad_form(h, &at.joint[g]);
        }
    }
    for (i, q) in quant.iter().enumerate() {
        if let Some(q) = q {
            let hi = sub_vec(h, i * nt, nt);
            let f = q.quad_with(&hi, 0);
            mu.add_scaled(&f, 1.0);
            chi.add_scaled(&f, 1.0);
            chi_at += quad_form(&hi, &at.quant[i]);
        }
    }
    JointForms { mu, chi, chi_at }
}

/// `sum_{g fetched at i} W_g[block i] + Omega_i` at `at`, and as a realified matrix.
fn fronthaul_cov(inst: &Instance, i: usize, joint: &[HermitianVar], quant: HermitianVar, at: &PartialPoint) -> (CMat, AffineMatrix) {
    let nt = inst.antennas();
    let mut value = at.quant[i].clone();
    let mut m = AffineMatrix::zeros(2 * nt);
    for (g, w) in joint.iter().enumerate() {
        if !inst.cached(g, i) {
            value += sub_block(&at.joint[g], i * nt, nt);
            w.add_realified(&mut m, i * nt, nt, 1.0);
        }
    }
    quant.add_realified(&mut m, 0, nt, 1.0);
    (value, m)
}

/// Affine tangent of `ln det(A_i)` (complex) at `a_at`, with `A_i` assembled as in [`fronthaul_cov`].
fn logdet_tangent(inst: &Instance, i: usize, joint: &[HermitianVar], quant: Option<HermitianVar>, a_at: &CMat) -> Option<Affine> {
    let nt = inst.antennas();
    let inv = hermitian_inverse(a_at)?;
    let mut out = Affine::constant(hermitian_logdet(a_at)? - nt as f64);
    for (g, w) in joint.iter().enumerate() {
        if !inst.cached(g, i) {
            out.add_scaled(&w.trace_with(&inv, i * nt), 1.0);
        }
    }
    if let Some(q) = quant {
        out.add_scaled(&q.trace_with(&inv, 0), 1.0);
    }
    Some(out)
}

/// Hinge body `S/theta + phi(Omega_i, Omega_i^t) - ln|A_i| + rho*lambda` at `at`.
pub(crate) fn hinge_excess(inst: &Instance, at: &PartialPoint, i: usize, penalty: PenaltyState) -> Option<f64> {
    Some(inst.config.file_size / at.fetch_time - fronthaul_at(inst, at, i)? + penalty.penalty * penalty.multiplier)
}

/// `ln|A_i| - ln|Omega_i|` at `at`.
fn fronthaul_at(inst: &Instance, at: &PartialPoint, i: usize) -> Option<f64> {
    let nt = inst.antennas();
    let mut a = at.quant[i].clone();
    for g in 0..inst.num_groups() {
        if !inst.cached(g, i) {
            a += sub_block(&at.joint[g], i * nt, nt);
        }
    }
    Some(hermitian_logdet(&a)? - hermitian_logdet(&at.quant[i])?)
}

/// Convexified partial-caching subproblem around `at`, which is also the start.
///
/// `at` must be strictly feasible for the result except for the hinge slacks,
/// which are reset to just above their lower bounds. Every pipelined group
/// keeps at least `remaining_reserve` nats for the joint phase, so its joint
/// rate cannot vanish while part of the file is still owed.
pub fn build_partial_ir(
    inst: &Instance,
    k: &ProblemConstants,
    mode: PartialMode,
    at: &PartialPoint,
    penalty: PenaltyState,
    remaining_reserve: f64,
) -> Option<(SubproblemIr, PartialLayout)> {
    let n = inst.stacked_dim();
    let nt = inst.antennas();
    let groups = inst.num_groups();
    let errhs = inst.num_errhs();
    let fetching: Vec<bool> = (0..errhs).map(|i| inst.fetch_count(i) > 0).collect();
    let with_fetch_time = mode != PartialMode::MaxMinRate;
    let pipelined = mode == PartialMode::Pipelined;

    let mut ir = SubproblemIr::new();
    let delivery_time = ir.add_scalar("delivery_time");
    let fetch_time = with_fetch_time.then(|| ir.add_scalar("fetch_time"));
    let joint_rates: Vec<usize> = (0..groups).map(|g| ir.add_scalar(&format!("joint_rate[{g}]"))).collect();
    let joint: Vec<HermitianVar> = (0..groups).map(|g| ir.add_hermitian(&format!("joint[{g}]"), n)).collect();
    let quant: Vec<Option<HermitianVar>> = (0..errhs)
        .map(|i| fetching[i].then(|| ir.add_hermitian(&format!("quant[{i}]"), nt)))
        .collect();
    let slack: Vec<Option<usize>> = (0..errhs)
        .map(|i| (fetching[i] && with_fetch_time).then(|| ir.add_scalar(&format!("hinge[{i}]"))))
        .collect();
    let caching: Vec<Vec<usize>> = (0..groups).map(|g| inst.caching_errhs(g)).collect();
    let has_edge: Vec<bool> = (0..groups).map(|g| pipelined && !caching[g].is_empty()).collect();
    let edge: Vec<Option<HermitianVar>> = (0..groups)
        .map(|g| has_edge[g].then(|| ir.add_hermitian(&format!("edge[{g}]"), nt * caching[g].len())))
        .collect();
    let edge_rates: Vec<Option<usize>> =
        (0..groups).map(|g| has_edge[g].then(|| ir.add_scalar(&format!("edge_rate[{g}]")))).collect();
    let overlap: Vec<Option<usize>> = (0..groups)
        .map(|g| has_edge[g].then(|| ir.add_scalar(&format!("overlap[{g}]"))))
        .collect();
    let remaining: Vec<Option<usize>> = (0..groups)
        .map(|g| has_edge[g].then(|| ir.add_scalar(&format!("remaining[{g}]"))))
        .collect();

    // Joint-phase rates.
    for u in 0..inst.num_users() {
        let g = inst.groups.group_of_user[u];
        let f = joint_forms(inst, k, u, &joint, &quant, at);
        let mut lin = Affine::var(joint_rates[g]);
        lin.add_scaled(&phi_affine(&f.chi, f.chi_at), 1.0);
        let body = ConvexExpr::affine(lin).with(Term::NegLog { coef: 1.0, arg: f.mu });
        ir.push_inequality(format!("joint_rate[{u}]"), body);
    }
    // Joint-phase power.
    let eye = identity(nt);
    for i in 0..errhs {
        let mut a = Affine::constant(-k.power);
        for w in &joint {
            a.add_scaled(&w.trace_with(&eye, i * nt), 1.0);
        }
        if let Some(q) = quant[i] {
            a.add_scaled(&q.trace_with(&eye, 0), 1.0);
        }
        ir.push_inequality(format!("joint_power[{i}]"), ConvexExpr::affine(a));
    }
    for (g, w) in joint.iter().enumerate() {
        ir.push_psd(format!("joint_psd[{g}]"), w.psd_matrix());
    }
    // Fronthaul capacity and coupling penalty.
    for i in (0..errhs).filter(|&i| fetching[i]) {
        let q = quant[i].expect("fetching eRRH has a quantization variable");
        let (a_at, a_mat) = fronthaul_cov(inst, i, &joint, q, at);
        let mut lin = logdet_tangent(inst, i, &joint, Some(q), &a_at)?;
        lin.shift(-k.capacity);
        let body = ConvexExpr::affine(lin).with(Term::NegLogDet { coef: 0.5, arg: q.psd_matrix() });
        ir.push_inequality(format!("fronthaul[{i}]"), body);

        if let (Some(theta), Some(t)) = (fetch_time, slack[i]) {
            let q_at = &at.quant[i];
            let inv = hermitian_inverse(q_at)?;
            let mut lin = Affine::constant(hermitian_logdet(q_at)? - nt as f64 + penalty.penalty * penalty.multiplier);
            lin.add_scaled(&q.trace_with(&inv, 0), 1.0);
            lin.push(t, -1.0);
            let body = ConvexExpr::affine(lin)
                .with(Term::Reciprocal { coef: k.file_size, arg: Affine::var(theta) })
                .with(Term::NegLogDet { coef: 0.5, arg: a_mat });
            ir.push_inequality(format!("hinge[{i}]"), body);
            ir.push_inequality(format!("hinge_sign[{i}]"), ConvexExpr::affine(Affine::term(t, -1.0)));
        }
    }
    // Lower side of the coupling penalty at the bottleneck eRRH: the negative
    // part of the hinge body is concave, so its tangent majorizes it and the
    // squared positive part of that tangent is a convex, exact-at-`at` bound.
    let bottleneck = (0..errhs)
        .filter(|&i| fetching[i])
        .map(|i| Some((i, fronthaul_at(inst, at, i)?)))
        .collect::<Option<Vec<_>>>()?
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1));
    let lower_slack = match (fetch_time, bottleneck) {
        (Some(theta), Some((j, g_at))) => {
            let u = ir.add_scalar("lower_hinge");
            let q = quant[j].expect("fetching eRRH has a quantization variable");
            let (a_at, _) = fronthaul_cov(inst, j, &joint, q, at);
            let mut lin = logdet_tangent(inst, j, &joint, Some(q), &a_at)?;
            let q_at = &at.quant[j];
            let inv = hermitian_inverse(q_at)?;
            lin.add_scaled(&q.trace_with(&inv, 0), -1.0);
            let s = k.file_size;
            let theta_at = at.fetch_time;
            lin.shift(-(hermitian_logdet(q_at)? - nt as f64) - 2.0 * s / theta_at - penalty.penalty * penalty.multiplier);
            lin.push(theta, s / (theta_at * theta_at));
            lin.push(u, -1.0);
            ir.push_inequality("lower_hinge", ConvexExpr::affine(lin));
            ir.push_inequality("lower_hinge_sign", ConvexExpr::affine(Affine::term(u, -1.0)));
            let value = g_at - s / theta_at - penalty.penalty * penalty.multiplier;
            Some((u, value))
        }
        _ => None,
    };
    // Cached-part phase while fetching.
    if pipelined {
        let theta = fetch_time.expect("pipelined mode has a fetch time");
        for u in 0..inst.num_users() {
            let g = inst.groups.group_of_user[u];
            let Some(r1) = edge_rates[g] else { continue };
            let h = &inst.channels[u];
            let mut mu = Affine::constant(k.noise);
            let mut chi = Affine::constant(k.noise);
            let mut chi_at = k.noise;
            for o in 0..groups {
                let Some(w) = edge[o] else { continue };
                let ho = restrict(h, &caching[o], nt);
                let f = w.quad_with(&ho, 0);
                mu.add_scaled(&f, 1.0);
                if o != g {
                    chi.add_scaled(&f, 1.0);
                    chi_at += quad_form(&ho, &at.edge[o]);
                }
            }
            let mut lin = Affine::var(r1);
            lin.add_scaled(&phi_affine(&chi, chi_at), 1.0);
            ir.push_inequality(format!("edge_rate[{u}]"), ConvexExpr::affine(lin).with(Term::NegLog { coef: 1.0, arg: mu }));
        }
        for i in 0..errhs {
            let mut a = Affine::constant(-k.power);
            let mut any = false;
            for o in 0..groups {
                let Some(w) = edge[o] else { continue };
                if let Some(pos) = caching[o].iter().position(|&c| c == i) {
                    a.add_scaled(&w.trace_with(&eye, pos * nt), 1.0);
                    any = true;
                }
            }
            if any {
                ir.push_inequality(format!("edge_power[{i}]"), ConvexExpr::affine(a));
            }
        }
        let s = k.file_size;
        let tau_at = k.fetch_overhead + at.fetch_time;
        for g in 0..groups {
            let Some(w) = edge[g] else { continue };
            ir.push_psd(format!("edge_psd[{g}]"), w.psd_matrix());
            let r1 = edge_rates[g].expect("edge group has an edge rate");
            let r1_at = at.edge_rates[g];
            // (tau0 + theta) r1 <= S through tangents of ln.
            let mut tau = Affine::constant(k.fetch_overhead);
            tau.push(theta, 1.0);
            let mut cap = phi_affine(&tau, tau_at);
            cap.add_scaled(&phi_affine(&Affine::var(r1), r1_at), 1.0);
            cap.shift(-s.ln());
            ir.push_inequality(format!("file_cap[{g}]"), ConvexExpr::affine(cap));
            floor_constraint(&mut ir, &format!("edge_rate_floor[{g}]"), r1, k.rate_floor, r1_at);
            let (psi, kappa) = (overlap[g].unwrap(), remaining[g].unwrap());
            let mut split = Affine::constant(s);
            split.push(r1, -k.fetch_overhead).push(psi, -1.0).push(kappa, -1.0);
            ir.push_inequality(format!("split[{g}]"), ConvexExpr::affine(split));
            let body = ConvexExpr::affine(phi_affine(&Affine::var(psi), at.overlap[g]))
                .with(Term::NegLog { coef: 1.0, arg: Affine::var(theta) })
                .with(Term::NegLog { coef: 1.0, arg: Affine::var(r1) });
            ir.push_inequality(format!("overlap[{g}]"), body);
            let body = ConvexExpr::affine(phi_affine(&Affine::var(kappa), at.remaining[g]))
                .with(Term::NegLog { coef: 1.0, arg: Affine::var(delivery_time) })
                .with(Term::NegLog { coef: 1.0, arg: Affine::var(joint_rates[g]) });
            ir.push_inequality(format!("remaining[{g}]"), body);
            floor_constraint(&mut ir, &format!("overlap_floor[{g}]"), psi, k.rate_floor, at.overlap[g]);
            floor_constraint(&mut ir, &format!("remaining_floor[{g}]"), kappa, remaining_reserve, f64::INFINITY);
        }
    }
    for g in 0..groups {
        if !has_edge[g] {
            neg_log_sum(&mut ir, format!("latency[{g}]"), k.file_size.ln(), &[delivery_time, joint_rates[g]]);
        }
        floor_constraint(&mut ir, &format!("joint_rate_floor[{g}]"), joint_rates[g], k.rate_floor, at.joint_rates[g]);
    }
    floor_constraint(&mut ir, "delivery_floor", delivery_time, k.rate_floor, at.delivery_time);
    if let Some(theta) = fetch_time {
        floor_constraint(&mut ir, "fetch_floor", theta, k.rate_floor, at.fetch_time);
    }

    let mut objective = Affine::var(delivery_time);
    if let Some(theta) = fetch_time {
        objective.push(theta, 1.0);
    }
    let mut obj = ConvexExpr::affine(objective);
    let mut hinge_rows: Vec<Affine> = slack.iter().flatten().map(|&t| Affine::var(t)).collect();
    if let Some((u, _)) = lower_slack {
        hinge_rows.push(Affine::var(u));
    }
    if !hinge_rows.is_empty() {
        obj.terms.push(Term::SumSquares { coef: 0.5 / penalty.penalty, rows: hinge_rows });
    }
    ir.set_objective(obj);

    // Start point.
    let mut x = vec![0.0; ir.num_vars];
    x[delivery_time] = at.delivery_time;
    if let Some(theta) = fetch_time {
        x[theta] = at.fetch_time;
    }
    for g in 0..groups {
        x[joint_rates[g]] = at.joint_rates[g];
        joint[g].write(&at.joint[g], &mut x);
        if let Some(w) = edge[g] {
            w.write(&at.edge[g], &mut x);
        }
        if let Some(v) = edge_rates[g] {
            x[v] = at.edge_rates[g];
        }
        if let Some(v) = overlap[g] {
            x[v] = at.overlap[g];
        }
        if let Some(v) = remaining[g] {
            x[v] = at.remaining[g];
        }
    }
    for i in 0..errhs {
        if let Some(q) = quant[i] {
            q.write(&at.quant[i], &mut x);
        }
        if let Some(t) = slack[i] {
            let e = hinge_excess(inst, at, i, penalty)?;
            x[t] = e.max(0.0) + 1e-9 * e.abs().max(1.0);
        }
    }
    if let Some((u, value)) = lower_slack {
        x[u] = value.max(0.0) + 1e-9 * value.abs().max(1.0);
    }
    ir.start = x;
    Some((
        ir,
        PartialLayout { mode, delivery_time, fetch_time, joint, quant, joint_rates, edge, edge_rates, overlap, remaining, slack },
    ))
}

/// Entries of `h` on the listed eRRHs, concatenated in order.
pub(crate) fn restrict(h: &CVec, errhs: &[usize], nt: usize) -> CVec {
    let mut out = CVec::zeros(errhs.len() * nt);
    for (p, &i) in errhs.iter().enumerate() {
        out.rows_mut(p * nt, nt).copy_from(&h.rows(i * nt, nt));
    }
    out
}
