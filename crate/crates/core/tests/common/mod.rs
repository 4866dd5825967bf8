//! Oracles shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use cmll::ir::{Affine, Constraint, ConvexExpr, SubproblemIr, Term};
use cmll::linalg::{CMat, CVec, RMat};
use cmll::model::{
    fronthaul_rates, group_rates, latency, sinr_edge, sinr_joint, BeamKind, Delivery, Instance,
};
use cmll::schemes::SchemeSolution;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Half-width of the box every random variable is confined to.
pub const BOX: f64 = 2.0;

fn random_row<R: Rng>(rng: &mut R, n: usize) -> Affine {
    let mut a = Affine::constant(rng.gen_range(-0.5..0.5));
    for i in 0..n {
        a.push(i, rng.gen_range(-1.0..1.0));
    }
    a
}

/// Positive affine argument on the whole box: `margin + a^T x` with `margin > sum |a_i| BOX`.
fn positive_on_box<R: Rng>(rng: &mut R, n: usize) -> Affine {
    let coeffs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let reach: f64 = coeffs.iter().map(|c| c.abs() * BOX).sum();
    let mut a = Affine::constant(reach + rng.gen_range(0.2..1.0));
    for (i, &c) in coeffs.iter().enumerate() {
        a.push(i, c);
    }
    a
}

/// Random convex program in at most six scalars with the origin strictly feasible.
///
/// Objective: a random linear part plus, each with probability one half, a
/// sum of squares, a reciprocal and a negative log of arguments positive on
/// the box. Constraints: the box, up to two half-spaces containing the origin
/// and, with probability one half, a ball around a point near the origin.
pub fn random_tiny_ir<R: Rng>(rng: &mut R) -> SubproblemIr {
    let n = rng.gen_range(1..=6);
    let mut ir = SubproblemIr::new();
    for i in 0..n {
        ir.add_scalar(&format!("x{i}"));
    }
    let mut linear = Affine::default();
    for i in 0..n {
        linear.push(i, rng.gen_range(-1.0..1.0));
    }
    let mut objective = ConvexExpr::affine(linear);
    let mut curved = false;
    if rng.gen_bool(0.5) {
        let rows = (0..rng.gen_range(1..=2)).map(|_| random_row(rng, n)).collect();
        objective = objective.with(Term::SumSquares { coef: rng.gen_range(0.2..2.0), rows });
        curved = true;
    }
    if rng.gen_bool(0.5) {
        objective = objective.with(Term::Reciprocal { coef: rng.gen_range(0.2..2.0), arg: positive_on_box(rng, n) });
        curved = true;
    }
    if rng.gen_bool(0.5) || !curved {
        objective = objective.with(Term::NegLog { coef: rng.gen_range(0.2..2.0), arg: positive_on_box(rng, n) });
    }
    ir.set_objective(objective);
    for i in 0..n {
        ir.push_inequality(format!("upper{i}"), ConvexExpr::affine(Affine { constant: -BOX, coeffs: vec![(i, 1.0)] }));
        ir.push_inequality(format!("lower{i}"), ConvexExpr::affine(Affine { constant: -BOX, coeffs: vec![(i, -1.0)] }));
    }
    for j in 0..rng.gen_range(0..=2) {
        let mut a = Affine::constant(-rng.gen_range(0.3..1.5));
        for i in 0..n {
            a.push(i, rng.gen_range(-1.0..1.0));
        }
        ir.push_inequality(format!("halfspace{j}"), ConvexExpr::affine(a));
    }
    if rng.gen_bool(0.5) {
        let radius: f64 = rng.gen_range(1.0..2.0);
        let rows = (0..n).map(|i| Affine { constant: -rng.gen_range(-0.3..0.3), coeffs: vec![(i, 1.0)] }).collect();
        ir.push_inequality("ball", ConvexExpr::affine(Affine::constant(-radius * radius)).with(Term::SumSquares { coef: 1.0, rows }));
    }
    ir.start = vec![0.0; n];
    ir
}

/// `f(x) - weight * sum_j ln(-g_j(x))`, or `None` unless every constraint is strictly satisfied.
fn smoothed_value(ir: &SubproblemIr, x: &[f64], weight: f64) -> Option<f64> {
    let mut barrier = 0.0;
    for c in &ir.constraints {
        if let Constraint::Inequality { body, .. } = c {
            let g = body.value(x)?;
            if !(g < 0.0) {
                return None;
            }
            barrier -= (-g).ln();
        }
    }
    Some(ir.objective_value(x)? + weight * barrier)
}

/// Derivative-free minimization of the smoothed objective by grid search.
///
/// Each level evaluates a tensor grid of half-width `h` around the current
/// point and moves to its best point; `h` shrinks whenever a level brings no
/// improvement. Frames alternate between the coordinate axes and random
/// orthonormal frames so narrow descent valleys are not missed.
fn grid_descent(ir: &SubproblemIr, start: &[f64], weight: f64, mut half: f64, stop: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = ir.num_vars;
    let points = match n {
        1 => 9,
        2 => 7,
        3 | 4 => 5,
        _ => 3,
    };
    let mut center = start.to_vec();
    let mut best = smoothed_value(ir, &center, weight).expect("grid descent needs a strictly feasible start");
    let mut idx = vec![0usize; n];
    let mut x = vec![0.0; n];
    let mut level = 0usize;
    while half > stop {
        level += 1;
        let frame = if level % 2 == 0 {
            RMat::identity(n, n)
        } else {
            RMat::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal)).qr().q()
        };
        let mut level_best = (best, center.clone());
        loop {
            x.copy_from_slice(&center);
            for d in 0..n {
                let offset = half * (-1.0 + 2.0 * idx[d] as f64 / (points - 1) as f64);
                for (r, xr) in x.iter_mut().enumerate() {
                    *xr += offset * frame[(r, d)];
                }
            }
            if let Some(v) = smoothed_value(ir, &x, weight) {
                if v < level_best.0 {
                    level_best = (v, x.clone());
                }
            }
            let mut d = 0;
            while d < n {
                idx[d] += 1;
                if idx[d] < points {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == n {
                break;
            }
        }
        if level_best.0 < best {
            best = level_best.0;
            center = level_best.1;
        } else {
            half *= 0.7;
        }
    }
    center
}

/// Minimum of a small convex program with inequality constraints, found by
/// grid search on log-smoothed objectives with weights `1e-1 .. 1e-5`.
///
/// Returns the true objective at the final (strictly feasible) point, an
/// upper bound on the optimum within `m * 1e-5` plus the search resolution.
pub fn grid_search_minimum(ir: &SubproblemIr) -> (f64, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x = ir.start.clone();
    let mut half = BOX;
    for k in 1..=5 {
        let weight = 10f64.powi(-k);
        x = grid_descent(ir, &x, weight, half, 1e-2 * weight, &mut rng);
        half = 0.1;
    }
    (ir.objective_value(&x).expect("final point lies in the domain"), x)
}

/// Random Hermitian positive definite matrix with eigenvalues at least `floor`.
pub fn random_hpd<R: Rng>(rng: &mut R, n: usize, floor: f64) -> CMat {
    let g = CMat::from_fn(n, n, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let mut m = &g * g.adjoint();
    for i in 0..n {
        m[(i, i)] += Complex64::new(floor, 0.0);
    }
    m
}

pub fn random_cvec<R: Rng>(rng: &mut R, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
}

/// Violations of a deployable solution, each as a human-readable line.
///
/// Everything is recomputed from the beams with the model evaluators: power
/// per eRRH (edge and joint phases), fronthaul capacity, the reported rates
/// against the achievable multicast rates, the reported latency, and the
/// relaxation bound `latency >= relaxed latency`.
pub fn solution_violations(inst: &Instance, sol: &SchemeSolution, tol: f64) -> Vec<String> {
    let mut out = Vec::new();
    let p = inst.power();
    let beams = &sol.beams;
    for (i, used) in beams.joint_power(inst).iter().enumerate() {
        if *used > p + tol {
            out.push(format!("joint power at eRRH {i}: {used} > {p}"));
        }
    }
    for (i, used) in beams.edge_power(inst).iter().enumerate() {
        if *used > p + tol {
            out.push(format!("edge power at eRRH {i}: {used} > {p}"));
        }
    }
    let s = inst.config.file_size;
    let c = inst.config.fronthaul_capacity;
    let recomputed = match beams.kind {
        BeamKind::CacheOnly => {
            let rates = group_rates(inst, &sinr_edge(inst, &beams.edge));
            check_rates(&mut out, "edge", &sol.edge_rates, &rates, tol);
            latency(Delivery::CacheOnly, s, 0.0, &rates, &[]).ok()
        }
        BeamKind::Bypass | BeamKind::Pipelined => {
            let fronthaul = match fronthaul_rates(inst, &beams.joint, &beams.quantization) {
                Ok(g) => g,
                Err(e) => {
                    out.push(format!("fronthaul evaluation failed: {e}"));
                    return out;
                }
            };
            for (i, g) in fronthaul.iter().enumerate() {
                if g.is_finite() && *g > c + tol {
                    out.push(format!("fronthaul at eRRH {i}: {g} > {c}"));
                }
            }
            let slowest = fronthaul.iter().copied().filter(|g| g.is_finite()).fold(f64::INFINITY, f64::min);
            let tau = if slowest.is_finite() { inst.config.fetch_overhead + s / slowest } else { 0.0 };
            if (tau - sol.tau).abs() > tol * tau.max(1.0) {
                out.push(format!("fetch delay {} differs from recomputed {tau}", sol.tau));
            }
            let joint = group_rates(inst, &sinr_joint(inst, &beams.joint, &beams.quantization));
            check_rates(&mut out, "joint", &sol.joint_rates, &joint, tol);
            if beams.kind == BeamKind::Pipelined {
                let edge: Vec<f64> = group_rates(inst, &sinr_edge(inst, &beams.edge))
                    .into_iter()
                    .enumerate()
                    .map(|(g, r)| if inst.caching_errhs(g).is_empty() { 0.0 } else { r.min(if tau > 0.0 { s / tau } else { f64::INFINITY }) })
                    .collect();
                check_rates(&mut out, "edge", &sol.edge_rates, &edge, tol);
                latency(Delivery::Pipelined, s, tau, &edge, &joint).ok()
            } else {
                latency(Delivery::Bypass, s, tau, &[], &joint).ok()
            }
        }
    };
    match recomputed {
        Some(l) if (l - sol.latency).abs() <= tol * l.max(1.0) => {}
        other => out.push(format!("reported latency {} but model gives {other:?}", sol.latency)),
    }
    if let Some(relaxed) = sol.relaxed_latency {
        if sol.latency < relaxed * (1.0 - 1e-6) {
            out.push(format!("latency {} below relaxed bound {relaxed}", sol.latency));
        }
    }
    out
}

fn check_rates(out: &mut Vec<String>, phase: &str, reported: &[f64], achievable: &[f64], tol: f64) {
    if reported.len() != achievable.len() {
        out.push(format!("{phase} rate count {} != {}", reported.len(), achievable.len()));
        return;
    }
    for (g, (r, a)) in reported.iter().zip(achievable).enumerate() {
        if *r > a + tol {
            out.push(format!("{phase} rate of group {g}: reported {r} exceeds achievable {a}"));
        }
    }
}

/// Largest single-step rise inside each outer round of a trace.
pub fn max_inner_rise(sol: &SchemeSolution) -> f64 {
    sol.trace
        .windows(2)
        .filter(|w| w[0].outer_iter == w[1].outer_iter)
        .map(|w| w[1].objective - w[0].objective)
        .fold(f64::NEG_INFINITY, f64::max)
}
