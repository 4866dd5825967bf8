//! Primal log-barrier interior-point solver for [`SubproblemIr`].
//!
//! Each centering step minimizes `t * f0(x) - sum ln(-f_j(x)) - sum ln det M_j(x)`
//! by damped Newton steps with Armijo backtracking. Steps are capped at 0.99 of
//! the distance to the boundary of every affine and matrix constraint, and
//! `t` grows geometrically until the duality-gap bound `m / t` falls below the
//! tolerance. The Hessian is Jacobi-scaled and, if Cholesky fails, regularized
//! with an escalating multiple of the identity.

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{AffineMatrix, Constraint, ConvexExpr, SubproblemIr, Term};
use crate::linalg::RMat;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub initial_barrier_weight: f64,
    pub barrier_growth: f64,
    pub newton_tolerance: f64,
    pub gap_tolerance: f64,
    pub kkt_tolerance: f64,
    pub max_newton_iterations: usize,
    pub max_centerings: usize,
    /// Sufficient-decrease fraction of the Armijo test, in (0, 0.5).
    pub armijo_fraction: f64,
    /// Backtracking contraction, in (0, 1).
    pub backtrack_factor: f64,
    /// Fraction of the distance to the nearest boundary a step may cover.
    pub boundary_fraction: f64,
    /// Raise the first barrier weight to the least-squares fit of the start's
    /// centrality condition; pays off when the start is a previous optimum.
    pub adaptive_initial_weight: bool,
    pub record_trace: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            initial_barrier_weight: 1.0,
            barrier_growth: 10.0,
            newton_tolerance: 1e-9,
            gap_tolerance: 1e-8,
            kkt_tolerance: 1e-8,
            max_newton_iterations: 600,
            max_centerings: 60,
            armijo_fraction: 1e-4,
            backtrack_factor: 0.5,
            boundary_fraction: 0.99,
            adaptive_initial_weight: false,
            record_trace: false,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), String> {
        let checks = [
            (self.initial_barrier_weight > 0.0, "initial_barrier_weight must be positive"),
            (self.barrier_growth > 1.0, "barrier_growth must exceed 1"),
            (self.armijo_fraction > 0.0 && self.armijo_fraction < 0.5, "armijo_fraction must lie in (0, 0.5)"),
            (self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0, "backtrack_factor must lie in (0, 1)"),
            (self.boundary_fraction > 0.0 && self.boundary_fraction < 1.0, "boundary_fraction must lie in (0, 1)"),
            (self.newton_tolerance > 0.0, "newton_tolerance must be positive"),
            (self.gap_tolerance > 0.0, "gap_tolerance must be positive"),
            (self.kkt_tolerance > 0.0, "kkt_tolerance must be positive"),
            (self.max_newton_iterations > 0, "max_newton_iterations must be positive"),
            (self.max_centerings > 0, "max_centerings must be positive"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err((*msg).to_string()),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    /// Gap target met but the stationarity residual stayed above tolerance.
    Inaccurate,
    MaxIterations,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("start point is not strictly feasible: {0}")]
    InfeasibleStart(String),
    #[error("point is outside the barrier domain")]
    InfeasiblePoint,
    #[error("invalid solver settings: {0}")]
    InvalidSettings(String),
    #[error("line search stalled (barrier weight {barrier_weight:.3e}, decrement {decrement:.3e})")]
    LineSearchStall { barrier_weight: f64, decrement: f64 },
    #[error("Hessian not factorizable after regularization (barrier weight {barrier_weight:.3e})")]
    NumericalBreakdown { barrier_weight: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverTraceRow {
    pub centering: usize,
    pub newton: usize,
    pub barrier_weight: f64,
    pub objective: f64,
    pub decrement: f64,
    pub step: f64,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub newton_iterations: usize,
    pub centerings: usize,
    pub barrier_weight: f64,
    pub gap_bound: f64,
    pub kkt_residual: f64,
    pub trace: Vec<SolverTraceRow>,
}

impl SolveReport {
    pub fn write_trace_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.trace {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

// ============================================================================
// Compiled expressions on local supports
// ============================================================================

struct LocalAffine {
    constant: f64,
    coeffs: Vec<(usize, f64)>,
}

impl LocalAffine {
    fn eval(&self, xl: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().map(|&(i, c)| c * xl[i]).sum::<f64>()
    }
}

struct LocalMatrix {
    constant: RMat,
    coeffs: Vec<(usize, Vec<(usize, usize, f64)>)>,
}

impl LocalMatrix {
    fn eval(&self, xl: &[f64]) -> RMat {
        let mut m = self.constant.clone();
        for (v, entries) in &self.coeffs {
            let xv = xl[*v];
            if xv != 0.0 {
                for &(r, c, e) in entries {
                    m[(r, c)] += xv * e;
                }
            }
        }
        m
    }

    fn eval_direction(&self, dl: &[f64]) -> RMat {
        let n = self.constant.nrows();
        let mut m = RMat::zeros(n, n);
        for (v, entries) in &self.coeffs {
            let d = dl[*v];
            if d != 0.0 {
                for &(r, c, e) in entries {
                    m[(r, c)] += d * e;
                }
            }
        }
        m
    }

    /// Adds `coef * (-ln det M)` derivatives; returns `ln det M` or `None` if `M` is not PD.
    fn add_neg_logdet(&self, xl: &[f64], coef: f64, grad: Option<&mut [f64]>, hess: Option<&mut RMat>) -> Option<f64> {
        let m = self.eval(xl);
        if m.nrows() == 0 {
            return Some(0.0);
        }
        let chol = m.cholesky()?;
        let ld = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if !ld.is_finite() {
            return None;
        }
        if grad.is_none() && hess.is_none() {
            return Some(ld);
        }
        let inv = chol.inverse();
        if let Some(grad) = grad {
            for (v, entries) in &self.coeffs {
                let mut s = 0.0;
                for &(r, c, e) in entries {
                    s += e * inv[(c, r)];
                }
                grad[*v] -= coef * s;
            }
        }
        if let Some(hess) = hess {
            for (a, (va, ea)) in self.coeffs.iter().enumerate() {
                for (vb, eb) in self.coeffs.iter().skip(a) {
                    let mut s = 0.0;
                    for &(r1, c1, e1) in ea {
                        for &(r2, c2, e2) in eb {
                            s += e1 * e2 * inv[(c1, r2)] * inv[(c2, r1)];
                        }
                    }
                    hess[(*va, *vb)] += coef * s;
                    if va != vb {
                        hess[(*vb, *va)] += coef * s;
                    }
                }
            }
        }
        Some(ld)
    }
}

enum LocalTerm {
    SumSquares { coef: f64, rows: Vec<LocalAffine> },
    NegLog { coef: f64, arg: LocalAffine },
    Reciprocal { coef: f64, arg: LocalAffine },
    NegLogDet { coef: f64, arg: LocalMatrix },
}

/// Expression restricted to the variables it touches.
struct Compiled {
    support: Vec<usize>,
    affine: LocalAffine,
    terms: Vec<LocalTerm>,
}

struct Derivs {
    value: f64,
    grad: Vec<f64>,
    hess: RMat,
}

fn local_index(support: &[usize], v: usize) -> usize {
    support.binary_search(&v).expect("variable in support")
}

fn compile_affine(a: &crate::ir::Affine, support: &[usize]) -> LocalAffine {
    LocalAffine { constant: a.constant, coeffs: a.coeffs.iter().map(|&(v, c)| (local_index(support, v), c)).collect() }
}

fn compile_matrix(m: &AffineMatrix, support: &[usize]) -> LocalMatrix {
    LocalMatrix {
        constant: m.constant.clone(),
        coeffs: m.coeffs.iter().map(|(v, e)| (local_index(support, *v), e.clone())).collect(),
    }
}

fn collect_support(e: &ConvexExpr) -> Vec<usize> {
    let mut s: Vec<usize> = e.affine.coeffs.iter().map(|c| c.0).collect();
    for t in &e.terms {
        match t {
            Term::SumSquares { rows, .. } => rows.iter().for_each(|r| s.extend(r.coeffs.iter().map(|c| c.0))),
            Term::NegLog { arg, .. } | Term::Reciprocal { arg, .. } => s.extend(arg.coeffs.iter().map(|c| c.0)),
            Term::NegLogDet { arg, .. } => s.extend(arg.coeffs.iter().map(|c| c.0)),
        }
    }
    s.sort_unstable();
    s.dedup();
    s
}

impl Compiled {
    fn from_expr(e: &ConvexExpr) -> Self {
        let support = collect_support(e);
        let terms = e
            .terms
            .iter()
            .map(|t| match t {
                Term::SumSquares { coef, rows } => LocalTerm::SumSquares {
                    coef: *coef,
                    rows: rows.iter().map(|r| compile_affine(r, &support)).collect(),
                },
                Term::NegLog { coef, arg } => LocalTerm::NegLog { coef: *coef, arg: compile_affine(arg, &support) },
                Term::Reciprocal { coef, arg } => LocalTerm::Reciprocal { coef: *coef, arg: compile_affine(arg, &support) },
                Term::NegLogDet { coef, arg } => LocalTerm::NegLogDet { coef: *coef, arg: compile_matrix(arg, &support) },
            })
            .collect();
        let affine = compile_affine(&e.affine, &support);
        Self { support, affine, terms }
    }

    fn from_psd(m: &AffineMatrix) -> Self {
        let mut support: Vec<usize> = m.coeffs.iter().map(|c| c.0).collect();
        support.sort_unstable();
        support.dedup();
        let term = LocalTerm::NegLogDet { coef: 1.0, arg: compile_matrix(m, &support) };
        Self { support, affine: LocalAffine { constant: 0.0, coeffs: Vec::new() }, terms: vec![term] }
    }

    fn is_affine(&self) -> bool {
        self.terms.is_empty()
    }

    fn gather(&self, x: &[f64]) -> Vec<f64> {
        self.support.iter().map(|&v| x[v]).collect()
    }

    fn value(&self, x: &[f64]) -> Option<f64> {
        let xl = self.gather(x);
        let mut v = self.affine.eval(&xl);
        for t in &self.terms {
            v += match t {
                LocalTerm::SumSquares { coef, rows } => coef * rows.iter().map(|r| r.eval(&xl).powi(2)).sum::<f64>(),
                LocalTerm::NegLog { coef, arg } => {
                    let a = arg.eval(&xl);
                    if !(a > 0.0) {
                        return None;
                    }
                    -coef * a.ln()
                }
                LocalTerm::Reciprocal { coef, arg } => {
                    let a = arg.eval(&xl);
                    if !(a > 0.0) {
                        return None;
                    }
                    coef / a
                }
                LocalTerm::NegLogDet { coef, arg } => -coef * arg.add_neg_logdet(&xl, *coef, None, None)?,
            };
        }
        v.is_finite().then_some(v)
    }

    fn derivs(&self, x: &[f64], with_hess: bool) -> Option<Derivs> {
        let xl = self.gather(x);
        let s = self.support.len();
        let mut grad = vec![0.0; s];
        // Affine bodies carry no curvature; callers treat a 0 x 0 Hessian as zero.
        let mut hess = if with_hess && !self.is_affine() { RMat::zeros(s, s) } else { RMat::zeros(0, 0) };
        let mut value = self.affine.eval(&xl);
        for &(i, c) in &self.affine.coeffs {
            grad[i] += c;
        }
        for t in &self.terms {
            match t {
                LocalTerm::SumSquares { coef, rows } => {
                    for r in rows {
                        let rv = r.eval(&xl);
                        value += coef * rv * rv;
                        for &(i, c) in &r.coeffs {
                            grad[i] += 2.0 * coef * rv * c;
                        }
                        if with_hess {
                            for &(i, ci) in &r.coeffs {
                                for &(j, cj) in &r.coeffs {
                                    hess[(i, j)] += 2.0 * coef * ci * cj;
                                }
                            }
                        }
                    }
                }
                LocalTerm::NegLog { coef, arg } => {
                    let a = arg.eval(&xl);
                    if !(a > 0.0) {
                        return None;
                    }
                    value -= coef * a.ln();
                    for &(i, c) in &arg.coeffs {
                        grad[i] -= coef * c / a;
                    }
                    if with_hess {
                        let w = coef / (a * a);
                        for &(i, ci) in &arg.coeffs {
                            for &(j, cj) in &arg.coeffs {
                                hess[(i, j)] += w * ci * cj;
                            }
                        }
                    }
                }
                LocalTerm::Reciprocal { coef, arg } => {
                    let a = arg.eval(&xl);
                    if !(a > 0.0) {
                        return None;
                    }
                    value += coef / a;
                    for &(i, c) in &arg.coeffs {
                        grad[i] -= coef * c / (a * a);
                    }
                    if with_hess {
                        let w = 2.0 * coef / (a * a * a);
                        for &(i, ci) in &arg.coeffs {
                            for &(j, cj) in &arg.coeffs {
                                hess[(i, j)] += w * ci * cj;
                            }
                        }
                    }
                }
                LocalTerm::NegLogDet { coef, arg } => {
                    let h = if with_hess { Some(&mut hess) } else { None };
                    let ld = arg.add_neg_logdet(&xl, *coef, Some(&mut grad), h)?;
                    value -= coef * ld;
                }
            }
        }
        value.is_finite().then_some(Derivs { value, grad, hess })
    }

    /// Largest step along `d` keeping an affine body negative or a matrix PD.
    fn boundary_step(&self, x: &[f64], d: &[f64], psd: bool) -> f64 {
        let dl: Vec<f64> = self.support.iter().map(|&v| d[v]).collect();
        if psd {
            let LocalTerm::NegLogDet { arg, .. } = &self.terms[0] else { unreachable!() };
            let xl = self.gather(x);
            let m = arg.eval(&xl);
            let dm = arg.eval_direction(&dl);
            let Some(chol) = m.cholesky() else { return 0.0 };
            let l = chol.l();
            let Some(linv) = l.clone().try_inverse() else { return 0.0 };
            let s = &linv * dm * linv.transpose();
            let s = (&s + s.transpose()) * 0.5;
            let lo = s.symmetric_eigen().eigenvalues.min();
            if lo < 0.0 {
                -1.0 / lo
            } else {
                f64::INFINITY
            }
        } else if self.is_affine() {
            let xl = self.gather(x);
            let f = self.affine.eval(&xl);
            let slope: f64 = self.affine.coeffs.iter().map(|&(i, c)| c * dl[i]).sum();
            if slope > 0.0 {
                -f / slope
            } else {
                f64::INFINITY
            }
        } else {
            f64::INFINITY
        }
    }
}

struct Barrier {
    n: usize,
    objective: Compiled,
    inequalities: Vec<Compiled>,
    psd: Vec<Compiled>,
    /// Barrier parameter: one per inequality plus the dimension of each matrix.
    weight_sum: f64,
}

impl Barrier {
    fn new(ir: &SubproblemIr) -> Self {
        let mut inequalities = Vec::new();
        let mut psd = Vec::new();
        let mut weight_sum = 0.0;
        for c in &ir.constraints {
            match c {
                Constraint::Inequality { body, .. } => {
                    inequalities.push(Compiled::from_expr(body));
                    weight_sum += 1.0;
                }
                Constraint::Psd { matrix, .. } => {
                    psd.push(Compiled::from_psd(matrix));
                    weight_sum += matrix.dim as f64;
                }
            }
        }
        Self { n: ir.num_vars, objective: Compiled::from_expr(&ir.objective), inequalities, psd, weight_sum }
    }

    /// Barrier-augmented value `t f0 + phi`.
    fn value(&self, x: &[f64], t: f64) -> Option<f64> {
        let mut v = t * self.objective.value(x)?;
        for c in &self.inequalities {
            let f = c.value(x)?;
            if !(f < 0.0) {
                return None;
            }
            v -= (-f).ln();
        }
        for c in &self.psd {
            v += c.value(x)?;
        }
        v.is_finite().then_some(v)
    }

    /// Gradients of `f0` and of the barrier part, and the Hessian of `t f0 + phi`.
    fn derivs(&self, x: &[f64], t: f64, with_hess: bool) -> Option<(f64, Vec<f64>, Vec<f64>, RMat)> {
        let n = self.n;
        let mut g0 = vec![0.0; n];
        let mut gb = vec![0.0; n];
        let mut h = if with_hess { RMat::zeros(n, n) } else { RMat::zeros(0, 0) };
        let d = self.objective.derivs(x, with_hess)?;
        let mut value = t * d.value;
        for (a, &v) in self.objective.support.iter().enumerate() {
            g0[v] += d.grad[a];
            if with_hess && d.hess.nrows() > 0 {
                for (b, &w) in self.objective.support.iter().enumerate() {
                    h[(v, w)] += t * d.hess[(a, b)];
                }
            }
        }
        for c in &self.inequalities {
            let d = c.derivs(x, with_hess)?;
            if !(d.value < 0.0) {
                return None;
            }
            let s = -d.value;
            value -= s.ln();
            let curved = d.hess.nrows() > 0;
            for (a, &v) in c.support.iter().enumerate() {
                gb[v] += d.grad[a] / s;
                if with_hess {
                    let ga = d.grad[a] / (s * s);
                    for (b, &w) in c.support.iter().enumerate() {
                        let curvature = if curved { d.hess[(a, b)] / s } else { 0.0 };
                        h[(v, w)] += ga * d.grad[b] + curvature;
                    }
                }
            }
        }
        for c in &self.psd {
            let d = c.derivs(x, with_hess)?;
            value += d.value;
            for (a, &v) in c.support.iter().enumerate() {
                gb[v] += d.grad[a];
                if with_hess {
                    for (b, &w) in c.support.iter().enumerate() {
                        h[(v, w)] += d.hess[(a, b)];
                    }
                }
            }
        }
        value.is_finite().then_some((value, g0, gb, h))
    }

    fn max_step(&self, x: &[f64], d: &[f64]) -> f64 {
        let mut a = f64::INFINITY;
        for c in &self.inequalities {
            a = a.min(c.boundary_step(x, d, false));
        }
        for c in &self.psd {
            a = a.min(c.boundary_step(x, d, true));
        }
        a
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Newton direction for `H d = -g` with Jacobi scaling and escalating ridge.
fn newton_direction(h: &RMat, g: &[f64]) -> Option<Vec<f64>> {
    let n = g.len();
    let scale: Vec<f64> = (0..n).map(|i| 1.0 / h[(i, i)].abs().max(1e-300).sqrt()).collect();
    let mut hs = h.clone();
    for i in 0..n {
        for j in 0..n {
            hs[(i, j)] *= scale[i] * scale[j];
        }
    }
    let rhs = DVector::from_iterator(n, (0..n).map(|i| -g[i] * scale[i]));
    let mut ridge = 1e-10;
    for _ in 0..4 {
        let mut m = hs.clone();
        for i in 0..n {
            m[(i, i)] += ridge;
        }
        if let Some(ch) = m.cholesky() {
            let y = ch.solve(&rhs);
            if y.iter().all(|v| v.is_finite()) {
                return Some((0..n).map(|i| y[i] * scale[i]).collect());
            }
        }
        ridge *= 100.0;
    }
    None
}

/// Stationarity norm of `f0 + phi / t` at `point`.
pub fn kkt_residual(ir: &SubproblemIr, point: &[f64], barrier_weight: f64) -> Result<f64, SolverError> {
    if point.len() != ir.num_vars {
        return Err(SolverError::InfeasiblePoint);
    }
    residual(&Barrier::new(ir), point, barrier_weight).ok_or(SolverError::InfeasiblePoint)
}

fn residual(b: &Barrier, point: &[f64], barrier_weight: f64) -> Option<f64> {
    let (_, g0, gb, _) = b.derivs(point, barrier_weight, false)?;
    let r: Vec<f64> = g0.iter().zip(&gb).map(|(a, c)| a + c / barrier_weight).collect();
    Some(norm(&r))
}

/// Minimize the subproblem from its strictly feasible start.
pub fn solve(ir: &SubproblemIr, settings: &SolverSettings) -> Result<SolveReport, SolverError> {
    settings.validate().map_err(SolverError::InvalidSettings)?;
    if ir.start.len() != ir.num_vars {
        return Err(SolverError::InfeasibleStart("start has the wrong length".into()));
    }
    let b = Barrier::new(ir);
    let mut x = ir.start.clone();
    if b.value(&x, 1.0).is_none() {
        let culprit = ir
            .constraints
            .iter()
            .find(|c| match c {
                Constraint::Inequality { body, .. } => !body.value(&x).is_some_and(|v| v < 0.0),
                Constraint::Psd { matrix, .. } => crate::ir::real_logdet(&matrix.eval(&x)).is_none(),
            })
            .map(|c| c.label().to_string())
            .unwrap_or_else(|| "objective domain".into());
        return Err(SolverError::InfeasibleStart(culprit));
    }
    let m = b.weight_sum.max(1.0);
    let t_final = m / settings.gap_tolerance;
    let mut t = settings.initial_barrier_weight;
    if settings.adaptive_initial_weight {
        if let Some((_, g0, gb, _)) = b.derivs(&x, 1.0, false) {
            let gg: f64 = g0.iter().map(|v| v * v).sum();
            let gp: f64 = g0.iter().zip(&gb).map(|(a, c)| a * c).sum();
            if gg > 0.0 && gp < 0.0 {
                t = (-gp / gg).clamp(settings.initial_barrier_weight, t_final);
            }
        }
    }
    let mut trace = Vec::new();
    let mut iters = 0usize;
    let mut centering = 0usize;
    let mut hit_cap = false;
    loop {
        let at_final = t >= t_final;
        let capped = center(&b, &mut x, t, settings, &mut iters, centering, &mut trace, at_final)?;
        if capped || (!at_final && centering + 1 >= settings.max_centerings) {
            hit_cap = true;
            break;
        }
        if at_final {
            break;
        }
        t = (t * settings.barrier_growth).min(t_final);
        centering += 1;
    }
    let objective = b.objective.value(&x).unwrap_or(f64::NAN);
    let kkt = residual(&b, &x, t).unwrap_or(f64::INFINITY);
    let status = if hit_cap {
        SolveStatus::MaxIterations
    } else if kkt <= settings.kkt_tolerance {
        SolveStatus::Converged
    } else {
        SolveStatus::Inaccurate
    };
    Ok(SolveReport {
        x,
        objective,
        status,
        newton_iterations: iters,
        centerings: centering + 1,
        barrier_weight: t,
        gap_bound: m / t,
        kkt_residual: kkt,
        trace,
    })
}

/// Newton centering at weight `t`; returns whether the iteration cap was hit.
/// On the final weight, keeps iterating past the decrement test until the
/// stationarity residual meets its tolerance.
#[allow(clippy::too_many_arguments)]
fn center(
    b: &Barrier,
    x: &mut Vec<f64>,
    t: f64,
    settings: &SolverSettings,
    iters: &mut usize,
    centering: usize,
    trace: &mut Vec<SolverTraceRow>,
    polish: bool,
) -> Result<bool, SolverError> {
    let n = b.n;
    let mut polish_steps = 0;
    let mut newton = 0;
    loop {
        if *iters >= settings.max_newton_iterations {
            return Ok(true);
        }
        let Some((f, g0, gb, h)) = b.derivs(x, t, true) else {
            return Err(SolverError::NumericalBreakdown { barrier_weight: t });
        };
        let g: Vec<f64> = (0..n).map(|i| t * g0[i] + gb[i]).collect();
        let Some(d) = newton_direction(&h, &g) else {
            return Err(SolverError::NumericalBreakdown { barrier_weight: t });
        };
        let slope: f64 = g.iter().zip(&d).map(|(a, c)| a * c).sum();
        let decrement = (-slope).max(0.0);
        let residual = norm(&g) / t;
        if decrement / 2.0 <= settings.newton_tolerance {
            if !polish || residual <= settings.kkt_tolerance || polish_steps >= 8 {
                return Ok(false);
            }
            polish_steps += 1;
        }
        let cap = b.max_step(x, &d);
        let mut alpha = if cap.is_finite() { (settings.boundary_fraction * cap).min(1.0) } else { 1.0 };
        let tol = 1e-13 * (f.abs() + 1.0);
        let mut accepted = None;
        while alpha > 1e-16 {
            let trial: Vec<f64> = (0..n).map(|i| x[i] + alpha * d[i]).collect();
            if let Some(ft) = b.value(&trial, t) {
                if ft <= f + settings.armijo_fraction * alpha * slope + tol {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            alpha *= settings.backtrack_factor;
        }
        *iters += 1;
        newton += 1;
        match accepted {
            Some((trial, ft)) => {
                debug_assert!(ft <= f + tol, "Armijo step increased the centering objective");
                if settings.record_trace {
                    trace.push(SolverTraceRow {
                        centering,
                        newton,
                        barrier_weight: t,
                        objective: b.objective.value(&trial).unwrap_or(f64::NAN),
                        decrement,
                        step: alpha,
                    });
                }
                let progress = f - ft;
                *x = trial;
                if decrement / 2.0 <= settings.newton_tolerance && progress <= tol {
                    return Ok(false);
                }
            }
            None => {
                // Roundoff floor: the decrement is already negligible relative to the scale of F.
                if decrement <= 1e-6 * (f.abs() + 1.0) {
                    return Ok(false);
                }
                return Err(SolverError::LineSearchStall { barrier_weight: t, decrement });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{Affine, HermitianVar};
    use crate::linalg::{realify, CMat};
    use num_complex::Complex64;

    fn le(ir: &mut SubproblemIr, label: &str, a: Affine) {
        ir.push_inequality(label, ConvexExpr::affine(a));
    }

    #[test]
    fn linear_program_hits_vertex() {
        let mut ir = SubproblemIr::new();
        let x = ir.add_scalar("x");
        let y = ir.add_scalar("y");
        le(&mut ir, "x>=1", Affine::constant(1.0).push(x, -1.0).clone());
        le(&mut ir, "y>=2", Affine::constant(2.0).push(y, -1.0).clone());
        le(&mut ir, "sum<=10", Affine::constant(-10.0).push(x, 1.0).push(y, 1.0).clone());
        ir.set_objective(ConvexExpr::affine(Affine::var(x).push(y, 1.0).clone()));
        ir.start = vec![5.0, 3.0];
        let r = solve(&ir, &SolverSettings::default()).unwrap();
        // Active corners leave the slack below double resolution of x, so the
        // stationarity residual floors near 1e-7 and the status may be Inaccurate.
        assert_ne!(r.status, SolveStatus::MaxIterations);
        assert!((r.objective - 3.0).abs() < 1e-7, "{}", r.objective);
        assert!(r.kkt_residual <= 1e-6);
        assert!(r.gap_bound <= 1e-8);
    }

    fn x_minus_log_x() -> SubproblemIr {
        let mut ir = SubproblemIr::new();
        let x = ir.add_scalar("x");
        ir.set_objective(ConvexExpr::affine(Affine::var(x)).with(Term::NegLog { coef: 1.0, arg: Affine::var(x) }));
        ir.start = vec![4.0];
        ir
    }

    #[test]
    fn x_minus_log_x_stationary_at_one() {
        let ir = x_minus_log_x();
        let r = solve(&ir, &SolverSettings::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        assert!((r.x[0] - 1.0).abs() < 1e-8);
        assert!((r.objective - 1.0).abs() < 1e-12);
        assert!(kkt_residual(&ir, &r.x, r.barrier_weight).unwrap() <= 1e-8);
        // d/dx (x - ln x) at 1.1 is 1 - 1/1.1.
        let off = kkt_residual(&ir, &[1.1], r.barrier_weight).unwrap();
        assert!((off - (1.0 - 1.0 / 1.1)).abs() < 1e-12 && off > 1e-3);
        assert_eq!(kkt_residual(&ir, &[-1.0], 1.0), Err(SolverError::InfeasiblePoint));
    }

    #[test]
    fn lp_corner() {
        let mut ir = SubproblemIr::new();
        let x = ir.add_scalar("x");
        le(&mut ir, "x>=1", Affine::constant(1.0).push(x, -1.0).clone());
        ir.set_objective(ConvexExpr::affine(Affine::var(x)));
        ir.start = vec![3.0];
        let r = solve(&ir, &SolverSettings::default()).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn settings_validation() {
        let bad = SolverSettings { armijo_fraction: 0.7, ..Default::default() };
        assert!(matches!(solve(&x_minus_log_x(), &bad), Err(SolverError::InvalidSettings(_))));
        assert!(SolverSettings::default().validate().is_ok());
    }

    #[test]
    fn deterministic_reports() {
        let ir = x_minus_log_x();
        let a = solve(&ir, &SolverSettings::default()).unwrap();
        let b = solve(&ir, &SolverSettings::default()).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.newton_iterations, b.newton_iterations);
    }

    #[test]
    fn quadratic_with_active_bound() {
        let mut ir = SubproblemIr::new();
        let x = ir.add_scalar("x");
        le(&mut ir, "x<=1", Affine::constant(-1.0).push(x, 1.0).clone());
        let row = Affine::constant(-3.0).push(x, 1.0).clone();
        ir.set_objective(ConvexExpr::default().with(Term::SumSquares { coef: 1.0, rows: vec![row] }));
        ir.start = vec![0.0];
        let r = solve(&ir, &SolverSettings::default()).unwrap();
        assert!((r.objective - 4.0).abs() < 1e-7);
        assert!((r.x[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn reciprocal_plus_linear() {
        let mut ir = SubproblemIr::new();
        let x = ir.add_scalar("x");
        le(&mut ir, "x<=10", Affine::constant(-10.0).push(x, 1.0).clone());
        ir.set_objective(ConvexExpr::affine(Affine::var(x)).with(Term::Reciprocal { coef: 1.0, arg: Affine::var(x) }));
        ir.start = vec![7.0];
        let r = solve(&ir, &SolverSettings::default()).unwrap();
        assert!((r.objective - 2.0).abs() < 1e-9);
        assert_eq!(r.status, SolveStatus::Converged);
    }

    #[test]
    fn hermitian_matrix_dominating_constant() {
        // min tr W  s.t.  W >= A  has optimum W = A.
        let a = CMat::from_row_slice(
            2,
            2,
            &[
                Complex64::new(2.0, 0.0),
                Complex64::new(1.0, 1.0),
                Complex64::new(1.0, -1.0),
                Complex64::new(3.0, 0.0),
            ],
        );
        let mut ir = SubproblemIr::new();
        let w: HermitianVar = ir.add_hermitian("W", 2);
        let mut m = w.psd_matrix();
        m.constant -= realify(&a);
        ir.push_psd("W>=A", m);
        ir.set_objective(ConvexExpr::affine(w.trace_with(&CMat::identity(2, 2), 0)));
        w.write(&(CMat::identity(2, 2) * Complex64::new(6.0, 0.0)), &mut ir.start);
        let r = solve(&ir, &SolverSettings::default()).unwrap();
        assert!((r.objective - 5.0).abs() < 1e-7, "{}", r.objective);
        let got = w.to_matrix(&r.x);
        assert!((got - a).iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-5);
    }

    #[test]
    fn neg_logdet_objective_matches_closed_form() {
        // min -ln det W + tr W over 2x2 Hermitian W: optimum W = I, value 2 (realified log-det halved).
        let mut ir = SubproblemIr::new();
        let w = ir.add_hermitian("W", 2);
        let obj = ConvexExpr::affine(w.trace_with(&CMat::identity(2, 2), 0))
            .with(Term::NegLogDet { coef: 0.5, arg: w.psd_matrix() });
        ir.set_objective(obj);
        w.write(&(CMat::identity(2, 2) * Complex64::new(3.0, 0.0)), &mut ir.start);
        let r = solve(&ir, &SolverSettings::default()).unwrap();
        assert!((r.objective - 2.0).abs() < 1e-9, "{}", r.objective);
    }

    #[test]
    fn rejects_infeasible_start() {
        let mut ir = SubproblemIr::new();
        let x = ir.add_scalar("x");
        le(&mut ir, "x<=1", Affine::constant(-1.0).push(x, 1.0).clone());
        ir.set_objective(ConvexExpr::affine(Affine::var(x)));
        ir.start = vec![2.0];
        match solve(&ir, &SolverSettings::default()) {
            Err(SolverError::InfeasibleStart(label)) => assert_eq!(label, "x<=1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn adaptive_weight_and_trace() {
        let mut ir = SubproblemIr::new();
        let x = ir.add_scalar("x");
        le(&mut ir, "x>=1", Affine::constant(1.0).push(x, -1.0).clone());
        ir.set_objective(ConvexExpr::affine(Affine::var(x)));
        ir.start = vec![1.5];
        let s = SolverSettings { adaptive_initial_weight: true, record_trace: true, ..Default::default() };
        let r = solve(&ir, &s).unwrap();
        assert!((r.objective - 1.0).abs() < 1e-8);
        assert!(!r.trace.is_empty());
        let mut buf = Vec::new();
        r.write_trace_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("centering,newton"));
    }
}
