//! Real-valued convex subproblem representation.
//!
//! A subproblem is `minimize objective(x)` subject to `body_j(x) <= 0` and
//! `M_j(x) >= 0` (positive semidefinite), where every body is an affine part
//! plus convex atoms and every matrix is affine in `x`. Complex Hermitian
//! unknowns enter through their real embedding, so the solver never sees
//! complex numbers.

mod builders;
mod surrogate;
mod vars;

use std::fmt::Write as _;

use crate::linalg::RMat;

pub use builders::{
    build_fcbt_ir, build_partial_ir, FcbtLayout, FcbtPoint, PartialLayout, PartialMode, PartialPoint,
    PenaltyState, ProblemConstants,
};
pub(crate) use builders::restrict;
pub use surrogate::{phi, phi_affine, phi_bar, phi_hermitian};
pub use vars::{ComplexVectorVar, HermitianVar};

/// Sparse affine form `constant + sum coeff * x[var]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Affine {
    pub constant: f64,
    pub coeffs: Vec<(usize, f64)>,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Self { constant: c, coeffs: Vec::new() }
    }

    pub fn var(index: usize) -> Self {
        Self::term(index, 1.0)
    }

    pub fn term(index: usize, coeff: f64) -> Self {
        Self { constant: 0.0, coeffs: vec![(index, coeff)] }
    }

    pub fn push(&mut self, index: usize, coeff: f64) -> &mut Self {
        self.coeffs.push((index, coeff));
        self
    }

    pub fn shift(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn add_scaled(&mut self, other: &Affine, scale: f64) -> &mut Self {
        self.constant += scale * other.constant;
        self.coeffs.extend(other.coeffs.iter().map(|&(i, c)| (i, scale * c)));
        self
    }

    pub fn scaled(&self, scale: f64) -> Self {
        let mut out = Self::default();
        out.add_scaled(self, scale);
        out
    }

    /// Sort by variable, merge duplicates and drop exact zeros.
    pub fn normalize(&mut self) {
        self.coeffs.sort_by_key(|&(i, _)| i);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(self.coeffs.len());
        for &(i, c) in &self.coeffs {
            match merged.last_mut() {
                Some((j, d)) if *j == i => *d += c,
                _ => merged.push((i, c)),
            }
        }
        merged.retain(|&(_, c)| c != 0.0);
        self.coeffs = merged;
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }
}

/// Symmetric real matrix `constant + sum_k x[k] E_k` with sparse `E_k`.
///
/// Each `E_k` lists every stored entry, both triangles included.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMatrix {
    pub dim: usize,
    pub constant: RMat,
    pub coeffs: Vec<(usize, Vec<(usize, usize, f64)>)>,
}

impl AffineMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, constant: RMat::zeros(dim, dim), coeffs: Vec::new() }
    }

    pub fn add_entry(&mut self, var: usize, row: usize, col: usize, value: f64) {
        match self.coeffs.iter_mut().find(|(v, _)| *v == var) {
            Some((_, e)) => e.push((row, col, value)),
            None => self.coeffs.push((var, vec![(row, col, value)])),
        }
    }

    pub fn normalize(&mut self) {
        self.coeffs.sort_by_key(|(v, _)| *v);
        for (_, entries) in &mut self.coeffs {
            entries.sort_by_key(|&(r, c, _)| (r, c));
            let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
            for &(r, c, v) in entries.iter() {
                match merged.last_mut() {
                    Some((r0, c0, v0)) if *r0 == r && *c0 == c => *v0 += v,
                    _ => merged.push((r, c, v)),
                }
            }
            merged.retain(|e| e.2 != 0.0);
            *entries = merged;
        }
        self.coeffs.retain(|(_, e)| !e.is_empty());
    }

    pub fn eval(&self, x: &[f64]) -> RMat {
        let mut m = self.constant.clone();
        for (var, entries) in &self.coeffs {
            let xv = x[*var];
            if xv != 0.0 {
                for &(r, c, v) in entries {
                    m[(r, c)] += xv * v;
                }
            }
        }
        m
    }
}

/// Convex atom appearing in an objective or constraint body.
#[derive(Clone, Debug, PartialEq)]
pub enum Term {
    /// `coef * sum_r row_r(x)^2`; covers convex quadratics such as `|h^H w|^2`.
    SumSquares { coef: f64, rows: Vec<Affine> },
    /// `-coef * ln(arg(x))`, domain `arg > 0`.
    NegLog { coef: f64, arg: Affine },
    /// `-coef * ln det(arg(x))`, domain `arg > 0` (positive definite).
    NegLogDet { coef: f64, arg: AffineMatrix },
    /// `coef / arg(x)`, domain `arg > 0`.
    Reciprocal { coef: f64, arg: Affine },
}

/// Affine part plus a sum of convex atoms with non-negative coefficients.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvexExpr {
    pub affine: Affine,
    pub terms: Vec<Term>,
}

impl ConvexExpr {
    pub fn affine(a: Affine) -> Self {
        Self { affine: a, terms: Vec::new() }
    }

    pub fn with(mut self, t: Term) -> Self {
        self.terms.push(t);
        self
    }

    /// Value, or `None` outside the atoms' domains.
    pub fn value(&self, x: &[f64]) -> Option<f64> {
        let mut v = self.affine.eval(x);
        for t in &self.terms {
            v += match t {
                Term::SumSquares { coef, rows } => coef * rows.iter().map(|r| r.eval(x).powi(2)).sum::<f64>(),
                Term::NegLog { coef, arg } => {
                    let a = arg.eval(x);
                    if !(a > 0.0) {
                        return None;
                    }
                    -coef * a.ln()
                }
                Term::Reciprocal { coef, arg } => {
                    let a = arg.eval(x);
                    if !(a > 0.0) {
                        return None;
                    }
                    coef / a
                }
                Term::NegLogDet { coef, arg } => -coef * real_logdet(&arg.eval(x))?,
            };
        }
        v.is_finite().then_some(v)
    }

    fn normalize(&mut self) {
        self.affine.normalize();
        for t in &mut self.terms {
            match t {
                Term::SumSquares { rows, .. } => rows.iter_mut().for_each(Affine::normalize),
                Term::NegLog { arg, .. } | Term::Reciprocal { arg, .. } => arg.normalize(),
                Term::NegLogDet { arg, .. } => arg.normalize(),
            }
        }
    }
}

/// `ln det` of a symmetric positive definite real matrix.
pub fn real_logdet(m: &RMat) -> Option<f64> {
    if m.nrows() == 0 {
        return Some(0.0);
    }
    let chol = m.clone().cholesky()?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        let d = l[(i, i)];
        if !(d > 0.0) {
            return None;
        }
        acc += d.ln();
    }
    acc.is_finite().then_some(2.0 * acc)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Constraint {
    /// `body(x) <= 0`.
    Inequality { label: String, body: ConvexExpr },
    /// `matrix(x)` positive semidefinite.
    Psd { label: String, matrix: AffineMatrix },
}

impl Constraint {
    pub fn label(&self) -> &str {
        match self {
            Constraint::Inequality { label, .. } | Constraint::Psd { label, .. } => label,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Scalar,
    Hermitian { dim: usize },
    ComplexVector { dim: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarBlock {
    pub name: String,
    pub kind: VarKind,
    pub offset: usize,
    pub len: usize,
}

/// A convex subproblem together with a strictly feasible start point.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SubproblemIr {
    pub blocks: Vec<VarBlock>,
    pub num_vars: usize,
    pub objective: ConvexExpr,
    pub constraints: Vec<Constraint>,
    pub start: Vec<f64>,
}

impl SubproblemIr {
    pub fn new() -> Self {
        Self::default()
    }

    fn push_block(&mut self, name: &str, kind: VarKind, len: usize) -> usize {
        let offset = self.num_vars;
        self.blocks.push(VarBlock { name: name.to_string(), kind, offset, len });
        self.num_vars += len;
        self.start.resize(self.num_vars, 0.0);
        offset
    }

    pub fn add_scalar(&mut self, name: &str) -> usize {
        self.push_block(name, VarKind::Scalar, 1)
    }

    pub fn add_hermitian(&mut self, name: &str, dim: usize) -> HermitianVar {
        let offset = self.push_block(name, VarKind::Hermitian { dim }, dim * dim);
        HermitianVar { offset, dim }
    }

    pub fn add_vector(&mut self, name: &str, dim: usize) -> ComplexVectorVar {
        let offset = self.push_block(name, VarKind::ComplexVector { dim }, 2 * dim);
        ComplexVectorVar { offset, dim }
    }

    pub fn push_inequality(&mut self, label: impl Into<String>, mut body: ConvexExpr) {
        body.normalize();
        self.constraints.push(Constraint::Inequality { label: label.into(), body });
    }

    pub fn push_psd(&mut self, label: impl Into<String>, mut matrix: AffineMatrix) {
        matrix.normalize();
        self.constraints.push(Constraint::Psd { label: label.into(), matrix });
    }

    pub fn set_objective(&mut self, mut objective: ConvexExpr) {
        objective.normalize();
        self.objective = objective;
    }

    pub fn objective_value(&self, x: &[f64]) -> Option<f64> {
        self.objective.value(x)
    }

    /// Largest constraint value at `x` (PSD constraints report the negated
    /// smallest eigenvalue); `None` outside an atom's domain.
    pub fn max_violation(&self, x: &[f64]) -> Option<f64> {
        let mut worst = f64::NEG_INFINITY;
        for c in &self.constraints {
            let v = match c {
                Constraint::Inequality { body, .. } => body.value(x)?,
                Constraint::Psd { matrix, .. } => {
                    let m = matrix.eval(x);
                    if m.nrows() == 0 {
                        continue;
                    }
                    -m.symmetric_eigen().eigenvalues.min()
                }
            };
            worst = worst.max(v);
        }
        Some(worst)
    }

    /// Every inequality strictly negative and every matrix positive definite.
    pub fn is_strictly_feasible(&self, x: &[f64]) -> bool {
        if x.len() != self.num_vars || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        self.objective.value(x).is_some()
            && self.constraints.iter().all(|c| match c {
                Constraint::Inequality { body, .. } => body.value(x).is_some_and(|v| v < 0.0),
                Constraint::Psd { matrix, .. } => real_logdet(&matrix.eval(x)).is_some(),
            })
    }

    /// Human-readable listing of variables, objective and constraints.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "variables: {}", self.num_vars);
        for b in &self.blocks {
            let _ = writeln!(s, "  {:<16} {:?} @ {}..{}", b.name, b.kind, b.offset, b.offset + b.len);
        }
        let _ = writeln!(s, "minimize {}", describe_expr(&self.objective));
        let _ = writeln!(s, "subject to ({} constraints)", self.constraints.len());
        for c in &self.constraints {
            match c {
                Constraint::Inequality { label, body } => {
                    let _ = writeln!(s, "  [{label}] {} <= 0", describe_expr(body));
                }
                Constraint::Psd { label, matrix } => {
                    let _ = writeln!(s, "  [{label}] psd({}x{}, {} vars)", matrix.dim, matrix.dim, matrix.coeffs.len());
                }
            }
        }
        s
    }
}

fn describe_affine(a: &Affine) -> String {
    let mut s = format!("{:.6}", a.constant);
    for &(i, c) in &a.coeffs {
        let _ = write!(s, " {:+.6}*x{}", c, i);
    }
    s
}

fn describe_expr(e: &ConvexExpr) -> String {
    let mut s = describe_affine(&e.affine);
    for t in &e.terms {
        match t {
            Term::SumSquares { coef, rows } => {
                let _ = write!(s, " + {coef:.6}*sumsq[{} rows]", rows.len());
            }
            Term::NegLog { coef, arg } => {
                let _ = write!(s, " - {coef:.6}*ln({})", describe_affine(arg));
            }
            Term::NegLogDet { coef, arg } => {
                let _ = write!(s, " - {coef:.6}*lndet[{}x{}]", arg.dim, arg.dim);
            }
            Term::Reciprocal { coef, arg } => {
                let _ = write!(s, " + {coef:.6}/({})", describe_affine(arg));
            }
        }
    }
    s
}
