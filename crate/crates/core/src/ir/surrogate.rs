//! First-order surrogates used by the successive convex approximation loops.

use super::Affine;
use crate::linalg::{hermitian_inverse, hermitian_logdet, inner, CMat, CVec};

/// Tangent of `ln` at `at`: `ln(at) + (value - at) / at`. Never below `ln(value)`.
pub fn phi(value: f64, at: f64) -> f64 {
    at.ln() + (value - at) / at
}

/// [`phi`] applied to an affine argument, yielding an affine form.
pub fn phi_affine(arg: &Affine, at: f64) -> Affine {
    let mut out = arg.scaled(1.0 / at);
    out.shift(at.ln() - 1.0);
    out
}

/// Tangent of `ln det` at `at`: `ln|B| + tr(B^-1 (A - B))`. Never below `ln|A|`.
pub fn phi_hermitian(a: &CMat, at: &CMat) -> Option<f64> {
    let ld = hermitian_logdet(at)?;
    let inv = hermitian_inverse(at)?;
    let t = (inv * (a - at)).trace();
    Some(ld + t.re)
}

/// Linear minorant of `|h^H w|^2 / chi` at `(w_at, chi_at)`:
/// `2 Re(w_at^H h h^H w) / chi_at - (|h^H w_at| / chi_at)^2 chi`.
pub fn phi_bar(w: &CVec, chi: f64, h: &CVec, w_at: &CVec, chi_at: f64) -> f64 {
    let z_at = inner(h, w_at);
    let z = inner(h, w);
    2.0 * (z_at.conj() * z).re / chi_at - (z_at.norm() / chi_at).powi(2) * chi
}
