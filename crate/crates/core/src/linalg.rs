//! Dense complex helpers shared by the model evaluators and the schemes.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;

/// Real embedding `[[Re M, -Im M], [Im M, Re M]]`.
///
/// For Hermitian `M` the image is symmetric and `ln det realify(M) = 2 ln det M`.
pub fn realify(m: &CMat) -> RMat {
    let (r, c) = m.shape();
    let mut out = RMat::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let z = m[(i, j)];
            out[(i, j)] = z.re;
            out[(i + r, j + c)] = z.re;
            out[(i, j + c)] = -z.im;
            out[(i + r, j)] = z.im;
        }
    }
    out
}

/// `ln det` of a Hermitian matrix, `None` unless positive definite.
pub fn hermitian_logdet(m: &CMat) -> Option<f64> {
    if m.nrows() == 0 {
        return Some(0.0);
    }
    // Complex Cholesky takes complex square roots of negative pivots, so the
    // PD test runs on the real embedding, whose log-det is twice the complex one.
    let chol = realify(m).cholesky()?;
    let mut acc = 0.0;
    for d in chol.l_dirty().diagonal().iter() {
        if !(*d > 0.0) || !d.is_finite() {
            return None;
        }
        acc += d.ln();
    }
    Some(acc)
}

pub fn hermitian_inverse(m: &CMat) -> Option<CMat> {
    hermitian_logdet(m)?;
    let chol = m.clone().cholesky()?;
    Some(chol.inverse())
}

/// Eigenpairs of a Hermitian matrix, eigenvalues sorted in descending order.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let sym = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

pub fn outer(v: &CVec) -> CMat {
    v * v.adjoint()
}

/// `a^H b`.
pub fn inner(a: &CVec, b: &CVec) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// `Re(h^H M h)`.
pub fn quad_form(h: &CVec, m: &CMat) -> f64 {
    inner(h, &(m * h)).re
}

pub fn trace_re(m: &CMat) -> f64 {
    (0..m.nrows()).map(|i| m[(i, i)].re).sum()
}

/// Square diagonal sub-block starting at `start` with side `len`.
pub fn sub_block(m: &CMat, start: usize, len: usize) -> CMat {
    m.view((start, start), (len, len)).into_owned()
}

pub fn sub_vec(v: &CVec, start: usize, len: usize) -> CVec {
    v.rows(start, len).into_owned()
}

/// Draw from `CN(0, I)`: independent real and imaginary parts with variance 1/2 each.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVec {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CVec::from_fn(n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(s * re, s * im)
    })
}

/// Uniformly distributed unit-norm complex vector.
pub fn random_unit<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVec {
    loop {
        let v = complex_gaussian(rng, n);
        let norm = v.norm();
        if norm > 1e-12 {
            return v.unscale(norm);
        }
    }
}

pub fn block_diag(blocks: &[CMat]) -> CMat {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::zeros(n, n);
    let mut at = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((at, at), (k, k)).copy_from(b);
        at += k;
    }
    out
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn real_scale(m: &CMat, s: f64) -> CMat {
    m * Complex64::new(s, 0.0)
}

pub fn real_scale_vec(v: &CVec, s: f64) -> CVec {
    v * Complex64::new(s, 0.0)
}

/// Largest absolute deviation from Hermitian symmetry.
pub fn hermitian_defect(m: &CMat) -> f64 {
    let d = m - m.adjoint();
    d.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> CMat {
        let mut m = identity(n);
        for _ in 0..n + 1 {
            m += outer(&complex_gaussian(rng, n));
        }
        m
    }

    #[test]
    fn realify_doubles_logdet() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..5 {
            let m = random_pd(&mut rng, n);
            let ld = hermitian_logdet(&m).unwrap();
            let r = realify(&m);
            let ldr = r.clone().cholesky().unwrap().l().diagonal().iter().map(|d| 2.0 * d.ln()).sum::<f64>();
            assert!((ldr - 2.0 * ld).abs() < 1e-10);
            assert!((&r - r.transpose()).amax() < 1e-12);
        }
    }

    #[test]
    fn eigen_is_descending_and_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_pd(&mut rng, 4);
        let (vals, vecs) = hermitian_eigen(&m);
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        let lam = CMat::from_diagonal(&CVec::from_iterator(4, vals.iter().map(|&x| Complex64::new(x, 0.0))));
        let rec = &vecs * lam * vecs.adjoint();
        assert!((rec - m).iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-9);
    }

    #[test]
    fn logdet_rejects_indefinite() {
        let mut m = identity(2);
        m[(1, 1)] = Complex64::new(-1.0, 0.0);
        assert!(hermitian_logdet(&m).is_none());
    }
}
