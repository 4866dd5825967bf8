use num_complex::Complex64;

use super::{Affine, AffineMatrix};
use crate::linalg::{CMat, CVec};

/// Hermitian `dim x dim` unknown stored as `dim^2` reals: the real diagonal,
/// then `(re, im)` of each strictly-upper entry in row-major order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HermitianVar {
    pub offset: usize,
    pub dim: usize,
}

impl HermitianVar {
    pub fn len(&self) -> usize {
        self.dim * self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.dim == 0
    }

    pub fn diag(&self, a: usize) -> usize {
        self.offset + a
    }

    fn pair(&self, a: usize, b: usize) -> usize {
        debug_assert!(a < b && b < self.dim);
        let before: usize = (0..a).map(|r| self.dim - 1 - r).sum();
        self.offset + self.dim + 2 * (before + b - a - 1)
    }

    /// Index of `Re W[a][b]`, `a < b`.
    pub fn re(&self, a: usize, b: usize) -> usize {
        self.pair(a, b)
    }

    /// Index of `Im W[a][b]`, `a < b`.
    pub fn im(&self, a: usize, b: usize) -> usize {
        self.pair(a, b) + 1
    }

    pub fn to_matrix(&self, x: &[f64]) -> CMat {
        let n = self.dim;
        let mut m = CMat::zeros(n, n);
        for a in 0..n {
            m[(a, a)] = Complex64::new(x[self.diag(a)], 0.0);
            for b in a + 1..n {
                let z = Complex64::new(x[self.re(a, b)], x[self.im(a, b)]);
                m[(a, b)] = z;
                m[(b, a)] = z.conj();
            }
        }
        m
    }

    pub fn write(&self, m: &CMat, x: &mut [f64]) {
        let n = self.dim;
        for a in 0..n {
            x[self.diag(a)] = m[(a, a)].re;
            for b in a + 1..n {
                let z = (m[(a, b)] + m[(b, a)].conj()) * 0.5;
                x[self.re(a, b)] = z.re;
                x[self.im(a, b)] = z.im;
            }
        }
    }

    /// `Re tr(H W_sub)` where `W_sub` is the `h.nrows()`-square diagonal block at `start`.
    pub fn trace_with(&self, h: &CMat, start: usize) -> Affine {
        let m = h.nrows();
        let mut out = Affine::default();
        for a in 0..m {
            out.push(self.diag(start + a), h[(a, a)].re);
            for b in a + 1..m {
                let hba = h[(b, a)];
                out.push(self.re(start + a, start + b), 2.0 * hba.re);
                out.push(self.im(start + a, start + b), -2.0 * hba.im);
            }
        }
        out
    }

    /// `Re(h^H W_sub h)` for a vector `h` aligned with the block at `start`.
    pub fn quad_with(&self, h: &CVec, start: usize) -> Affine {
        self.trace_with(&(h * h.adjoint()), start)
    }

    /// Add `scale * realify(W_sub)` into `target`, with `W_sub` the
    /// `len`-square diagonal block at `start`; `target.dim` must be `2 len`.
    pub fn add_realified(&self, target: &mut AffineMatrix, start: usize, len: usize, scale: f64) {
        debug_assert_eq!(target.dim, 2 * len);
        let m = len;
        for a in 0..m {
            let d = self.diag(start + a);
            target.add_entry(d, a, a, scale);
            target.add_entry(d, a + m, a + m, scale);
            for b in a + 1..m {
                let re = self.re(start + a, start + b);
                target.add_entry(re, a, b, scale);
                target.add_entry(re, b, a, scale);
                target.add_entry(re, a + m, b + m, scale);
                target.add_entry(re, b + m, a + m, scale);
                let im = self.im(start + a, start + b);
                target.add_entry(im, a, b + m, -scale);
                target.add_entry(im, b + m, a, -scale);
                target.add_entry(im, b, a + m, scale);
                target.add_entry(im, a + m, b, scale);
            }
        }
    }

    /// Realified positive-semidefiniteness matrix of the whole unknown.
    pub fn psd_matrix(&self) -> AffineMatrix {
        let mut m = AffineMatrix::zeros(2 * self.dim);
        self.add_realified(&mut m, 0, self.dim, 1.0);
        m
    }
}

/// Complex `dim`-vector stored as interleaved `(re, im)` pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ComplexVectorVar {
    pub offset: usize,
    pub dim: usize,
}

impl ComplexVectorVar {
    pub fn re(&self, j: usize) -> usize {
        self.offset + 2 * j
    }

    pub fn im(&self, j: usize) -> usize {
        self.offset + 2 * j + 1
    }

    pub fn to_vector(&self, x: &[f64]) -> CVec {
        CVec::from_fn(self.dim, |j, _| Complex64::new(x[self.re(j)], x[self.im(j)]))
    }

    pub fn write(&self, v: &CVec, x: &mut [f64]) {
        for j in 0..self.dim {
            x[self.re(j)] = v[j].re;
            x[self.im(j)] = v[j].im;
        }
    }

    /// Real and imaginary parts of `h^H w` as affine forms.
    pub fn inner_with(&self, h: &CVec) -> (Affine, Affine) {
        let mut re = Affine::default();
        let mut im = Affine::default();
        for j in 0..self.dim {
            let c = h[j];
            re.push(self.re(j), c.re).push(self.im(j), c.im);
            im.push(self.im(j), c.re).push(self.re(j), -c.im);
        }
        (re, im)
    }

    /// Coordinates of entries `range`, for `||w_range||^2` as a sum of squares.
    pub fn coordinate_rows(&self, range: std::ops::Range<usize>) -> Vec<Affine> {
        range.flat_map(|j| [Affine::var(self.re(j)), Affine::var(self.im(j))]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{complex_gaussian, inner, outer, realify};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hermitian_roundtrip_and_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = HermitianVar { offset: 2, dim: 3 };
        let a = complex_gaussian(&mut rng, 3);
        let b = complex_gaussian(&mut rng, 3);
        let w = outer(&a) + outer(&b);
        let mut x = vec![0.0; 2 + v.len()];
        v.write(&w, &mut x);
        let back = v.to_matrix(&x);
        assert!((&back - &w).iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-12);

        let h = complex_gaussian(&mut rng, 3);
        let direct = inner(&h, &(&w * &h)).re;
        assert!((v.quad_with(&h, 0).eval(&x) - direct).abs() < 1e-10);

        let mut m = AffineMatrix::zeros(6);
        v.add_realified(&mut m, 0, 3, 1.0);
        assert!((m.eval(&x) - realify(&w)).amax() < 1e-12);

        let sub = v.to_matrix(&x).view((1, 1), (2, 2)).into_owned();
        let mut m2 = AffineMatrix::zeros(4);
        v.add_realified(&mut m2, 1, 2, 1.0);
        assert!((m2.eval(&x) - realify(&sub)).amax() < 1e-12);
    }

    #[test]
    fn vector_inner_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = ComplexVectorVar { offset: 1, dim: 4 };
        let w = complex_gaussian(&mut rng, 4);
        let h = complex_gaussian(&mut rng, 4);
        let mut x = vec![0.0; 9];
        v.write(&w, &mut x);
        let (re, im) = v.inner_with(&h);
        let z = inner(&h, &w);
        assert!((re.eval(&x) - z.re).abs() < 1e-12);
        assert!((im.eval(&x) - z.im).abs() < 1e-12);
    }
}
