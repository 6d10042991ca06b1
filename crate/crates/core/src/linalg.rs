//! Small dense complex matrices and a Hermitian eigensolver.
//!
//! Every matrix in this crate is tiny (dimension at most 16, from the
//! unitary-dilation construction at d = 4), so the representation is a plain
//! row-major `Vec<Complex64>` and the eigensolver is a cyclic Jacobi
//! iteration with a closed form for 2x2 matrices.

use num_complex::Complex64;
use std::ops::{Add, Mul, Neg, Sub};

pub type C64 = Complex64;

/// Off-diagonal Frobenius norm threshold at which Jacobi sweeps stop.
const JACOBI_TOL: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 64;

/// Dense square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    dim: usize,
    data: Vec<C64>,
}

impl CMat {
    pub fn zeros(dim: usize) -> Self {
        CMat { dim, data: vec![C64::new(0.0, 0.0); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Self {
        let dim = rows.len();
        assert!(rows.iter().all(|r| r.len() == dim), "rows must form a square matrix");
        CMat { dim, data: rows.iter().flatten().copied().collect() }
    }

    pub fn from_re_im(re: &[Vec<f64>], im: &[Vec<f64>]) -> Self {
        let dim = re.len();
        assert_eq!(im.len(), dim);
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            assert_eq!(re[i].len(), dim);
            assert_eq!(im[i].len(), dim);
            for j in 0..dim {
                m[(i, j)] = C64::new(re[i][j], im[i][j]);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Outer product |i><j| in the computational basis.
    pub fn basis_unit(dim: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(dim);
        m[(i, j)] = C64::new(1.0, 0.0);
        m
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[(i, j)] = self[(j, i)].conj();
            }
        }
        out
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        CMat { dim: self.dim, data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest |eigenvalue| of a Hermitian matrix.
    pub fn operator_norm_hermitian(&self) -> f64 {
        self.eigh().values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn kron(&self, other: &CMat) -> CMat {
        let (n, m) = (self.dim, other.dim);
        let mut out = CMat::zeros(n * m);
        for i in 0..n {
            for j in 0..n {
                let a = self[(i, j)];
                for k in 0..m {
                    for l in 0..m {
                        out[(i * m + k, j * m + l)] = a * other[(k, l)];
                    }
                }
            }
        }
        out
    }

    /// Eigendecomposition of a Hermitian matrix. Eigenvalues ascending,
    /// `vectors` holds the corresponding orthonormal eigenvectors as columns.
    pub fn eigh(&self) -> EigH {
        debug_assert!(self.hermiticity_defect() < 1e-8 * (1.0 + self.frobenius_norm()));
        if self.dim == 1 {
            return EigH { values: vec![self[(0, 0)].re], vectors: CMat::identity(1) };
        }
        if self.dim == 2 {
            return self.eigh_2x2();
        }
        self.eigh_jacobi()
    }

    /// Eigenvalues only, ascending.
    pub fn eigvals_hermitian(&self) -> Vec<f64> {
        if self.dim == 2 {
            let a = self[(0, 0)].re;
            let d = self[(1, 1)].re;
            let b = self[(0, 1)];
            let mid = 0.5 * (a + d);
            let rad = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
            return vec![mid - rad, mid + rad];
        }
        self.eigh().values
    }

    fn eigh_2x2(&self) -> EigH {
        let a = self[(0, 0)].re;
        let d = self[(1, 1)].re;
        let b = self[(0, 1)];
        let mid = 0.5 * (a + d);
        let half_gap = 0.5 * (a - d);
        let rad = (half_gap * half_gap + b.norm_sqr()).sqrt();
        let (lo, hi) = (mid - rad, mid + rad);
        if b.norm() == 0.0 {
            let vectors = if a <= d {
                CMat::identity(2)
            } else {
                CMat::from_rows(&[
                    vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
                    vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
                ])
            };
            return EigH { values: vec![lo.min(hi), lo.max(hi)], vectors };
        }
        // Eigenvector for `hi`: (b, hi - a); for `lo`: (b, lo - a). Normalize.
        let mut vectors = CMat::zeros(2);
        for (col, lambda) in [(0usize, lo), (1usize, hi)] {
            let v0 = b;
            let v1 = C64::new(lambda - a, 0.0);
            let norm = (v0.norm_sqr() + v1.norm_sqr()).sqrt();
            vectors[(0, col)] = v0 / norm;
            vectors[(1, col)] = v1 / norm;
        }
        EigH { values: vec![lo, hi], vectors }
    }

    fn eigh_jacobi(&self) -> EigH {
        let n = self.dim;
        let mut a = self.clone();
        // Symmetrize to kill tiny Hermiticity noise from upstream arithmetic.
        for i in 0..n {
            a[(i, i)] = C64::new(a[(i, i)].re, 0.0);
            for j in (i + 1)..n {
                let avg = 0.5 * (a[(i, j)] + a[(j, i)].conj());
                a[(i, j)] = avg;
                a[(j, i)] = avg.conj();
            }
        }
        let mut v = CMat::identity(n);
        let scale = a.frobenius_norm().max(1.0);
        for _ in 0..JACOBI_MAX_SWEEPS {
            let mut off = 0.0f64;
            for i in 0..n {
                for j in (i + 1)..n {
                    off += a[(i, j)].norm_sqr();
                }
            }
            if (2.0 * off).sqrt() <= JACOBI_TOL * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    if apq.norm() <= 1e-300 {
                        continue;
                    }
                    // Phase factor aligning a[p][q] onto the real axis, then a
                    // real Givens rotation annihilates it.
                    let phase = apq / apq.norm();
                    let app = a[(p, p)].re;
                    let aqq = a[(q, q)].re;
                    let theta = 0.5 * (2.0 * apq.norm()).atan2(app - aqq);
                    let (c, s) = (theta.cos(), theta.sin());
                    let u_pp = C64::new(c, 0.0);
                    let u_pq = phase * s;
                    // U has block [[c, -u_pq], [u_pq*, c]] on (p, q); apply
                    // A <- U^dag A U and V <- V U.
                    for i in 0..n {
                        let aip = a[(i, p)];
                        let aiq = a[(i, q)];
                        a[(i, p)] = aip * u_pp + aiq * u_pq.conj();
                        a[(i, q)] = -aip * u_pq + aiq * u_pp;
                        let vip = v[(i, p)];
                        let viq = v[(i, q)];
                        v[(i, p)] = vip * u_pp + viq * u_pq.conj();
                        v[(i, q)] = -vip * u_pq + viq * u_pp;
                    }
                    for j in 0..n {
                        let apj = a[(p, j)];
                        let aqj = a[(q, j)];
                        a[(p, j)] = apj * u_pp + aqj * u_pq;
                        a[(q, j)] = -apj * u_pq.conj() + aqj * u_pp;
                    }
                    a[(p, q)] = C64::new(0.0, 0.0);
                    a[(q, p)] = C64::new(0.0, 0.0);
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[(i, i)].re.partial_cmp(&a[(j, j)].re).unwrap());
        let mut values = Vec::with_capacity(n);
        let mut vectors = CMat::zeros(n);
        for (col, &src) in order.iter().enumerate() {
            values.push(a[(src, src)].re);
            for i in 0..n {
                vectors[(i, col)] = v[(i, src)];
            }
        }
        EigH { values, vectors }
    }
}

/// Hermitian eigendecomposition result.
#[derive(Debug, Clone)]
pub struct EigH {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors, column `k` belongs to `values[k]`.
    pub vectors: CMat,
}

impl EigH {
    /// Reassemble `sum_k f(lambda_k) |v_k><v_k|`.
    pub fn apply_function(&self, f: impl Fn(f64) -> C64) -> CMat {
        let n = self.vectors.dim();
        let mut out = CMat::zeros(n);
        for k in 0..n {
            let fk = f(self.values[k]);
            for i in 0..n {
                for j in 0..n {
                    out[(i, j)] += fk * self.vectors[(i, k)] * self.vectors[(j, k)].conj();
                }
            }
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Add for &CMat {
    type Output = CMat;
    fn add(self, rhs: &CMat) -> CMat {
        assert_eq!(self.dim, rhs.dim);
        CMat {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMat {
    type Output = CMat;
    fn sub(self, rhs: &CMat) -> CMat {
        assert_eq!(self.dim, rhs.dim);
        CMat {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &CMat {
    type Output = CMat;
    fn neg(self) -> CMat {
        CMat { dim: self.dim, data: self.data.iter().map(|a| -a).collect() }
    }
}

impl Mul for &CMat {
    type Output = CMat;
    fn mul(self, rhs: &CMat) -> CMat {
        assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut out = CMat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(dim: usize, rng: &mut impl Rng) -> CMat {
        let mut m = CMat::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = C64::new(rng.gen_range(-1.0..1.0), 0.0);
            for j in (i + 1)..dim {
                let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        m
    }

    #[test]
    fn eigh_reconstructs_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dim in [2usize, 3, 4, 8, 16] {
            for _ in 0..20 {
                let m = random_hermitian(dim, &mut rng);
                let e = m.eigh();
                let rebuilt = e.apply_function(|x| C64::new(x, 0.0));
                assert!(
                    (&rebuilt - &m).frobenius_norm() < 1e-11,
                    "dim {dim}: reconstruction error {}",
                    (&rebuilt - &m).frobenius_norm()
                );
                // Orthonormality of eigenvectors.
                let gram = &e.vectors.adjoint() * &e.vectors;
                assert!((&gram - &CMat::identity(dim)).frobenius_norm() < 1e-12);
                // Ascending order.
                for w in e.values.windows(2) {
                    assert!(w[0] <= w[1] + 1e-14);
                }
            }
        }
    }

    #[test]
    fn eigh_agrees_with_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for dim in [2usize, 3, 4, 6] {
            for _ in 0..50 {
                let m = random_hermitian(dim, &mut rng);
                let na = nalgebra::DMatrix::from_fn(dim, dim, |i, j| m[(i, j)]);
                let mut reference: Vec<f64> =
                    na.symmetric_eigen().eigenvalues.iter().copied().collect();
                reference.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let ours = m.eigh().values;
                for (o, r) in ours.iter().zip(&reference) {
                    assert!((o - r).abs() < 1e-10, "dim {dim}: {o} vs {r}");
                }
            }
        }
    }

    #[test]
    fn kron_dimensions_and_values() {
        let a = CMat::from_rows(&[
            vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            vec![C64::new(0.0, 0.0), C64::new(2.0, 0.0)],
        ]);
        let b = CMat::identity(3);
        let k = a.kron(&b);
        assert_eq!(k.dim(), 6);
        assert_eq!(k[(0, 0)], C64::new(1.0, 0.0));
        assert_eq!(k[(5, 5)], C64::new(2.0, 0.0));
        assert_eq!(k[(0, 3)], C64::new(0.0, 0.0));
    }
}
