//! Small dense complex linear-algebra kernels.
//!
//! Vectors are plain `[Complex64]` slices. Square matrices are row-major
//! `Vec<Complex64>` of length `n * n`.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// `aᴴ b`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

pub fn norm(a: &[Complex64]) -> f64 {
    norm_sqr(a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: Complex64, x: &mut [Complex64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

/// Orthonormal basis of `span(columns)`, built by modified Gram-Schmidt with
/// column pivoting and one re-orthogonalization pass.
///
/// A candidate column is accepted only while its residual norm exceeds
/// `dim * f64::EPSILON * max_column_norm`. Returns the basis together with the
/// numerical rank.
pub fn orthonormal_basis(columns: &[&[Complex64]]) -> (Vec<Vec<Complex64>>, usize) {
    let Some(first) = columns.first() else {
        return (Vec::new(), 0);
    };
    let dim = first.len();
    let max_norm = columns.iter().map(|c| norm(c)).fold(0.0, f64::max);
    let tol = dim as f64 * f64::EPSILON * max_norm;

    let mut residuals: Vec<Vec<Complex64>> = columns.iter().map(|c| c.to_vec()).collect();
    let mut remaining: Vec<usize> = (0..residuals.len()).collect();
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(columns.len());

    while !remaining.is_empty() {
        // pivot on the largest residual
        let (pos, best) = remaining
            .iter()
            .enumerate()
            .map(|(pos, &j)| (pos, norm(&residuals[j])))
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best <= tol {
            break;
        }
        let j = remaining.swap_remove(pos);
        let mut q = std::mem::take(&mut residuals[j]);
        for b in &basis {
            let c = inner(b, &q);
            axpy(-c, b, &mut q);
        }
        let n = norm(&q);
        if n <= tol {
            continue;
        }
        scale(Complex64::new(1.0 / n, 0.0), &mut q);
        for &k in &remaining {
            let c = inner(&q, &residuals[k]);
            axpy(-c, &q, &mut residuals[k]);
        }
        basis.push(q);
    }
    let rank = basis.len();
    (basis, rank)
}

/// Removes from `v` its component in the span of the orthonormal `basis`.
/// Two passes of sequential subtraction.
pub fn project_out(basis: &[Vec<Complex64>], v: &[Complex64]) -> Vec<Complex64> {
    let mut out = v.to_vec();
    for _ in 0..2 {
        for b in basis {
            let c = inner(b, &out);
            axpy(-c, b, &mut out);
        }
    }
    out
}

/// Cholesky factor `A = L Lᴴ` of a Hermitian positive-definite row-major matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    lower: Vec<Complex64>,
}

impl Cholesky {
    pub fn factor(a: &[Complex64], n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n, "matrix must be n x n");
        let mut l = vec![Complex64::new(0.0, 0.0); n * n];
        for j in 0..n {
            let mut d = a[j * n + j].re;
            for k in 0..j {
                d -= l[j * n + k].norm_sqr();
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { index: j, pivot: d });
            }
            let djj = d.sqrt();
            l[j * n + j] = Complex64::new(djj, 0.0);
            for i in (j + 1)..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k].conj();
                }
                l[i * n + j] = s / djj;
            }
        }
        Ok(Cholesky { n, lower: l })
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let l = &self.lower;
        // forward: L y = b
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i].re;
        }
        // backward: Lᴴ x = y
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[k * n + i].conj() * y[k];
            }
            y[i] = s / l[i * n + i].re;
        }
        y
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn basis_is_orthonormal_and_rank_revealing() {
        let a = vec![c(1.0, 0.0), c(0.0, 1.0), c(2.0, 0.0)];
        let b = vec![c(0.0, 0.0), c(1.0, 1.0), c(1.0, 0.0)];
        let dup: Vec<Complex64> = a.iter().map(|x| x * c(0.0, 2.0)).collect();
        let (basis, rank) = orthonormal_basis(&[&a, &b, &dup]);
        assert_eq!(rank, 2);
        for (i, u) in basis.iter().enumerate() {
            for (j, v) in basis.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((inner(u, v) - c(expect, 0.0)).norm() < 1e-14);
            }
        }
        let r = project_out(&basis, &a);
        assert!(norm(&r) < 1e-14);
    }

    #[test]
    fn cholesky_solves_hermitian_system() {
        // A = [[4, 1+i], [1-i, 3]]
        let a = vec![c(4.0, 0.0), c(1.0, 1.0), c(1.0, -1.0), c(3.0, 0.0)];
        let ch = Cholesky::factor(&a, 2).unwrap();
        let x_true = [c(0.5, -1.0), c(2.0, 0.25)];
        let b = vec![
            a[0] * x_true[0] + a[1] * x_true[1],
            a[2] * x_true[0] + a[3] * x_true[1],
        ];
        let x = ch.solve(&b);
        for (u, v) in x.iter().zip(x_true.iter()) {
            assert!((u - v).norm() < 1e-14);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = vec![c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)];
        assert!(matches!(
            Cholesky::factor(&a, 2),
            Err(Error::NotPositiveDefinite { index: 1, .. })
        ));
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }
}
