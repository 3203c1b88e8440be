//! Small dense and sparse linear-algebra kernels.
//!
//! Everything here is desk-scale (p <= 2000, n <= a few thousand) so the
//! implementations favour simplicity and determinism over speed: row-major
//! dense storage, classic Cholesky/Jacobi/power iteration, CSR + CG for the
//! mesh operator.

use crate::error::{Error, Result};
use crate::scalar::{dot, norm, Real};

/// Row-major dense matrix view helpers operate on `&[R]` of length rows*cols.

/// y = A x for row-major A (rows x cols).
pub fn matvec<R: Real>(a: &[R], rows: usize, cols: usize, x: &[R], y: &mut [R]) {
    debug_assert_eq!(a.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    for r in 0..rows {
        y[r] = dot(&a[r * cols..(r + 1) * cols], x);
    }
}

/// y = A^T x for row-major A (rows x cols).
pub fn matvec_t<R: Real>(a: &[R], rows: usize, cols: usize, x: &[R], y: &mut [R]) {
    for yi in y.iter_mut() {
        *yi = R::zero();
    }
    for r in 0..rows {
        let row = &a[r * cols..(r + 1) * cols];
        let xr = x[r];
        for c in 0..cols {
            y[c] += row[c] * xr;
        }
    }
}

/// In-place Cholesky factorization of a symmetric positive definite matrix
/// (row-major, n x n). Lower triangle of `a` is overwritten with L.
pub fn cholesky<R: Real>(a: &mut [R], n: usize) -> Result<()> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d = d - a[j * n + k] * a[j * n + k];
        }
        if d <= R::zero() || !d.is_finite() {
            return Err(Error::Numerical(format!(
                "cholesky: non-positive pivot {} at {}",
                d, j
            )));
        }
        let lj = d.sqrt();
        a[j * n + j] = lj;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s = s - a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / lj;
        }
    }
    Ok(())
}

/// Solve L L^T x = b given the Cholesky factor from [`cholesky`].
pub fn cholesky_solve<R: Real>(l: &[R], n: usize, b: &[R]) -> Vec<R> {
    let mut y = vec![R::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![R::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s = s - l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Solve the SPD system A x = b via Cholesky, without destroying A.
pub fn spd_solve<R: Real>(a: &[R], n: usize, b: &[R]) -> Result<Vec<R>> {
    let mut l = a.to_vec();
    cholesky(&mut l, n)?;
    Ok(cholesky_solve(&l, n, b))
}

/// Largest singular value of a row-major matrix (rows x cols) by power
/// iteration on A^T A. Deterministic start vector.
pub fn spectral_norm<R: Real>(a: &[R], rows: usize, cols: usize, tol: R, max_iter: usize) -> Result<R> {
    if rows == 0 || cols == 0 {
        return Ok(R::zero());
    }
    let mut v = vec![R::zero(); cols];
    // deterministic, non-degenerate start
    for (i, vi) in v.iter_mut().enumerate() {
        *vi = R::one() + R::of(0.5) * R::of_usize(i % 7) / R::of(7.0);
    }
    let nv = norm(&v);
    for vi in v.iter_mut() {
        *vi = *vi / nv;
    }
    let mut av = vec![R::zero(); rows];
    let mut w = vec![R::zero(); cols];
    let mut sigma = R::zero();
    for _ in 0..max_iter {
        matvec(a, rows, cols, &v, &mut av);
        matvec_t(a, rows, cols, &av, &mut w);
        let nw = norm(&w);
        if nw == R::zero() {
            return Ok(R::zero());
        }
        let sigma_new = nw.sqrt();
        for (vi, &wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
        if (sigma_new - sigma).abs() <= tol * sigma_new.max(R::one()) {
            return Ok(sigma_new);
        }
        sigma = sigma_new;
    }
    Err(Error::Convergence(format!(
        "power iteration did not reach tol {} in {} iterations",
        tol, max_iter
    )))
}

/// Eigen-decomposition of a small symmetric matrix by cyclic Jacobi.
/// Returns (eigenvalues ascending, row-major eigenvector matrix whose
/// column j is the eigenvector of eigenvalue j).
pub fn jacobi_eigh<R: Real>(a_in: &[R], n: usize) -> (Vec<R>, Vec<R>) {
    let mut a = a_in.to_vec();
    let mut v = vec![R::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = R::one();
    }
    let eps = R::epsilon() * R::of(50.0);
    for _sweep in 0..100 {
        let mut off = R::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        let scale: R = (0..n).map(|i| a[i * n + i].abs()).sum::<R>().max(R::one());
        if off.sqrt() <= eps * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == R::zero() {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let tau = (aqq - app) / (R::of(2.0) * apq);
                let t = if tau >= R::zero() {
                    R::one() / (tau + (R::one() + tau * tau).sqrt())
                } else {
                    -R::one() / (-tau + (R::one() + tau * tau).sqrt())
                };
                let c = R::one() / (R::one() + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[i * n + i]
            .partial_cmp(&a[j * n + j])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let evals: Vec<R> = order.iter().map(|&i| a[i * n + i]).collect();
    let mut evecs = vec![R::zero(); n * n];
    for (newj, &oldj) in order.iter().enumerate() {
        for i in 0..n {
            evecs[i * n + newj] = v[i * n + oldj];
        }
    }
    (evals, evecs)
}

/// Symmetric sparse matrix in CSR form.
#[derive(Debug, Clone)]
pub struct Csr<R> {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<R>,
}

impl<R: Real> Csr<R> {
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, R)]) -> Self {
        let mut per_row: Vec<Vec<(usize, R)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            per_row[i].push((j, v));
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for row in per_row.iter_mut() {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for &(j, v) in row.iter() {
                if last == Some(j) {
                    let k = data.len() - 1;
                    data[k] += v;
                } else {
                    indices.push(j);
                    data.push(v);
                    last = Some(j);
                }
            }
            indptr.push(indices.len());
        }
        Csr { n, indptr, indices, data }
    }

    pub fn matvec(&self, x: &[R], y: &mut [R]) {
        for i in 0..self.n {
            let mut s = R::zero();
            for k in self.indptr[i]..self.indptr[i + 1] {
                s += self.data[k] * x[self.indices[k]];
            }
            y[i] = s;
        }
    }

    pub fn get(&self, i: usize, j: usize) -> R {
        for k in self.indptr[i]..self.indptr[i + 1] {
            if self.indices[k] == j {
                return self.data[k];
            }
        }
        R::zero()
    }
}

/// Conjugate gradients for a PSD operator with a known kernel handled by the
/// caller through `project` (applied to b, x0 and every update direction).
pub fn cg<R: Real, F, P>(
    apply: F,
    project: P,
    b: &[R],
    tol: R,
    max_iter: usize,
) -> Result<Vec<R>>
where
    F: Fn(&[R], &mut [R]),
    P: Fn(&mut [R]),
{
    let n = b.len();
    let mut bb = b.to_vec();
    project(&mut bb);
    let bnorm = norm(&bb);
    if bnorm == R::zero() {
        return Ok(vec![R::zero(); n]);
    }
    let mut x = vec![R::zero(); n];
    let mut r = bb.clone();
    let mut p = r.clone();
    let mut ap = vec![R::zero(); n];
    let mut rr = dot(&r, &r);
    for _ in 0..max_iter {
        apply(&p, &mut ap);
        project(&mut ap);
        let pap = dot(&p, &ap);
        if pap <= R::zero() {
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= tol * bnorm {
            return Ok(x);
        }
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    Err(Error::Convergence(format!(
        "cg: residual {} above tol after {} iterations",
        (rr.sqrt() / bnorm),
        max_iter
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_roundtrip() {
        let a: Vec<f64> = vec![4.0, 1.0, 1.0, 3.0];
        let x = spd_solve(&a, 2, &[1.0, 2.0]).unwrap();
        // A x should equal b
        let mut b = vec![0.0f64; 2];
        matvec(&a, 2, 2, &x, &mut b);
        assert!((b[0] - 1.0).abs() < 1e-12 && (b[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn jacobi_matches_known_eigenvalues() {
        // diag(1,2,3) conjugated stays {1,2,3}
        let a = vec![2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0];
        let (evals, evecs) = jacobi_eigh(&a, 3);
        let s2 = std::f64::consts::SQRT_2;
        let expected = [2.0 - s2, 2.0, 2.0 + s2];
        for (e, x) in evals.iter().zip(expected) {
            assert!((e - x).abs() < 1e-12, "{e} vs {x}");
        }
        // eigenvector columns orthonormal
        for i in 0..3 {
            let col: Vec<f64> = (0..3).map(|r| evecs[r * 3 + i]).collect();
            assert!((norm(&col) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spectral_norm_matches_2x2() {
        let a: Vec<f64> = vec![3.0, 0.0, 0.0, -5.0];
        let s = spectral_norm(&a, 2, 2, 1e-10, 500).unwrap();
        assert!((s - 5.0).abs() < 1e-8);
    }

    #[test]
    fn cg_solves_spd() {
        let a = Csr::<f64>::from_triplets(
            3,
            &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0), (2, 2, 2.0)],
        );
        let x = cg(|v, y| a.matvec(v, y), |_| {}, &[1.0, 2.0, 3.0], 1e-12, 100).unwrap();
        let mut b = vec![0.0; 3];
        a.matvec(&x, &mut b);
        assert!((b[0] - 1.0).abs() < 1e-9 && (b[1] - 2.0).abs() < 1e-9 && (b[2] - 3.0).abs() < 1e-9);
    }
}
