//! Linear solvers honouring a normwise backward-error tolerance
//! `|b - A x| <= tol * (|A| |x| + |b|)` in the max norm.

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::SparseColMat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::CsrMatrix;

/// Systems above this size default to the iterative solver.
pub const DIRECT_LIMIT: usize = 40_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("matrix is singular or could not be factorized: {0}")]
    Factorization(String),
    #[error("solver did not reach tolerance {tol:e}: backward error {achieved:e} after {iterations} iterations")]
    NotConverged { tol: f64, achieved: f64, iterations: usize },
    #[error("solution contains non-finite values")]
    NonFinite,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    DirectLu,
    BicgstabJacobi,
    /// BiCGSTAB with an incomplete LU factorization on the matrix pattern.
    BicgstabIlu,
    /// Direct below [`DIRECT_LIMIT`] unknowns, iterative above.
    Auto,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub x: Vec<f64>,
    pub backward_error: f64,
    pub iterations: usize,
}

pub fn backward_error(a: &CsrMatrix, x: &[f64], b: &[f64], a_norm: f64) -> f64 {
    let ax = a.mul_vec(x);
    let r = ax.iter().zip(b).map(|(p, q)| (q - p).abs()).fold(0.0, f64::max);
    let xn = max_abs(x);
    let bn = max_abs(b);
    let denom = a_norm * xn + bn;
    if denom == 0.0 {
        0.0
    } else {
        r / denom
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| f64::max(m, x.abs()))
}

/// Sparse LU factorization of a fixed matrix.
pub struct LuFactor {
    lu: Lu<usize, f64>,
    n: usize,
}

impl LuFactor {
    pub fn new(a: &CsrMatrix) -> Result<Self, SolverError> {
        let m = a.to_faer();
        let symbolic = SymbolicLu::try_new(m.symbolic()).map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
        Self::with_symbolic(symbolic, &m)
    }

    fn with_symbolic(symbolic: SymbolicLu<usize>, m: &SparseColMat<usize, f64>) -> Result<Self, SolverError> {
        let lu = Lu::try_new_with_symbolic(symbolic, m.as_ref()).map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
        Ok(Self { lu, n: m.nrows() })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Col::<f64>::from_fn(self.n, |i| b[i]);
        let x = self.lu.solve(&rhs);
        (0..self.n).map(|i| x[i]).collect()
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Col::<f64>::from_fn(self.n, |i| b[i]);
        let x = self.lu.solve_transpose(&rhs);
        (0..self.n).map(|i| x[i]).collect()
    }

    /// Hager's estimate of the 1-norm condition number.
    pub fn condition_estimate(&self, a: &CsrMatrix) -> f64 {
        let n = self.n;
        let mut col_sums = vec![0.0; n];
        for i in 0..n {
            for (j, v) in a.row_entries(i) {
                col_sums[j] += v.abs();
            }
        }
        let a_norm = col_sums.iter().copied().fold(0.0, f64::max);
        let mut x = vec![1.0 / n as f64; n];
        let mut est = 0.0;
        for _ in 0..5 {
            let y = self.solve(&x);
            if y.iter().any(|v| !v.is_finite()) {
                return f64::INFINITY;
            }
            est = y.iter().map(|v| v.abs()).sum::<f64>();
            let sign: Vec<f64> = y.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
            let z = self.solve_transpose(&sign);
            let (jmax, zmax) = z.iter().enumerate().fold((0, 0.0), |acc, (j, v)| if v.abs() > acc.1 { (j, v.abs()) } else { acc });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            if zmax <= ztx {
                break;
            }
            x = vec![0.0; n];
            x[jmax] = 1.0;
        }
        a_norm * est
    }
}

/// Reusable solver; caches the symbolic LU factorization while the matrix
/// pattern stays unchanged.
pub struct LinearSolver {
    pub kind: SolverKind,
    pub tolerance: f64,
    pub max_iterations: usize,
    cache: Option<(CsrMatrix, SymbolicLu<usize>)>,
}

impl LinearSolver {
    pub fn new(kind: SolverKind, tolerance: f64, max_iterations: usize) -> Self {
        Self { kind, tolerance, max_iterations, cache: None }
    }

    fn resolved(&self, n: usize) -> SolverKind {
        match self.kind {
            SolverKind::Auto if n > DIRECT_LIMIT => SolverKind::BicgstabJacobi,
            SolverKind::Auto => SolverKind::DirectLu,
            k => k,
        }
    }

    pub fn solve(&mut self, a: &CsrMatrix, b: &[f64]) -> Result<SolveReport, SolverError> {
        let report = match self.resolved(a.nrows()) {
            SolverKind::BicgstabJacobi => bicgstab_jacobi(a, b, None, self.tolerance, self.max_iterations)?,
            SolverKind::BicgstabIlu => bicgstab_ilu(a, b, None, self.tolerance, self.max_iterations)?,
            _ => self.solve_direct(a, b)?,
        };
        if report.x.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite);
        }
        Ok(report)
    }

    fn solve_direct(&mut self, a: &CsrMatrix, b: &[f64]) -> Result<SolveReport, SolverError> {
        let m = a.to_faer();
        let symbolic = match &self.cache {
            Some((pattern, sym)) if pattern.same_pattern(a) => sym.clone(),
            _ => {
                let sym = SymbolicLu::try_new(m.symbolic()).map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
                self.cache = Some((a.clone(), sym.clone()));
                sym
            }
        };
        let lu = LuFactor::with_symbolic(symbolic, &m)?;
        let a_norm = a.norm_inf();
        let mut x = lu.solve(b);
        let mut err = backward_error(a, &x, b, a_norm);
        let mut steps = 0;
        // A few rounds of iterative refinement if the factorization was
        // poorly pivoted.
        while err > self.tolerance && steps < 3 {
            if !err.is_finite() {
                return Err(SolverError::NonFinite);
            }
            let ax = a.mul_vec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
            let dx = lu.solve(&r);
            for (xi, d) in x.iter_mut().zip(&dx) {
                *xi += d;
            }
            err = backward_error(a, &x, b, a_norm);
            steps += 1;
        }
        if !(err <= self.tolerance) {
            return Err(SolverError::NotConverged { tol: self.tolerance, achieved: err, iterations: steps });
        }
        Ok(SolveReport { x, backward_error: err, iterations: steps })
    }
}

/// Right-preconditioned BiCGSTAB with a Jacobi (diagonal) preconditioner.
pub fn bicgstab_jacobi(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iterations: usize,
) -> Result<SolveReport, SolverError> {
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 }).collect();
    let precond = |v: &[f64]| -> Vec<f64> { v.iter().zip(&inv_diag).map(|(a, b)| a * b).collect() };
    bicgstab(a, b, x0, tol, max_iterations, precond)
}

/// Right-preconditioned BiCGSTAB with ILU(0).
pub fn bicgstab_ilu(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iterations: usize,
) -> Result<SolveReport, SolverError> {
    let ilu = Ilu0::new(a);
    bicgstab(a, b, x0, tol, max_iterations, |v| ilu.solve(v))
}

/// Incomplete LU factorization without fill: `L U` matches `A` on its
/// sparsity pattern. Zero pivots are replaced by one.
pub struct Ilu0 {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Self {
        let n = a.nrows();
        let mut row_ptr = vec![0];
        let mut cols = Vec::with_capacity(a.nnz() + n);
        let mut vals = Vec::with_capacity(a.nnz() + n);
        for i in 0..n {
            let (c, v) = a.row(i);
            let mut has_diag = false;
            for (&j, &x) in c.iter().zip(v) {
                if j > i && !has_diag {
                    cols.push(i);
                    vals.push(0.0);
                    has_diag = true;
                }
                has_diag |= j == i;
                cols.push(j);
                vals.push(x);
            }
            if !has_diag {
                cols.push(i);
                vals.push(0.0);
            }
            row_ptr.push(cols.len());
        }
        let diag: Vec<usize> = (0..n).map(|i| row_ptr[i] + cols[row_ptr[i]..row_ptr[i + 1]].partition_point(|&j| j < i)).collect();
        let mut slot = vec![usize::MAX; n];
        for i in 0..n {
            let row = row_ptr[i]..row_ptr[i + 1];
            for q in row.clone() {
                slot[cols[q]] = q;
            }
            for q in row_ptr[i]..diag[i] {
                let k = cols[q];
                let l = vals[q] / vals[diag[k]];
                vals[q] = l;
                for r in diag[k] + 1..row_ptr[k + 1] {
                    let s = slot[cols[r]];
                    if s != usize::MAX {
                        vals[s] -= l * vals[r];
                    }
                }
            }
            if vals[diag[i]] == 0.0 {
                vals[diag[i]] = 1.0;
            }
            for q in row {
                slot[cols[q]] = usize::MAX;
            }
        }
        Self { row_ptr, cols, vals, diag }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut x = b.to_vec();
        for i in 0..n {
            let s: f64 = (self.row_ptr[i]..self.diag[i]).map(|q| self.vals[q] * x[self.cols[q]]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (self.diag[i] + 1..self.row_ptr[i + 1]).map(|q| self.vals[q] * x[self.cols[q]]).sum();
            x[i] = (x[i] - s) / self.vals[self.diag[i]];
        }
        x
    }
}

fn bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iterations: usize,
    precond: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<SolveReport, SolverError> {
    let n = b.len();
    let dot = |u: &[f64], v: &[f64]| -> f64 { u.iter().zip(v).map(|(a, b)| a * b).sum() };
    let a_norm = a.norm_inf();

    let mut x = x0.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
    let ax = a.mul_vec(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
    let mut r_hat = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut err = backward_error(a, &x, b, a_norm);
    if err <= tol {
        return Ok(SolveReport { x, backward_error: err, iterations: 0 });
    }
    let mut restarted = false;
    for it in 1..=max_iterations {
        let rho_new = dot(&r_hat, &r);
        if !rho_new.is_finite() {
            break;
        }
        // Restart with the current residual as shadow vector when it has
        // become orthogonal to the old one, e.g. for data supported only on
        // identity rows.
        if rho_new.abs() <= 1e-24 * dot(&r_hat, &r_hat).sqrt() * dot(&r, &r).sqrt() {
            if restarted {
                break;
            }
            let ax = a.mul_vec(&x);
            r = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
            r_hat = r.clone();
            p.iter_mut().chain(v.iter_mut()).for_each(|z| *z = 0.0);
            (rho, alpha, omega) = (1.0, 1.0, 1.0);
            restarted = true;
            continue;
        }
        restarted = false;
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for k in 0..n {
            p[k] = r[k] + beta * (p[k] - omega * v[k]);
        }
        let p_hat = precond(&p);
        v = a.mul_vec(&p_hat);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 {
            break;
        }
        alpha = rho / denom;
        let s: Vec<f64> = r.iter().zip(&v).map(|(r, v)| r - alpha * v).collect();
        let s_hat = precond(&s);
        let t = a.mul_vec(&s_hat);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for k in 0..n {
            x[k] += alpha * p_hat[k] + omega * s_hat[k];
            r[k] = s[k] - omega * t[k];
        }
        if it % 10 == 0 || max_abs(&r) <= tol * (a_norm * max_abs(&x) + max_abs(b)) {
            // Recompute the true residual to avoid drift of the recurrence.
            let ax = a.mul_vec(&x);
            r = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
            err = backward_error(a, &x, b, a_norm);
            if err <= tol {
                return Ok(SolveReport { x, backward_error: err, iterations: it });
            }
        }
        if omega == 0.0 {
            break;
        }
    }
    err = backward_error(a, &x, b, a_norm);
    if err <= tol {
        return Ok(SolveReport { x, backward_error: err, iterations: max_iterations });
    }
    Err(SolverError::NotConverged { tol, achieved: err, iterations: max_iterations })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poisson_1d(n: usize) -> CsrMatrix {
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, 2.5)];
                if i > 0 {
                    r.push((i - 1, -1.0));
                }
                if i + 1 < n {
                    r.push((i + 1, -1.2));
                }
                r
            })
            .collect();
        CsrMatrix::from_rows(n, rows)
    }

    #[test]
    fn direct_and_iterative_agree() {
        let a = poisson_1d(200);
        let b: Vec<f64> = (0..200).map(|i| (i as f64 * 0.1).sin()).collect();
        let mut lu = LinearSolver::new(SolverKind::DirectLu, 1e-12, 0);
        let d = lu.solve(&a, &b).unwrap();
        let it = bicgstab_jacobi(&a, &b, None, 1e-12, 2000).unwrap();
        assert!(d.backward_error <= 1e-12);
        for (p, q) in d.x.iter().zip(&it.x) {
            assert!((p - q).abs() < 1e-8);
        }
        let ilu = bicgstab_ilu(&a, &b, None, 1e-12, 200).unwrap();
        assert!(ilu.iterations < it.iterations);
        // Cached symbolic factorization is reused.
        let d2 = lu.solve(&a, &b).unwrap();
        assert_eq!(d.x, d2.x);
    }

    #[test]
    fn ilu_is_exact_for_banded_matrices() {
        // Tridiagonal LU has no fill, so ILU(0) is the full factorization.
        let a = poisson_1d(50);
        let b: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let x = Ilu0::new(&a).solve(&b);
        assert!(backward_error(&a, &x, &b, a.norm_inf()) < 1e-14);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = CsrMatrix::from_rows(2, vec![vec![(0, 1.0), (1, 1.0)], vec![(0, 1.0), (1, 1.0)]]);
        let mut s = LinearSolver::new(SolverKind::DirectLu, 1e-12, 0);
        assert!(s.solve(&a, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn condition_estimate_of_diagonal() {
        let a = CsrMatrix::from_rows(3, vec![vec![(0, 1.0)], vec![(1, 10.0)], vec![(2, 1e-3)]]);
        let lu = LuFactor::new(&a).unwrap();
        let k = lu.condition_estimate(&a);
        assert!((k - 1e4).abs() < 1e-6 * 1e4, "{k}");
    }
}
