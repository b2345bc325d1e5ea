//! Sparse LU (via faer) and conjugate gradients.
//!
//! A [`Factorization`] is immutable once built and `solve` takes `&self`,
//! so concurrent solves against one factorization are safe.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::MatMut;
use thiserror::Error;

use crate::sparse::CsrMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is {nrows}x{ncols}, expected square")]
    NotSquare { nrows: usize, ncols: usize },
    #[error("row {row} has no nonzero entries")]
    EmptyRow { row: usize },
    #[error("column {col} has no nonzero entries")]
    EmptyColumn { col: usize },
    #[error("no pivot found at elimination step {step}: matrix is structurally singular")]
    StructurallySingular { step: usize },
    #[error("singular pivot: solution is not finite at row {row}")]
    SingularPivot { row: usize },
    #[error("factorization failed: {0}")]
    Backend(String),
    #[error("cg did not converge in {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

/// Reusable LU factors of one sparse matrix.
pub struct Factorization {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Factorization").field("n", &self.n).finish_non_exhaustive()
    }
}

/// Factorizes `a` with a fill-reducing column ordering and partial
/// pivoting.
///
/// faer does not flag numerically zero pivots, so the factors are probed
/// with one solve; a non-finite result is reported at its first row.
pub fn lu_factor(a: &CsrMatrix) -> Result<Factorization, LinalgError> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(LinalgError::NotSquare { nrows: n, ncols: a.ncols() });
    }
    let mut col_seen = vec![false; n];
    for i in 0..n {
        let (cols, vals) = a.row(i);
        let mut any = false;
        for (&j, &v) in cols.iter().zip(vals) {
            if v != 0.0 {
                any = true;
                col_seen[j] = true;
            }
        }
        if !any {
            return Err(LinalgError::EmptyRow { row: i });
        }
    }
    if let Some(col) = col_seen.iter().position(|&s| !s) {
        return Err(LinalgError::EmptyColumn { col });
    }

    let trips: Vec<Triplet<usize, usize, f64>> = a.triplets().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trips)
        .map_err(|e| LinalgError::Backend(format!("{e:?}")))?;
    let lu = mat.sp_lu().map_err(|e| match e {
        faer::sparse::linalg::LuError::SymbolicSingular { index } => LinalgError::StructurallySingular { step: index },
        other => LinalgError::Backend(format!("{other:?}")),
    })?;
    let f = Factorization { n, lu };

    let probe = a.matvec(&vec![1.0; n]);
    let x = f.solve(&probe);
    if let Some(row) = x.iter().position(|v| !v.is_finite()) {
        return Err(LinalgError::SingularPivot { row });
    }
    Ok(f)
}

impl Factorization {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n, "right-hand side length");
        let n = self.n;
        self.lu.solve_in_place(MatMut::from_column_major_slice_mut(x, n, 1));
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `||b - A x|| / (|| |A| |x| || + ||b||)`, zero when both scales vanish.
pub fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let scale = norm(&a.abs_matvec(x)) + norm(b);
    if scale == 0.0 {
        0.0
    } else {
        norm(&r) / scale
    }
}

#[derive(Debug, Clone)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final `||b - A x|| / ||b||`.
    pub residual: f64,
}

/// Jacobi-preconditioned conjugate gradients from a zero initial guess.
/// Stops once `||b - A x|| <= tol ||b||`.
pub fn cg_solve(a: &CsrMatrix, b: &[f64], tol: f64, maxit: usize) -> Result<CgResult, LinalgError> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(LinalgError::NotSquare { nrows: n, ncols: a.ncols() });
    }
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(CgResult { x, iterations: 0, residual: 0.0 });
    }
    let inv_diag: Vec<f64> = (0..n)
        .map(|i| {
            let d = a.get(i, i);
            if d > 0.0 {
                1.0 / d
            } else {
                1.0
            }
        })
        .collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut res = 1.0;
    for it in 1..=maxit {
        let ap = a.matvec(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        res = norm(&r) / bnorm;
        if res <= tol {
            return Ok(CgResult { x, iterations: it, residual: res });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(LinalgError::NoConvergence { iterations: maxit, residual: res })
}
