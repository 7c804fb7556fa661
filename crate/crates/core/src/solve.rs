//! Linear solvers: sparse direct LU (faer), conjugate gradients, restarted GMRES,
//! and a small dense LU used for coarse systems and diagnostics.

use std::sync::Once;

use faer::linalg::solvers::Solve;

use crate::error::{Error, Result};
use crate::scalar::{norm2, Field, Scalar};
use crate::sparse::SparseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverMethod {
    DirectLu,
    /// Conjugate gradients, symmetric positive definite operators only.
    Cg,
    /// Restarted GMRES.
    Gmres,
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    pub method: SolverMethod,
    /// Relative residual target `||A x - b|| / ||b||`.
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            method: SolverMethod::DirectLu,
            tol: 1e-10,
            max_iter: 20_000,
            restart: 60,
        }
    }
}

impl SolveOptions {
    pub fn direct() -> Self {
        Self::default()
    }

    pub fn cg(tol: f64) -> Self {
        Self {
            method: SolverMethod::Cg,
            tol,
            ..Self::default()
        }
    }

    pub fn gmres(tol: f64) -> Self {
        Self {
            method: SolverMethod::Gmres,
            tol,
            ..Self::default()
        }
    }
}

pub fn relative_residual<S: Scalar>(a: &SparseMatrix<S>, x: &[S], b: &[S]) -> f64 {
    let ax = a.mul_vec(x);
    let r: Vec<S> = ax.iter().zip(b).map(|(p, q)| *q - *p).collect();
    let nb = norm2(b);
    if nb == 0.0 {
        norm2(&r)
    } else {
        norm2(&r) / nb
    }
}

/// Solves `a x = b` with the requested method; the returned vector meets `opts.tol`.
pub fn solve<S: Scalar>(a: &SparseMatrix<S>, b: &[S], opts: &SolveOptions) -> Result<Vec<S>> {
    if a.nrows() != a.ncols() || a.nrows() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "solve: {}x{} operator, rhs of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    if norm2(b) == 0.0 {
        return Ok(vec![S::ZERO; b.len()]);
    }
    match opts.method {
        SolverMethod::DirectLu => {
            let lu = LuFactor::new(a)?;
            let x = lu.solve_refined(a, b, opts.tol)?;
            Ok(x)
        }
        SolverMethod::Cg => conjugate_gradient(a, b, opts.tol, opts.max_iter),
        SolverMethod::Gmres => gmres(a, b, opts.tol, opts.restart, opts.max_iter),
    }
}

static SEQUENTIAL_FAER: Once = Once::new();

/// Sparse LU factorization with partial pivoting and a fill-reducing column ordering.
pub struct LuFactor<S: Scalar> {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, S>,
}

impl<S: Scalar> LuFactor<S> {
    pub fn new(a: &SparseMatrix<S>) -> Result<Self> {
        // Patch solves run on our own worker pool; keep faer single-threaded so
        // results do not depend on the thread count.
        SEQUENTIAL_FAER.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch("LU of a non-square matrix".into()));
        }
        let lu = a
            .to_faer()
            .sp_lu()
            .map_err(|e| Error::Singular(format!("sparse LU failed: {e:?}")))?;
        Ok(Self { n: a.nrows(), lu })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves for several right-hand sides at once (each of length `dim`).
    pub fn solve_many(&self, rhs: &[Vec<S>]) -> Vec<Vec<S>> {
        if rhs.is_empty() {
            return Vec::new();
        }
        let mut m = faer::Mat::<S>::from_fn(self.n, rhs.len(), |i, j| rhs[j][i]);
        self.lu.solve_in_place(m.as_mut());
        (0..rhs.len())
            .map(|j| (0..self.n).map(|i| m[(i, j)]).collect())
            .collect()
    }

    pub fn solve(&self, b: &[S]) -> Vec<S> {
        self.solve_many(&[b.to_vec()]).pop().unwrap()
    }

    /// Solve followed by up to three steps of iterative refinement.
    pub fn solve_refined(&self, a: &SparseMatrix<S>, b: &[S], tol: f64) -> Result<Vec<S>> {
        let mut x = self.solve(b);
        let mut res = relative_residual(a, &x, b);
        for _ in 0..3 {
            if res <= tol {
                break;
            }
            let ax = a.mul_vec(&x);
            let r: Vec<S> = b.iter().zip(&ax).map(|(p, q)| *p - *q).collect();
            let dx = self.solve(&r);
            let cand: Vec<S> = x.iter().zip(&dx).map(|(p, q)| *p + *q).collect();
            let cres = relative_residual(a, &cand, b);
            if !(cres < res) {
                break;
            }
            x = cand;
            res = cres;
        }
        if !x.iter().all(|v| v.finite()) {
            return Err(Error::Singular("LU solve produced non-finite values".into()));
        }
        if res > tol {
            return Err(Error::Singular(format!(
                "LU solve reached relative residual {res:e} > {tol:e}"
            )));
        }
        Ok(x)
    }
}

fn conjugate_gradient<S: Scalar>(
    a: &SparseMatrix<S>,
    b: &[S],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<S>> {
    let n = b.len();
    let herm = match S::FIELD {
        Field::Real => a.asymmetry(),
        Field::Complex => {
            let d = a.linear_combination(S::ONE, &a.adjoint(), -S::ONE)?;
            d.max_abs()
        }
    };
    if herm > 1e-12 * a.max_abs() {
        return Err(Error::NotSpd(format!("operator is not Hermitian (defect {herm:e})")));
    }
    let diag = a.diagonal();
    if let Some(i) = diag.iter().position(|d| !(d.re_part() > 0.0)) {
        return Err(Error::NotSpd(format!("nonpositive diagonal entry at row {i}")));
    }
    // Jacobi-preconditioned CG
    let inv_diag: Vec<f64> = diag.iter().map(|d| 1.0 / d.re_part()).collect();
    let nb = norm2(b);
    let mut x = vec![S::ZERO; n];
    let mut r = b.to_vec();
    let mut z: Vec<S> = r.iter().zip(&inv_diag).map(|(v, d)| v.scaled(*d)).collect();
    let mut p = z.clone();
    let mut rz: S = crate::scalar::dot(&r, &z);
    let mut best = 1.0;
    for it in 0..max_iter {
        let ap = a.mul_vec(&p);
        let pap = crate::scalar::dot(&p, &ap);
        if !(pap.re_part() > 0.0) {
            return Err(Error::NotSpd(format!(
                "nonpositive curvature p^H A p = {:e} at iteration {it}",
                pap.re_part()
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let res = norm2(&r) / nb;
        best = res;
        if res <= tol {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i].scaled(inv_diag[i]);
        }
        let rz_new = crate::scalar::dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: best,
    })
}

fn gmres<S: Scalar>(
    a: &SparseMatrix<S>,
    b: &[S],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<Vec<S>> {
    let n = b.len();
    let nb = norm2(b);
    let m = restart.max(1).min(n.max(1));
    let mut x = vec![S::ZERO; n];
    let mut total = 0;
    let mut best = f64::INFINITY;
    while total < max_iter {
        let ax = a.mul_vec(&x);
        let r: Vec<S> = b.iter().zip(&ax).map(|(p, q)| *p - *q).collect();
        let beta = norm2(&r);
        best = best.min(beta / nb);
        if beta / nb <= tol {
            return Ok(x);
        }
        let mut basis: Vec<Vec<S>> = vec![r.iter().map(|v| v.scaled(1.0 / beta)).collect()];
        // Hessenberg columns after Givens rotations
        let mut h: Vec<Vec<S>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<S> = Vec::new();
        let mut g = vec![S::ZERO; m + 1];
        g[0] = S::of_real(beta);
        let mut k_done = 0;
        for k in 0..m {
            total += 1;
            let mut w = a.mul_vec(&basis[k]);
            let mut col = vec![S::ZERO; k + 2];
            for (j, v) in basis.iter().enumerate() {
                let hij = crate::scalar::dot(v, &w);
                col[j] = hij;
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= hij * *vi;
                }
            }
            let hnext = norm2(&w);
            col[k + 1] = S::of_real(hnext);
            for j in 0..k {
                let t = col[j].scaled(cs[j]) + sn[j] * col[j + 1];
                col[j + 1] = col[j + 1].scaled(cs[j]) - sn[j].conjugate() * col[j];
                col[j] = t;
            }
            let (c, s) = givens(col[k], col[k + 1]);
            col[k] = col[k].scaled(c) + s * col[k + 1];
            col[k + 1] = S::ZERO;
            g[k + 1] = -(s.conjugate()) * g[k];
            g[k] = g[k].scaled(c);
            cs.push(c);
            sn.push(s);
            h.push(col);
            k_done = k + 1;
            let res = g[k + 1].modulus() / nb;
            best = best.min(res);
            if res <= tol || hnext == 0.0 || total >= max_iter {
                break;
            }
            basis.push(w.iter().map(|v| v.scaled(1.0 / hnext)).collect());
        }
        // back substitution
        let mut y = vec![S::ZERO; k_done];
        for i in (0..k_done).rev() {
            let mut s = g[i];
            for j in i + 1..k_done {
                s -= h[j][i] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&basis[j]) {
                *xi += *yj * *vi;
            }
        }
    }
    let final_res = relative_residual(a, &x, b);
    if final_res <= tol {
        return Ok(x);
    }
    Err(Error::NoConvergence {
        iterations: total,
        residual: best.min(final_res),
    })
}

/// Complex Givens rotation zeroing `b` in `(a, b)`: returns `(c, s)` with
/// `c a + s b = r` and `-conj(s) a + c b = 0`.
fn givens<S: Scalar>(a: S, b: S) -> (f64, S) {
    let na = a.modulus();
    let nb = b.modulus();
    if nb == 0.0 {
        return (1.0, S::ZERO);
    }
    if na == 0.0 {
        return (0.0, (b.conjugate()).scaled(1.0 / nb));
    }
    let r = na.hypot(nb);
    let c = na / r;
    let phase = a.scaled(1.0 / na);
    let s = phase * b.conjugate().scaled(1.0 / r);
    (c, s)
}

/// Dense LU with partial pivoting, row-major.
pub struct DenseLu<S> {
    n: usize,
    lu: Vec<S>,
    perm: Vec<usize>,
    min_pivot: f64,
}

impl<S: Scalar> DenseLu<S> {
    pub fn new(a: &[Vec<S>]) -> Self {
        let n = a.len();
        let mut lu: Vec<S> = a.iter().flat_map(|r| r.iter().copied()).collect();
        assert_eq!(lu.len(), n * n, "dense LU needs a square matrix");
        let mut perm: Vec<usize> = (0..n).collect();
        let mut min_pivot = f64::INFINITY;
        for k in 0..n {
            let (p, pv) = (k..n)
                .map(|i| (i, lu[i * n + k].modulus()))
                .fold((k, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
            min_pivot = min_pivot.min(pv);
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let piv = lu[k * n + k];
            if pv == 0.0 {
                continue;
            }
            for i in k + 1..n {
                let f = lu[i * n + k] / piv;
                lu[i * n + k] = f;
                if f == S::ZERO {
                    continue;
                }
                for j in k + 1..n {
                    let u = lu[k * n + j];
                    lu[i * n + j] -= f * u;
                }
            }
        }
        if n == 0 {
            min_pivot = 0.0;
        }
        Self {
            n,
            lu,
            perm,
            min_pivot,
        }
    }

    /// Smallest pivot modulus met during elimination.
    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    pub fn solve(&self, b: &[S]) -> Vec<S> {
        let n = self.n;
        let mut x: Vec<S> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                let l = self.lu[i * n + j];
                let xj = x[j];
                x[i] -= l * xj;
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let u = self.lu[i * n + j];
                let xj = x[j];
                x[i] -= u * xj;
            }
            x[i] = x[i] / self.lu[i * n + i];
        }
        x
    }
}
