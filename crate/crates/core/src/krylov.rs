//! Matrix-free GMRES and Arnoldi over apply-only operators.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, hessenberg_eigenvalues, norm2, scale, sort_by_modulus_desc, DenseMatrix};
use crate::rng;

/// Default Krylov subspace dimension for eigenvalue estimates.
pub const DEFAULT_SUBSPACE: usize = 10;
/// Default number of reported leading eigenvalues.
pub const DEFAULT_NUM_EIGS: usize = 6;

pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl LinearOperator for DenseMatrix {
    fn dim(&self) -> usize {
        self.cols()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols() {
            return Err(Error::DimensionMismatch { expected: self.cols(), got: x.len() });
        }
        Ok(self.mul_vec(x))
    }
}

/// Wraps a closure as a [`LinearOperator`].
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> Result<Vec<f64>>> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> Result<Vec<f64>>> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        (self.f)(x)
    }
}

#[derive(Clone, Debug)]
pub struct KrylovResult {
    pub solution: Vec<f64>,
    /// Residual norms, starting with the initial residual.
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl KrylovResult {
    pub fn final_residual(&self) -> f64 {
        *self.residual_history.last().unwrap_or(&0.0)
    }
}

/// Modified Gram–Schmidt of `w` against `basis`, repeated once, accumulating
/// the projection coefficients into `h`.
fn orthogonalize(basis: &[Vec<f64>], w: &mut [f64], h: &mut [f64]) {
    for _pass in 0..2 {
        for (j, v) in basis.iter().enumerate() {
            let c = dot(v, w);
            h[j] += c;
            axpy(-c, v, w);
        }
    }
}

/// Unrestarted GMRES from `x0`, stopping once ‖rhs − op(x)‖ ≤ tol·‖rhs‖ or
/// after `max_iter` iterations.
pub fn gmres<O: LinearOperator + ?Sized>(op: &O, rhs: &[f64], x0: &[f64], tol: f64, max_iter: usize) -> Result<KrylovResult> {
    let n = op.dim();
    if rhs.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: rhs.len() });
    }
    if x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x0.len() });
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidArgument(format!("GMRES tolerance {tol} must be positive")));
    }
    let bnorm = norm2(rhs);
    let mut r = rhs.to_vec();
    if x0.iter().any(|&v| v != 0.0) {
        let ax0 = op.apply(x0)?;
        axpy(-1.0, &ax0, &mut r);
    }
    let beta = norm2(&r);
    let target = tol * if bnorm > 0.0 { bnorm } else { 1.0 };
    let mut history = vec![beta];
    if beta <= target {
        return Ok(KrylovResult {
            solution: x0.to_vec(),
            residual_history: history,
            iterations: 0,
            converged: true,
        });
    }
    let max_iter = max_iter.min(n).max(1);
    scale(1.0 / beta, &mut r);
    let mut basis = vec![r];
    // column j of the Hessenberg matrix, after rotation, stored as rows of `rcols`
    let mut rcols: Vec<Vec<f64>> = Vec::new();
    let mut cs: Vec<f64> = Vec::new();
    let mut sn: Vec<f64> = Vec::new();
    let mut g = vec![beta];
    let mut converged = false;
    for j in 0..max_iter {
        let mut w = op.apply(&basis[j])?;
        let mut h = vec![0.0; j + 2];
        orthogonalize(&basis, &mut w, &mut h[..j + 1]);
        let hnext = norm2(&w);
        h[j + 1] = hnext;
        for i in 0..j {
            let t = cs[i] * h[i] + sn[i] * h[i + 1];
            h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1];
            h[i] = t;
        }
        let denom = h[j].hypot(h[j + 1]);
        let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (h[j] / denom, h[j + 1] / denom) };
        cs.push(c);
        sn.push(s);
        h[j] = denom;
        h[j + 1] = 0.0;
        g.push(-s * g[j]);
        g[j] *= c;
        rcols.push(h);
        let res = g[j + 1].abs();
        history.push(res);
        let breakdown = hnext <= 1e-14 * norm2(&rcols[j][..j + 1]).max(f64::MIN_POSITIVE);
        if res <= target || breakdown {
            converged = res <= target;
            break;
        }
        if j + 1 < max_iter {
            scale(1.0 / hnext, &mut w);
            basis.push(w);
        }
    }
    // back substitution on the rotated triangular system
    let m = rcols.len();
    let mut y = vec![0.0; m];
    for i in (0..m).rev() {
        let mut s = g[i];
        for k in i + 1..m {
            s -= rcols[k][i] * y[k];
        }
        y[i] = if rcols[i][i] != 0.0 { s / rcols[i][i] } else { 0.0 };
    }
    let mut x = x0.to_vec();
    for (k, yk) in y.iter().enumerate() {
        axpy(*yk, &basis[k], &mut x);
    }
    Ok(KrylovResult {
        solution: x,
        residual_history: history,
        iterations: m,
        converged,
    })
}

/// Arnoldi factorization op·V_m = V_m H_m + h_{m+1,m} v_{m+1} e_mᵀ.
#[derive(Clone, Debug)]
pub struct ArnoldiFactorization {
    /// Orthonormal columns v_1 … v_m, plus v_{m+1} when no breakdown occurred.
    pub basis: Vec<Vec<f64>>,
    /// The m × m upper Hessenberg projection.
    pub hessenberg: DenseMatrix,
    /// h_{m+1,m}; zero after breakdown.
    pub residual_norm: f64,
    pub breakdown: bool,
}

impl ArnoldiFactorization {
    pub fn size(&self) -> usize {
        self.hessenberg.rows()
    }

    pub fn ritz_values(&self) -> Result<Vec<Complex64>> {
        let mut ev = hessenberg_eigenvalues(&self.hessenberg)?;
        sort_by_modulus_desc(&mut ev);
        Ok(ev)
    }
}

/// `m` steps of Arnoldi with reorthogonalized modified Gram–Schmidt. Stops
/// early on an invariant subspace, returning a smaller factorization.
pub fn arnoldi<O: LinearOperator + ?Sized>(op: &O, start: &[f64], m: usize) -> Result<ArnoldiFactorization> {
    let n = op.dim();
    if start.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: start.len() });
    }
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!("subspace dimension {m} must lie in 1..={n}")));
    }
    let s = norm2(start);
    if s == 0.0 {
        return Err(Error::InvalidArgument("Arnoldi start vector is zero".into()));
    }
    let mut v0 = start.to_vec();
    scale(1.0 / s, &mut v0);
    let mut basis = vec![v0];
    let mut hfull = DenseMatrix::zeros(m + 1, m);
    let mut size = m;
    let mut breakdown = false;
    let mut residual_norm = 0.0;
    for j in 0..m {
        let mut w = op.apply(&basis[j])?;
        let wnorm = norm2(&w);
        let mut h = vec![0.0; j + 1];
        orthogonalize(&basis, &mut w, &mut h);
        for (i, hi) in h.iter().enumerate() {
            hfull[(i, j)] = *hi;
        }
        let hnext = norm2(&w);
        if hnext <= 1e-12 * wnorm.max(f64::MIN_POSITIVE) {
            size = j + 1;
            breakdown = true;
            break;
        }
        hfull[(j + 1, j)] = hnext;
        scale(1.0 / hnext, &mut w);
        basis.push(w);
        residual_norm = hnext;
    }
    Ok(ArnoldiFactorization {
        basis,
        hessenberg: hfull.block(size, size),
        residual_norm: if breakdown { 0.0 } else { residual_norm },
        breakdown,
    })
}

/// The `n_want` Ritz values of largest modulus from an `m`-step Arnoldi
/// factorization with a seeded random start vector.
pub fn leading_eigenvalues<O: LinearOperator + ?Sized>(op: &O, m: usize, n_want: usize, seed: u64) -> Result<Vec<Complex64>> {
    if n_want > m {
        return Err(Error::InvalidArgument(format!("n_want = {n_want} exceeds subspace dimension {m}")));
    }
    let mut r = rng::chacha(seed, rng::tag::ARNOLDI, 0);
    let start: Vec<f64> = (0..op.dim()).map(|_| r.gen::<f64>() - 0.5).collect();
    let fact = arnoldi(op, &start, m.min(op.dim()))?;
    let mut ev = fact.ritz_values()?;
    ev.truncate(n_want);
    Ok(ev)
}
