//! Lowest eigenpairs of a symmetric operator by implicitly restarted
//! Lanczos with full reorthogonalization.
//!
//! Each cycle extends a Lanczos factorization `A V = V H + f eᵀ` to `m`
//! vectors, checks the `k` smallest Ritz pairs and, if some are not yet
//! converged, compresses the factorization back to `k` vectors by applying
//! the unwanted Ritz values as exact QR shifts. Every new Lanczos vector is
//! orthogonalized twice against the basis and any locked vectors.
//!
//! A single Krylov space sees only one direction of an exactly degenerate
//! eigenspace, so after convergence the solver optionally locks the pairs it
//! found and searches the orthogonal complement from a fresh start vector.
//! Anything that turns up below the current `k`-th eigenvalue is merged in.

use std::fmt;

use log::debug;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::operator::LinearOperator;

pub const DEFAULT_SEED: u64 = 0x5eed_1a2c_2024_0001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LanczosOptions {
    /// Number of eigenpairs wanted.
    pub k: usize,
    /// Relative residual target `‖Av − λv‖ / max(|λ|, scale)`.
    pub tol: f64,
    pub max_restarts: usize,
    /// Krylov basis size; `None` picks `max(2k + 1, 20)`.
    pub ncv: Option<usize>,
    pub seed: u64,
    /// Search the complement of the converged pairs for missed degenerate
    /// partners.
    pub check_degeneracy: bool,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            k: 12,
            tol: 1e-10,
            max_restarts: 500,
            ncv: None,
            seed: DEFAULT_SEED,
            check_degeneracy: true,
        }
    }
}

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenResult {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Unit-norm, in the order of `eigenvalues`.
    #[serde(skip)]
    pub eigenvectors: Vec<Vec<f64>>,
    /// True residual norms `‖Av − λv‖`.
    pub residuals: Vec<f64>,
    /// Restart cycles over all passes.
    pub iterations: usize,
    pub matvecs: usize,
    /// Magnitude used to make residuals relative.
    pub scale: f64,
    pub seed: u64,
    pub converged: bool,
}

impl fmt::Debug for EigenResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EigenResult")
            .field("eigenvalues", &self.eigenvalues)
            .field("eigenvectors", &format_args!("[{} vectors]", self.eigenvectors.len()))
            .field("residuals", &self.residuals)
            .field("iterations", &self.iterations)
            .field("matvecs", &self.matvecs)
            .field("scale", &self.scale)
            .field("seed", &self.seed)
            .field("converged", &self.converged)
            .finish()
    }
}

impl EigenResult {
    pub fn relative_residual(&self, i: usize) -> f64 {
        self.residuals[i] / self.eigenvalues[i].abs().max(self.scale)
    }
}

#[derive(Debug, Error)]
pub enum EigenError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} is too large for an operator of dimension {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("no convergence after {} restarts", partial.iterations)]
    NoConvergence { partial: Box<EigenResult> },
}

/// Dot product with eight independent partial sums so it vectorizes; the
/// summation order is fixed, so results are reproducible.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// Second-pass threshold of the DGKS test.
const DGKS_ETA: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Removes the components of `w` along `basis` (orthonormal), returning the
/// coefficients. Coefficients are computed independently per basis vector
/// and the update is summed per element in basis order, so the result does
/// not depend on the thread count.
fn project_out(basis: &[&[f64]], w: &mut [f64]) -> Vec<f64> {
    if basis.is_empty() {
        return Vec::new();
    }
    let coeffs: Vec<f64> = basis.par_iter().map(|b| dot(b, w)).collect();
    const CHUNK: usize = 4096;
    w.par_chunks_mut(CHUNK).enumerate().for_each(|(ci, wc)| {
        let off = ci * CHUNK;
        let len = wc.len();
        for (b, c) in basis.iter().zip(&coeffs) {
            for (x, y) in wc.iter_mut().zip(&b[off..off + len]) {
                *x -= c * y;
            }
        }
    });
    coeffs
}

struct Factorization<'a, A: LinearOperator + ?Sized> {
    op: &'a A,
    locked: &'a [Vec<f64>],
    v: Vec<Vec<f64>>,
    h: DMatrix<f64>,
    f: Vec<f64>,
    m: usize,
    matvecs: usize,
}

impl<A: LinearOperator + ?Sized> Factorization<'_, A> {
    fn orthogonalize(&self, w: &mut [f64]) -> Vec<f64> {
        let locked: Vec<&[f64]> = self.locked.iter().map(|v| v.as_slice()).collect();
        let basis: Vec<&[f64]> = self.v.iter().map(|v| v.as_slice()).collect();
        let mut h = vec![0.0; basis.len()];
        // Classical Gram–Schmidt with the DGKS refinement test: a second pass
        // whenever the first one cancelled most of the norm.
        let mut before = norm(w);
        for _ in 0..2 {
            project_out(&locked, w);
            for (hi, c) in h.iter_mut().zip(project_out(&basis, w)) {
                *hi += c;
            }
            let after = norm(w);
            if after > DGKS_ETA * before {
                break;
            }
            before = after;
        }
        h
    }

    /// A unit vector orthogonal to the basis and the locked set.
    fn fresh_vector(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.op.dim();
        loop {
            let mut w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let before = norm(&w);
            self.orthogonalize(&mut w);
            let after = norm(&w);
            if after > 1e-8 * before {
                w.iter_mut().for_each(|x| *x /= after);
                return w;
            }
        }
    }

    /// Grows the factorization to `m` vectors.
    fn extend(&mut self, rng: &mut ChaCha8Rng, scale: f64) {
        while self.v.len() < self.m {
            let j = self.v.len();
            let next = if j == 0 {
                self.fresh_vector(rng)
            } else {
                let beta = norm(&self.f);
                if beta > 1e-14 * scale.max(f64::MIN_POSITIVE) {
                    self.h[(j, j - 1)] = beta;
                    self.h[(j - 1, j)] = beta;
                    // `f` left the previous step already orthogonal to the basis.
                    self.f.iter().map(|x| x / beta).collect()
                } else {
                    // Invariant subspace: continue with an uncoupled vector.
                    self.h[(j, j - 1)] = 0.0;
                    self.h[(j - 1, j)] = 0.0;
                    self.fresh_vector(rng)
                }
            };
            let mut w = vec![0.0; next.len()];
            self.op.apply_into(&next, &mut w);
            self.matvecs += 1;
            self.v.push(next);
            // Only α_j enters T; the other coefficients are reorthogonalization
            // noise and would break the tridiagonal structure the restart needs.
            let coeffs = self.orthogonalize(&mut w);
            self.h[(j, j)] = coeffs[j];
            self.f = w;
        }
    }

    fn ritz(&self) -> (Vec<f64>, DMatrix<f64>) {
        let hs = (&self.h + self.h.transpose()) * 0.5;
        let eig = SymmetricEigen::new(hs);
        let mut order: Vec<usize> = (0..self.m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vecs = DMatrix::from_fn(self.m, self.m, |r, c| eig.eigenvectors[(r, order[c])]);
        (vals, vecs)
    }

    /// Applies `shifts` implicitly and truncates to `keep` vectors.
    fn restart(&mut self, shifts: &[f64], keep: usize) {
        let m = self.m;
        let mut q_acc = DMatrix::<f64>::identity(m, m);
        let mut h = self.h.clone();
        for &mu in shifts {
            qr_step(&mut h, &mut q_acc, mu);
        }
        let n = self.op.dim();
        let combine = |col: usize| -> Vec<f64> {
            let mut out = vec![0.0; n];
            for (i, vi) in self.v.iter().enumerate() {
                let c = q_acc[(i, col)];
                if c != 0.0 {
                    for (o, x) in out.iter_mut().zip(vi) {
                        *o += c * x;
                    }
                }
            }
            out
        };
        let new_v: Vec<Vec<f64>> = (0..keep).map(combine).collect();
        let beta_k = h[(keep, keep - 1)];
        let sigma = q_acc[(m - 1, keep - 1)];
        let vk = combine(keep);
        let new_f: Vec<f64> = vk.iter().zip(&self.f).map(|(a, b)| beta_k * a + sigma * b).collect();
        let mut new_h = DMatrix::zeros(m, m);
        new_h.view_mut((0, 0), (keep, keep)).copy_from(&h.view((0, 0), (keep, keep)));
        self.v = new_v;
        self.h = new_h;
        self.f = new_f;
    }
}

/// One explicit shifted QR step `T − μ = QR`, `T ← RQ + μ` on a symmetric
/// tridiagonal `t` by Givens rotations, accumulating `Q` into `q_acc`.
fn qr_step(t: &mut DMatrix<f64>, q_acc: &mut DMatrix<f64>, mu: f64) {
    let m = t.nrows();
    for i in 0..m {
        t[(i, i)] -= mu;
    }
    let mut rot = Vec::with_capacity(m.saturating_sub(1));
    for i in 0..m.saturating_sub(1) {
        let (a, b) = (t[(i, i)], t[(i + 1, i)]);
        let r = a.hypot(b);
        let (c, s) = if r == 0.0 { (1.0, 0.0) } else { (a / r, b / r) };
        for col in i..(i + 3).min(m) {
            let (x, y) = (t[(i, col)], t[(i + 1, col)]);
            t[(i, col)] = c * x + s * y;
            t[(i + 1, col)] = -s * x + c * y;
        }
        rot.push((c, s));
    }
    for (i, &(c, s)) in rot.iter().enumerate() {
        for row in 0..(i + 2).min(m) {
            let (x, y) = (t[(row, i)], t[(row, i + 1)]);
            t[(row, i)] = c * x + s * y;
            t[(row, i + 1)] = -s * x + c * y;
        }
        for row in 0..m {
            let (x, y) = (q_acc[(row, i)], q_acc[(row, i + 1)]);
            q_acc[(row, i)] = c * x + s * y;
            q_acc[(row, i + 1)] = -s * x + c * y;
        }
    }
    for r in 0..m {
        for c in 0..m {
            if r.abs_diff(c) > 1 {
                t[(r, c)] = 0.0;
            }
        }
        t[(r, r)] += mu;
    }
    for i in 0..m.saturating_sub(1) {
        let off = 0.5 * (t[(i + 1, i)] + t[(i, i + 1)]);
        t[(i + 1, i)] = off;
        t[(i, i + 1)] = off;
    }
}

struct PassResult {
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    restarts: usize,
    matvecs: usize,
    scale: f64,
    converged: bool,
}

/// One restarted Lanczos run for the `nev` smallest eigenpairs of `op`
/// restricted to the complement of `locked`.
fn irlm<A: LinearOperator + ?Sized>(
    op: &A,
    nev: usize,
    locked: &[Vec<f64>],
    opts: &LanczosOptions,
    tol: f64,
    rng: &mut ChaCha8Rng,
    scale_hint: f64,
) -> PassResult {
    let avail = op.dim() - locked.len();
    let m = opts.ncv.unwrap_or((2 * nev + 1).max(20)).max(nev + 1).min(avail);
    let mut fac = Factorization {
        op,
        locked,
        v: Vec::with_capacity(m),
        h: DMatrix::zeros(m, m),
        f: Vec::new(),
        m,
        matvecs: 0,
    };
    let mut scale = scale_hint;
    let mut restarts = 0;
    loop {
        fac.extend(rng, scale);
        let (theta, s) = fac.ritz();
        scale = theta.iter().fold(scale, |acc, t| acc.max(t.abs()));
        let beta = norm(&fac.f);
        let full = m == avail;
        let est = |i: usize| if full { 0.0 } else { beta * s[(m - 1, i)].abs() };
        let nconv = (0..nev).filter(|&i| est(i) <= tol * theta[i].abs().max(scale)).count();
        if nconv == nev || restarts >= opts.max_restarts {
            let n = op.dim();
            let vectors = (0..nev)
                .map(|i| {
                    let mut x = vec![0.0; n];
                    for (j, vj) in fac.v.iter().enumerate() {
                        let c = s[(j, i)];
                        for (o, y) in x.iter_mut().zip(vj) {
                            *o += c * y;
                        }
                    }
                    x
                })
                .collect();
            return PassResult {
                values: theta[..nev].to_vec(),
                vectors,
                restarts,
                matvecs: fac.matvecs,
                scale,
                converged: nconv == nev,
            };
        }
        // Keep a few extra vectors once some pairs converged to avoid stagnation.
        let keep = (nev + nconv.min((m - nev) / 2)).min(m - 1).max(1);
        fac.restart(&theta[keep..], keep);
        restarts += 1;
        debug!("lanczos restart {restarts}: {nconv}/{nev} converged");
    }
}

/// Normalizes, takes Rayleigh quotients and true residuals.
fn finalize<A: LinearOperator + ?Sized>(op: &A, vectors: &mut [Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let mut values = Vec::with_capacity(vectors.len());
    let mut residuals = Vec::with_capacity(vectors.len());
    let mut av = vec![0.0; op.dim()];
    for v in vectors.iter_mut() {
        let nv = norm(v);
        v.iter_mut().for_each(|x| *x /= nv);
        op.apply_into(v, &mut av);
        let lam = dot(v, &av);
        let r = av.iter().zip(v.iter()).map(|(a, b)| (a - lam * b).powi(2)).sum::<f64>().sqrt();
        values.push(lam);
        residuals.push(r);
    }
    (values, residuals)
}

/// The `k` algebraically smallest eigenpairs of `op`.
pub fn lowest<A: LinearOperator + ?Sized>(op: &A, opts: &LanczosOptions) -> Result<EigenResult, EigenError> {
    let n = op.dim();
    if opts.k == 0 {
        return Err(EigenError::ZeroK);
    }
    if opts.k >= n {
        return Err(EigenError::KTooLarge { k: opts.k, n });
    }
    if !(opts.tol > 0.0) || !opts.tol.is_finite() {
        return Err(EigenError::InvalidTolerance(opts.tol));
    }
    let k = opts.k;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let scale_hint = op.spectral_bounds().map_or(0.0, |(lo, _)| lo.abs());

    let mut iterations = 0;
    let mut matvecs = 0;
    let mut tol = opts.tol;
    let mut attempt = 0;
    loop {
        let first = irlm(op, k, &[], opts, tol, &mut rng, scale_hint);
        iterations += first.restarts;
        matvecs += first.matvecs;
        let mut scale = first.scale;
        let mut converged = first.converged;
        let mut pairs: Vec<(f64, Vec<f64>)> = first.values.into_iter().zip(first.vectors).collect();

        if opts.check_degeneracy && converged {
            loop {
                let locked: Vec<Vec<f64>> = pairs.iter().map(|p| p.1.clone()).collect();
                let avail = n - locked.len();
                if avail == 0 {
                    break;
                }
                let nev = k.min(3).min(avail.saturating_sub(1)).max(1);
                if nev >= avail {
                    break;
                }
                let extra = irlm(op, nev, &locked, opts, tol, &mut rng, scale);
                iterations += extra.restarts;
                matvecs += extra.matvecs;
                scale = scale.max(extra.scale);
                converged &= extra.converged;
                let top = pairs.last().expect("k >= 1").0;
                let margin = 10.0 * tol * top.abs().max(scale);
                let missed: Vec<(f64, Vec<f64>)> = extra
                    .values
                    .into_iter()
                    .zip(extra.vectors)
                    .filter(|(v, _)| *v < top - margin)
                    .collect();
                if missed.is_empty() {
                    break;
                }
                debug!("degeneracy check found {} missed pair(s)", missed.len());
                pairs.extend(missed);
                pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                pairs.truncate(k);
            }
        }

        let mut vectors: Vec<Vec<f64>> = pairs.into_iter().map(|p| p.1).collect();
        let (values, residuals) = finalize(op, &mut vectors);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let mut result = EigenResult {
            eigenvalues: order.iter().map(|&i| values[i]).collect(),
            eigenvectors: order.iter().map(|&i| std::mem::take(&mut vectors[i])).collect(),
            residuals: order.iter().map(|&i| residuals[i]).collect(),
            iterations,
            matvecs,
            scale,
            seed: opts.seed,
            converged,
        };
        let within = (0..k).all(|i| result.relative_residual(i) <= opts.tol);
        if converged && within {
            return Ok(result);
        }
        if !converged || attempt >= 2 {
            result.converged = false;
            return Err(EigenError::NoConvergence { partial: Box::new(result) });
        }
        // Residual estimates were optimistic: tighten and rerun.
        attempt += 1;
        tol *= 0.1;
    }
}

/// All eigenpairs of a small dense symmetric matrix, ascending.
pub fn dense_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::DenseOperator;

    #[test]
    fn diagonal_matrix() {
        let d: Vec<f64> = (0..60).map(|i| ((i * 37) % 60) as f64 + 1.0).collect();
        let op = DenseOperator(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d)));
        let r = lowest(&op, &LanczosOptions { k: 5, ..Default::default() }).unwrap();
        for (i, v) in r.eigenvalues.iter().enumerate() {
            assert!((v - (i as f64 + 1.0)).abs() < 1e-9, "{:?}", r.eigenvalues);
        }
    }

    #[test]
    fn rejects_bad_requests() {
        let op = DenseOperator(DMatrix::identity(4, 4));
        assert!(matches!(lowest(&op, &LanczosOptions { k: 0, ..Default::default() }), Err(EigenError::ZeroK)));
        assert!(matches!(
            lowest(&op, &LanczosOptions { k: 4, ..Default::default() }),
            Err(EigenError::KTooLarge { .. })
        ));
        assert!(matches!(
            lowest(&op, &LanczosOptions { k: 1, tol: 0.0, ..Default::default() }),
            Err(EigenError::InvalidTolerance(_))
        ));
    }
}
