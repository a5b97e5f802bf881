//! Finite-difference Hamiltonian `−(ħ²/2) Σ_d ∇_d² / f_d + V` on a grid.
//!
//! `f_d` are per-axis mass factors (1 for ordinary mass-weighted axes).
//! Wavefunctions vanish outside the node box, so stencil taps that fall off
//! the grid are dropped and the matrix stays symmetric.

use std::io::{self, Write};

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::grid::GridSpec;
use crate::potential::{sample_on_grid, PotentialError, PotentialField};
use crate::units::HBAR2;

/// Boundary-shell probability above which a converged state is reported
/// as touching the box.
pub const BOUNDARY_WARN: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("stencil order {0} unsupported (use 2 or 4)")]
    OrderUnsupported(u32),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error("vector has length {got}, operator dimension is {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("mass factor for axis `{0}` must be positive and finite")]
    InvalidMassFactor(String),
    #[error("{got} mass factors for {expected} axes")]
    MassFactorCount { expected: usize, got: usize },
}

/// A real symmetric operator applied matrix-free.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;

    /// `y ← A x`. Both slices have length [`dim`](Self::dim).
    fn apply_into(&self, x: &[f64], y: &mut [f64]);

    /// Cheap bounds `(lo, hi)` enclosing the spectrum, if known.
    fn spectral_bounds(&self) -> Option<(f64, f64)> {
        None
    }
}

/// Dense symmetric matrix as an operator; used for small problems and as an
/// oracle in tests.
#[derive(Debug, Clone)]
pub struct DenseOperator(pub DMatrix<f64>);

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.0.nrows();
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = (0..n).map(|j| self.0[(i, j)] * x[j]).sum();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum StencilOrder {
    Second,
    Fourth,
}

impl StencilOrder {
    /// Second-derivative weights for offsets `0, 1, 2, ...` (symmetric).
    fn weights(self) -> &'static [f64] {
        match self {
            StencilOrder::Second => &[-2.0, 1.0],
            StencilOrder::Fourth => &[-5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0],
        }
    }

    pub fn as_u32(self) -> u32 {
        match self {
            StencilOrder::Second => 2,
            StencilOrder::Fourth => 4,
        }
    }
}

impl TryFrom<u32> for StencilOrder {
    type Error = OperatorError;
    fn try_from(v: u32) -> Result<Self, Self::Error> {
        match v {
            2 => Ok(StencilOrder::Second),
            4 => Ok(StencilOrder::Fourth),
            o => Err(OperatorError::OrderUnsupported(o)),
        }
    }
}

impl From<StencilOrder> for u32 {
    fn from(o: StencilOrder) -> u32 {
        o.as_u32()
    }
}

/// Kinetic prefactors: `ħ²` and one mass factor per grid axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Kinetic {
    pub hbar2: f64,
    pub mass_factors: Vec<f64>,
}

impl Kinetic {
    pub fn uniform(ndim: usize) -> Self {
        Self { hbar2: HBAR2, mass_factors: vec![1.0; ndim] }
    }
}

/// Stencil geometry of one active axis.
#[derive(Debug, Clone)]
struct AxisStencil {
    count: usize,
    stride: usize,
    /// `ħ² / (2 f h²)`.
    coeff: f64,
}

#[derive(Debug, Clone)]
pub struct GridOperator {
    spec: GridSpec,
    diag: Vec<f64>,
    order: StencilOrder,
    kinetic: Kinetic,
    axes: Vec<AxisStencil>,
}

/// Discretizes the Hamiltonian of `field` on `spec` with unit mass factors.
pub fn assemble(field: &dyn PotentialField, spec: &GridSpec, order: StencilOrder) -> Result<GridOperator, OperatorError> {
    assemble_with(field, spec, order, Kinetic::uniform(spec.ndim()))
}

pub fn assemble_with(
    field: &dyn PotentialField,
    spec: &GridSpec,
    order: StencilOrder,
    kinetic: Kinetic,
) -> Result<GridOperator, OperatorError> {
    let diag = sample_on_grid(field, spec)?;
    GridOperator::from_diagonal(spec.clone(), diag, order, kinetic)
}

impl GridOperator {
    pub fn from_diagonal(
        spec: GridSpec,
        diag: Vec<f64>,
        order: StencilOrder,
        kinetic: Kinetic,
    ) -> Result<Self, OperatorError> {
        if diag.len() != spec.len() {
            return Err(OperatorError::LengthMismatch { expected: spec.len(), got: diag.len() });
        }
        if kinetic.mass_factors.len() != spec.ndim() {
            return Err(OperatorError::MassFactorCount {
                expected: spec.ndim(),
                got: kinetic.mass_factors.len(),
            });
        }
        for (a, f) in spec.axes().iter().zip(&kinetic.mass_factors) {
            if !(*f > 0.0) || !f.is_finite() {
                return Err(OperatorError::InvalidMassFactor(a.label.clone()));
            }
        }
        let axes = spec
            .active_dims()
            .into_iter()
            .map(|d| {
                let h = spec.axis(d).spacing();
                AxisStencil {
                    count: spec.axis(d).count,
                    stride: spec.strides()[d],
                    coeff: kinetic.hbar2 / (2.0 * kinetic.mass_factors[d] * h * h),
                }
            })
            .collect();
        Ok(Self { spec, diag, order, kinetic, axes })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn potential_diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn order(&self) -> StencilOrder {
        self.order
    }

    pub fn kinetic(&self) -> &Kinetic {
        &self.kinetic
    }

    pub fn potential_min(&self) -> f64 {
        self.diag.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Checked matrix-vector product.
    pub fn apply(&self, state: &[f64]) -> Result<Vec<f64>, OperatorError> {
        if state.len() != self.diag.len() {
            return Err(OperatorError::LengthMismatch { expected: self.diag.len(), got: state.len() });
        }
        let mut out = vec![0.0; state.len()];
        self.apply_into(state, &mut out);
        Ok(out)
    }

    /// Adds the kinetic contribution of the active axes `axes` to `out`,
    /// where `u`/`out` cover whole blocks of those axes.
    fn kinetic_block(&self, axes: &[AxisStencil], u: &[f64], out: &mut [f64]) {
        let w = self.order.weights();
        for ax in axes {
            let (n, s) = (ax.count, ax.stride);
            if s == 1 {
                Self::kinetic_lines(ax, w, u, out);
                continue;
            }
            let block = n * s;
            for base in (0..u.len()).step_by(block) {
                for j in 0..n {
                    let o = base + j * s;
                    let dst = &mut out[o..o + s];
                    let centre = -ax.coeff * w[0];
                    for (d, x) in dst.iter_mut().zip(&u[o..o + s]) {
                        *d += centre * x;
                    }
                    for (k, &wk) in w.iter().enumerate().skip(1) {
                        let c = -ax.coeff * wk;
                        if j >= k {
                            let src = &u[o - k * s..o - k * s + s];
                            for (d, x) in dst.iter_mut().zip(src) {
                                *d += c * x;
                            }
                        }
                        if j + k < n {
                            let src = &u[o + k * s..o + k * s + s];
                            for (d, x) in dst.iter_mut().zip(src) {
                                *d += c * x;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Unit-stride axis: contiguous lines of `count` nodes.
    fn kinetic_lines(ax: &AxisStencil, w: &[f64], u: &[f64], out: &mut [f64]) {
        let n = ax.count;
        let r = w.len() - 1;
        let c: Vec<f64> = w.iter().map(|wk| -ax.coeff * wk).collect();
        for (line, dst) in u.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
            for j in 0..n {
                let mut acc = c[0] * line[j];
                if j >= r && j + r < n {
                    for k in 1..=r {
                        acc += c[k] * (line[j - k] + line[j + k]);
                    }
                } else {
                    for k in 1..=r {
                        if j >= k {
                            acc += c[k] * line[j - k];
                        }
                        if j + k < n {
                            acc += c[k] * line[j + k];
                        }
                    }
                }
                dst[j] += acc;
            }
        }
    }

    /// Explicit coordinate-list form `(row, col, value)`, rows ascending.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let w = self.order.weights();
        let n = self.diag.len();
        let mut out = Vec::new();
        for i in 0..n {
            let mut row: Vec<(usize, f64)> = vec![(i, self.diag[i])];
            for ax in &self.axes {
                let j = (i / ax.stride) % ax.count;
                row[0].1 -= ax.coeff * w[0];
                for (k, &wk) in w.iter().enumerate().skip(1) {
                    if j >= k {
                        row.push((i - k * ax.stride, -ax.coeff * wk));
                    }
                    if j + k < ax.count {
                        row.push((i + k * ax.stride, -ax.coeff * wk));
                    }
                }
            }
            row.sort_by_key(|e| e.0);
            out.extend(row.into_iter().map(|(c, v)| (i, c, v)));
        }
        out
    }

    pub fn write_triplets<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (r, c, v) in self.triplets() {
            writeln!(w, "{r} {c} {v:e}")?;
        }
        Ok(())
    }

    /// Dense matrix; only sensible for small grids.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.diag.len();
        let mut m = DMatrix::zeros(n, n);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    /// Probability weight of `state` on the outermost node layer of the
    /// active axes.
    pub fn boundary_probability(&self, state: &[f64]) -> f64 {
        let mut p = 0.0;
        let mut norm = 0.0;
        for (i, x) in state.iter().enumerate() {
            let x2 = x * x;
            norm += x2;
            let edge = self.axes.iter().any(|ax| {
                let j = (i / ax.stride) % ax.count;
                j == 0 || j + 1 == ax.count
            });
            if edge {
                p += x2;
            }
        }
        if norm > 0.0 {
            p / norm
        } else {
            0.0
        }
    }

    pub fn rayleigh_quotient(&self, state: &[f64]) -> f64 {
        let mut hv = vec![0.0; state.len()];
        self.apply_into(state, &mut hv);
        let num: f64 = state.iter().zip(&hv).map(|(a, b)| a * b).sum();
        let den: f64 = state.iter().map(|a| a * a).sum();
        num / den
    }
}

impl LinearOperator for GridOperator {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        assert_eq!(u.len(), self.diag.len());
        assert_eq!(out.len(), self.diag.len());
        let Some((outer, inner)) = self.axes.split_first() else {
            for ((o, d), x) in out.iter_mut().zip(&self.diag).zip(u) {
                *o = d * x;
            }
            return;
        };
        let w = self.order.weights();
        let (n0, s0) = (outer.count, outer.stride);
        // One chunk per node of the outermost active axis; every chunk holds
        // whole blocks of the inner axes.
        out.par_chunks_mut(s0).enumerate().for_each(|(j, dst)| {
            let o = j * s0;
            let centre = -outer.coeff * w[0];
            for ((d, x), v) in dst.iter_mut().zip(&u[o..o + s0]).zip(&self.diag[o..o + s0]) {
                *d = (v + centre) * x;
            }
            for (k, &wk) in w.iter().enumerate().skip(1) {
                let c = -outer.coeff * wk;
                if j >= k {
                    for (d, x) in dst.iter_mut().zip(&u[o - k * s0..o - k * s0 + s0]) {
                        *d += c * x;
                    }
                }
                if j + k < n0 {
                    for (d, x) in dst.iter_mut().zip(&u[o + k * s0..o + k * s0 + s0]) {
                        *d += c * x;
                    }
                }
            }
            self.kinetic_block(inner, &u[o..o + s0], dst);
        });
    }

    /// The kinetic part is positive semidefinite, so the potential minimum
    /// is a lower bound; the upper bound is Gershgorin's.
    fn spectral_bounds(&self) -> Option<(f64, f64)> {
        let w = self.order.weights();
        let abs_sum: f64 = w.iter().skip(1).map(|x| 2.0 * x.abs()).sum::<f64>() - w[0];
        let spread: f64 = self.axes.iter().map(|a| a.coeff * abs_sum).sum();
        let vmax = self.diag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some((self.potential_min(), vmax + spread))
    }
}
