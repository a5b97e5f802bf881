//! Strain coupling of tunneling defects and discrete multi-site models.
//!
//! Tensors are symmetric 3×3; Voigt rows list tensor components in the
//! order `[xx, yy, zz, yz, xz, xy]` (no factor two on shear entries).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{CaseError, DefectCase};
use crate::eigensolve::dense_eigen;
use crate::potential::{find_minima, PotentialError};
use crate::units::MEV_PER_EV;

/// Largest strain component accepted as physical.
pub const STRAIN_BOUND: f64 = 0.1;
pub const MAX_SITES: usize = 24;

pub type Tensor3 = [[f64; 3]; 3];

#[derive(Debug, Error)]
pub enum StrainError {
    #[error("tensor is not symmetric")]
    NotSymmetric,
    #[error("tensor has a non-finite component")]
    NonFinite,
    #[error("strain component {0} exceeds the sanity bound {STRAIN_BOUND}")]
    StrainTooLarge(f64),
    #[error("strain direction is orthogonal to the dipole difference")]
    OrthogonalStrainDirection,
    #[error("strain direction is zero")]
    ZeroDirection,
    #[error("epsilon_0 must be positive")]
    NonPositiveEpsilon,
    #[error("splitting must be non-negative")]
    NegativeSplitting,
    #[error("network has {0} sites, expected 1..={MAX_SITES}")]
    SiteCount(usize),
    #[error("edge ({0}, {1}) is out of range or a self-loop")]
    BadEdge(usize, usize),
    #[error("four-site levels need a four-site network, got {0}")]
    NotFourSites(usize),
    #[error("found {0} wells, four expected")]
    FourWellsNotFound(usize),
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

fn from_voigt(v: [f64; 6]) -> Tensor3 {
    let [xx, yy, zz, yz, xz, xy] = v;
    [[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]]
}

fn to_voigt(t: &Tensor3) -> [f64; 6] {
    [t[0][0], t[1][1], t[2][2], t[1][2], t[0][2], t[0][1]]
}

fn check_symmetric(t: &Tensor3) -> Result<(), StrainError> {
    if t.iter().flatten().any(|x| !x.is_finite()) {
        return Err(StrainError::NonFinite);
    }
    for i in 0..3 {
        for j in 0..i {
            if t[i][j] != t[j][i] {
                return Err(StrainError::NotSymmetric);
            }
        }
    }
    Ok(())
}

/// `A : B = Σ A_lm B_lm`.
pub fn contract(a: &Tensor3, b: &Tensor3) -> f64 {
    (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| a[i][j] * b[i][j]).sum()
}

/// Elastic dipole tensor in eV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 6]", into = "[f64; 6]")]
pub struct ElasticDipole {
    p: Tensor3,
}

impl ElasticDipole {
    pub fn new(p: Tensor3) -> Result<Self, StrainError> {
        check_symmetric(&p)?;
        Ok(Self { p })
    }

    pub fn from_voigt(v: [f64; 6]) -> Result<Self, StrainError> {
        Self::new(from_voigt(v))
    }

    pub fn tensor(&self) -> &Tensor3 {
        &self.p
    }

    pub fn minus(&self, other: &Self) -> Self {
        let mut p = self.p;
        for (i, row) in p.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x -= other.p[i][j];
            }
        }
        Self { p }
    }
}

impl TryFrom<[f64; 6]> for ElasticDipole {
    type Error = StrainError;
    fn try_from(v: [f64; 6]) -> Result<Self, Self::Error> {
        Self::from_voigt(v)
    }
}

impl From<ElasticDipole> for [f64; 6] {
    fn from(p: ElasticDipole) -> Self {
        to_voigt(&p.p)
    }
}

/// Dimensionless strain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 6]", into = "[f64; 6]")]
pub struct StrainTensor {
    e: Tensor3,
}

impl StrainTensor {
    pub fn new(e: Tensor3) -> Result<Self, StrainError> {
        check_symmetric(&e)?;
        if let Some(x) = e.iter().flatten().find(|x| x.abs() >= STRAIN_BOUND) {
            return Err(StrainError::StrainTooLarge(*x));
        }
        Ok(Self { e })
    }

    pub fn from_voigt(v: [f64; 6]) -> Result<Self, StrainError> {
        Self::new(from_voigt(v))
    }

    pub fn tensor(&self) -> &Tensor3 {
        &self.e
    }

    pub fn scaled(&self, a: f64) -> Result<Self, StrainError> {
        let mut e = self.e;
        e.iter_mut().flatten().for_each(|x| *x *= a);
        Self::new(e)
    }

    pub fn frobenius(&self) -> f64 {
        contract(&self.e, &self.e).sqrt()
    }
}

impl TryFrom<[f64; 6]> for StrainTensor {
    type Error = StrainError;
    fn try_from(v: [f64; 6]) -> Result<Self, Self::Error> {
        Self::from_voigt(v)
    }
}

impl From<StrainTensor> for [f64; 6] {
    fn from(s: StrainTensor) -> Self {
        to_voigt(&s.e)
    }
}

/// Site asymmetry `ΔE = (P_j − P_i) : ε` in meV.
pub fn asymmetry(p_i: &ElasticDipole, p_j: &ElasticDipole, eps: &StrainTensor) -> f64 {
    contract(&p_j.minus(p_i).p, &eps.e) * MEV_PER_EV
}

/// Levels `∓½√(J² + Δ²)` of a biased two-site system.
pub fn two_site_levels(j: f64, delta: f64) -> Result<(f64, f64), StrainError> {
    if !(j >= 0.0) {
        return Err(StrainError::NegativeSplitting);
    }
    let half = 0.5 * j.hypot(delta);
    Ok((-half, half))
}

/// Sites with energies `Δ_i` coupled by tunneling matrix elements
/// `H_ij = −J_ij/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteNetwork {
    pub delta: Vec<f64>,
    /// `(i, j, J_ij)` with `i != j`.
    pub edges: Vec<(usize, usize, f64)>,
}

impl SiteNetwork {
    pub fn new(delta: Vec<f64>, edges: Vec<(usize, usize, f64)>) -> Result<Self, StrainError> {
        let n = delta.len();
        if n == 0 || n > MAX_SITES {
            return Err(StrainError::SiteCount(n));
        }
        for &(i, j, _) in &edges {
            if i >= n || j >= n || i == j {
                return Err(StrainError::BadEdge(i, j));
            }
        }
        Ok(Self { delta, edges })
    }

    /// Ring of `n` sites with nearest-neighbour coupling `j`; for four
    /// sites `j_nnn` couples the two diagonals.
    pub fn ring(n: usize, j: f64, j_nnn: f64, delta: Vec<f64>) -> Result<Self, StrainError> {
        if delta.len() != n {
            return Err(StrainError::SiteCount(delta.len()));
        }
        let mut edges: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, (i + 1) % n, j)).collect();
        if n == 2 {
            edges.truncate(1);
        }
        if n == 4 && j_nnn != 0.0 {
            edges.push((0, 2, j_nnn));
            edges.push((1, 3, j_nnn));
        }
        Self::new(delta, edges)
    }

    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    pub fn hamiltonian(&self) -> DMatrix<f64> {
        let n = self.delta.len();
        let mut h = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.delta.clone()));
        for &(i, j, c) in &self.edges {
            h[(i, j)] -= 0.5 * c;
            h[(j, i)] -= 0.5 * c;
        }
        debug_assert_eq!(h.nrows(), n);
        h
    }

    /// Ascending eigenvalues.
    pub fn levels(&self) -> Vec<f64> {
        dense_eigen(&self.hamiltonian()).0
    }
}

/// Four-site levels relative to the centre of the middle pair.
pub fn fls_levels(network: &SiteNetwork) -> Result<[f64; 4], StrainError> {
    if network.len() != 4 {
        return Err(StrainError::NotFourSites(network.len()));
    }
    let e = network.levels();
    let mid = 0.5 * (e[1] + e[2]);
    Ok([e[0] - mid, e[1] - mid, e[2] - mid, e[3] - mid])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlsReport {
    /// Four lowest levels relative to `(E₁ + E₂)/2`.
    pub levels: [f64; 4],
    /// `−E₀`.
    pub j_eff: f64,
    /// Nearest-neighbour coupling of the ring model with the same outer
    /// levels, `(E₃ − E₀)/2`.
    pub j_ring: f64,
    /// Next-nearest coupling implied by the outer levels, `−(E₀ + E₃)/2`.
    pub j_nnn: f64,
    pub wells: usize,
}

/// Four lowest levels of a four-well grid problem with their ring-model
/// reading.
pub fn fls_from_grid(case: &DefectCase) -> Result<FlsReport, StrainError> {
    let minima = find_minima(case.field.as_ref(), &case.grid)?;
    if minima.len() != 4 {
        return Err(StrainError::FourWellsNotFound(minima.len()));
    }
    let mut case = case.clone();
    case.solver.k = case.solver.k.max(4);
    let (_, res) = case.solve()?;
    let e = &res.eigenvalues;
    let mid = 0.5 * (e[1] + e[2]);
    let levels = [e[0] - mid, e[1] - mid, e[2] - mid, e[3] - mid];
    Ok(FlsReport {
        levels,
        j_eff: -levels[0],
        j_ring: 0.5 * (levels[3] - levels[0]),
        j_nnn: -0.5 * (levels[0] + levels[3]),
        wells: minima.len(),
    })
}

/// Strain magnitude along `direction` at which the asymmetry equals `j`.
pub fn quench_strain(j: f64, delta_p: &ElasticDipole, direction: &StrainTensor) -> Result<f64, StrainError> {
    if !(j >= 0.0) {
        return Err(StrainError::NegativeSplitting);
    }
    let norm = direction.frobenius();
    if norm == 0.0 {
        return Err(StrainError::ZeroDirection);
    }
    let coupling = (contract(&delta_p.p, &direction.e) / norm).abs() * MEV_PER_EV;
    if coupling == 0.0 {
        return Err(StrainError::OrthogonalStrainDirection);
    }
    Ok(j / coupling)
}

/// TLS density `2ρ_H/(π ε₀)` in eV⁻¹·nm⁻³ for `ρ_H` in nm⁻³ and `ε₀` in meV.
pub fn tls_density(rho_h: f64, epsilon0_mev: f64) -> Result<f64, StrainError> {
    if !(epsilon0_mev > 0.0) {
        return Err(StrainError::NonPositiveEpsilon);
    }
    Ok(2.0 * rho_h / (std::f64::consts::PI * epsilon0_mev / MEV_PER_EV))
}

/// Fourth-rank stiffness tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Stiffness {
    c: [[[[f64; 3]; 3]; 3]; 3],
}

impl Stiffness {
    /// Cubic crystal from `c11, c12, c44`.
    pub fn cubic(c11: f64, c12: f64, c44: f64) -> Self {
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        let mut c = [[[[0.0; 3]; 3]; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        let all = if i == j && j == k && k == l { 1.0 } else { 0.0 };
                        c[i][j][k][l] = c12 * d(i, j) * d(k, l)
                            + c44 * (d(i, k) * d(j, l) + d(i, l) * d(j, k))
                            + (c11 - c12 - 2.0 * c44) * all;
                    }
                }
            }
        }
        Self { c }
    }

    /// `(C : t)_jk = C_jklm t_lm`.
    pub fn apply(&self, t: &Tensor3) -> Tensor3 {
        let mut out = [[0.0; 3]; 3];
        for (j, row) in out.iter_mut().enumerate() {
            for (k, x) in row.iter_mut().enumerate() {
                *x = (0..3).flat_map(|l| (0..3).map(move |m| (l, m))).map(|(l, m)| self.c[j][k][l][m] * t[l][m]).sum();
            }
        }
        out
    }

    /// Elastic energy `½ (ε − α) : C : (ε − α)` of a defect with
    /// eigenstrain `α`.
    pub fn eigenstrain_energy(&self, eps: &Tensor3, alpha: &Tensor3) -> f64 {
        let mut d = *eps;
        for i in 0..3 {
            for j in 0..3 {
                d[i][j] -= alpha[i][j];
            }
        }
        0.5 * contract(&d, &self.apply(&d))
    }
}
