//! One solve: field, grid, stencil, kinetic factors and solver settings.

use std::sync::Arc;

use thiserror::Error;

use crate::eigensolve::{lowest, EigenError, EigenResult, LanczosOptions};
use crate::grid::GridSpec;
use crate::operator::{assemble_with, GridOperator, Kinetic, OperatorError, StencilOrder};
use crate::potential::{PotentialError, PotentialField};
use crate::spectra::{assign_states, tunnel_splitting, SpectraError, SpectrumResult};
use crate::units::HBAR2;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error("grid has no axis `{0}`")]
    UnknownAxis(String),
}

#[derive(Clone)]
pub struct DefectCase {
    pub field: Arc<dyn PotentialField>,
    pub grid: GridSpec,
    pub order: StencilOrder,
    /// Kinetic mass factor per grid axis.
    pub mass_factors: Vec<f64>,
    pub solver: LanczosOptions,
}

impl std::fmt::Debug for DefectCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DefectCase")
            .field("grid", &self.grid)
            .field("order", &self.order)
            .field("mass_factors", &self.mass_factors)
            .field("solver", &self.solver)
            .finish_non_exhaustive()
    }
}

impl DefectCase {
    pub fn new(field: Arc<dyn PotentialField>, grid: GridSpec) -> Self {
        let n = grid.ndim();
        Self {
            field,
            grid,
            order: StencilOrder::Second,
            mass_factors: vec![1.0; n],
            solver: LanczosOptions::default(),
        }
    }

    pub fn with_order(mut self, order: StencilOrder) -> Self {
        self.order = order;
        self
    }

    pub fn with_solver(mut self, solver: LanczosOptions) -> Self {
        self.solver = solver;
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.solver.k = k;
        self
    }

    pub fn with_grid(mut self, grid: GridSpec) -> Self {
        assert_eq!(grid.ndim(), self.grid.ndim(), "grid must keep the same axes");
        self.grid = grid;
        self
    }

    /// Multiplies the mass factor of the named axes by `factor`.
    pub fn scale_mass(mut self, labels: &[&str], factor: f64) -> Result<Self, CaseError> {
        for l in labels {
            let d = self.grid.axis_index(l).ok_or_else(|| CaseError::UnknownAxis(l.to_string()))?;
            self.mass_factors[d] *= factor;
        }
        Ok(self)
    }

    pub fn operator(&self) -> Result<GridOperator, CaseError> {
        let kinetic = Kinetic { hbar2: HBAR2, mass_factors: self.mass_factors.clone() };
        Ok(assemble_with(self.field.as_ref(), &self.grid, self.order, kinetic)?)
    }

    pub fn solve(&self) -> Result<(GridOperator, EigenResult), CaseError> {
        let op = self.operator()?;
        let res = lowest(&op, &self.solver)?;
        Ok((op, res))
    }

    /// Ground tunnel splitting with doublet and resolution checks.
    pub fn splitting(&self) -> Result<f64, CaseError> {
        let (op, res) = self.solve()?;
        let labels = assign_states(&res, &op, self.field.as_ref())?;
        Ok(tunnel_splitting(&res, &labels)?)
    }

    /// Ground splitting `E₁ − E₀` without labelling; for fixtures whose
    /// doublet structure is known by construction.
    pub fn raw_splitting(&self) -> Result<f64, CaseError> {
        let (_, res) = self.solve()?;
        Ok(res.eigenvalues[1] - res.eigenvalues[0])
    }

    pub fn spectrum(&self) -> Result<(EigenResult, SpectrumResult), CaseError> {
        let (op, res) = self.solve()?;
        let spec = SpectrumResult::analyze(&res, &op, self.field.as_ref())?;
        Ok((res, spec))
    }
}
