//! Ready-made cases shared by the command line and the test suites.

use std::sync::Arc;

use crate::case::DefectCase;
use crate::grid::{GridError, GridSpec};
use crate::operator::StencilOrder;
use crate::potential::{
    CoupledDoubleWell, CoupledParams, FourWellModel, FourWellParams, HarmonicWell, LatticeAxes, PotentialError,
    PotentialField, QuarticDoubleWell,
};

/// Axis labels used by the harmonic preset, in order.
pub const HARMONIC_LABELS: [&str; 4] = ["qx", "qy", "qz", "Q"];
/// Distinct quanta for the oscillator ladder (meV).
pub const LADDER_QUANTA: [f64; 4] = [100.0, 131.0, 157.0, 173.0];
/// Nodes per axis of the coarse ladder grid, the largest count of the
/// standard subgrid.
pub const LADDER_COUNT: usize = 13;
/// Box half-width of the ladder grids in ground-state widths.
pub const LADDER_HALF_WIDTH: f64 = 3.4;

/// Quartic benchmark: barrier (meV) and half separation (amu^1/2·Å).
pub const QUARTIC_V_B: f64 = 150.0;
pub const QUARTIC_A: f64 = 0.55;
pub const QUARTIC_HALF_WIDTH: f64 = 1.4;
pub const QUARTIC_COUNT: usize = 401;

/// Node counts of the four-site grid over `(q_x, q_y, q_z, Q, P)`.
pub const FLS_COUNTS: [usize; 5] = [13, 13, 7, 11, 11];

#[derive(Debug, thiserror::Error)]
pub enum PresetError {
    #[error("harmonic preset takes 1 to 4 quanta, got {0}")]
    Dimension(usize),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Separable oscillator with quanta `hbar_omega` on `count` nodes per axis
/// spanning `±LADDER_HALF_WIDTH` widths, fourth-order stencil.
pub fn harmonic(hbar_omega: &[f64], count: usize) -> Result<(HarmonicWell, DefectCase), PresetError> {
    let d = hbar_omega.len();
    if d == 0 || d > HARMONIC_LABELS.len() {
        return Err(PresetError::Dimension(d));
    }
    let well = HarmonicWell::new(&HARMONIC_LABELS[..d], hbar_omega)?;
    let grid = well.grid(LADDER_HALF_WIDTH, count);
    let case = DefectCase::new(Arc::new(well.clone()), grid).with_order(StencilOrder::Fourth);
    Ok((well, case))
}

/// Exact oscillator levels `Σ(nᵢ + ½)ħωᵢ`, ascending, lowest `k`.
pub fn harmonic_levels(hbar_omega: &[f64], k: usize) -> Vec<f64> {
    let mut levels = vec![hbar_omega.iter().map(|w| 0.5 * w).sum::<f64>()];
    let mut frontier = vec![vec![0u32; hbar_omega.len()]];
    // Breadth-first over total quanta is enough for the k lowest levels.
    for _ in 0..k {
        let mut next = Vec::new();
        for n in &frontier {
            for d in 0..n.len() {
                let mut m = n.clone();
                m[d] += 1;
                if !next.contains(&m) {
                    next.push(m);
                }
            }
        }
        levels.extend(next.iter().map(|n| {
            n.iter().zip(hbar_omega).map(|(&q, w)| (q as f64 + 0.5) * w).sum::<f64>()
        }));
        frontier = next;
    }
    levels.sort_by(f64::total_cmp);
    levels.truncate(k);
    levels
}

/// Symmetric quartic benchmark on `count` nodes.
pub fn quartic_1d(count: usize) -> Result<(QuarticDoubleWell, DefectCase), PresetError> {
    let well = QuarticDoubleWell::new(QUARTIC_V_B, QUARTIC_A)?;
    let grid = well.grid(QUARTIC_HALF_WIDTH, count);
    let case = DefectCase::new(Arc::new(well.clone()), grid).with_order(StencilOrder::Fourth).with_k(4);
    Ok((well, case))
}

/// Coupled O-H-like double well on the standard subgrid refined twice.
pub fn oh_like() -> Result<(CoupledDoubleWell, DefectCase), PresetError> {
    oh_like_with(CoupledParams::oh_like(), 2)
}

pub fn oh_like_with(params: CoupledParams, refine: usize) -> Result<(CoupledDoubleWell, DefectCase), PresetError> {
    let model = CoupledDoubleWell::new(params)?;
    let grid = GridSpec::standard_subgrid(&model.frame()).refine(refine)?;
    let case = DefectCase::new(Arc::new(model.clone()), grid).with_k(2);
    Ok((model, case))
}

/// Symmetric four-site model over `(q_x, q_y, q_z, Q, P)`.
pub fn fls_zr_like() -> Result<(FourWellModel, DefectCase), PresetError> {
    let model = FourWellModel::new(FourWellParams::zr_like(), LatticeAxes::Qp)?;
    let grid = model.grid(FLS_COUNTS, 0.9, 0.9, 0.12);
    let case = DefectCase::new(Arc::new(model.clone()) as Arc<dyn PotentialField>, grid).with_k(4);
    Ok((model, case))
}

/// Two-site limit of the four-site preset on the same grid.
pub fn fls_collapsed() -> Result<(FourWellModel, DefectCase), PresetError> {
    let model = FourWellModel::collapsed(FourWellParams::zr_like(), LatticeAxes::Qp)?;
    let grid = model.grid(FLS_COUNTS, 0.9, 0.9, 0.12);
    let case = DefectCase::new(Arc::new(model.clone()) as Arc<dyn PotentialField>, grid).with_k(2);
    Ok((model, case))
}
