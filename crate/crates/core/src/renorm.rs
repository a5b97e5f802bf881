//! Lattice renormalization studies: reduced-dimension subspaces, rescaling
//! of the composite-coordinate mass, and the harmonic amplitude estimate.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{CaseError, DefectCase};
use crate::grid::{GridAxis, GridSpec};
use crate::potential::{Domain, PotentialField};
use crate::units::{mass, HBAR2};

#[derive(Debug, Error)]
pub enum RenormError {
    #[error("selection keeps no active axis")]
    NoActiveAxis,
    #[error("field has no axis `{0}`")]
    UnknownAxis(String),
    #[error("axis `{0}` is neither active nor pinned")]
    Unpinned(String),
    #[error("pin {value} for axis `{axis}` lies outside the field domain")]
    PinnedOutOfDomain { axis: String, value: f64 },
    #[error("axis `{0}` is not active")]
    AxisInactive(String),
    #[error("masses must be positive, got {0}")]
    NonPositiveMass(f64),
    #[error("at least three distinct masses are needed, got {0}")]
    InsufficientPoints(usize),
    #[error("inputs must be positive")]
    NonPositiveInput,
    #[error(transparent)]
    Case(#[from] CaseError),
}

/// Which axes stay active; every other axis of the field is pinned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubspaceSelection {
    pub active: Vec<String>,
    #[serde(default)]
    pub pins: Vec<(String, f64)>,
}

impl SubspaceSelection {
    /// Default pins: `Q` at the coincidence value `q_c`, every other
    /// inactive axis at zero.
    pub fn with_default_pins(field: &dyn PotentialField, active: &[&str], q_c: f64) -> Self {
        let pins = field
            .domain()
            .labels()
            .iter()
            .filter(|l| !active.contains(&l.as_str()))
            .map(|l| (l.clone(), if l == "Q" { q_c } else { 0.0 }))
            .collect();
        Self { active: active.iter().map(|s| s.to_string()).collect(), pins }
    }
}

enum Slot {
    Active(usize),
    Pinned(f64),
}

/// Restriction of a field to the hyperplane through the pinned values.
pub struct SubspaceField {
    inner: Arc<dyn PotentialField>,
    domain: Domain,
    slots: Vec<Slot>,
}

impl PotentialField for SubspaceField {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut full = [0.0f64; 8];
        let n = self.slots.len();
        for (f, s) in full.iter_mut().zip(&self.slots) {
            *f = match *s {
                Slot::Active(i) => x[i],
                Slot::Pinned(v) => v,
            };
        }
        self.inner.value(&full[..n])
    }
}

pub fn subspace(field: Arc<dyn PotentialField>, selection: &SubspaceSelection) -> Result<SubspaceField, RenormError> {
    if selection.active.is_empty() {
        return Err(RenormError::NoActiveAxis);
    }
    let dom = field.domain().clone();
    assert!(dom.ndim() <= 8, "fields with more than eight axes are not supported");
    for l in selection.active.iter().chain(selection.pins.iter().map(|p| &p.0)) {
        if dom.axis_index(l).is_none() {
            return Err(RenormError::UnknownAxis(l.clone()));
        }
    }
    let mut slots = Vec::with_capacity(dom.ndim());
    let mut labels = Vec::new();
    let (mut lo, mut hi) = (Vec::new(), Vec::new());
    for (d, l) in dom.labels().iter().enumerate() {
        if selection.active.contains(l) {
            slots.push(Slot::Active(labels.len()));
            labels.push(l.clone());
            lo.push(dom.min()[d]);
            hi.push(dom.max()[d]);
        } else if let Some((_, v)) = selection.pins.iter().find(|p| &p.0 == l) {
            if !(*v >= dom.min()[d] && *v <= dom.max()[d]) {
                return Err(RenormError::PinnedOutOfDomain { axis: l.clone(), value: *v });
            }
            slots.push(Slot::Pinned(*v));
        } else {
            return Err(RenormError::Unpinned(l.clone()));
        }
    }
    Ok(SubspaceField { inner: field, domain: Domain::new(labels, lo, hi), slots })
}

/// The axes of `grid` named in `selection`, in grid order.
pub fn subspace_grid(grid: &GridSpec, selection: &SubspaceSelection) -> Result<GridSpec, RenormError> {
    for l in &selection.active {
        if grid.axis_index(l).is_none() {
            return Err(RenormError::UnknownAxis(l.clone()));
        }
    }
    let axes: Vec<GridAxis> = grid
        .axes()
        .iter()
        .filter(|a| selection.active.contains(&a.label))
        .cloned()
        .collect();
    GridSpec::new(axes).map_err(|_| RenormError::NoActiveAxis)
}

/// Reduced case on the selected subspace, keeping the mass factors of the
/// retained axes.
pub fn subspace_case(case: &DefectCase, selection: &SubspaceSelection) -> Result<DefectCase, RenormError> {
    let field = subspace(case.field.clone(), selection)?;
    let grid = subspace_grid(&case.grid, selection)?;
    let factors = grid
        .axes()
        .iter()
        .map(|a| case.mass_factors[case.grid.axis_index(&a.label).expect("axis exists")])
        .collect();
    let mut out = DefectCase::new(Arc::new(field), grid).with_order(case.order).with_solver(case.solver.clone());
    out.mass_factors = factors;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassRescale {
    pub m: f64,
    pub m_ref: f64,
}

impl MassRescale {
    pub fn new(m: f64) -> Result<Self, RenormError> {
        Self::with_reference(m, mass::NB)
    }

    pub fn with_reference(m: f64, m_ref: f64) -> Result<Self, RenormError> {
        if !(m > 0.0) || !m.is_finite() {
            return Err(RenormError::NonPositiveMass(m));
        }
        if !(m_ref > 0.0) || !m_ref.is_finite() {
            return Err(RenormError::NonPositiveMass(m_ref));
        }
        Ok(Self { m, m_ref })
    }

    /// Coordinate stretch `√(m/m_ref)`.
    pub fn factor(&self) -> f64 {
        (self.m / self.m_ref).sqrt()
    }

    pub fn ratio(&self) -> f64 {
        self.m / self.m_ref
    }
}

fn active_axis(case: &DefectCase, axis: &str) -> Result<usize, RenormError> {
    let d = case.grid.axis_index(axis).ok_or_else(|| RenormError::UnknownAxis(axis.into()))?;
    if !case.grid.axis(d).is_active() {
        return Err(RenormError::AxisInactive(axis.into()));
    }
    Ok(d)
}

/// Rescaled problem via the kinetic coefficient: the axis' mass factor is
/// multiplied by `m/m_ref`.
pub fn mass_rescale_kinetic(case: &DefectCase, axis: &str, r: MassRescale) -> Result<DefectCase, RenormError> {
    let d = active_axis(case, axis)?;
    let mut out = case.clone();
    out.mass_factors[d] *= r.ratio();
    Ok(out)
}

/// `V′(…, Q′, …) = V(…, Q′/s, …)` over a stretched axis.
pub struct StretchedField {
    inner: Arc<dyn PotentialField>,
    domain: Domain,
    axis: usize,
    s: f64,
}

impl PotentialField for StretchedField {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut y = [0.0f64; 8];
        let n = x.len();
        y[..n].copy_from_slice(x);
        y[self.axis] = x[self.axis] / self.s;
        self.inner.value(&y[..n])
    }
}

/// Rescaled problem via the coordinate: `Q′ = s·Q` with the potential
/// carried along, so the kinetic coefficient stays untouched.
pub fn mass_rescale_stretch(case: &DefectCase, axis: &str, r: MassRescale) -> Result<DefectCase, RenormError> {
    let d = active_axis(case, axis)?;
    let s = r.factor();
    let dom = case.field.domain();
    assert!(dom.ndim() <= 8, "fields with more than eight axes are not supported");
    let mut lo = dom.min().to_vec();
    let mut hi = dom.max().to_vec();
    lo[d] *= s;
    hi[d] *= s;
    let field = StretchedField {
        inner: case.field.clone(),
        domain: Domain::new(dom.labels().to_vec(), lo, hi),
        axis: d,
        s,
    };
    let mut axes = case.grid.axes().to_vec();
    axes[d].min *= s;
    axes[d].max *= s;
    let grid = GridSpec::new(axes).expect("stretching keeps a valid grid");
    let mut out = case.clone();
    out.field = Arc::new(field);
    out.grid = grid;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub mass_amu: f64,
    pub scale_factor: f64,
    pub j_mev: Option<f64>,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub m_ref: f64,
    pub points: Vec<SweepPoint>,
    pub fit: Option<LogLinearFit>,
    pub partial: bool,
    pub warnings: Vec<String>,
}

/// Unweighted least squares of `ln y` against `x`.
pub fn fit_log_linear(x: &[f64], y: &[f64]) -> Option<LogLinearFit> {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(_, y)| **y > 0.0).map(|(x, y)| (*x, y.ln())).collect();
    let n = pts.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Some(LogLinearFit { slope, intercept, r_squared, points: n })
}

/// Ground splitting along a list of composite-coordinate masses, with a
/// fit of `ln J` against `√(m/m_ref)`. Masses are sorted and duplicates
/// dropped; points that fail to converge are reported but excluded from
/// the fit.
pub fn sweep_mass(case: &DefectCase, axis: &str, masses: &[f64], m_ref: f64) -> Result<SweepResult, RenormError> {
    let mut ms: Vec<f64> = masses.to_vec();
    for &m in &ms {
        MassRescale::with_reference(m, m_ref)?;
    }
    ms.sort_by(f64::total_cmp);
    let before = ms.len();
    ms.dedup();
    let mut warnings = Vec::new();
    if ms.len() != before {
        warnings.push(format!("{} duplicate mass(es) dropped", before - ms.len()));
    }
    if ms.len() < 3 {
        return Err(RenormError::InsufficientPoints(ms.len()));
    }
    active_axis(case, axis)?;
    let points: Vec<SweepPoint> = ms
        .par_iter()
        .map(|&m| {
            let r = MassRescale::with_reference(m, m_ref).expect("validated");
            let solved = mass_rescale_kinetic(case, axis, r).map_err(|e| e.to_string()).and_then(|c| {
                c.splitting().map_err(|e| e.to_string())
            });
            match solved {
                Ok(j) => SweepPoint { mass_amu: m, scale_factor: r.factor(), j_mev: Some(j), converged: true, error: None },
                Err(e) => SweepPoint { mass_amu: m, scale_factor: r.factor(), j_mev: None, converged: false, error: Some(e) },
            }
        })
        .collect();
    let good: Vec<&SweepPoint> = points.iter().filter(|p| p.converged).collect();
    let partial = good.len() != points.len();
    let fit = if good.len() >= 3 {
        let x: Vec<f64> = good.iter().map(|p| p.scale_factor).collect();
        let y: Vec<f64> = good.iter().map(|p| p.j_mev.expect("converged")).collect();
        fit_log_linear(&x, &y)
    } else {
        None
    };
    Ok(SweepResult { m_ref, points, fit, partial, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicEstimate {
    pub hbar_omega: f64,
    pub amplitude_ratio: f64,
}

/// Mode energy `ħω = √(ħ²·2E_c)/Q_c` of the composite coordinate and the
/// Gaussian amplitude ratio `ψ(Q_c)/ψ(0) = exp(−ω Q_c²/(2ħ))`.
pub fn harmonic_estimate(e_c: f64, q_c: f64) -> Result<HarmonicEstimate, RenormError> {
    harmonic_estimate_with(e_c, q_c, HBAR2)
}

pub fn harmonic_estimate_with(e_c: f64, q_c: f64, hbar2: f64) -> Result<HarmonicEstimate, RenormError> {
    if !(e_c > 0.0 && q_c > 0.0 && hbar2 > 0.0) || !e_c.is_finite() || !q_c.is_finite() {
        return Err(RenormError::NonPositiveInput);
    }
    let hbar_omega = (hbar2 * 2.0 * e_c).sqrt() / q_c;
    let amplitude_ratio = (-hbar_omega * q_c * q_c / (2.0 * hbar2)).exp();
    Ok(HarmonicEstimate { hbar_omega, amplitude_ratio })
}
