//! Potential-energy fields over mass-weighted coordinates.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::grid::{GridError, GridSpec};

pub mod landscape;
pub mod model;
pub mod sampled;
pub mod spline;

pub use landscape::{barrier_height, coincidence, find_minima, Coincidence, Minimum};
pub use model::{
    CoupledDoubleWell, CoupledParams, FourWellModel, FourWellParams, HarmonicWell, LatticeAxes, QuarticDoubleWell,
};
pub use sampled::{ingest, Metadata, SampledPotential};
pub use spline::{interpolate, SplineField};

/// Relative slack allowed when checking that a point lies in a domain box.
const DOMAIN_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("point {point:?} lies outside the domain along `{axis}`")]
    OutOfDomain { axis: String, point: Vec<f64> },
    #[error("point has {got} coordinates, field has {expected} axes")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("grid axes {grid:?} do not match field axes {field:?}")]
    DomainMismatch { grid: Vec<String>, field: Vec<String> },
    #[error("target grid leaves the sampled box along `{0}`")]
    TargetExceedsDomain(String),
    #[error("missing sample at index {0:?}")]
    MissingSample(Vec<usize>),
    #[error("axis `{0}` is not strictly increasing")]
    NonMonotoneAxis(String),
    #[error("line {line}: {msg}")]
    MalformedRow { line: usize, msg: String },
    #[error("malformed sidecar: {0}")]
    MalformedSidecar(String),
    #[error("non-finite energy at flat index {0}")]
    NonFinite(usize),
    #[error("{expected} energies expected, got {got}")]
    CountMismatch { expected: usize, got: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("field has no `{0}` axis")]
    MissingAxis(String),
    #[error("field has no Q axis")]
    MissingQAxis,
    #[error("fewer than two wells found")]
    SingleWell,
    #[error("well energy curves do not cross between the wells")]
    NoCrossing,
    #[error("energy profile between the wells has no interior maximum")]
    NoBarrier,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Axis-aligned box with labelled axes. Bounds may be infinite for
/// analytic fields; `min == max` marks a pinned axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    labels: Vec<String>,
    min: Vec<f64>,
    max: Vec<f64>,
}

impl Domain {
    pub fn new(labels: Vec<String>, min: Vec<f64>, max: Vec<f64>) -> Self {
        assert!(labels.len() == min.len() && labels.len() == max.len());
        Self { labels, min, max }
    }

    pub fn unbounded<S: AsRef<str>>(labels: &[S]) -> Self {
        let n = labels.len();
        Self {
            labels: labels.iter().map(|s| s.as_ref().to_string()).collect(),
            min: vec![f64::NEG_INFINITY; n],
            max: vec![f64::INFINITY; n],
        }
    }

    pub fn from_grid(spec: &GridSpec) -> Self {
        Self {
            labels: spec.axes().iter().map(|a| a.label.clone()).collect(),
            min: spec.axes().iter().map(|a| a.min).collect(),
            max: spec.axes().iter().map(|a| a.max).collect(),
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn max(&self) -> &[f64] {
        &self.max
    }

    pub fn ndim(&self) -> usize {
        self.labels.len()
    }

    pub fn axis_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    fn slack(&self, d: usize) -> f64 {
        let span = self.max[d] - self.min[d];
        let scale = if span.is_finite() && span > 0.0 {
            span
        } else {
            self.min[d].abs().max(1.0)
        };
        DOMAIN_SLACK * scale
    }

    pub fn contains(&self, x: &[f64]) -> Result<(), PotentialError> {
        if x.len() != self.ndim() {
            return Err(PotentialError::DimensionMismatch { expected: self.ndim(), got: x.len() });
        }
        for d in 0..x.len() {
            let s = self.slack(d);
            if !(x[d] >= self.min[d] - s && x[d] <= self.max[d] + s) {
                return Err(PotentialError::OutOfDomain {
                    axis: self.labels[d].clone(),
                    point: x.to_vec(),
                });
            }
        }
        Ok(())
    }

    /// Whether the grid uses these axes in this order and stays inside the box.
    pub fn check_grid(&self, spec: &GridSpec) -> Result<(), PotentialError> {
        let grid: Vec<String> = spec.axes().iter().map(|a| a.label.clone()).collect();
        if grid != self.labels {
            return Err(PotentialError::DomainMismatch { grid, field: self.labels.clone() });
        }
        for (d, a) in spec.axes().iter().enumerate() {
            let s = self.slack(d);
            if a.min < self.min[d] - s || a.max > self.max[d] + s {
                return Err(PotentialError::TargetExceedsDomain(a.label.clone()));
            }
        }
        Ok(())
    }
}

/// An energy landscape in meV over mass-weighted coordinates.
///
/// Implementations are immutable and evaluated concurrently from many
/// threads; `value` must be deterministic.
pub trait PotentialField: Send + Sync {
    fn domain(&self) -> &Domain;

    /// Energy at `x` without domain checks.
    fn value(&self, x: &[f64]) -> f64;

    fn eval(&self, x: &[f64]) -> Result<f64, PotentialError> {
        self.domain().contains(x)?;
        Ok(self.value(x))
    }
}

impl<T: PotentialField + ?Sized> PotentialField for Arc<T> {
    fn domain(&self) -> &Domain {
        (**self).domain()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
}

impl<T: PotentialField + ?Sized> PotentialField for &T {
    fn domain(&self) -> &Domain {
        (**self).domain()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
}

/// A field backed by a closure.
pub struct FnField<F> {
    domain: Domain,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> FnField<F> {
    pub fn new(domain: Domain, f: F) -> Self {
        Self { domain, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> PotentialField for FnField<F> {
    fn domain(&self) -> &Domain {
        &self.domain
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

impl<F> fmt::Debug for FnField<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnField").field("domain", &self.domain).finish_non_exhaustive()
    }
}

/// A field plus a constant energy offset.
pub struct Shifted<P> {
    pub inner: P,
    pub offset: f64,
}

impl<P: PotentialField> PotentialField for Shifted<P> {
    fn domain(&self) -> &Domain {
        self.inner.domain()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.inner.value(x) + self.offset
    }
}

/// Samples `field` at every node of `spec` in flat order.
pub fn sample_on_grid(field: &dyn PotentialField, spec: &GridSpec) -> Result<Vec<f64>, PotentialError> {
    field.domain().check_grid(spec)?;
    let mut p = vec![0.0; spec.ndim()];
    let mut out = Vec::with_capacity(spec.len());
    for i in 0..spec.len() {
        spec.point_into(i, &mut p);
        let v = field.value(&p);
        if !v.is_finite() {
            return Err(PotentialError::NonFinite(i));
        }
        out.push(v);
    }
    Ok(out)
}
