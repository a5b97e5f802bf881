//! Rectangular grids over mass-weighted coordinates.
//!
//! A [`GridSpec`] is an ordered list of labelled axes. Active axes carry
//! `count >= 2` evenly spaced nodes including both endpoints; frozen axes
//! carry a single pinned coordinate, so lower-dimensional subspaces are
//! ordinary grids. Flat indices are row-major with the last axis fastest.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::CoordinateFrame;

pub const MAX_ACTIVE_DIMS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid has no axes")]
    Empty,
    #[error("grid has no active axis")]
    NoActiveAxis,
    #[error("grid has {0} active axes, at most {MAX_ACTIVE_DIMS} are supported")]
    TooManyActive(usize),
    #[error("axis `{0}` must satisfy min < max")]
    InvalidRange(String),
    #[error("axis `{0}` has a non-finite bound")]
    NonFinite(String),
    #[error("axis `{0}` has count 0")]
    ZeroCount(String),
    #[error("duplicate axis label `{0}`")]
    DuplicateLabel(String),
    #[error("unknown axis `{0}`")]
    UnknownAxis(String),
    #[error("axis `{label}` with {count} nodes cannot be coarsened by {factor}")]
    NotCoarsenable { label: String, count: usize, factor: usize },
    #[error("refinement factor must be at least 1")]
    ZeroFactor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub label: String,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl GridAxis {
    pub fn active(label: impl Into<String>, min: f64, max: f64, count: usize) -> Self {
        Self { label: label.into(), min, max, count }
    }

    /// A single-node axis pinned at `value`.
    pub fn frozen(label: impl Into<String>, value: f64) -> Self {
        Self { label: label.into(), min: value, max: value, count: 1 }
    }

    pub fn is_active(&self) -> bool {
        self.count >= 2
    }

    pub fn spacing(&self) -> f64 {
        if self.is_active() {
            (self.max - self.min) / (self.count - 1) as f64
        } else {
            0.0
        }
    }

    pub fn node(&self, i: usize) -> f64 {
        if !self.is_active() {
            return self.min;
        }
        if i + 1 == self.count {
            return self.max;
        }
        self.min + (self.max - self.min) * (i as f64) / ((self.count - 1) as f64)
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.node(i)).collect()
    }

    fn validate(&self) -> Result<(), GridError> {
        if !self.min.is_finite() || !self.max.is_finite() {
            return Err(GridError::NonFinite(self.label.clone()));
        }
        if self.count == 0 {
            return Err(GridError::ZeroCount(self.label.clone()));
        }
        if self.count >= 2 && !(self.min < self.max) {
            return Err(GridError::InvalidRange(self.label.clone()));
        }
        if self.count == 1 && self.min != self.max {
            return Err(GridError::InvalidRange(self.label.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<GridAxis>", into = "Vec<GridAxis>")]
pub struct GridSpec {
    axes: Vec<GridAxis>,
    strides: Vec<usize>,
}

impl TryFrom<Vec<GridAxis>> for GridSpec {
    type Error = GridError;
    fn try_from(axes: Vec<GridAxis>) -> Result<Self, Self::Error> {
        GridSpec::new(axes)
    }
}

impl From<GridSpec> for Vec<GridAxis> {
    fn from(g: GridSpec) -> Self {
        g.axes
    }
}

impl GridSpec {
    pub fn new(axes: Vec<GridAxis>) -> Result<Self, GridError> {
        if axes.is_empty() {
            return Err(GridError::Empty);
        }
        for (i, a) in axes.iter().enumerate() {
            a.validate()?;
            if axes[..i].iter().any(|b| b.label == a.label) {
                return Err(GridError::DuplicateLabel(a.label.clone()));
            }
        }
        let active = axes.iter().filter(|a| a.is_active()).count();
        if active == 0 {
            return Err(GridError::NoActiveAxis);
        }
        if active > MAX_ACTIVE_DIMS {
            return Err(GridError::TooManyActive(active));
        }
        let mut strides = vec![1usize; axes.len()];
        for d in (0..axes.len().saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * axes[d + 1].count;
        }
        Ok(Self { axes, strides })
    }

    /// The subgrid geometry spanning two degenerate sites with the frame
    /// origin at site 1: `q_x, q_z ∈ [-q_y12/2, q_y12/2]`,
    /// `q_y ∈ [-q_y12/2, 3 q_y12/2]`, `Q ∈ [-2 Q_lr, 3 Q_lr]`, sampled
    /// with 7×13×7×11 points. Rigid-lattice frames (`Q_lr = 0`) omit `Q`.
    pub fn standard_subgrid(frame: &CoordinateFrame) -> Self {
        let y12 = frame.q_y12();
        let mut axes = vec![
            GridAxis::active("qx", -0.5 * y12, 0.5 * y12, 7),
            GridAxis::active("qy", -0.5 * y12, 1.5 * y12, 13),
            GridAxis::active("qz", -0.5 * y12, 0.5 * y12, 7),
        ];
        if frame.q_lr() > 0.0 {
            axes.push(GridAxis::active("Q", -2.0 * frame.q_lr(), 3.0 * frame.q_lr(), 11));
        }
        Self::new(axes).expect("standard subgrid is valid for a valid frame")
    }

    pub fn axes(&self) -> &[GridAxis] {
        &self.axes
    }

    pub fn axis(&self, d: usize) -> &GridAxis {
        &self.axes[d]
    }

    pub fn ndim(&self) -> usize {
        self.axes.len()
    }

    pub fn axis_index(&self, label: &str) -> Option<usize> {
        self.axes.iter().position(|a| a.label == label)
    }

    pub fn labels(&self) -> Vec<&str> {
        self.axes.iter().map(|a| a.label.as_str()).collect()
    }

    /// Indices of the active axes.
    pub fn active_dims(&self) -> Vec<usize> {
        (0..self.axes.len()).filter(|&d| self.axes[d].is_active()).collect()
    }

    pub fn active_count(&self) -> usize {
        self.axes.iter().filter(|a| a.is_active()).count()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.count).collect()
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Product of the active-axis spacings.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().filter(|a| a.is_active()).map(|a| a.spacing()).product()
    }

    pub fn unravel(&self, flat: usize, index: &mut [usize]) {
        let mut rem = flat;
        for d in 0..self.axes.len() {
            index[d] = rem / self.strides[d];
            rem %= self.strides[d];
        }
    }

    pub fn ravel(&self, index: &[usize]) -> usize {
        index.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn point_into(&self, flat: usize, point: &mut [f64]) {
        let mut rem = flat;
        for d in 0..self.axes.len() {
            let i = rem / self.strides[d];
            rem %= self.strides[d];
            point[d] = self.axes[d].node(i);
        }
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.axes.len()];
        self.point_into(flat, &mut p);
        p
    }

    /// Refines every active axis so the spacing shrinks by `factor`;
    /// existing nodes are kept (`count -> (count - 1) * factor + 1`).
    pub fn refine(&self, factor: usize) -> Result<Self, GridError> {
        if factor == 0 {
            return Err(GridError::ZeroFactor);
        }
        let axes = self
            .axes
            .iter()
            .map(|a| {
                let mut b = a.clone();
                if a.is_active() {
                    b.count = (a.count - 1) * factor + 1;
                }
                b
            })
            .collect();
        Self::new(axes)
    }

    /// Inverse of [`refine`](Self::refine): spacings grow by an integer factor.
    pub fn coarsen(&self, factor: usize) -> Result<Self, GridError> {
        if factor == 0 {
            return Err(GridError::ZeroFactor);
        }
        let mut axes = Vec::with_capacity(self.axes.len());
        for a in &self.axes {
            let mut b = a.clone();
            if a.is_active() {
                if (a.count - 1) % factor != 0 || (a.count - 1) / factor < 1 {
                    return Err(GridError::NotCoarsenable {
                        label: a.label.clone(),
                        count: a.count,
                        factor,
                    });
                }
                b.count = (a.count - 1) / factor + 1;
            }
            axes.push(b);
        }
        Self::new(axes)
    }

    /// Replaces the named axis by a single node pinned at `value`.
    pub fn freeze(&self, label: &str, value: f64) -> Result<Self, GridError> {
        let d = self.axis_index(label).ok_or_else(|| GridError::UnknownAxis(label.into()))?;
        let mut axes = self.axes.clone();
        axes[d] = GridAxis::frozen(label, value);
        Self::new(axes)
    }

    /// Keeps only the active axes.
    pub fn active_only(&self) -> Self {
        let axes = self.axes.iter().filter(|a| a.is_active()).cloned().collect();
        Self::new(axes).expect("a valid grid has at least one active axis")
    }

    /// Sets the node count of each active axis.
    pub fn with_counts(&self, counts: &[usize]) -> Result<Self, GridError> {
        let mut axes = self.axes.clone();
        for (a, &c) in axes.iter_mut().filter(|a| a.is_active()).zip(counts) {
            a.count = c;
        }
        Self::new(axes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid3() -> GridSpec {
        GridSpec::new(vec![
            GridAxis::active("a", 0.0, 1.0, 3),
            GridAxis::frozen("b", 0.25),
            GridAxis::active("c", -1.0, 1.0, 5),
        ])
        .unwrap()
    }

    #[test]
    fn row_major_layout() {
        let g = grid3();
        assert_eq!(g.len(), 15);
        assert_eq!(g.strides(), &[5, 5, 1]);
        assert_eq!(g.point(7), vec![0.5, 0.25, 0.0]);
        let mut idx = [0; 3];
        g.unravel(14, &mut idx);
        assert_eq!(idx, [2, 0, 4]);
        assert_eq!(g.ravel(&idx), 14);
        assert_eq!(g.active_dims(), vec![0, 2]);
    }

    #[test]
    fn refine_keeps_nodes() {
        let g = grid3().refine(2).unwrap();
        assert_eq!(g.shape(), vec![5, 1, 9]);
        assert_eq!(g.axis(0).node(2), 0.5);
        assert_eq!(g.coarsen(2).unwrap(), grid3());
        assert!(grid3().coarsen(3).is_err());
    }

    #[test]
    fn validation() {
        assert_eq!(GridSpec::new(vec![]), Err(GridError::Empty));
        assert_eq!(
            GridSpec::new(vec![GridAxis::frozen("x", 0.0)]),
            Err(GridError::NoActiveAxis)
        );
        assert!(matches!(
            GridSpec::new(vec![GridAxis::active("x", 1.0, 0.0, 3)]),
            Err(GridError::InvalidRange(_))
        ));
        let six = (0..6).map(|i| GridAxis::active(format!("x{i}"), 0.0, 1.0, 2)).collect();
        assert_eq!(GridSpec::new(six), Err(GridError::TooManyActive(6)));
        assert!(matches!(
            GridSpec::new(vec![GridAxis::active("x", 0.0, 1.0, 2), GridAxis::active("x", 0.0, 1.0, 2)]),
            Err(GridError::DuplicateLabel(_))
        ));
    }
}
