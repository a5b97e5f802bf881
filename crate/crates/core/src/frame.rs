//! Mass-weighted phonon coordinates and the axis frame spanning a pair of
//! degenerate sites.
//!
//! Configuration space is laid out as the three Cartesian components of the
//! tunneling particle followed by the three components of each lattice
//! atom, all multiplied by `√m`. The light-particle axes `q̂_x, q̂_y, q̂_z`
//! live in the first block; the composite lattice axis `Q̂` (or `Ŝ, T̂` for
//! four-site clusters) lives in the lattice block.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Orthonormality tolerance for frame axes.
pub const ORTHO_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("atom {index} has non-positive mass {mass}")]
    NonPositiveMass { index: usize, mass: f64 },
    #[error("{displacements} displacements but {masses} masses")]
    LengthMismatch { displacements: usize, masses: usize },
    #[error("structures have {0} and {1} atoms")]
    AtomCountMismatch(usize, usize),
    #[error("atom {index} is `{first}` in one structure and `{second}` in the other")]
    SpeciesMismatch { index: usize, first: String, second: String },
    #[error("non-finite component at position {0}")]
    NonFinite(usize),
    #[error("path direction and mirror normal are zero or parallel")]
    DegenerateAxes,
    #[error("composite displacement is zero but a lattice axis was requested")]
    ZeroComposite,
    #[error("characteristic length q_y12 must be positive, got {0}")]
    NonPositiveLength(f64),
    #[error("structure has no light particle (H or D)")]
    NoLightParticle,
    #[error("structure has more than one light particle")]
    MultipleLightParticles,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MassWeightedVector {
    components: Vec<f64>,
}

impl MassWeightedVector {
    pub fn new(components: Vec<f64>) -> Result<Self, FrameError> {
        if let Some(i) = components.iter().position(|c| !c.is_finite()) {
            return Err(FrameError::NonFinite(i));
        }
        Ok(Self { components })
    }

    pub fn zeros(n: usize) -> Self {
        Self { components: vec![0.0; n] }
    }

    pub fn unit(n: usize, i: usize) -> Self {
        let mut v = Self::zeros(n);
        v.components[i] = 1.0;
        v
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        dot(&self.components, &other.components)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { components: self.components.iter().map(|c| a * c).collect() }
    }
}

impl AsRef<[f64]> for MassWeightedVector {
    fn as_ref(&self) -> &[f64] {
        &self.components
    }
}

impl From<MassWeightedVector> for Vec<f64> {
    fn from(v: MassWeightedVector) -> Self {
        v.components
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `√m_i · r_i` for every Cartesian component.
pub fn mass_weight(displacements: &[[f64; 3]], masses: &[f64]) -> Result<MassWeightedVector, FrameError> {
    if displacements.len() != masses.len() {
        return Err(FrameError::LengthMismatch {
            displacements: displacements.len(),
            masses: masses.len(),
        });
    }
    let mut out = Vec::with_capacity(3 * masses.len());
    for (index, (r, &m)) in displacements.iter().zip(masses).enumerate() {
        if !(m > 0.0) {
            return Err(FrameError::NonPositiveMass { index, mass: m });
        }
        let s = m.sqrt();
        out.extend(r.iter().map(|x| s * x));
    }
    MassWeightedVector::new(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub symbol: String,
    pub mass: f64,
    pub position: [f64; 3],
}

impl Atom {
    /// Hydrogen isotopes are the tunneling particle; everything else is lattice.
    pub fn is_light(&self) -> bool {
        matches!(self.symbol.as_str(), "H" | "D" | "T")
    }
}

/// Plain-text atom list: `symbol mass x y z` per row, `#` starts a comment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Structure {
    pub atoms: Vec<Atom>,
}

impl FromStr for Structure {
    type Err = FrameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut atoms = Vec::new();
        for (n, raw) in s.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| FrameError::Parse { line: n + 1, msg };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(parse_err(format!("expected 5 fields, found {}", fields.len())));
            }
            let num = |f: &str| {
                f.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| parse_err(format!("invalid number `{f}`")))
            };
            let mass = num(fields[1])?;
            if !(mass > 0.0) {
                return Err(FrameError::NonPositiveMass { index: atoms.len(), mass });
            }
            atoms.push(Atom {
                symbol: fields[0].to_string(),
                mass,
                position: [num(fields[2])?, num(fields[3])?, num(fields[4])?],
            });
        }
        Ok(Self { atoms })
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.atoms {
            let [x, y, z] = a.position;
            writeln!(f, "{} {} {} {} {}", a.symbol, a.mass, x, y, z)?;
        }
        Ok(())
    }
}

impl Structure {
    fn check_pair(&self, other: &Structure) -> Result<(), FrameError> {
        if self.atoms.len() != other.atoms.len() {
            return Err(FrameError::AtomCountMismatch(self.atoms.len(), other.atoms.len()));
        }
        for (index, (a, b)) in self.atoms.iter().zip(&other.atoms).enumerate() {
            if a.symbol != b.symbol {
                return Err(FrameError::SpeciesMismatch {
                    index,
                    first: a.symbol.clone(),
                    second: b.symbol.clone(),
                });
            }
        }
        Ok(())
    }

    /// Displacement of the single light particle from `self` to `other`,
    /// with its mass.
    pub fn light_displacement(&self, other: &Structure) -> Result<([f64; 3], f64), FrameError> {
        self.check_pair(other)?;
        let mut found = None;
        for (a, b) in self.atoms.iter().zip(&other.atoms) {
            if a.is_light() {
                if found.is_some() {
                    return Err(FrameError::MultipleLightParticles);
                }
                found = Some((sub3(b.position, a.position), a.mass));
            }
        }
        found.ok_or(FrameError::NoLightParticle)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomDisplacement {
    pub index: usize,
    pub mass: f64,
    pub displacement: [f64; 3],
}

/// Collective lattice displacement between two relaxed site configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeMode {
    pub displacement_per_atom: Vec<AtomDisplacement>,
    pub q_norm: f64,
}

impl CompositeMode {
    pub fn from_displacements(displacement_per_atom: Vec<AtomDisplacement>) -> Result<Self, FrameError> {
        for d in &displacement_per_atom {
            if !(d.mass > 0.0) {
                return Err(FrameError::NonPositiveMass { index: d.index, mass: d.mass });
            }
        }
        let q_norm = displacement_per_atom
            .iter()
            .map(|d| d.mass * dot(&d.displacement, &d.displacement))
            .sum::<f64>()
            .sqrt();
        Ok(Self { displacement_per_atom, q_norm })
    }

    /// `M^{1/2} R` over the lattice atoms, in displacement order.
    pub fn mass_weighted(&self) -> MassWeightedVector {
        let disp: Vec<[f64; 3]> = self.displacement_per_atom.iter().map(|d| d.displacement).collect();
        let masses: Vec<f64> = self.displacement_per_atom.iter().map(|d| d.mass).collect();
        mass_weight(&disp, &masses).expect("masses validated at construction")
    }
}

/// Lattice displacement between two site configurations; light particles
/// are excluded from the set.
pub fn build_composite(site_1: &Structure, site_2: &Structure) -> Result<CompositeMode, FrameError> {
    site_1.check_pair(site_2)?;
    let disp = site_1
        .atoms
        .iter()
        .zip(&site_2.atoms)
        .enumerate()
        .filter(|(_, (a, _))| !a.is_light())
        .map(|(index, (a, b))| AtomDisplacement {
            index,
            mass: a.mass,
            displacement: sub3(b.position, a.position),
        })
        .collect();
    CompositeMode::from_displacements(disp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateFrame {
    axes: Vec<MassWeightedVector>,
    labels: Vec<String>,
    q_y12: f64,
    q_lr: f64,
}

impl CoordinateFrame {
    /// Axis-aligned frame for analytic models: the axes are the unit vectors
    /// of a configuration space whose coordinates already are the frame
    /// coordinates. `q_lr = 0` gives a rigid-lattice (3-axis) frame.
    pub fn aligned(q_y12: f64, q_lr: f64) -> Result<Self, FrameError> {
        check_lengths(q_y12, q_lr)?;
        let n = if q_lr > 0.0 { 4 } else { 3 };
        let labels = ["qx", "qy", "qz", "Q"];
        Ok(Self {
            axes: (0..n).map(|i| MassWeightedVector::unit(n, i)).collect(),
            labels: labels[..n].iter().map(|s| s.to_string()).collect(),
            q_y12,
            q_lr,
        })
    }

    /// Axis-aligned four-site frame with axes `qx, qy, qz, S, T`.
    pub fn aligned_fls(q_y12: f64, q_lr: f64) -> Result<Self, FrameError> {
        check_lengths(q_y12, q_lr)?;
        if q_lr == 0.0 {
            return Err(FrameError::ZeroComposite);
        }
        Ok(Self {
            axes: (0..5).map(|i| MassWeightedVector::unit(5, i)).collect(),
            labels: ["qx", "qy", "qz", "S", "T"].iter().map(|s| s.to_string()).collect(),
            q_y12,
            q_lr,
        })
    }

    pub fn axes(&self) -> &[MassWeightedVector] {
        &self.axes
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn q_y12(&self) -> f64 {
        self.q_y12
    }

    pub fn q_lr(&self) -> f64 {
        self.q_lr
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.axes.iter().enumerate() {
            for (j, b) in self.axes.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((a.dot(b) - target).abs());
            }
        }
        worst
    }

    /// Coordinates of a configuration-space vector along each axis.
    pub fn project(&self, v: &MassWeightedVector) -> Vec<f64> {
        self.axes.iter().map(|a| a.dot(v)).collect()
    }
}

fn check_lengths(q_y12: f64, q_lr: f64) -> Result<(), FrameError> {
    if !(q_y12 > 0.0) || !q_y12.is_finite() {
        return Err(FrameError::NonPositiveLength(q_y12));
    }
    if !(q_lr >= 0.0) || !q_lr.is_finite() {
        return Err(FrameError::NonPositiveLength(q_lr));
    }
    Ok(())
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize3(a: [f64; 3]) -> Option<[f64; 3]> {
    let n = dot(&a, &a).sqrt();
    (n > 0.0 && n.is_finite()).then(|| [a[0] / n, a[1] / n, a[2] / n])
}

/// Classical Gram–Schmidt applied twice against `basis`, then normalized.
/// Returns `None` when nothing survives the projection.
fn orthonormalize(v: &[f64], basis: &[MassWeightedVector]) -> Option<Vec<f64>> {
    let mut w = v.to_vec();
    let scale = dot(v, v).sqrt();
    for _ in 0..2 {
        let coeffs: Vec<f64> = basis.iter().map(|b| dot(b.components(), &w)).collect();
        for (b, c) in basis.iter().zip(coeffs) {
            for (wi, bi) in w.iter_mut().zip(b.components()) {
                *wi -= c * bi;
            }
        }
    }
    let n = dot(&w, &w).sqrt();
    if !(n > ORTHO_TOL * scale) || n == 0.0 {
        return None;
    }
    Some(w.into_iter().map(|x| x / n).collect())
}

fn light_axes(path_direction: [f64; 3], mirror_normal: [f64; 3], width: usize) -> Result<Vec<MassWeightedVector>, FrameError> {
    let y = normalize3(path_direction).ok_or(FrameError::DegenerateAxes)?;
    let along = dot(&mirror_normal, &y);
    let zraw = [
        mirror_normal[0] - along * y[0],
        mirror_normal[1] - along * y[1],
        mirror_normal[2] - along * y[2],
    ];
    let mn = dot(&mirror_normal, &mirror_normal).sqrt();
    if !(dot(&zraw, &zraw).sqrt() > ORTHO_TOL * mn) {
        return Err(FrameError::DegenerateAxes);
    }
    let z = normalize3(zraw).ok_or(FrameError::DegenerateAxes)?;
    let x = cross(y, z);
    let embed = |a: [f64; 3]| {
        let mut c = vec![0.0; width];
        c[..3].copy_from_slice(&a);
        MassWeightedVector { components: c }
    };
    Ok(vec![embed(x), embed(y), embed(z)])
}

fn embed_lattice(composite: &CompositeMode, width: usize) -> Vec<f64> {
    let mw = composite.mass_weighted();
    let mut c = vec![0.0; width];
    c[3..3 + mw.len()].copy_from_slice(mw.components());
    c
}

/// Builds `(q̂_x, q̂_y, q̂_z[, Q̂])`. `q̂_y` follows the site-to-site path,
/// `q̂_z` the part of the mirror normal orthogonal to it, and `Q̂` the
/// composite lattice displacement. Pass `None` for a rigid-lattice frame.
pub fn build_frame(
    path_direction: [f64; 3],
    mirror_normal: [f64; 3],
    composite: Option<&CompositeMode>,
    q_y12: f64,
) -> Result<CoordinateFrame, FrameError> {
    let lattice_width = composite.map_or(0, |c| 3 * c.displacement_per_atom.len());
    let width = 3 + lattice_width;
    let mut axes = light_axes(path_direction, mirror_normal, width)?;
    let mut labels: Vec<String> = ["qx", "qy", "qz"].iter().map(|s| s.to_string()).collect();
    let mut q_lr = 0.0;
    if let Some(c) = composite {
        if c.q_norm == 0.0 {
            return Err(FrameError::ZeroComposite);
        }
        let q = orthonormalize(&embed_lattice(c, width), &axes).ok_or(FrameError::ZeroComposite)?;
        axes.push(MassWeightedVector { components: q });
        labels.push("Q".into());
        q_lr = c.q_norm;
    }
    check_lengths(q_y12, q_lr)?;
    Ok(CoordinateFrame { axes, labels, q_y12, q_lr })
}

/// Four-site variant: lattice axes `Ŝ, T̂` from two composite modes over the
/// same atom set, orthonormalized in order. The pair order parameter is
/// `Q = (S − T)/√2`; `Q_lr` is set to the norm of the `S` composite.
pub fn build_fls_frame(
    path_direction: [f64; 3],
    mirror_normal: [f64; 3],
    s: &CompositeMode,
    t: &CompositeMode,
    q_y12: f64,
) -> Result<CoordinateFrame, FrameError> {
    if s.displacement_per_atom.len() != t.displacement_per_atom.len() {
        return Err(FrameError::AtomCountMismatch(
            s.displacement_per_atom.len(),
            t.displacement_per_atom.len(),
        ));
    }
    if s.q_norm == 0.0 || t.q_norm == 0.0 {
        return Err(FrameError::ZeroComposite);
    }
    let width = 3 + 3 * s.displacement_per_atom.len();
    let mut axes = light_axes(path_direction, mirror_normal, width)?;
    for c in [s, t] {
        let v = orthonormalize(&embed_lattice(c, width), &axes).ok_or(FrameError::ZeroComposite)?;
        axes.push(MassWeightedVector { components: v });
    }
    check_lengths(q_y12, s.q_norm)?;
    Ok(CoordinateFrame {
        axes,
        labels: ["qx", "qy", "qz", "S", "T"].iter().map(|s| s.to_string()).collect(),
        q_y12,
        q_lr: s.q_norm,
    })
}

/// Frame from a pair of relaxed structures containing one light particle:
/// `q̂_y` and `q_y12` come from the light-particle hop, `Q̂` and `Q_lr` from
/// the lattice relaxation.
pub fn build_frame_from_sites(
    site_1: &Structure,
    site_2: &Structure,
    mirror_normal: [f64; 3],
) -> Result<CoordinateFrame, FrameError> {
    let (hop, m) = site_1.light_displacement(site_2)?;
    let q_y12 = m.sqrt() * dot(&hop, &hop).sqrt();
    let composite = build_composite(site_1, site_2)?;
    let c = (composite.q_norm > 0.0).then_some(&composite);
    build_frame(hop, mirror_normal, c, q_y12)
}
