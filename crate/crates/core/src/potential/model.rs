//! Analytic model potentials used as benchmark surrogates for sampled
//! landscapes.

use serde::{Deserialize, Serialize};

use super::landscape::find_minima;
use super::{Domain, PotentialError, PotentialField};
use crate::frame::CoordinateFrame;
use crate::grid::{GridAxis, GridSpec};
use crate::units::HBAR2;

/// Separable harmonic well `Σ ½ k_d (x_d − c_d)²` with `k_d = (ħω_d)²/ħ²`,
/// i.e. quanta `ħω_d` for unit mass factors.
#[derive(Debug, Clone)]
pub struct HarmonicWell {
    domain: Domain,
    hbar_omega: Vec<f64>,
    center: Vec<f64>,
    stiffness: Vec<f64>,
}

impl HarmonicWell {
    pub fn new<S: AsRef<str>>(labels: &[S], hbar_omega: &[f64]) -> Result<Self, PotentialError> {
        if labels.len() != hbar_omega.len() || labels.is_empty() {
            return Err(PotentialError::InvalidModel("one quantum per axis required".into()));
        }
        if hbar_omega.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(PotentialError::InvalidModel("quanta must be positive".into()));
        }
        Ok(Self {
            domain: Domain::unbounded(labels),
            hbar_omega: hbar_omega.to_vec(),
            center: vec![0.0; labels.len()],
            stiffness: hbar_omega.iter().map(|w| w * w / HBAR2).collect(),
        })
    }

    pub fn with_center(mut self, center: &[f64]) -> Self {
        assert_eq!(center.len(), self.center.len());
        self.center = center.to_vec();
        self
    }

    pub fn hbar_omega(&self) -> &[f64] {
        &self.hbar_omega
    }

    pub fn stiffness(&self) -> &[f64] {
        &self.stiffness
    }

    /// Ground-state width `σ = (ħ²/k)^{1/4}` per axis.
    pub fn sigma(&self) -> Vec<f64> {
        self.stiffness.iter().map(|k| (HBAR2 / k).powf(0.25)).collect()
    }

    /// Grid centred on the well spanning `±half_width_sigmas·σ` per axis.
    pub fn grid(&self, half_width_sigmas: f64, count: usize) -> GridSpec {
        let axes = self
            .sigma()
            .iter()
            .zip(&self.center)
            .zip(self.domain.labels())
            .map(|((s, c), l)| GridAxis::active(l.clone(), c - half_width_sigmas * s, c + half_width_sigmas * s, count))
            .collect();
        GridSpec::new(axes).expect("harmonic grid is valid")
    }
}

impl PotentialField for HarmonicWell {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.center)
            .zip(&self.stiffness)
            .map(|((x, c), k)| 0.5 * k * (x - c) * (x - c))
            .sum()
    }
}

/// Symmetric quartic `V_b[((q − c)/a)² − 1]²` along a single axis.
#[derive(Debug, Clone)]
pub struct QuarticDoubleWell {
    domain: Domain,
    pub v_b: f64,
    pub a: f64,
    pub center: f64,
}

impl QuarticDoubleWell {
    pub fn new(v_b: f64, a: f64) -> Result<Self, PotentialError> {
        if !(v_b > 0.0 && a > 0.0) {
            return Err(PotentialError::InvalidModel("V_b and a must be positive".into()));
        }
        Ok(Self { domain: Domain::unbounded(&["qy"]), v_b, a, center: 0.0 })
    }

    /// Grid on `center ± half_width`.
    pub fn grid(&self, half_width: f64, count: usize) -> GridSpec {
        GridSpec::new(vec![GridAxis::active("qy", self.center - half_width, self.center + half_width, count)])
            .expect("quartic grid is valid")
    }
}

impl PotentialField for QuarticDoubleWell {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn value(&self, x: &[f64]) -> f64 {
        let s = (x[0] - self.center) / self.a;
        let t = s * s - 1.0;
        self.v_b * t * t
    }
}

/// Parameters of the coupled double well over `(q_x, q_y, q_z, Q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupledParams {
    pub v_b: f64,
    pub a: f64,
    pub k_q: f64,
    pub g: f64,
    pub k_x: f64,
    pub k_z: f64,
    pub beta_x: f64,
    pub beta_z: f64,
}

impl CoupledParams {
    /// Lattice-stiffening double well with a coincidence energy close to
    /// 13.5 meV and a symmetric barrier of 153 meV.
    pub fn oh_like() -> Self {
        let v_b = 153.0;
        let a = 0.5408;
        let k_q = 61.0;
        let gamma = 0.04228;
        Self {
            v_b,
            a,
            k_q,
            g: -(4.0 * v_b * k_q * gamma).sqrt() / a,
            k_x: 5383.0,
            k_z: 5383.0,
            beta_x: -0.2,
            beta_z: -0.2,
        }
    }
}

/// Canonical coupled double well
///
/// `V = V_b[(y/a)² − 1]² + ½k_Q u² + g·y·u + ½k_x q_x²(1 + β_x y²/a²)
///      + ½k_z q_z²(1 + β_z y²/a²) + V_0`
///
/// in centred coordinates `y = q_y − q_y12/2`, `u = Q − Q_lr/2`. The frame
/// origin sits at the first well, the second well at `(0, q_y12, 0, Q_lr)`,
/// and `V_0` puts both minima at exactly zero. With `γ = g²a²/(4 V_b k_Q)`
/// the wells sit at `y = ±a√(1+γ)`, `u = −g·y/k_Q`.
#[derive(Debug, Clone)]
pub struct CoupledDoubleWell {
    domain: Domain,
    p: CoupledParams,
    gamma: f64,
    y_w: f64,
    q_lr: f64,
    offset: f64,
}

impl CoupledDoubleWell {
    pub fn new(p: CoupledParams) -> Result<Self, PotentialError> {
        let all = [p.v_b, p.a, p.k_q, p.g, p.k_x, p.k_z, p.beta_x, p.beta_z];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(PotentialError::InvalidModel("non-finite parameter".into()));
        }
        if !(p.v_b > 0.0 && p.a > 0.0 && p.k_q > 0.0 && p.k_x > 0.0 && p.k_z > 0.0) {
            return Err(PotentialError::InvalidModel("V_b, a and stiffnesses must be positive".into()));
        }
        if p.g == 0.0 {
            return Err(PotentialError::InvalidModel("coupling g must be non-zero".into()));
        }
        let gamma = p.g * p.g * p.a * p.a / (4.0 * p.v_b * p.k_q);
        let y_w = p.a * (1.0 + gamma).sqrt();
        // The standard box reaches |y| = 2 y_w; transverse curvature must stay positive there.
        let reach = 4.0 * (1.0 + gamma);
        if 1.0 + p.beta_x.min(0.0) * reach <= 0.0 || 1.0 + p.beta_z.min(0.0) * reach <= 0.0 {
            return Err(PotentialError::InvalidModel("cross terms make the transverse stiffness negative".into()));
        }
        let model = Self {
            domain: Domain::unbounded(&["qx", "qy", "qz", "Q"]),
            p,
            gamma,
            y_w,
            q_lr: 2.0 * p.g.abs() * y_w / p.k_q,
            offset: p.v_b * gamma * (gamma + 2.0),
        };
        model.verify_wells()?;
        Ok(model)
    }

    fn verify_wells(&self) -> Result<(), PotentialError> {
        let grid = GridSpec::standard_subgrid(&self.frame()).refine(2)?;
        let minima = find_minima(self, &grid)?;
        let ok = minima.len() == 2
            && minima.iter().all(|m| m.energy.abs() < 1e-6)
            && self.wells().iter().all(|w| {
                minima.iter().any(|m| {
                    m.point.iter().zip(w).all(|(a, b)| (a - b).abs() < 1e-4 * (1.0 + self.q_lr + 2.0 * self.y_w))
                })
            });
        if ok {
            Ok(())
        } else {
            Err(PotentialError::InvalidModel(format!(
                "expected two degenerate minima, found {}",
                minima.len()
            )))
        }
    }

    pub fn params(&self) -> &CoupledParams {
        &self.p
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn q_y12(&self) -> f64 {
        2.0 * self.y_w
    }

    pub fn q_lr(&self) -> f64 {
        self.q_lr
    }

    pub fn frame(&self) -> CoordinateFrame {
        CoordinateFrame::aligned(self.q_y12(), self.q_lr).expect("model lengths are positive")
    }

    /// Well minima in frame coordinates; the lower-`Q` well comes first
    /// when `g < 0`.
    pub fn wells(&self) -> [[f64; 4]; 2] {
        let u = |y: f64| -self.p.g * y / self.p.k_q;
        let to_frame = |y: f64| [0.0, y + self.y_w, 0.0, u(y) + 0.5 * self.q_lr];
        [to_frame(-self.y_w), to_frame(self.y_w)]
    }

    /// Analytic coincidence point `Q_c = Q_lr/2`.
    pub fn q_c(&self) -> f64 {
        0.5 * self.q_lr
    }

    /// Analytic `E_c′ = 2 V_b γ (1 + γ)`.
    pub fn e_c_prime(&self) -> f64 {
        2.0 * self.p.v_b * self.gamma * (1.0 + self.gamma)
    }

    /// Energy at the symmetric midpoint, `V_b (1 + γ)²`.
    pub fn midpoint_energy(&self) -> f64 {
        self.p.v_b * (1.0 + self.gamma).powi(2)
    }
}

impl PotentialField for CoupledDoubleWell {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn value(&self, x: &[f64]) -> f64 {
        let p = &self.p;
        let (qx, qz) = (x[0], x[2]);
        let y = x[1] - self.y_w;
        let u = x[3] - 0.5 * self.q_lr;
        let s = y / p.a;
        let s2 = s * s;
        let w = s2 - 1.0;
        p.v_b * w * w
            + 0.5 * p.k_q * u * u
            + p.g * y * u
            + 0.5 * p.k_x * qx * qx * (1.0 + p.beta_x * s2)
            + 0.5 * p.k_z * qz * qz * (1.0 + p.beta_z * s2)
            + self.offset
    }
}

/// Which pair of lattice coordinates a [`FourWellModel`] exposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeAxes {
    /// Composite modes `S, T` of the two site pairs.
    St,
    /// Rotated pair `Q = (S − T)/√2`, `P = (S + T)/√2`.
    Qp,
}

/// Parameters of the four-site model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourWellParams {
    pub v_b: f64,
    pub a: f64,
    pub k_l: f64,
    pub c: f64,
    pub beta: f64,
    pub k_z: f64,
}

impl FourWellParams {
    pub fn zr_like() -> Self {
        Self { v_b: 120.0, a: 0.5, k_l: 60.0, c: 0.6, beta: 0.3, k_z: 5000.0 }
    }
}

/// Four degenerate sites on a square ring in the `(q_x, q_y)` plane, each
/// coupled to its own lattice relaxation:
///
/// `V = V_b[(x/a)² − 1]² + V_b[(y/a)² − 1]²
///      + ½k_l (Q − c·y/a)² (1 + β x²/a²) + ½k_l (P − c·x/a)² (1 + β y²/a²)
///      + ½k_z z²`
///
/// with `Q = (S − T)/√2`, `P = (S + T)/√2`. Minima sit at `x, y = ±a`,
/// `Q = c·y/a`, `P = c·x/a`, all at exactly zero energy.
///
/// The collapsed variant replaces the `x` double well by a single harmonic
/// well of the same curvature and drops the `P` coupling to `x`, leaving
/// two sites.
#[derive(Debug, Clone)]
pub struct FourWellModel {
    domain: Domain,
    p: FourWellParams,
    axes: LatticeAxes,
    collapsed: bool,
}

impl FourWellModel {
    pub fn new(p: FourWellParams, axes: LatticeAxes) -> Result<Self, PotentialError> {
        Self::build(p, axes, false)
    }

    pub fn collapsed(p: FourWellParams, axes: LatticeAxes) -> Result<Self, PotentialError> {
        Self::build(p, axes, true)
    }

    fn build(p: FourWellParams, axes: LatticeAxes, collapsed: bool) -> Result<Self, PotentialError> {
        let all = [p.v_b, p.a, p.k_l, p.c, p.beta, p.k_z];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(PotentialError::InvalidModel("non-finite parameter".into()));
        }
        if !(p.v_b > 0.0 && p.a > 0.0 && p.k_l > 0.0 && p.k_z > 0.0 && p.c != 0.0) {
            return Err(PotentialError::InvalidModel("V_b, a, c and stiffnesses must be non-zero".into()));
        }
        if p.beta < 0.0 {
            return Err(PotentialError::InvalidModel("cross term β must be non-negative".into()));
        }
        let labels: [&str; 5] = match axes {
            LatticeAxes::St => ["qx", "qy", "qz", "S", "T"],
            LatticeAxes::Qp => ["qx", "qy", "qz", "Q", "P"],
        };
        Ok(Self { domain: Domain::unbounded(&labels), p, axes, collapsed })
    }

    pub fn params(&self) -> &FourWellParams {
        &self.p
    }

    pub fn lattice_axes(&self) -> LatticeAxes {
        self.axes
    }

    pub fn is_collapsed(&self) -> bool {
        self.collapsed
    }

    /// Minima in the exposed coordinates, ordered around the ring.
    pub fn wells(&self) -> Vec<Vec<f64>> {
        let (a, c) = (self.p.a, self.p.c);
        let xs: &[f64] = if self.collapsed { &[0.0] } else { &[-1.0, 1.0, 1.0, -1.0] };
        let ys: &[f64] = if self.collapsed { &[-1.0, 1.0] } else { &[-1.0, -1.0, 1.0, 1.0] };
        let n = xs.len().max(ys.len());
        (0..n)
            .map(|i| {
                let sx = xs[i % xs.len()];
                let sy = ys[i % ys.len()];
                let q = c * sy;
                let pp = if self.collapsed { 0.0 } else { c * sx };
                let (l1, l2) = match self.axes {
                    LatticeAxes::Qp => (q, pp),
                    LatticeAxes::St => ((q + pp) / 2f64.sqrt(), (pp - q) / 2f64.sqrt()),
                };
                vec![sx * a, sy * a, 0.0, l1, l2]
            })
            .collect()
    }

    /// Box containing all wells with `margin` (in units of `a` along the
    /// light axes and `c` along the lattice axes) to spare.
    pub fn grid(&self, counts: [usize; 5], light_margin: f64, lattice_margin: f64, z_half: f64) -> GridSpec {
        let a = self.p.a * (1.0 + light_margin);
        let l = self.p.c.abs() * (1.0 + lattice_margin) * match self.axes {
            LatticeAxes::Qp => 1.0,
            LatticeAxes::St => 2f64.sqrt(),
        };
        let labels = self.domain.labels();
        let bounds = [a, a, z_half, l, l];
        let axes = (0..5)
            .map(|d| GridAxis::active(labels[d].clone(), -bounds[d], bounds[d], counts[d]))
            .collect();
        GridSpec::new(axes).expect("four-well grid is valid")
    }
}

impl PotentialField for FourWellModel {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn value(&self, v: &[f64]) -> f64 {
        let p = &self.p;
        let (x, y, z) = (v[0], v[1], v[2]);
        let (q, pp) = match self.axes {
            LatticeAxes::Qp => (v[3], v[4]),
            LatticeAxes::St => ((v[3] - v[4]) / 2f64.sqrt(), (v[3] + v[4]) / 2f64.sqrt()),
        };
        let sx = x / p.a;
        let sy = y / p.a;
        let wy = sy * sy - 1.0;
        let well_y = p.v_b * wy * wy;
        let (well_x, px) = if self.collapsed {
            (4.0 * p.v_b * sx * sx, 0.0)
        } else {
            let wx = sx * sx - 1.0;
            (p.v_b * wx * wx, p.c * sx)
        };
        let dq = q - p.c * sy;
        let dp = pp - px;
        well_x
            + well_y
            + 0.5 * p.k_l * dq * dq * (1.0 + p.beta * sx * sx)
            + 0.5 * p.k_l * dp * dp * (1.0 + p.beta * sy * sy)
            + 0.5 * p.k_z * z * z
    }
}
