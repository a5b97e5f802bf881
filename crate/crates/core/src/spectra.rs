//! Physical analysis of eigenpairs: well partition and occupations,
//! harmonic-oscillator state labels, tunnel splittings, transition tables.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eigensolve::EigenResult;
use crate::grid::GridSpec;
use crate::operator::GridOperator;
use crate::potential::{find_minima, PotentialError, PotentialField};

/// Occupations must come from states normalized to this tolerance.
pub const NORM_TOL: f64 = 1e-8;
/// Squared overlap below which a state is left unlabelled.
pub const ASSIGN_THRESHOLD: f64 = 0.4;
/// Total harmonic quanta included in the labelling basis.
pub const MAX_QUANTA: u32 = 3;

#[derive(Debug, Error)]
pub enum SpectraError {
    #[error("field has a single well")]
    SingleWell,
    #[error("state norm² is {0}, expected 1")]
    UnnormalizedState(f64),
    #[error("state has {got} entries, grid has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("splitting {j:e} meV is not resolved: doublet residuals {residuals:?} exceed J/100")]
    SplittingUnresolved { j: f64, residuals: [f64; 2] },
    #[error("lowest two states are not a parity doublet")]
    DoubletNotFound,
    #[error("only {0} excited doublets could be assigned, three are needed")]
    InsufficientAssignedStates(usize),
    #[error("fewer than two states")]
    TooFewStates,
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

/// Voronoi assignment of grid nodes to well centres.
#[derive(Debug, Clone, PartialEq)]
pub struct WellPartition {
    centers: Vec<Vec<f64>>,
    assignment: Vec<u32>,
    /// Nodes equidistant from several centres, with every tied well.
    ties: Vec<(usize, Vec<u32>)>,
}

impl WellPartition {
    /// Centres are sorted lexicographically (coordinates rounded to a
    /// millionth of the box span); nodes equidistant from several centres
    /// (to rounding) are assigned to the lowest index but share their
    /// probability equally in [`occupations`].
    pub fn from_centers(grid: &GridSpec, mut centers: Vec<Vec<f64>>) -> Self {
        let spans: Vec<f64> = grid.axes().iter().map(|a| (a.max - a.min).max(1e-300)).collect();
        let key = |c: &Vec<f64>| -> Vec<i64> {
            c.iter().zip(&spans).map(|(x, s)| (x / (1e-6 * s)).round() as i64).collect()
        };
        centers.sort_by(|a, b| key(a).cmp(&key(b)));
        let tol = 1e-9 * spans.iter().map(|s| s * s).sum::<f64>();
        let mut assignment = Vec::with_capacity(grid.len());
        let mut ties = Vec::new();
        let mut p = vec![0.0; grid.ndim()];
        let mut dist = vec![0.0; centers.len()];
        for i in 0..grid.len() {
            grid.point_into(i, &mut p);
            for (d, c) in dist.iter_mut().zip(&centers) {
                *d = p.iter().zip(c).map(|(x, y)| (x - y) * (x - y)).sum();
            }
            let best_d = dist.iter().copied().fold(f64::INFINITY, f64::min);
            let tied: Vec<u32> = (0..centers.len()).filter(|&w| dist[w] <= best_d + tol).map(|w| w as u32).collect();
            assignment.push(tied[0]);
            if tied.len() > 1 {
                ties.push((i, tied));
            }
        }
        Self { centers, assignment, ties }
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    pub fn well_count(&self) -> usize {
        self.centers.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.centers.len()];
        for &a in &self.assignment {
            c[a as usize] += 1;
        }
        c
    }
}

/// Partition by the field's interior local minima inside the grid box.
pub fn partition_wells(field: &dyn PotentialField, grid: &GridSpec) -> Result<WellPartition, SpectraError> {
    let minima = find_minima(field, grid)?;
    if minima.len() < 2 {
        return Err(SpectraError::SingleWell);
    }
    Ok(WellPartition::from_centers(grid, minima.into_iter().map(|m| m.point).collect()))
}

/// Probability per well; a node on a cell boundary is shared equally by
/// the wells that tie for it. Wavefunctions vanish at the walls one
/// spacing outside the box, so trapezoidal weights are uniform and cancel
/// against the normalization; the state must have unit ℓ² norm.
pub fn occupations(state: &[f64], partition: &WellPartition) -> Result<Vec<f64>, SpectraError> {
    if state.len() != partition.assignment.len() {
        return Err(SpectraError::LengthMismatch { expected: partition.assignment.len(), got: state.len() });
    }
    let n2: f64 = state.iter().map(|x| x * x).sum();
    if (n2 - 1.0).abs() > NORM_TOL {
        return Err(SpectraError::UnnormalizedState(n2));
    }
    let mut p = vec![0.0; partition.centers.len()];
    for (x, &w) in state.iter().zip(&partition.assignment) {
        p[w as usize] += x * x;
    }
    for (i, tied) in &partition.ties {
        let x2 = state[*i] * state[*i];
        p[tied[0] as usize] -= x2;
        let share = x2 / tied.len() as f64;
        for &w in tied {
            p[w as usize] += share;
        }
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Symmetric,
    Antisymmetric,
    Unassigned,
}

impl Parity {
    fn sign(self) -> &'static str {
        match self {
            Parity::Symmetric => "+",
            Parity::Antisymmetric => "-",
            Parity::Unassigned => "?",
        }
    }

    fn opposite(self, other: Parity) -> bool {
        matches!(
            (self, other),
            (Parity::Symmetric, Parity::Antisymmetric) | (Parity::Antisymmetric, Parity::Symmetric)
        )
    }
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Parity::Symmetric => "symmetric",
            Parity::Antisymmetric => "antisymmetric",
            Parity::Unassigned => "unassigned",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateLabel {
    /// Harmonic quanta per active axis, if assigned.
    pub quanta: Option<Vec<u32>>,
    pub parity: Parity,
    /// Squared overlap with the best basis function.
    pub overlap: f64,
}

impl StateLabel {
    pub fn is_assigned(&self) -> bool {
        self.quanta.is_some()
    }
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.quanta {
            None => f.write_str("unassigned"),
            Some(q) => {
                let body: Vec<String> = q.iter().map(|n| n.to_string()).collect();
                match self.parity {
                    Parity::Unassigned => write!(f, "({})", body.join(",")),
                    p => write!(f, "({};{})", body.join(","), p.sign()),
                }
            }
        }
    }
}

/// Normalized Hermite functions `ψ_0..ψ_nmax` at `ξ`.
fn hermite_functions(xi: f64, nmax: usize, out: &mut [f64]) {
    out[0] = std::f64::consts::PI.powf(-0.25) * (-0.5 * xi * xi).exp();
    if nmax >= 1 {
        out[1] = 2f64.sqrt() * xi * out[0];
    }
    for n in 1..nmax {
        let nf = n as f64;
        out[n + 1] = (2.0 / (nf + 1.0)).sqrt() * xi * out[n] - (nf / (nf + 1.0)).sqrt() * out[n - 1];
    }
}

/// All quanta vectors over `dims` axes with total at most `max`, ordered by
/// total then lexicographically with earlier axes excited first.
fn quanta_set(dims: usize, max: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for total in 0..=max {
        let mut cur = vec![0u32; dims];
        fn rec(d: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
            if d + 1 == cur.len() {
                cur[d] = left;
                out.push(cur.clone());
                return;
            }
            for n in (0..=left).rev() {
                cur[d] = n;
                rec(d + 1, left - n, cur, out);
            }
        }
        if dims == 0 {
            break;
        }
        rec(0, total, &mut cur, &mut out);
    }
    out
}

/// Per-axis 1-D oscillator tables on the grid nodes for one well.
struct WellBasis {
    /// `tables[a][n][i]` = ψ_n on node `i` of active axis `a`.
    tables: Vec<Vec<Vec<f64>>>,
}

impl WellBasis {
    fn new(grid: &GridSpec, dims: &[usize], center: &[f64], sigma: &[f64], flip: &[bool], mirror: &[f64]) -> Self {
        let nmax = MAX_QUANTA as usize;
        let mut buf = vec![0.0; nmax + 1];
        let tables = dims
            .iter()
            .enumerate()
            .map(|(a, &d)| {
                let nodes = grid.axis(d).nodes();
                let mut t = vec![vec![0.0; nodes.len()]; nmax + 1];
                for (i, &x) in nodes.iter().enumerate() {
                    // The partner well is the mirror image: evaluate at the reflected point.
                    let xr = if flip[a] { mirror[a] - x } else { x };
                    hermite_functions((xr - center[d]) / sigma[a], nmax, &mut buf);
                    for n in 0..=nmax {
                        t[n][i] = buf[n];
                    }
                }
                t
            })
            .collect();
        Self { tables }
    }
}

fn curvature(field: &dyn PotentialField, center: &[f64], d: usize, h: f64) -> f64 {
    let mut p = center.to_vec();
    let f0 = field.value(&p);
    p[d] = center[d] + h;
    let fp = field.value(&p);
    p[d] = center[d] - h;
    let fm = field.value(&p);
    (fp - 2.0 * f0 + fm) / (h * h)
}

/// Labels each state by its largest squared overlap with oscillator product
/// states centred in the wells. With two or more wells the two lowest
/// minima are paired through the reflection that swaps them, and basis
/// states are their symmetric and antisymmetric combinations; with one well
/// only quanta are assigned.
pub fn assign_states(
    result: &EigenResult,
    op: &GridOperator,
    field: &dyn PotentialField,
) -> Result<Vec<StateLabel>, SpectraError> {
    let grid = op.spec();
    let minima = find_minima(field, grid)?;
    let dims = grid.active_dims();
    let Some(first) = minima.first() else {
        return Ok(vec![StateLabel { quanta: None, parity: Parity::Unassigned, overlap: 0.0 }; result.eigenvalues.len()]);
    };
    let pair = minima.get(1).map(|second| {
        let (a, b) = if first.point <= second.point { (first, second) } else { (second, first) };
        (a.point.clone(), b.point.clone())
    });
    let c1 = pair.as_ref().map_or(first.point.clone(), |p| p.0.clone());

    let sigma: Vec<f64> = dims
        .iter()
        .map(|&d| {
            let h = grid.axis(d).spacing();
            let k = curvature(field, &c1, d, h).max(1e-12);
            let c = op.kinetic().hbar2 / (2.0 * op.kinetic().mass_factors[d]);
            (2.0 * c / k).powf(0.25)
        })
        .collect();

    let no_flip = vec![false; dims.len()];
    let zero = vec![0.0; dims.len()];
    let basis1 = WellBasis::new(grid, &dims, &c1, &sigma, &no_flip, &zero);
    let basis2 = pair.as_ref().map(|(a, b)| {
        let span: Vec<f64> = dims.iter().map(|&d| grid.axis(d).spacing()).collect();
        let flip: Vec<bool> = dims
            .iter()
            .zip(&span)
            .map(|(&d, h)| (a[d] - b[d]).abs() > 1e-3 * h)
            .collect();
        let mirror: Vec<f64> = dims.iter().map(|&d| a[d] + b[d]).collect();
        WellBasis::new(grid, &dims, &c1, &sigma, &flip, &mirror)
    });

    let quanta = quanta_set(dims.len(), MAX_QUANTA);
    let nstates = result.eigenvectors.len();
    let mut best: Vec<StateLabel> =
        vec![StateLabel { quanta: None, parity: Parity::Unassigned, overlap: 0.0 }; nstates];
    let mut idx = vec![0usize; grid.ndim()];
    let eval = |basis: &WellBasis, q: &[u32], idx: &[usize]| -> f64 {
        dims.iter()
            .enumerate()
            .map(|(a, &d)| basis.tables[a][q[a] as usize][idx[d]])
            .product()
    };
    for q in &quanta {
        let n = grid.len();
        let mut phi1 = vec![0.0; n];
        let mut phi2 = vec![0.0; n];
        for i in 0..n {
            grid.unravel(i, &mut idx);
            phi1[i] = eval(&basis1, q, &idx);
            if let Some(b2) = &basis2 {
                phi2[i] = eval(b2, q, &idx);
            }
        }
        let candidates: Vec<(Vec<f64>, Parity)> = if basis2.is_some() {
            vec![
                (phi1.iter().zip(&phi2).map(|(a, b)| a + b).collect(), Parity::Symmetric),
                (phi1.iter().zip(&phi2).map(|(a, b)| a - b).collect(), Parity::Antisymmetric),
            ]
        } else {
            vec![(phi1, Parity::Unassigned)]
        };
        for (phi, parity) in candidates {
            let nn: f64 = phi.iter().map(|x| x * x).sum();
            if nn < 1e-300 {
                continue;
            }
            for (s, v) in result.eigenvectors.iter().enumerate() {
                let vv: f64 = v.iter().map(|x| x * x).sum();
                let ov: f64 = v.iter().zip(&phi).map(|(a, b)| a * b).sum();
                let o2 = ov * ov / (nn * vv);
                if o2 > best[s].overlap {
                    best[s] = StateLabel { quanta: Some(q.clone()), parity, overlap: o2 };
                }
            }
        }
    }
    for l in &mut best {
        if l.overlap < ASSIGN_THRESHOLD {
            l.quanta = None;
            l.parity = Parity::Unassigned;
        }
    }
    Ok(best)
}

fn same_quanta(a: &StateLabel, b: &StateLabel) -> bool {
    matches!((&a.quanta, &b.quanta), (Some(x), Some(y)) if x == y)
}

fn is_doublet(a: &StateLabel, b: &StateLabel) -> bool {
    same_quanta(a, b) && a.parity.opposite(b.parity)
}

/// Ground splitting `J = E₁ − E₀` of a labelled result.
pub fn tunnel_splitting(result: &EigenResult, labels: &[StateLabel]) -> Result<f64, SpectraError> {
    if result.eigenvalues.len() < 2 || labels.len() < 2 {
        return Err(SpectraError::TooFewStates);
    }
    if !is_doublet(&labels[0], &labels[1]) {
        return Err(SpectraError::DoubletNotFound);
    }
    let j = (result.eigenvalues[1] - result.eigenvalues[0]).max(0.0);
    let residuals = [result.residuals[0], result.residuals[1]];
    if residuals.iter().any(|r| !(*r < j / 100.0)) {
        return Err(SpectraError::SplittingUnresolved { j, residuals });
    }
    Ok(j)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Doublet {
    pub lower: usize,
    pub upper: usize,
    pub label: String,
    pub mean: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionTable {
    /// Excitation energies of the three lowest excited doublets above the
    /// ground doublet (centre to centre).
    pub hbar_omega: [f64; 3],
    /// Intra-doublet gaps of those doublets.
    pub j: [f64; 3],
    pub ground: Doublet,
    pub excited: Vec<Doublet>,
}

/// Pairs states with equal quanta and opposite parity, lowest first.
pub fn doublets(eigenvalues: &[f64], labels: &[StateLabel]) -> Vec<Doublet> {
    let mut used = vec![false; labels.len()];
    let mut out = Vec::new();
    for i in 0..labels.len() {
        if used[i] || !labels[i].is_assigned() {
            continue;
        }
        if let Some(j) = (i + 1..labels.len()).find(|&j| !used[j] && is_doublet(&labels[i], &labels[j])) {
            used[i] = true;
            used[j] = true;
            let quanta = labels[i].quanta.as_ref().expect("assigned");
            let body: Vec<String> = quanta.iter().map(|n| n.to_string()).collect();
            out.push(Doublet {
                lower: i,
                upper: j,
                label: format!("({})", body.join(",")),
                mean: 0.5 * (eigenvalues[i] + eigenvalues[j]),
                gap: (eigenvalues[j] - eigenvalues[i]).abs(),
            });
        }
    }
    out.sort_by(|a, b| a.mean.partial_cmp(&b.mean).unwrap_or(Ordering::Equal));
    out
}

pub fn transition_table(result: &EigenResult, labels: &[StateLabel]) -> Result<TransitionTable, SpectraError> {
    let d = doublets(&result.eigenvalues, labels);
    let Some((ground, excited)) = d.split_first() else {
        return Err(SpectraError::InsufficientAssignedStates(0));
    };
    if excited.len() < 3 {
        return Err(SpectraError::InsufficientAssignedStates(excited.len()));
    }
    let w = |i: usize| excited[i].mean - ground.mean;
    Ok(TransitionTable {
        hbar_omega: [w(0), w(1), w(2)],
        j: [excited[0].gap, excited[1].gap, excited[2].gap],
        ground: ground.clone(),
        excited: excited.to_vec(),
    })
}

pub fn zero_point_energy(result: &EigenResult, v_min: f64) -> f64 {
    result.eigenvalues[0] - v_min
}

/// Status of the ground splitting in a [`SpectrumResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplittingStatus {
    Resolved,
    SplittingUnresolved,
    DoubletNotFound,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub index: usize,
    pub energy_mev: f64,
    pub residual: f64,
    pub label: String,
    pub parity: Parity,
    pub overlap: f64,
    pub occupations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub states: Vec<StateRecord>,
    pub well_centers: Vec<Vec<f64>>,
    pub zpe_mev: f64,
    pub splitting_mev: Option<f64>,
    pub splitting_status: SplittingStatus,
    pub transitions: Option<TransitionTable>,
    pub converged: bool,
    pub iterations: usize,
    pub seed: u64,
    /// Largest boundary-layer probability over the states.
    pub boundary_probability: f64,
    pub notes: Vec<String>,
}

/// Note attached to every spectrum with a transition table.
pub const J_INTERPRETATION: &str =
    "excited-state J values are intra-doublet gaps of the excited doublets; transition energies are doublet-centre differences";

impl SpectrumResult {
    /// Full analysis of a solve. `V_min` for the ZPE is the lower of the
    /// grid minimum and the polished well minima.
    pub fn analyze(result: &EigenResult, op: &GridOperator, field: &dyn PotentialField) -> Result<Self, SpectraError> {
        let grid = op.spec();
        let labels = assign_states(result, op, field)?;
        let minima = find_minima(field, grid)?;
        let v_min = minima.iter().map(|m| m.energy).fold(op.potential_min(), f64::min);
        let partition = if minima.is_empty() {
            WellPartition::from_centers(grid, vec![grid.point(0)])
        } else {
            WellPartition::from_centers(grid, minima.into_iter().map(|m| m.point).collect())
        };
        let mut states = Vec::with_capacity(labels.len());
        let mut boundary: f64 = 0.0;
        for (i, (l, v)) in labels.iter().zip(&result.eigenvectors).enumerate() {
            boundary = boundary.max(op.boundary_probability(v));
            states.push(StateRecord {
                index: i,
                energy_mev: result.eigenvalues[i],
                residual: result.residuals[i],
                label: l.to_string(),
                parity: l.parity,
                overlap: l.overlap,
                occupations: occupations(v, &partition)?,
            });
        }
        let mut notes = Vec::new();
        if boundary > crate::operator::BOUNDARY_WARN {
            log::warn!("boundary-layer probability {boundary:e} exceeds {:e}", crate::operator::BOUNDARY_WARN);
            notes.push(format!("boundary-layer probability {boundary:e} exceeds tolerance"));
        }
        let (splitting_mev, splitting_status) = if partition.well_count() < 2 {
            (None, SplittingStatus::NotApplicable)
        } else {
            match tunnel_splitting(result, &labels) {
                Ok(j) => (Some(j), SplittingStatus::Resolved),
                Err(SpectraError::SplittingUnresolved { j, .. }) => (Some(j), SplittingStatus::SplittingUnresolved),
                Err(SpectraError::DoubletNotFound) => (None, SplittingStatus::DoubletNotFound),
                Err(e) => return Err(e),
            }
        };
        let transitions = if partition.well_count() >= 2 {
            transition_table(result, &labels).ok()
        } else {
            None
        };
        if transitions.is_some() {
            notes.push(J_INTERPRETATION.to_string());
        }
        Ok(Self {
            states,
            well_centers: partition.centers().to_vec(),
            zpe_mev: zero_point_energy(result, v_min),
            splitting_mev,
            splitting_status,
            transitions,
            converged: result.converged,
            iterations: result.iterations,
            seed: result.seed,
            boundary_probability: boundary,
            notes,
        })
    }

    /// Flat table `index,energy_meV,label,parity,occ_left,occ_right`; the
    /// two occupation columns are the first two wells.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["index", "energy_meV", "label", "parity", "occ_left", "occ_right"])
            .expect("in-memory write");
        for s in &self.states {
            let occ = |i: usize| s.occupations.get(i).map_or(String::new(), |p| format!("{p:.10}"));
            w.write_record([
                s.index.to_string(),
                format!("{:.12}", s.energy_mev),
                s.label.clone(),
                s.parity.to_string(),
                occ(0),
                occ(1),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}
