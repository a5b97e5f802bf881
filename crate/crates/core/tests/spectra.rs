use std::sync::Arc;

use tunnelgrid::case::DefectCase;
use tunnelgrid::eigensolve::{lowest, EigenResult, LanczosOptions};
use tunnelgrid::grid::{GridAxis, GridSpec};
use tunnelgrid::operator::{assemble, StencilOrder};
use tunnelgrid::potential::*;
use tunnelgrid::presets;
use tunnelgrid::spectra::*;
use tunnelgrid::units::HBAR2;

/// Number of eigenvalues of the symmetric tridiagonal `(d, e)` below `x`.
fn sturm_count(d: &[f64], e: f64, x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for (i, &di) in d.iter().enumerate() {
        let off = if i == 0 { 0.0 } else { e * e / q };
        q = di - x - off;
        if q == 0.0 {
            q = -1e-300;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// `i`-th eigenvalue by bisection on the Sturm count.
fn sturm_eigenvalue(d: &[f64], e: f64, i: usize) -> f64 {
    let (mut lo, mut hi) = (d.iter().cloned().fold(f64::INFINITY, f64::min) - 4.0 * e.abs(), d.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 4.0 * e.abs());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sturm_count(d, e, mid) > i {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Splitting of a 1-D field from a fine second-order tridiagonal matrix.
fn sturm_splitting(field: &dyn PotentialField, min: f64, max: f64, n: usize) -> f64 {
    let h = (max - min) / (n - 1) as f64;
    let c = HBAR2 / (2.0 * h * h);
    let d: Vec<f64> = (0..n).map(|i| field.value(&[min + i as f64 * h]) + 2.0 * c).collect();
    sturm_eigenvalue(&d, -c, 1) - sturm_eigenvalue(&d, -c, 0)
}

fn sign_changes(v: &[f64]) -> usize {
    let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let signs: Vec<bool> = v.iter().filter(|x| x.abs() > 1e-8 * peak).map(|x| *x > 0.0).collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

fn fake_result(eigenvalues: Vec<f64>, residuals: Vec<f64>) -> EigenResult {
    EigenResult {
        eigenvectors: vec![vec![]; eigenvalues.len()],
        eigenvalues,
        residuals,
        iterations: 1,
        matvecs: 1,
        scale: 1.0,
        seed: 0,
        converged: true,
    }
}

fn doublet_labels(n: usize) -> Vec<StateLabel> {
    (0..n)
        .map(|i| StateLabel {
            quanta: Some(vec![(i / 2) as u32]),
            parity: if i % 2 == 0 { Parity::Symmetric } else { Parity::Antisymmetric },
            overlap: 0.99,
        })
        .collect()
}

#[test]
fn partition_of_thirteen_nodes() {
    let grid = GridSpec::new(vec![GridAxis::active("qy", -0.6, 0.6, 13)]).unwrap();
    let p = WellPartition::from_centers(&grid, vec![vec![0.5], vec![-0.5]]);
    assert_eq!(p.centers(), &[vec![-0.5], vec![0.5]]);
    assert_eq!(p.counts(), vec![7, 6]);
    assert_eq!(p.assignment()[6], 0, "midpoint ties to the first well");

    let quartic = QuarticDoubleWell::new(150.0, 0.5).unwrap();
    let q = partition_wells(&quartic, &grid).unwrap();
    assert_eq!(q.counts(), vec![7, 6], "{:?}", q.centers());
    assert!((q.centers()[0][0] + 0.5).abs() < 1e-6);

    let single = HarmonicWell::new(&["qy"], &[50.0]).unwrap();
    assert!(matches!(partition_wells(&single, &grid), Err(SpectraError::SingleWell)));
}

#[test]
fn occupation_examples() {
    let grid = GridSpec::new(vec![GridAxis::active("qy", -1.0, 1.0, 4)]).unwrap();
    let p = WellPartition::from_centers(&grid, vec![vec![-0.5], vec![0.5]]);
    let s = 0.5;
    assert_eq!(occupations(&[s, s, s, s], &p).unwrap(), vec![0.5, 0.5]);
    assert_eq!(occupations(&[1.0, 0.0, 0.0, 0.0], &p).unwrap(), vec![1.0, 0.0]);
    assert!(matches!(occupations(&[1.0, 1.0, 0.0, 0.0], &p), Err(SpectraError::UnnormalizedState(_))));
    assert!(matches!(occupations(&[1.0], &p), Err(SpectraError::LengthMismatch { .. })));

    let three = GridSpec::new(vec![GridAxis::active("qy", -1.0, 1.0, 3)]).unwrap();
    let t = WellPartition::from_centers(&three, vec![vec![-1.0], vec![1.0]]);
    assert_eq!(t.counts(), vec![2, 1]);
    assert_eq!(occupations(&[0.0, 1.0, 0.0], &t).unwrap(), vec![0.5, 0.5]);
}

#[test]
fn quartic_splitting_matches_fine_tridiagonal_oracle() {
    let (well, case) = presets::quartic_1d(presets::QUARTIC_COUNT).unwrap();
    let j = case.splitting().unwrap();
    let w = presets::QUARTIC_HALF_WIDTH;
    let oracle = sturm_splitting(&well, -w, w, 4001);
    let rel = (j - oracle).abs() / oracle;
    assert!(rel < 1e-3, "J {j} vs oracle {oracle} ({rel:e})");
}

#[test]
fn quartic_splitting_converges_at_least_quadratically() {
    let j: Vec<f64> = [51, 101, 201].iter().map(|&n| presets::quartic_1d(n).unwrap().1.splitting().unwrap()).collect();
    let order = ((j[0] - j[1]).abs() / (j[1] - j[2]).abs()).log2();
    assert!(order >= 2.0, "J {j:?}, order {order}");
}

#[test]
fn sturm_oracle_reproduces_a_box() {
    // Zero potential: levels of the discrete Laplacian are known exactly.
    let n = 200;
    let h = 1.0 / (n + 1) as f64;
    let c = HBAR2 / (2.0 * h * h);
    let d = vec![2.0 * c; n];
    for k in 0..3 {
        let exact = 2.0 * c * (1.0 - (std::f64::consts::PI * (k + 1) as f64 * h).cos());
        assert!((sturm_eigenvalue(&d, -c, k) - exact).abs() < 1e-9 * exact);
    }
}

#[test]
fn doublet_parity_and_occupations() {
    let (well, case) = presets::quartic_1d(presets::QUARTIC_COUNT - 1).unwrap();
    let (op, r) = case.solve().unwrap();
    let labels = assign_states(&r, &op, &well).unwrap();
    assert_eq!(labels[0].to_string(), "(0;+)");
    assert_eq!(labels[1].to_string(), "(0;-)");
    assert_eq!(sign_changes(&r.eigenvectors[0]), 0);
    assert_eq!(sign_changes(&r.eigenvectors[1]), 1);
    let p = partition_wells(&well, op.spec()).unwrap();
    for v in &r.eigenvectors[..2] {
        let occ = occupations(v, &p).unwrap();
        assert!((occ[0] - 0.5).abs() < 1e-4 && (occ[1] - 0.5).abs() < 1e-4, "{occ:?}");
    }
    // The antisymmetric state changes sign exactly at the midplane.
    let n = r.eigenvectors[1].len();
    assert!(r.eigenvectors[1][n / 2 - 1] * r.eigenvectors[1][n / 2] < 0.0);
}

#[test]
fn coupled_doublet_has_a_single_nodal_surface() {
    let (model, case) = presets::oh_like_with(CoupledParams::oh_like(), 1).unwrap();
    let spec = case.grid.freeze("qx", 0.0).unwrap().freeze("qz", 0.0).unwrap();
    let case = case.with_grid(spec);
    let (op, r) = case.solve().unwrap();
    let grid = op.spec();
    // The model is inversion-symmetric about the hop midpoint, and so is the
    // standard box, so node `i` maps to the node with every index reversed.
    let shape = grid.shape();
    let mut idx = vec![0; grid.ndim()];
    let (mut same0, mut flip1, mut total) = (true, true, 0);
    // Nodes on the midplane map to themselves, where the odd state is zero
    // up to rounding.
    let tiny = 1e-12 * r.eigenvectors[1].iter().fold(0.0f64, |m, x| m.max(x * x));
    for i in 0..grid.len() {
        grid.unravel(i, &mut idx);
        let mirror: Vec<usize> = idx.iter().zip(&shape).map(|(&k, &n)| n - 1 - k).collect();
        let j = grid.ravel(&mirror);
        total += 1;
        same0 &= r.eigenvectors[0][i] * r.eigenvectors[0][j] >= 0.0;
        flip1 &= r.eigenvectors[1][i] * r.eigenvectors[1][j] <= tiny;
    }
    assert!(total > 0);
    assert!(same0);
    assert!(r.eigenvectors[0].iter().all(|x| *x >= 0.0) || r.eigenvectors[0].iter().all(|x| *x <= 0.0));
    assert!(flip1);
    let s = SpectrumResult::analyze(&r, &op, &model).unwrap();
    assert_eq!(s.splitting_status, SplittingStatus::Resolved);
    for st in &s.states[..2] {
        assert!((st.occupations[0] - 0.5).abs() < 1e-4, "{:?}", st.occupations);
    }
}

#[test]
fn transition_table_of_two_separated_oscillators() {
    let quanta = [100.0, 150.0, 155.0];
    let d = 0.6;
    let k: Vec<f64> = quanta.iter().map(|w| w * w / HBAR2).collect();
    let spec = GridSpec::new(vec![
        GridAxis::active("qx", -1.45, 1.45, 59),
        GridAxis::active("qy", -0.7, 0.7, 15),
        GridAxis::active("qz", -0.7, 0.7, 15),
    ])
    .unwrap();
    let k2 = k.clone();
    let field = FnField::new(Domain::from_grid(&spec), move |x: &[f64]| {
        let dx = x[0].abs() - d;
        0.5 * (k2[0] * dx * dx + k2[1] * x[1] * x[1] + k2[2] * x[2] * x[2])
    });
    let case = DefectCase::new(Arc::new(field), spec)
        .with_order(StencilOrder::Fourth)
        .with_solver(LanczosOptions { k: 8, ..Default::default() });
    let (_, s) = case.spectrum().unwrap();
    let t = s.transitions.expect("three excited doublets");
    for (w, exact) in t.hbar_omega.iter().zip(quanta) {
        assert!((w - exact).abs() / exact < 0.02, "{:?}", t.hbar_omega);
    }
    assert_eq!(t.excited[0].label, "(1,0,0)");
    assert!(t.j[0] > t.j[1] && t.j[0] > t.j[2], "the tunneling-axis excitation splits most");
    assert!(t.ground.gap < t.j[0]);
    assert!(s.notes.iter().any(|n| n == J_INTERPRETATION));
    assert!((s.zpe_mev - 0.5 * quanta.iter().sum::<f64>()).abs() < 0.02 * 200.0);
}

#[test]
fn zero_point_energy_examples() {
    let w = HarmonicWell::new(&["q"], &[10.0]).unwrap();
    let op = assemble(&w, &w.grid(6.0, 301), StencilOrder::Fourth).unwrap();
    let r = lowest(&op, &LanczosOptions { k: 1, ..Default::default() }).unwrap();
    assert!((zero_point_energy(&r, 0.0) - 5.0).abs() < 1e-3);

    let w3 = HarmonicWell::new(&["a", "b", "c"], &[2.0, 4.0, 6.0]).unwrap();
    let case = DefectCase::new(Arc::new(w3.clone()), w3.grid(5.0, 31)).with_order(StencilOrder::Fourth).with_k(1);
    let (_, s) = case.spectrum().unwrap();
    assert!((s.zpe_mev - 6.0).abs() < 6e-3, "{}", s.zpe_mev);
    assert_eq!(s.splitting_status, SplittingStatus::NotApplicable);

    // Raising the potential by a constant leaves the ZPE alone.
    let shifted = Shifted { inner: w3.clone(), offset: 37.5 };
    let case2 = DefectCase::new(Arc::new(shifted), w3.grid(5.0, 31)).with_order(StencilOrder::Fourth).with_k(1);
    let (r2, s2) = case2.spectrum().unwrap();
    assert!((s2.zpe_mev - s.zpe_mev).abs() < 1e-9);
    assert!((r2.eigenvalues[0] - 37.5 - s.zpe_mev).abs() < 1e-8);
}

#[test]
fn heavier_particle_splits_less() {
    let (_, case) = presets::quartic_1d(201).unwrap();
    let j = case.splitting().unwrap();
    let heavy = case.clone().scale_mass(&["qy"], 2.0).unwrap().splitting().unwrap();
    assert!(heavy < j);
}

#[test]
fn splitting_from_a_labelled_result() {
    let r = fake_result(vec![1.0, 1.2, 5.0, 5.3], vec![1e-9; 4]);
    assert!((tunnel_splitting(&r, &doublet_labels(4)).unwrap() - 0.2).abs() < 1e-12);

    let noisy = fake_result(vec![1.0, 1.2], vec![1e-9, 0.01]);
    assert!(matches!(
        tunnel_splitting(&noisy, &doublet_labels(2)),
        Err(SpectraError::SplittingUnresolved { .. })
    ));
    let mut same = doublet_labels(2);
    same[1].parity = Parity::Symmetric;
    assert!(matches!(tunnel_splitting(&r, &same), Err(SpectraError::DoubletNotFound)));
    let one = fake_result(vec![1.0], vec![0.0]);
    assert!(matches!(tunnel_splitting(&one, &doublet_labels(1)), Err(SpectraError::TooFewStates)));

    let table = transition_table(&fake_result(vec![0.0, 0.1, 10.0, 10.5, 12.0, 12.2, 20.0, 21.0], vec![0.0; 8]), &doublet_labels(8));
    let t = table.unwrap();
    assert!((t.hbar_omega[0] - 10.2).abs() < 1e-12);
    assert!((t.j[2] - 1.0).abs() < 1e-12);
    assert!(matches!(transition_table(&r, &doublet_labels(4)), Err(SpectraError::InsufficientAssignedStates(1))));
}

#[test]
fn spectrum_csv_has_one_row_per_state() {
    let (well, case) = presets::quartic_1d(201).unwrap();
    let (op, r) = case.solve().unwrap();
    let s = SpectrumResult::analyze(&r, &op, &well).unwrap();
    let csv = s.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "index,energy_meV,label,parity,occ_left,occ_right");
    assert_eq!(lines.len(), 1 + r.eigenvalues.len());
    assert!(lines[1].contains("(0;+)"));
}
