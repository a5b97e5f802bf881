use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tunnelgrid::eigensolve::*;
use tunnelgrid::grid::{GridAxis, GridSpec};
use tunnelgrid::operator::{assemble, DenseOperator, GridOperator, StencilOrder};
use tunnelgrid::potential::*;

fn opts(k: usize) -> LanczosOptions {
    LanczosOptions { k, ..Default::default() }
}

/// Lanczos against nalgebra's dense solver: eigenvalues to `1e-10`
/// relative and eigenvectors up to sign.
fn compare_with_dense(op: &GridOperator, k: usize) {
    let r = lowest(op, &opts(k)).unwrap();
    assert!(r.converged);
    let (vals, vecs) = dense_eigen(&op.to_dense());
    for i in 0..k {
        let rel = (r.eigenvalues[i] - vals[i]).abs() / vals[i].abs().max(1.0);
        assert!(rel <= 1e-10, "level {i}: {} vs {} ({rel:e})", r.eigenvalues[i], vals[i]);
        let gap = |j: usize| (vals[j] - vals[i]).abs();
        let isolated = (i == 0 || gap(i - 1) > 1e-6) && gap(i + 1) > 1e-6;
        if isolated {
            let overlap: f64 = r.eigenvectors[i].iter().zip(vecs.column(i).iter()).map(|(a, b)| a * b).sum();
            assert!((overlap.abs() - 1.0).abs() < 1e-8, "level {i}: overlap {overlap}");
        }
    }
}

#[test]
fn diagonal_matrix_gives_smallest_entries() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut d: Vec<f64> = (0..300).map(|_| rng.random_range(-50.0..50.0)).collect();
    let op = DenseOperator(DMatrix::from_diagonal(&DVector::from_vec(d.clone())));
    let r = lowest(&op, &opts(6)).unwrap();
    d.sort_by(f64::total_cmp);
    for (a, b) in r.eigenvalues.iter().zip(&d) {
        assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
    }
    for (i, v) in r.eigenvectors.iter().enumerate() {
        assert!(r.relative_residual(i) < 1e-9);
        let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!((peak - 1.0).abs() < 1e-8);
    }
}

#[test]
fn oscillator_ground_state_on_a_fine_line() {
    let w = HarmonicWell::new(&["q"], &[50.0]).unwrap();
    let op = assemble(&w, &w.grid(5.0, 201), StencilOrder::Second).unwrap();
    let r = lowest(&op, &opts(3)).unwrap();
    for (n, e) in r.eigenvalues.iter().enumerate() {
        let exact = 50.0 * (n as f64 + 0.5);
        assert!((e - exact).abs() / exact < 5e-3, "n = {n}: {e}");
    }
}

#[test]
fn lanczos_matches_dense_solver() {
    let w1 = HarmonicWell::new(&["q"], &[80.0]).unwrap();
    compare_with_dense(&assemble(&w1, &w1.grid(4.0, 400), StencilOrder::Fourth).unwrap(), 6);

    let quartic = QuarticDoubleWell::new(150.0, 0.55).unwrap();
    compare_with_dense(&assemble(&quartic, &quartic.grid(1.4, 300), StencilOrder::Second).unwrap(), 4);

    let w2 = HarmonicWell::new(&["a", "b"], &[60.0, 95.0]).unwrap();
    compare_with_dense(&assemble(&w2, &w2.grid(3.5, 30), StencilOrder::Fourth).unwrap(), 6);

    let w4 = HarmonicWell::new(&["a", "b", "c", "d"], &[100.0, 131.0, 157.0, 173.0]).unwrap();
    compare_with_dense(&assemble(&w4, &w4.grid(3.4, 5), StencilOrder::Second).unwrap(), 5);

    let model = CoupledDoubleWell::new(CoupledParams::oh_like()).unwrap();
    let spec = GridSpec::new(vec![
        GridAxis::frozen("qx", 0.0),
        GridAxis::active("qy", -0.6, 1.8, 24),
        GridAxis::frozen("qz", 0.0),
        GridAxis::active("Q", -0.6, 0.9, 20),
    ])
    .unwrap();
    compare_with_dense(&assemble(&model, &spec, StencilOrder::Second).unwrap(), 4);
}

#[test]
fn degenerate_pair_is_found() {
    let w = HarmonicWell::new(&["a", "b"], &[70.0, 70.0]).unwrap();
    let op = assemble(&w, &w.grid(4.0, 35), StencilOrder::Second).unwrap();
    let r = lowest(&op, &opts(6)).unwrap();
    let (vals, _) = dense_eigen(&op.to_dense());
    for i in 0..6 {
        assert!((r.eigenvalues[i] - vals[i]).abs() < 1e-9 * vals[i], "{:?} vs {:?}", r.eigenvalues, &vals[..6]);
    }
    assert!((r.eigenvalues[1] - r.eigenvalues[2]).abs() < 1e-9 * r.eigenvalues[1]);
    // The two partners must be distinct directions, not one vector twice.
    let overlap: f64 = r.eigenvectors[1].iter().zip(&r.eigenvectors[2]).map(|(a, b)| a * b).sum();
    assert!(overlap.abs() < 1e-8);
}

#[test]
fn vectors_are_orthonormal_and_residuals_reported() {
    let w = HarmonicWell::new(&["a", "b", "c"], &[40.0, 55.0, 71.0]).unwrap();
    let op = assemble(&w, &w.grid(4.0, 12), StencilOrder::Fourth).unwrap();
    let r = lowest(&op, &opts(8)).unwrap();
    for i in 0..8 {
        for j in 0..8 {
            let d: f64 = r.eigenvectors[i].iter().zip(&r.eigenvectors[j]).map(|(a, b)| a * b).sum();
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!((d - expect).abs() < 1e-10);
        }
        let hv = op.apply(&r.eigenvectors[i]).unwrap();
        let res: f64 = hv
            .iter()
            .zip(&r.eigenvectors[i])
            .map(|(a, v)| (a - r.eigenvalues[i] * v).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((res - r.residuals[i]).abs() <= 1e-9 * r.eigenvalues[i]);
    }
    assert!(r.eigenvalues.windows(2).all(|p| p[0] <= p[1]));
}

#[test]
fn fixed_seed_is_reproducible() {
    let w = HarmonicWell::new(&["a", "b"], &[50.0, 77.0]).unwrap();
    let op = assemble(&w, &w.grid(4.0, 40), StencilOrder::Fourth).unwrap();
    let a = lowest(&op, &opts(4)).unwrap();
    let b = lowest(&op, &opts(4)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.eigenvectors, b.eigenvectors);
}

#[test]
fn rejects_bad_requests() {
    let op = DenseOperator(DMatrix::identity(4, 4));
    assert!(matches!(lowest(&op, &opts(0)), Err(EigenError::ZeroK)));
    assert!(matches!(lowest(&op, &opts(5)), Err(EigenError::KTooLarge { k: 5, n: 4 })));
    let bad = LanczosOptions { tol: -1.0, ..opts(1) };
    assert!(matches!(lowest(&op, &bad), Err(EigenError::InvalidTolerance(_))));
}

#[test]
fn tiny_budget_reports_partial_result() {
    let w = HarmonicWell::new(&["a", "b"], &[50.0, 50.5]).unwrap();
    let op = assemble(&w, &w.grid(4.0, 40), StencilOrder::Second).unwrap();
    let o = LanczosOptions { max_restarts: 1, ncv: Some(8), check_degeneracy: false, ..opts(6) };
    match lowest(&op, &o) {
        Err(EigenError::NoConvergence { partial }) => {
            assert!(!partial.converged);
            assert_eq!(partial.eigenvalues.len(), 6);
        }
        other => panic!("expected no convergence, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn eigenvalues_do_not_depend_on_the_seed(seed in any::<u64>()) {
        let w = HarmonicWell::new(&["a", "b"], &[45.0, 63.0]).unwrap();
        let op = assemble(&w, &w.grid(4.0, 24), StencilOrder::Second).unwrap();
        let base = lowest(&op, &opts(4)).unwrap();
        let other = lowest(&op, &LanczosOptions { seed, ..opts(4) }).unwrap();
        for (a, b) in base.eigenvalues.iter().zip(&other.eigenvalues) {
            prop_assert!((a - b).abs() <= 1e-9 * b.abs());
        }
    }

    #[test]
    fn random_symmetric_matrices_match_dense(seed in any::<u64>(), n in 30usize..120) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let m = (&a + a.transpose()) * 0.5;
        let (vals, _) = dense_eigen(&m);
        let r = lowest(&DenseOperator(m), &opts(4)).unwrap();
        let scale = vals.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        for (x, y) in r.eigenvalues.iter().zip(&vals) {
            prop_assert!((x - y).abs() <= 1e-9 * scale);
        }
    }
}
