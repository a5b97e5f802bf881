use proptest::prelude::*;
use tunnelgrid::grid::{GridAxis, GridSpec};
use tunnelgrid::potential::*;

fn grid(axes: &[(&str, f64, f64, usize)]) -> GridSpec {
    GridSpec::new(axes.iter().map(|&(l, a, b, n)| GridAxis::active(l, a, b, n)).collect()).unwrap()
}

fn sample<F: Fn(&[f64]) -> f64 + Send + Sync>(spec: &GridSpec, f: F) -> SampledPotential {
    let field = FnField::new(Domain::from_grid(spec), f);
    SampledPotential::from_field(&field, spec.clone(), Metadata::default()).unwrap()
}

#[test]
fn canonical_model_values() {
    let m = CoupledDoubleWell::new(CoupledParams::oh_like()).unwrap();
    for w in m.wells() {
        assert!(m.eval(&w).unwrap().abs() < 1e-10);
    }
    // With the g·q_y·(Q − Q₀) term the symmetric midpoint sits at V_b(1+γ)².
    let mid = [0.0, 0.5 * m.q_y12(), 0.0, m.q_c()];
    let v_b = m.params().v_b;
    assert!((m.eval(&mid).unwrap() - v_b * (1.0 + m.gamma()).powi(2)).abs() < 1e-9);

    let mut p = CoupledParams::oh_like();
    p.g *= 1e-3;
    let weak = CoupledDoubleWell::new(p).unwrap();
    let mid = [0.0, 0.5 * weak.q_y12(), 0.0, weak.q_c()];
    assert!((weak.eval(&mid).unwrap() - v_b).abs() < 1e-3 * v_b);

    // Mirror symmetry V(q_y, Q) = V(−q_y, 2Q₀ − Q) in centred coordinates.
    for &(qx, qy, qz, q) in &[(0.1, 0.3, -0.05, 0.2), (-0.2, 1.1, 0.07, -0.4), (0.0, 0.9, 0.0, 1.7)] {
        let a = m.eval(&[qx, qy, qz, q]).unwrap();
        let b = m.eval(&[qx, m.q_y12() - qy, qz, m.q_lr() - q]).unwrap();
        assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
    }
}

#[test]
fn out_of_domain_is_an_error() {
    let spec = grid(&[("qy", 0.0, 1.0, 5), ("Q", -1.0, 1.0, 5)]);
    let s = sample(&spec, |x| x[0] + x[1]);
    let f = interpolate(&s, &spec).unwrap();
    assert!(f.eval(&[0.5, 0.0]).is_ok());
    assert!(matches!(f.eval(&[1.5, 0.0]), Err(PotentialError::OutOfDomain { .. })));
    assert!(matches!(f.eval(&[0.5]), Err(PotentialError::DimensionMismatch { .. })));
    let wider = grid(&[("qy", 0.0, 1.2, 5), ("Q", -1.0, 1.0, 5)]);
    assert!(matches!(interpolate(&s, &wider), Err(PotentialError::TargetExceedsDomain(_))));
}

#[test]
fn spline_reproduces_knots() {
    let spec = grid(&[("qx", -0.4, 0.5, 7), ("qy", -0.3, 1.2, 9), ("Q", -1.0, 2.0, 6)]);
    let s = sample(&spec, |x| (3.0 * x[0]).sin() * (x[1] * x[1] - 0.5).exp() + x[2].cos() * 40.0);
    let f = interpolate(&s, &spec).unwrap();
    for i in 0..spec.len() {
        let p = spec.point(i);
        assert!((f.eval(&p).unwrap() - s.energies()[i]).abs() < 1e-9, "knot {i}");
    }
}

#[test]
fn spline_is_exact_on_cubics() {
    let spec = grid(&[("a", -1.0, 2.0, 6), ("b", 0.0, 1.5, 5), ("c", -2.0, 0.0, 7)]);
    let cubic = |x: &[f64]| {
        (1.0 + x[0] - 2.0 * x[0].powi(3)) * (0.5 - x[1] * x[1] + 0.3 * x[1].powi(3)) * (2.0 + x[2].powi(3))
    };
    let s = sample(&spec, cubic);
    let f = interpolate(&s, &spec).unwrap();
    for &p in &[[0.13, 0.71, -1.37], [-0.91, 0.05, -0.02], [1.97, 1.44, -1.99], [0.5, 0.5, -0.5]] {
        assert!((f.eval(&p).unwrap() - cubic(&p) + s.reference()).abs() < 1e-8, "{p:?}");
    }
}

#[test]
fn spline_error_is_fourth_order() {
    let quartic = |x: &[f64]| 150.0 * ((x[0] / 0.55).powi(2) - 1.0).powi(2) + 20.0 * x[1].powi(4) + 5.0 * x[0] * x[1];
    let probes: Vec<[f64; 2]> =
        (0..40).map(|i| [-0.95 + 1.9 * ((i * 7) % 40) as f64 / 40.0, -0.9 + 1.8 * i as f64 / 40.0]).collect();
    let max_err = |n: usize| {
        let spec = grid(&[("qy", -1.0, 1.0, n), ("Q", -1.0, 1.0, n)]);
        let s = sample(&spec, quartic);
        let f = interpolate(&s, &spec).unwrap();
        probes.iter().map(|p| (f.eval(p).unwrap() + s.reference() - quartic(p)).abs()).fold(0.0, f64::max)
    };
    let coarse = max_err(11);
    let fine = max_err(21);
    assert!(coarse / fine >= 4.0, "{coarse} vs {fine}");
}

#[test]
fn ingest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = grid(&[("qy", -0.5, 1.5, 9), ("Q", -1.3, 2.0, 7)]);
    let m = CoupledDoubleWell::new(CoupledParams::oh_like()).unwrap();
    let slice = |x: &[f64]| m.value(&[0.0, x[0], 0.0, x[1]]) + 1234.5;
    let original = sample(&spec, slice);
    let path = original.write(dir.path(), "slice").unwrap();
    let back = ingest(&path).unwrap();
    assert_eq!(back.energies(), original.energies());
    assert_eq!(back.spec(), original.spec());
    assert_eq!(back.energies().iter().copied().fold(f64::INFINITY, f64::min), 0.0);
    let f = interpolate(&back, &spec).unwrap();
    for i in 0..spec.len() {
        assert!((f.eval(&spec.point(i)).unwrap() - original.energies()[i]).abs() < 1e-9);
    }
}

#[test]
fn ingest_examples() {
    let sidecar = "data = \"x.csv\"\n[[axis]]\nlabel = \"a\"\nmin = 0.0\nmax = 1.0\ncount = 3\n[[axis]]\nlabel = \"b\"\nmin = 0.0\nmax = 2.0\ncount = 3\n";
    let mut rows = String::from("# header\n");
    for i in 0..3 {
        for j in 0..3 {
            rows.push_str(&format!("{i},{j},{}\n", (i * 3 + j) as f64 * 0.5 - 1.0));
        }
    }
    let s = sampled::parse(sidecar, &rows).unwrap();
    assert_eq!(s.energies().len(), 9);

    let missing: String = rows.lines().filter(|l| !l.starts_with("2,1,")).map(|l| format!("{l}\n")).collect();
    assert!(matches!(sampled::parse(sidecar, &missing), Err(PotentialError::MissingSample(ref i)) if i == &[2, 1]));

    let conflict = format!("{rows}0,2,17.0\n");
    assert!(matches!(sampled::parse(sidecar, &conflict), Err(PotentialError::MalformedRow { line: 11, .. })));

    let bad = format!("{rows}1,x,2\n");
    assert!(matches!(sampled::parse(sidecar, &bad), Err(PotentialError::MalformedRow { .. })));
}

#[test]
fn coincidence_of_symmetric_model_is_the_midpoint() {
    let m = CoupledDoubleWell::new(CoupledParams::oh_like()).unwrap();
    let search = GridSpec::standard_subgrid(&m.frame());
    let c = coincidence(&m, &search).unwrap();
    let [w1, w2] = m.wells();
    assert!((c.q_c - 0.5 * (w1[3] + w2[3])).abs() < 1e-8);
    assert!((c.e_c_prime - m.e_c_prime()).abs() < 1e-6);
}

#[test]
fn coincidence_of_two_parabolas() {
    let (k, q_lr, v_b) = (40.0, 1.3, 100.0);
    let spec = grid(&[("qy", -0.5, 1.5, 13), ("Q", -2.0 * q_lr, 3.0 * q_lr, 11)]);
    let field = FnField::new(Domain::unbounded(&["qy", "Q"]), move |x: &[f64]| {
        let y = 2.0 * x[0] - 1.0;
        v_b * (y * y - 1.0).powi(2) + 0.5 * k * (x[1] - q_lr * x[0]).powi(2)
    });
    let c = coincidence(&field, &spec).unwrap();
    assert!((c.q_c - 0.5 * q_lr).abs() < 1e-8);
    assert!((c.e_c_prime - k * q_lr * q_lr / 8.0).abs() < 1e-8);

    let flat = FnField::new(Domain::unbounded(&["qy"]), |x: &[f64]| x[0]);
    assert!(matches!(coincidence(&flat, &grid(&[("qy", 0.0, 1.0, 5)])), Err(PotentialError::MissingQAxis)));
}

#[test]
fn barrier_examples() {
    let q = QuarticDoubleWell::new(150.0, 0.55).unwrap();
    let v = barrier_height(&q, &q.grid(1.2, 13)).unwrap();
    assert!((v - 150.0).abs() < 1e-9, "{v}");

    let m = CoupledDoubleWell::new(CoupledParams::oh_like()).unwrap();
    let v = barrier_height(&m, &GridSpec::standard_subgrid(&m.frame())).unwrap();
    assert!((v - m.params().v_b).abs() < 0.01 * m.params().v_b, "{v}");

    let single = HarmonicWell::new(&["qy"], &[10.0]).unwrap();
    assert!(barrier_height(&single, &single.grid(4.0, 13)).is_err());
}

#[test]
fn spline_evaluation_is_deterministic() {
    let spec = grid(&[("qy", -0.5, 1.5, 9), ("Q", -1.0, 2.0, 8)]);
    let s = sample(&spec, |x| (x[0] * 2.0).sin() * x[1].cosh());
    let f = interpolate(&s, &spec).unwrap();
    let p = [0.3141, 0.2718];
    let first = f.eval(&p).unwrap().to_bits();
    let all: Vec<u64> = (0..50).map(|_| f.eval(&p).unwrap().to_bits()).collect();
    assert!(all.iter().all(|&b| b == first));
    let threaded: Vec<u64> = std::thread::scope(|s| {
        let hs: Vec<_> = (0..4).map(|_| s.spawn(|| f.eval(&p).unwrap().to_bits())).collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert!(threaded.iter().all(|&b| b == first));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_minimum_is_zero(energies in prop::collection::vec(-1e4..1e4f64, 12)) {
        let spec = grid(&[("a", 0.0, 1.0, 3), ("b", 0.0, 1.0, 4)]);
        let s = SampledPotential::new(spec, energies, Metadata::default()).unwrap();
        prop_assert_eq!(s.energies().iter().copied().fold(f64::INFINITY, f64::min), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn coincidence_is_equidistant_for_mirror_symmetric_models(
        v_b in 80.0..200.0f64,
        a in 0.4..0.7f64,
        k_q in 30.0..120.0f64,
        gamma in 0.01..0.1f64,
        beta in -0.15..0.3f64,
    ) {
        let g = -(4.0 * v_b * k_q * gamma).sqrt() / a;
        let p = CoupledParams { v_b, a, k_q, g, k_x: 5000.0, k_z: 4000.0, beta_x: beta, beta_z: beta };
        let m = CoupledDoubleWell::new(p).unwrap();
        let c = coincidence(&m, &GridSpec::standard_subgrid(&m.frame())).unwrap();
        let d1 = (c.q_c - c.wells[0].point[3]).abs();
        let d2 = (c.wells[1].point[3] - c.q_c).abs();
        prop_assert!((d1 - d2).abs() <= 1e-8, "{} vs {}", d1, d2);
    }
}
