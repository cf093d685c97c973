//! Structural checks of the symmetric relaxation systems: spectral
//! decomposition, the wave-coupling structure, the limiting diffusion
//! coefficients, and the diagonal-variable operator split.

use apfv::models::{parse_model, pn_system, sn_quadrature, sn_system};
use apfv::system::{from_diagonal, to_diagonal, Field, FriedrichsSystem};
use apfv::numerics::DenseMatrix;

fn analyze(sys: &FriedrichsSystem) -> (apfv::system::SpectralData, apfv::system::StructureReport) {
    let mut spec = sys.spectral().unwrap();
    let report = sys.check_structure(&mut spec).unwrap();
    (spec, report)
}

#[test]
fn ordinate_systems_limit_to_half_inverse_sigma() {
    // physical coefficient is scalar / sigma; the scalar must be exactly 1/2
    for n in [4usize, 8, 16, 32] {
        let sys = sn_system(&sn_quadrature(n).unwrap()).unwrap();
        let (_, report) = analyze(&sys);
        assert!(report.h2_holds, "s{} fails the isotropy check", n / 2);
        let limit = sys.diffusion_limit(&report).unwrap();
        let scalar = limit.scalar.expect("isotropic limit");
        assert!(
            (scalar - 0.5).abs() <= 1e-13,
            "s{}: limit scalar {scalar} != 1/2",
            n / 2
        );
    }
}

#[test]
fn moment_systems_limit_to_third_inverse_sigma() {
    for n in [1usize, 3, 5, 7] {
        let sys = pn_system(n).unwrap();
        let (_, report) = analyze(&sys);
        assert!(report.h2_holds, "p{n} fails the isotropy check");
        let limit = sys.diffusion_limit(&report).unwrap();
        let scalar = limit.scalar.expect("isotropic limit");
        assert!(
            (scalar - 1.0 / 3.0).abs() <= 1e-13,
            "p{n}: limit scalar {scalar} != 1/3"
        );
    }
}

#[test]
fn eigenbasis_is_orthonormal_and_kernel_first() {
    for model in ["p3", "sn:8"] {
        let model = if model == "p3" { "pn:3" } else { model };
        let sys = parse_model(model).unwrap();
        let (spec, _) = analyze(&sys);
        let qt = spec.q.transpose();
        let gram = qt.matmul(&spec.q);
        for i in 0..sys.n {
            for j in 0..sys.n {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram.get(i, j) - want).abs() <= 1e-12, "{model}: Q not orthogonal");
            }
        }
        assert_eq!(spec.p, 1, "{model}: relaxation kernel should be one-dimensional");
        assert!(spec.lambdas[0].abs() <= 1e-12);
        for &l in &spec.lambdas[1..] {
            assert!(l > 1e-12, "{model}: nonzero eigenvalue expected, got {l}");
        }
        // R Q = Q diag(lambdas)
        let rq = sys.r.matmul(&spec.q);
        for i in 0..sys.n {
            for j in 0..sys.n {
                assert!((rq.get(i, j) - spec.q.get(i, j) * spec.lambdas[j]).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn decomposition_splits_off_the_heat_block() {
    let sys = pn_system(3).unwrap();
    let (spec, report) = analyze(&sys);
    let dec = sys.decompose(&spec, &report).unwrap();
    let a = report.a;
    assert!((a - 1.0 / 3.0f64.sqrt()).abs() <= 1e-12);
    // remainder matrices are symmetric with empty first row/column
    for m in [&dec.a1pp, &dec.a2pp] {
        assert!(m.symmetry_defect() <= 1e-14);
        for i in 0..sys.n {
            assert_eq!(m.get(0, i), 0.0);
            assert_eq!(m.get(i, 0), 0.0);
        }
    }
    // the split reconstructs the diagonalized matrices
    for i in 0..sys.n {
        for j in 0..sys.n {
            assert!(
                (dec.p1x.get(i, j) + dec.a1pp.get(i, j) - dec.a1p.get(i, j)).abs() <= 1e-12
            );
            assert!(
                (dec.p1y.get(i, j) + dec.a2pp.get(i, j) - dec.a2p.get(i, j)).abs() <= 1e-12
            );
        }
    }
    assert_eq!(dec.dp[1], report.lambda);
    assert_eq!(dec.dp[2], report.lambda);
    assert_eq!(dec.dpp[0], 0.0);
    assert_eq!(dec.dpp[1], 0.0);
    assert_eq!(dec.dpp[2], 0.0);
    for i in 3..sys.n {
        assert!(dec.dpp[i] > 0.0);
    }
}

#[test]
fn diagonal_variable_round_trip() {
    let sys = parse_model("sn:8").unwrap();
    let (spec, _) = analyze(&sys);
    let n_cells = 13;
    let mut u = Field::zeros(n_cells, sys.n);
    for (k, x) in u.data.iter_mut().enumerate() {
        *x = (0.37 * k as f64).sin();
    }
    let v = to_diagonal(&u, &spec.q).unwrap();
    let back = from_diagonal(&v, &spec.q).unwrap();
    for (a, b) in u.data.iter().zip(&back.data) {
        assert!((a - b).abs() <= 1e-13);
    }
}

#[test]
fn asymmetric_input_is_rejected() {
    let a1 = DenseMatrix::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
    let a2 = DenseMatrix::zeros(2, 2);
    let r = DenseMatrix::diag(&[0.0, 1.0]);
    let sys = FriedrichsSystem::new(a1, a2, r, "broken");
    assert!(sys.validate().is_err());
}

#[test]
fn negative_relaxation_spectrum_is_rejected() {
    let a1 = DenseMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
    let a2 = DenseMatrix::zeros(2, 2);
    let r = DenseMatrix::diag(&[0.0, -1.0]);
    let sys = FriedrichsSystem::new(a1, a2, r, "negative");
    assert!(sys.validate().is_err() || sys.spectral().is_err());
}
