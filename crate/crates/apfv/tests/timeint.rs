//! Time-integrator tests: dissipativity of the implicit step, stability of
//! the locally implicit update across stiffness regimes, per-step mass
//! conservation, and bitwise reproducibility.

use apfv::mesh::{MeshKind, Rect};
use apfv::schemes::{
    build_closure, damping_factors, Bc, BcKind, CellSource, ComposedOperator, FluxKind,
    HyperbolicOperator, JlbOperator,
};
use apfv::system::{Coefficients, Field};
use apfv::timeint::{stable_dt, weighted_l2, Integrator, TimeScheme};

struct Setup {
    mesh: apfv::mesh::Mesh,
    report: apfv::system::StructureReport,
    decomp: apfv::system::Decomposition,
    n_comp: usize,
}

fn setup(model: &str, kind: MeshKind, nx: usize) -> Setup {
    let sys = apfv::models::parse_model(model).unwrap();
    let mut spec = sys.spectral().unwrap();
    let report = sys.check_structure(&mut spec).unwrap();
    let decomp = sys.decompose(&spec, &report).unwrap();
    let mesh = kind.build(nx, nx, 3, Rect::unit()).unwrap();
    Setup { mesh, report, decomp, n_comp: sys.n }
}

fn wavy_field(n_cells: usize, n_comp: usize) -> Field {
    let mut v = Field::zeros(n_cells, n_comp);
    for (k, x) in v.data.iter_mut().enumerate() {
        *x = (0.61 * k as f64).sin() + 0.3 * (1.7 * k as f64).cos();
    }
    v
}

fn compose<'a>(
    s: &'a Setup,
    closure: &'a apfv::schemes::Closure,
    coeffs: &'a Coefficients,
    flux: FluxKind,
    damped: bool,
) -> ComposedOperator<'a> {
    let jlb = JlbOperator::new(&s.mesh, closure, &s.report, coeffs).unwrap();
    let mut hyp =
        HyperbolicOperator::remainder(&s.mesh, closure, &s.decomp, coeffs, flux).unwrap();
    if damped {
        let c0 = s.report.lambda / (s.report.a * s.report.a);
        let d = damping_factors(&s.mesh, closure, &hyp.speeds, coeffs, c0);
        hyp.set_damping(d);
    }
    ComposedOperator {
        jlb: Some(jlb),
        hyp: Some(hyp),
        source: CellSource::new(s.decomp.dpp.clone(), coeffs.eps),
        coeffs,
        n_comp: s.n_comp,
    }
}

fn kernel_mass(mesh: &apfv::mesh::Mesh, v: &Field) -> f64 {
    (0..v.n_cells()).map(|j| mesh.cell_area[j] * v.cell(j)[0]).sum()
}

#[test]
fn implicit_step_does_not_increase_the_weighted_norm() {
    let s = setup("s2", MeshKind::RandomQuad, 12);
    let coeffs = Coefficients::uniform(1e-6, 1.0, s.mesh.n_cells());
    let closure = build_closure(&s.mesh, Bc::uniform(BcKind::Periodic)).unwrap();
    let op = compose(&s, &closure, &coeffs, FluxKind::Upwind, false);
    let mut integ = Integrator::new(&op, &s.mesh, TimeScheme::Implicit);
    let h = s.mesh.h_min();
    let dt = 0.5 * h * h;
    let mut v = wavy_field(s.mesh.n_cells(), s.n_comp);
    let mut prev = weighted_l2(&s.mesh, &v);
    for _ in 0..5 {
        integ.step(&mut v, dt).unwrap();
        let now = weighted_l2(&s.mesh, &v);
        assert!(
            now <= prev * (1.0 + 1e-10),
            "weighted norm grew from {prev} to {now}"
        );
        prev = now;
    }
}

#[test]
fn implicit_step_conserves_kernel_mass_per_step() {
    for flux in [FluxKind::Upwind, FluxKind::BlockRusanov] {
        let s = setup("s2", MeshKind::Kershaw, 8);
        let coeffs = Coefficients::uniform(1e-4, 1.0, s.mesh.n_cells());
        let closure = build_closure(&s.mesh, Bc::uniform(BcKind::Periodic)).unwrap();
        let op = compose(&s, &closure, &coeffs, flux, false);
        let mut integ = Integrator::new(&op, &s.mesh, TimeScheme::Implicit);
        let h = s.mesh.h_min();
        let mut v = wavy_field(s.mesh.n_cells(), s.n_comp);
        let m0 = kernel_mass(&s.mesh, &v);
        for _ in 0..3 {
            integ.step(&mut v, 0.5 * h * h).unwrap();
            let m = kernel_mass(&s.mesh, &v);
            assert!(
                (m - m0).abs() <= 1e-10 * m0.abs().max(1.0),
                "{flux:?}: mass drifted from {m0} to {m}"
            );
        }
    }
}

#[test]
fn locally_implicit_update_stays_bounded_across_stiffness() {
    let s = setup("s2", MeshKind::Smooth, 12);
    let h = s.mesh.h_min();
    for eps in [1e-2, 1e-4, 1e-6] {
        let coeffs = Coefficients::uniform(eps, 1.0, s.mesh.n_cells());
        let closure = build_closure(&s.mesh, Bc::uniform(BcKind::Periodic)).unwrap();
        let op = compose(&s, &closure, &coeffs, FluxKind::BlockRusanov, true);
        let mut integ = Integrator::new(&op, &s.mesh, TimeScheme::SemiImplicit);
        let dt = 0.5 * h * h;
        let mut v = wavy_field(s.mesh.n_cells(), s.n_comp);
        let start = v.max_abs();
        for _ in 0..40 {
            integ.step(&mut v, dt).unwrap();
            assert!(v.data.iter().all(|x| x.is_finite()));
        }
        assert!(
            v.max_abs() <= 10.0 * start,
            "eps = {eps:.0e}: field grew from {start} to {}",
            v.max_abs()
        );
    }
}

#[test]
fn explicit_and_implicit_agree_for_small_steps() {
    // with dt far below both stability limits the schemes must agree to O(dt^2)
    let s = setup("s2", MeshKind::Cartesian, 8);
    let coeffs = Coefficients::uniform(1.0, 1.0, s.mesh.n_cells());
    let closure = build_closure(&s.mesh, Bc::uniform(BcKind::Periodic)).unwrap();
    let op = compose(&s, &closure, &coeffs, FluxKind::Upwind, false);
    let dt = 1e-6;
    let v0 = wavy_field(s.mesh.n_cells(), s.n_comp);

    let mut ve = v0.clone();
    Integrator::new(&op, &s.mesh, TimeScheme::Explicit).step(&mut ve, dt).unwrap();
    let mut vi = v0.clone();
    Integrator::new(&op, &s.mesh, TimeScheme::Implicit).step(&mut vi, dt).unwrap();

    let diff = ve
        .data
        .iter()
        .zip(&vi.data)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    // one-step defect between forward and backward Euler is O(dt^2 * |L^2 v|)
    assert!(diff <= 1e-7, "one-step defect {diff} too large for dt = {dt}");
    assert!(diff > 0.0, "schemes should not be bitwise identical here");
}

#[test]
fn stable_dt_orders_the_schemes_as_expected() {
    let mesh = MeshKind::Cartesian.build(16, 16, 1, Rect::unit()).unwrap();
    let eps = 1e-4;
    let explicit = stable_dt(TimeScheme::Explicit, &mesh, eps, 1.0, 1.0, 1.0, 2.0, 0.45);
    let semi = stable_dt(TimeScheme::SemiImplicit, &mesh, eps, 1.0, 1.0, 1.0, 2.0, 0.45);
    let implicit = stable_dt(TimeScheme::Implicit, &mesh, eps, 1.0, 1.0, 1.0, 2.0, 0.45);
    assert!(explicit < semi, "explicit step {explicit} should be below semi {semi}");
    assert!(semi < implicit, "semi step {semi} should be below implicit {implicit}");
    // the explicit step collapses with the stiffness
    assert!(explicit <= 0.45 * 2.0 * eps * eps + 1e-18);
}

#[test]
fn run_truncates_the_final_step() {
    let s = setup("s2", MeshKind::Cartesian, 6);
    let coeffs = Coefficients::uniform(1e-2, 1.0, s.mesh.n_cells());
    let closure = build_closure(&s.mesh, Bc::uniform(BcKind::Periodic)).unwrap();
    let op = compose(&s, &closure, &coeffs, FluxKind::Upwind, false);
    let mut integ = Integrator::new(&op, &s.mesh, TimeScheme::Implicit);
    let mut v = wavy_field(s.mesh.n_cells(), s.n_comp);
    let mut last_t = 0.0;
    let steps = integ
        .run(&mut v, 0.004, 0.01, |_, t, _| last_t = t)
        .unwrap();
    assert_eq!(steps, 3);
    assert!((last_t - 0.01).abs() <= 1e-14);
    assert!(integ.run(&mut v, -1.0, 0.01, |_, _, _| {}).is_err());
}

#[test]
fn runs_are_bitwise_reproducible() {
    let run_once = || {
        let s = setup("s2", MeshKind::RandomQuad, 10);
        let coeffs = Coefficients::uniform(1e-4, 1.0, s.mesh.n_cells());
        let closure = build_closure(&s.mesh, Bc::uniform(BcKind::Periodic)).unwrap();
        let op = compose(&s, &closure, &coeffs, FluxKind::BlockRusanov, true);
        let mut integ = Integrator::new(&op, &s.mesh, TimeScheme::SemiImplicit);
        let mut v = wavy_field(s.mesh.n_cells(), s.n_comp);
        let h = s.mesh.h_min();
        integ.run(&mut v, 0.5 * h * h, 0.01, |_, _, _| {}).unwrap();
        v.data
    };
    let a = run_once();
    let b = run_once();
    assert_eq!(a, b, "identical runs must produce identical bits");
}
