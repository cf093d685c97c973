//! Operator-application benchmarks. Build with `--features parallel`
//! (default) or `--no-default-features` to compare the rayon and sequential
//! code paths; the benchmark itself is identical.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use apfv::mesh::build_cartesian;
use apfv::mesh::Rect;
use apfv::models::{sn_quadrature, sn_system};
use apfv::schemes::{
    build_closure, Bc, BcKind, CellSource, ComposedOperator, FluxKind, HyperbolicOperator,
    JlbOperator,
};
use apfv::system::{Coefficients, Field};

fn bench_apply(c: &mut Criterion) {
    let system = sn_system(&sn_quadrature(4).unwrap()).unwrap();
    let mut spec = system.spectral().unwrap();
    let report = system.check_structure(&mut spec).unwrap();
    let decomp = system.decompose(&spec, &report).unwrap();
    let mesh = build_cartesian(128, 128, Rect::new(0.0, 0.0, 2.0, 2.0)).unwrap();
    let closure = build_closure(&mesh, Bc::uniform(BcKind::Vacuum)).unwrap();
    let coeffs = Coefficients::uniform(1e-6, 1.0, mesh.n_cells());
    let jlb = JlbOperator::new(&mesh, &closure, &report, &coeffs).unwrap();
    let hyp =
        HyperbolicOperator::remainder(&mesh, &closure, &decomp, &coeffs, FluxKind::Upwind)
            .unwrap();
    let op = ComposedOperator {
        jlb: Some(jlb),
        hyp: Some(hyp),
        source: CellSource::new(decomp.dpp.clone(), coeffs.eps),
        coeffs: &coeffs,
        n_comp: system.n,
    };
    let mut v = Field::zeros(mesh.n_cells(), system.n);
    for j in 0..mesh.n_cells() {
        let x = mesh.cell_center[j];
        v.cell_mut(j)[0] = (x[0] * 1.7).sin() * (x[1] * 2.3).cos();
    }

    let mode = if cfg!(feature = "parallel") { "parallel" } else { "sequential" };
    c.bench_function(&format!("composed_apply_128x128_{mode}"), |b| {
        b.iter_batched(|| v.clone(), |state| op.apply(&state), BatchSize::LargeInput)
    });

    c.bench_function(&format!("node_solve_128x128_{mode}"), |b| {
        b.iter(|| op.jlb.as_ref().unwrap().node_velocities(&v))
    });
}

criterion_group!(benches, bench_apply);
criterion_main!(benches);
