//! Kernel microbenchmarks: spmv, dot, ICC(0) apply, and a short pipelined
//! solve on the reference 2D Laplacian.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use krylov_gap_core::precond::apply_preconditioner_into;
use krylov_gap_core::solvers::SolveOptions;
use krylov_gap_core::stability::ReplacementPolicy;
use krylov_gap_core::vector::dot;
use krylov_gap_core::{
    bicgstab_pipelined, icc0_factor, spmv, stencil_matrix, DenseVector, Preconditioner, ProblemId,
    StencilSpec,
};

fn bench_kernels(c: &mut Criterion) {
    let spec = StencilSpec::reference(ProblemId::Tp1).with_grid(100, 100, 1);
    let a = stencil_matrix(&spec).unwrap();
    let n = a.n_rows();
    let v = DenseVector::filled(n, 1.0 / (n as f64).sqrt());
    let icc = Preconditioner::Icc0(icc0_factor(&a).unwrap());

    c.bench_function("spmv_100x100", |bench| {
        bench.iter(|| spmv(&a, black_box(&v)).unwrap())
    });

    c.bench_function("dot_10000", |bench| {
        bench.iter(|| dot(black_box(&v), black_box(&v)).unwrap())
    });

    let mut out = vec![0.0; n];
    c.bench_function("icc0_apply_100x100", |bench| {
        bench.iter(|| apply_preconditioner_into(&icc, black_box(&v), &mut out))
    });

    let b = spmv(&a, &v).unwrap();
    let x0 = DenseVector::zeros(n);
    let opts = SolveOptions {
        tol: 1e-30,
        max_iters: 20,
        ..SolveOptions::default()
    };
    c.bench_function("pbicgstab_20_iters_100x100", |bench| {
        bench.iter(|| {
            bicgstab_pipelined(
                &a,
                &icc,
                black_box(&b),
                &x0,
                &opts,
                ReplacementPolicy::None,
                None,
            )
            .unwrap()
        })
    });
}

criterion_group!(kernels, bench_kernels);
criterion_main!(kernels);
