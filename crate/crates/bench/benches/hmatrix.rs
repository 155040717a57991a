//! Criterion benchmarks for the compression and solve kernels on a
//! mid-size parallel-plates cavity.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use faer::Mat;

use radcav::cluster::{build_block_tree, build_index_tree};
use radcav::hmatrix::{aca_full_pivot_mat, assemble_hmatrix_symmetric, hlu_factorize};
use radcav::mesh::generators::{gen_parallel_plates, CAVITY_TAG};
use radcav::mesh::extract_boundary;
use radcav::viewfactor::{assemble_dense_f, viewfactor_entry, QuadPolicy};

fn plates_fixture(m: usize) -> (radcav::mesh::SurfaceMesh, Mat<f64>) {
    let mesh = Arc::new(gen_parallel_plates(1.0, 1.0, m, 1).unwrap());
    let surf = extract_boundary(&mesh, &[CAVITY_TAG]).unwrap();
    let dense = assemble_dense_f(&surf, &QuadPolicy::default()).unwrap();
    (surf, dense)
}

fn bench_viewfactor_entry(c: &mut Criterion) {
    let mesh = Arc::new(gen_parallel_plates(1.0, 1.0, 20, 1).unwrap());
    let surf = extract_boundary(&mesh, &[CAVITY_TAG]).unwrap();
    let policy = QuadPolicy::default();
    let n = surf.n_facets();
    c.bench_function("viewfactor_entry_near_and_far", |b| {
        b.iter(|| {
            // one near pair (same plate edge neighbors) and one far pair
            let near = viewfactor_entry(&surf, 0, 1, &policy).unwrap();
            let far = viewfactor_entry(&surf, 0, n - 1, &policy).unwrap();
            near + far
        })
    });
}

fn bench_aca_cross_block(c: &mut Criterion) {
    let (surf, dense) = plates_fixture(20);
    let n = surf.n_facets();
    // the plate-to-plate coupling block
    let block = Mat::from_fn(n / 2, n / 2, |i, j| dense[(i, n / 2 + j)]);
    c.bench_function("aca_full_pivot_plate_block_1e-4", |b| {
        b.iter_batched(
            || block.clone(),
            |blk| aca_full_pivot_mat(blk, 1e-4),
            BatchSize::LargeInput,
        )
    });
}

fn bench_assembly_and_matvec(c: &mut Criterion) {
    let (surf, dense) = plates_fixture(20);
    let n = surf.n_facets();
    let tree = Arc::new(build_index_tree(&surf.centroids(), 64));
    let blocks = Arc::new(build_block_tree(tree, 2.0));
    let h = assemble_hmatrix_symmetric(|i, j| dense[(i, j)], &blocks, 1e-3);
    let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.1).sin()).collect();

    c.bench_function("assemble_hmatrix_800_1e-3", |b| {
        b.iter(|| assemble_hmatrix_symmetric(|i, j| dense[(i, j)], &blocks, 1e-3))
    });
    c.bench_function("hmatrix_matvec_800", |b| b.iter(|| h.matvec(&x)));
    c.bench_function("dense_matvec_800", |b| {
        b.iter(|| {
            let mut y = vec![0.0; n];
            for i in 0..n {
                let mut acc = 0.0;
                for (j, xj) in x.iter().enumerate() {
                    acc += dense[(i, j)] * xj;
                }
                y[i] = acc;
            }
            y
        })
    });
}

fn bench_hlu(c: &mut Criterion) {
    let (surf, dense) = plates_fixture(20);
    let areas = surf.areas();
    let tree = Arc::new(build_index_tree(&surf.centroids(), 64));
    let blocks = Arc::new(build_block_tree(tree, 2.0));
    let mut h = assemble_hmatrix_symmetric(|i, j| dense[(i, j)], &blocks, 1e-3);
    let neg_lambda: Vec<f64> = areas.iter().map(|a| -(1.0 - 0.8) / a).collect();
    h.scale_rows(&neg_lambda);
    h.add_identity().unwrap();
    let factors = hlu_factorize(&h, 1e-3).unwrap();
    let b_vec: Vec<f64> = (0..surf.n_facets()).map(|i| (i as f64 * 0.3).cos()).collect();

    c.bench_function("hlu_factorize_reflection_800_1e-3", |b| {
        b.iter(|| hlu_factorize(&h, 1e-3).unwrap())
    });
    c.bench_function("hlu_solve_800", |b| b.iter(|| factors.solve(&b_vec)));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_viewfactor_entry, bench_aca_cross_block, bench_assembly_and_matvec, bench_hlu
}
criterion_main!(benches);
