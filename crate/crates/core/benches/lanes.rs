//! Parallel-vs-sequential lane comparisons for the data-parallel hot
//! loops, plus a small train-vs-full-rank pipeline contrast.
//!
//! Run with `cargo bench -p ttcell-core`; disable the parallel lane at
//! build time with `--no-default-features` to check the fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use ttcell_core::fdm::{central_diff_csr, LatticeSpec};
use ttcell_core::mals::MalsConfig;
use ttcell_core::par;
use ttcell_core::reference::ReferenceConfig;
use ttcell_core::rve::{generate_voronoi, VoronoiConfig};
use ttcell_core::thermal::{thermal_full, thermal_tt};
use ttcell_core::tt::TruncPolicy;

/// Periodic nearest-seed-point assignment over all nodes, both lanes.
fn bench_voronoi_assignment(c: &mut Criterion) {
    let mut group = c.benchmark_group("voronoi_assign");
    let spec = LatticeSpec::new(2, 7).unwrap();
    let cfg = VoronoiConfig { n_point: 100, v_f: 0.5, seed: 11 };
    // The generator itself runs through the parallel-capable lane; time an
    // equivalent explicit kernel on both lanes for a like-for-like compare.
    let d = spec.dim();
    let h = spec.h();
    let points: Vec<Vec<f64>> = (0..cfg.n_point)
        .map(|i| (0..d).map(|j| ((i * 37 + j * 101) % 961) as f64 / 961.0).collect())
        .collect();
    let assign = move |g: usize| -> usize {
        let coords = spec.node_coords(g);
        let mut best = f64::INFINITY;
        let mut idx = 0;
        for (i, p) in points.iter().enumerate() {
            let mut dist = 0.0;
            for (j, &pj) in p.iter().enumerate() {
                let dx = (h * coords[j] as f64 - pj).abs();
                let dx = dx.min(1.0 - dx);
                dist += dx * dx;
            }
            if dist < best {
                best = dist;
                idx = i;
            }
        }
        idx
    };
    let n = spec.total_nodes();
    group.bench_function(BenchmarkId::new("parallel", n), |b| {
        b.iter(|| black_box(par::map_indexed(n, &assign)))
    });
    group.bench_function(BenchmarkId::new("sequential", n), |b| {
        b.iter(|| black_box(par::map_indexed_seq(n, &assign)))
    });
    group.finish();
}

/// Sparse stencil matvec over the periodic lattice, both lanes.
fn bench_csr_matvec(c: &mut Criterion) {
    let mut group = c.benchmark_group("csr_matvec");
    let spec = LatticeSpec::new(2, 8).unwrap();
    let m = central_diff_csr(&spec, 0).unwrap();
    let x: Vec<f64> = (0..spec.total_nodes())
        .map(|i| (i as f64 * 0.618).sin())
        .collect();
    group.bench_function(BenchmarkId::new("parallel", x.len()), |b| {
        b.iter(|| black_box(m.matvec(&x)))
    });
    group.bench_function(BenchmarkId::new("sequential", x.len()), |b| {
        b.iter(|| black_box(m.matvec_seq(&x)))
    });
    group.finish();
}

/// Whole-pipeline contrast on a small case: capped train solve vs.
/// full-rank conjugate gradients.
fn bench_methods(c: &mut Criterion) {
    let mut group = c.benchmark_group("thermal_methods");
    group.sample_size(10);
    let spec = LatticeSpec::new(2, 5).unwrap();
    let cfg = VoronoiConfig { n_point: 30, v_f: 0.5, seed: 3 };
    let grid = generate_voronoi(&spec, &cfg).unwrap();
    let mals = MalsConfig {
        policy: TruncPolicy::with_eps_and_cap(1e-5, 8),
        tol: 1e-7,
        max_sweeps: 8,
        ..MalsConfig::default()
    };
    group.bench_function("tt", |b| {
        b.iter(|| black_box(thermal_tt(&grid, 1.0, 0.2, 1e-5, &mals).unwrap()))
    });
    group.bench_function("full", |b| {
        b.iter(|| {
            black_box(thermal_full(&grid, 1.0, 0.2, &ReferenceConfig::default()).unwrap())
        })
    });
    group.finish();
}

criterion_group!(lanes, bench_voronoi_assignment, bench_csr_matvec, bench_methods);
criterion_main!(lanes);
