use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use dbd_bench::fixture;
use dbd_core::lifting::{adjoint_comms, adjoint_radar, apply_forward, lift};
use dbd_core::recovery::{coarse_sizes, Channel, DualPolynomial};
use dbd_core::sdp::{build_dual_sdp, SdpConfig};
use dbd_core::solver::Cone;
use dbd_core::{GramMode, ParamTriple, C64};

const SIZES: [(usize, usize, usize, usize); 3] = [(5, 3, 2, 2), (5, 5, 3, 3), (9, 9, 3, 3)];

fn label(s: &(usize, usize, usize, usize)) -> String {
    format!("M{}P{}Nr{}K{}", s.0, s.1, s.2, s.3)
}

fn operators(c: &mut Criterion) {
    let mut g = c.benchmark_group("operators");
    for s in SIZES {
        let (scene, sub, y) = fixture(s.0, s.1, s.2, s.3);
        let pair = lift(&scene, &sub).unwrap();
        g.bench_with_input(BenchmarkId::new("forward", label(&s)), &pair, |b, pair| {
            b.iter(|| apply_forward(black_box(pair), &sub, &scene.dims).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("adjoint", label(&s)), &y.y, |b, q| {
            b.iter(|| {
                (adjoint_radar(black_box(q), &sub, &scene.dims).unwrap(), adjoint_comms(q, &sub, &scene.dims).unwrap())
            })
        });
    }
    g.finish();
}

fn psd_projection(c: &mut Criterion) {
    let mut g = c.benchmark_group("psd_projection");
    g.sample_size(20);
    for d in [32, 75, 150] {
        let cone = Cone::HermitianPsd { dim: d };
        // Deterministic indefinite Hermitian matrix, packed.
        let v: Vec<f64> = (0..cone.len()).map(|i| ((i * 7919) % 1000) as f64 / 500.0 - 1.0).collect();
        g.bench_with_input(BenchmarkId::from_parameter(d), &v, |b, v| {
            b.iter(|| {
                let mut w = v.clone();
                cone.project(black_box(&mut w)).unwrap();
                w
            })
        });
    }
    g.finish();
}

fn polynomial(c: &mut Criterion) {
    let mut g = c.benchmark_group("dual_polynomial");
    g.sample_size(20);
    for s in SIZES {
        let (scene, sub, y) = fixture(s.0, s.1, s.2, s.3);
        let q: Vec<C64> = y.y.iter().map(|z| z * 0.1).collect();
        let poly = DualPolynomial::new(&q, &sub, &scene.dims, Channel::Radar).unwrap();
        let sizes = coarse_sizes(&scene.dims, 4);
        g.bench_function(BenchmarkId::new("fft_field", label(&s)), |b| {
            b.iter(|| poly.field(black_box(sizes), ParamTriple::new(0.0, 0.0, 0.0)).unwrap())
        });
        g.bench_function(BenchmarkId::new("value_and_gradient", label(&s)), |b| {
            b.iter(|| poly.value_and_gradient(black_box(&ParamTriple::new(0.3, 0.6, 0.1))))
        });
    }
    g.finish();
}

fn assembly(c: &mut Criterion) {
    let mut g = c.benchmark_group("sdp_assembly");
    g.sample_size(10);
    for s in SIZES {
        let (_, sub, y) = fixture(s.0, s.1, s.2, s.3);
        let cfg = SdpConfig { gram_mode: GramMode::Split, ..SdpConfig::default() };
        g.bench_function(BenchmarkId::from_parameter(label(&s)), |b| {
            b.iter(|| build_dual_sdp(black_box(&y), &sub, &cfg).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, operators, psd_projection, polynomial, assembly);
criterion_main!(benches);
