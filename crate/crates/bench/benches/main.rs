use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use moderate_core::fields::{InitialDensity, Vn};
use moderate_core::grid::{GridField, GridSpec};
use moderate_core::kernels::{build_regularized, KernelKind};
use moderate_core::mollifiers::{ModerateScaling, Mollifier};
use moderate_core::noise::{build_noise, sample_shared_increments, velocity_increment2};
use moderate_core::particles::{init_ensemble, DriftEngine};
use moderate_core::pde::{KernelMode, PdeSolver};
use moderate_core::rng;

fn vn_for(n: u64) -> Vn {
    let scaling = ModerateScaling::new(1.0 / 64.0, n, 4.0, 4.0, 2, true).unwrap();
    Vn::new(Mollifier::standard(2, 1.0), scaling)
}

fn bench_drift_engines(c: &mut Criterion) {
    let spec = GridSpec::new(128, 8.0).unwrap();
    let kernel = KernelMode::Regularized {
        kind: KernelKind::BiotSavart,
        epsilon: 0.5,
        rho_radius: 1.0,
    };
    let mut group = c.benchmark_group("drift");
    for &n in &[64u64, 256, 1024, 4096] {
        let vn = vn_for(n);
        let ens = init_ensemble(n, InitialDensity::Gaussian { sigma: 1.0 }, 1, 0);
        let grid = DriftEngine::grid(spec, kernel, vn).unwrap();
        group.bench_with_input(BenchmarkId::new("grid_fft", n), &n, |b, _| {
            b.iter(|| grid.drift(&ens).unwrap())
        });
        if n <= 1024 {
            let direct = DriftEngine::direct(spec, kernel, &vn).unwrap();
            group.bench_with_input(BenchmarkId::new("direct_n2", n), &n, |b, _| {
                b.iter(|| direct.drift(&ens).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_pde_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("pde_step");
    for &n in &[128usize, 256] {
        let spec = GridSpec::new(n, 8.0).unwrap();
        let solver = PdeSolver::new(spec, 0.4, KernelMode::Exact(KernelKind::BiotSavart)).unwrap();
        let f = GridField::from_fn(spec, |p| {
            (-(p[0] * p[0] + p[1] * p[1]) / 2.0).exp() / (2.0 * std::f64::consts::PI)
        });
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solver.step(&f, 1e-3))
        });
    }
    group.finish();
}

fn bench_noise_increments(c: &mut Criterion) {
    let mut group = c.benchmark_group("noise_increment");
    for &m in &[64usize, 256, 1024] {
        let field = build_noise(2, 4.0, 0.0, m, 7, 0).unwrap();
        let mut rng = rng::stream(7, rng::Domain::NoiseIncrements, 0);
        let incs = sample_shared_increments(&field, 1e-3, &mut rng);
        group.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, _| {
            b.iter(|| velocity_increment2(&field, &incs, [0.3, -0.4]))
        });
    }
    group.finish();
}

fn bench_kernel_table(c: &mut Criterion) {
    c.bench_function("regularized_kernel_build_256", |b| {
        b.iter(|| build_regularized(KernelKind::BiotSavart, 0.1, 1.0, 256, 4.0).unwrap())
    });
}

criterion_group!(
    benches,
    bench_drift_engines,
    bench_pde_step,
    bench_noise_increments,
    bench_kernel_table
);
criterion_main!(benches);
