use criterion::{Criterion, black_box, criterion_group, criterion_main};
use memoryscope::dynamics::{DynamicalMapFamily, FpDephasingParams, ThicknessToTime, kappa};
use memoryscope::measure::{PairLattice, TimeGrid, measure_local_scan, measure_orthogonal_scan};
use memoryscope::qstate::{jordan_hahn_pair, testkit::random_density, trace_distance};
use memoryscope::surfaces::{DirectionLattice, make_convex_combination_surface};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bench_trace_distance(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for dim in [2usize, 4] {
        let a = random_density(dim, &mut rng);
        let b = random_density(dim, &mut rng);
        c.bench_function(&format!("trace_distance d{dim}"), |bench| {
            bench.iter(|| trace_distance(black_box(&a), black_box(&b)).unwrap())
        });
    }
}

fn bench_jordan_hahn(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random_density(3, &mut rng);
    let b = random_density(3, &mut rng);
    c.bench_function("jordan_hahn_pair d3", |bench| {
        bench.iter(|| jordan_hahn_pair(black_box(&a), black_box(&b)).unwrap())
    });
}

fn bench_kappa(c: &mut Criterion) {
    let params = FpDephasingParams::reported(0.64);
    c.bench_function("kappa", |bench| {
        bench.iter(|| kappa(black_box(2.0e-12), black_box(&params)).unwrap())
    });
}

fn bench_scans(c: &mut Criterion) {
    let params = FpDephasingParams::reported(0.64);
    let family =
        DynamicalMapFamily::fp_dephasing(params, ThicknessToTime::Affine { a: 2.55e-15, b: 0.0 })
            .unwrap();
    let grid = TimeGrid::new(175.0, 318.0, 500).unwrap();
    let rho0 = memoryscope::experiment::reference_state_1();
    let surface = make_convex_combination_surface(&rho0, 0.7).unwrap();
    let lattice = DirectionLattice::QubitAngles { n_theta: 20, n_phi: 40 };
    c.bench_function("local_scan 800 states x 500 times", |bench| {
        bench.iter(|| measure_local_scan(&family, &rho0, &surface, &lattice, &grid).unwrap())
    });
    let pairs = PairLattice::QubitAntipodal { n_theta: 20, n_phi: 40 };
    c.bench_function("orthogonal_scan 800 pairs x 500 times", |bench| {
        bench.iter(|| measure_orthogonal_scan(&family, &pairs, &grid).unwrap())
    });
}

criterion_group!(benches, bench_trace_distance, bench_jordan_hahn, bench_kappa, bench_scans);
criterion_main!(benches);
