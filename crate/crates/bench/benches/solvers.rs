use admm_trajopt::admm::{solve_admm, WarmStart};
use admm_trajopt::models::car::{car_warm_start, default_car_settings, CarParams, CarSplit};
use admm_trajopt::models::walker::{default_walker_settings, run_walking, WalkerScenario};
use admm_trajopt::projection::project_block;
use admm_trajopt::{ddp, DdpSettings};
use admm_trajopt_bench::{projection_case, regulator};
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

fn ddp_regulator(c: &mut Criterion) {
    let mut group = c.benchmark_group("ddp_regulator");
    for n in [2, 6] {
        let (problem, init) = regulator(n, 100);
        let settings = DdpSettings::default();
        group.bench_with_input(BenchmarkId::from_parameter(2 * n), &n, |b, _| {
            b.iter(|| ddp::solve(&problem, black_box(&init), &settings).unwrap())
        });
    }
    group.finish();
}

fn projection(c: &mut Criterion) {
    let (primal, duals, sets) = projection_case(12, 6, 100);
    c.bench_function("project_block", |b| {
        b.iter(|| project_block(black_box(&primal), black_box(&duals), &sets).unwrap())
    });
}

fn car_admm(c: &mut Criterion) {
    let params = CarParams::default();
    let split = CarSplit::new(&params);
    let wholebody = car_warm_start(&params).unwrap();
    let mut settings = default_car_settings();
    settings.stopping.max_iterations = 5;
    let mut group = c.benchmark_group("car_admm");
    group.sample_size(10);
    group.bench_function("5_iterations", |b| {
        b.iter(|| {
            let init = WarmStart {
                wholebody: wholebody.clone(),
                centroidal: None,
            };
            solve_admm(&split, init, &settings).unwrap()
        })
    });
    group.finish();
}

fn walker_step(c: &mut Criterion) {
    let scenario = WalkerScenario {
        steps: 1,
        ..WalkerScenario::default()
    };
    let mut settings = default_walker_settings();
    settings.stopping.max_iterations = 3;
    let mut group = c.benchmark_group("walker");
    group.sample_size(10);
    group.bench_function("one_step_3_iterations", |b| {
        b.iter(|| run_walking(&scenario, &settings).unwrap())
    });
    group.finish();
}

criterion_group!(benches, ddp_regulator, projection, car_admm, walker_step);
criterion_main!(benches);
