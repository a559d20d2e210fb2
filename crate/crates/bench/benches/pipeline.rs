use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use meu_bench::fixture;
use meu_core::families::Family;
use meu_core::formulation::{assemble, Variant};
use meu_core::inference::policy_moments;
use meu_core::solve::{solve_lp, solve_milp};

fn inference(c: &mut Criterion) {
    let mut g = c.benchmark_group("policy_moments");
    for horizon in [2, 4, 8] {
        let (id, p, rjt, policy) = fixture(Family::Chess, 3, 2, horizon);
        g.bench_with_input(BenchmarkId::from_parameter(horizon), &horizon, |b, _| b.iter(|| policy_moments(&id, &p, &rjt, &policy).unwrap()));
    }
    g.finish();
}

fn formulation(c: &mut Criterion) {
    let mut g = c.benchmark_group("assemble");
    let (id, p, rjt, _) = fixture(Family::Chess, 3, 2, 4);
    for v in Variant::ALL {
        g.bench_function(v.name(), |b| b.iter(|| assemble(&id, &p, &rjt, v, true).unwrap()));
    }
    g.finish();
}

fn solving(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve");
    g.sample_size(10);
    let (id, p, rjt, _) = fixture(Family::Chess, 3, 2, 3);
    for v in [Variant::Qbar1, Variant::Qperpb] {
        let m = assemble(&id, &p, &rjt, v, true).unwrap();
        g.bench_function(format!("lp_{}", v.name()), |b| b.iter(|| solve_lp(&m).unwrap()));
        g.bench_function(format!("milp_{}", v.name()), |b| b.iter(|| solve_milp(&m, None, None).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, inference, formulation, solving);
criterion_main!(benches);
