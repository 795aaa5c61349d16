use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use adsat_core::bp::run_bp;
use adsat_core::formula::{assign_negations, generate_regular};
use adsat_core::ldev::{popdyn, BpBase, SpBase};
use adsat_core::sp::run_sp;
use adsat_core::{count_models, BpConfig, CountLimits, Ensemble, NegationMode, PopDynConfig, SpConfig};

fn bp_sweeps(c: &mut Criterion) {
    let g = generate_regular(3000, 5, 3, 1).unwrap();
    let j = assign_negations(&g, NegationMode::Random, 2);
    let cfg = BpConfig { max_sweeps: 10, tol: 0.0, ..BpConfig::default() };
    c.bench_function("bp 10 sweeps N=3000 L=5", |b| b.iter(|| run_bp(&g, &j, &cfg)));
}

fn sp_sweeps(c: &mut Criterion) {
    let g = generate_regular(3000, 13, 3, 3).unwrap();
    let j = assign_negations(&g, NegationMode::Random, 4);
    let cfg = SpConfig { max_sweeps: 10, tol: 0.0, average_window: None, ..SpConfig::default() };
    c.bench_function("sp 10 sweeps N=3000 L=13", |b| b.iter(|| run_sp(&g, &j, &cfg)));
}

fn popdyn_sweep(c: &mut Criterion) {
    let ens = Ensemble::Regular { degree: 4, clause_size: 3 };
    let cfg = PopDynConfig { population: 1000, ..PopDynConfig::default() };
    let mut bp = popdyn::<BpBase>(&ens, &cfg);
    c.bench_function("popdyn bp sweep P=1000 L=4", |b| b.iter(|| bp.sweep(5.0)));
    let ens = Ensemble::Regular { degree: 10, clause_size: 3 };
    let mut sp = popdyn::<SpBase>(&ens, &cfg);
    c.bench_function("popdyn sp sweep P=1000 L=10", |b| b.iter(|| sp.sweep(-2.0)));
    c.bench_function("popdyn bp estimate P=1000 L=4", |b| b.iter(|| bp.estimate(5.0, 1000, 7)));
}

fn exact_count(c: &mut Criterion) {
    let g = generate_regular(30, 4, 3, 5).unwrap();
    let mut seed = 0;
    c.bench_function("count_models N=30 L=4", |b| {
        b.iter_batched(
            || {
                seed += 1;
                assign_negations(&g, NegationMode::Random, seed)
            },
            |j| count_models(&g, &j, &CountLimits::default()).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, bp_sweeps, sp_sweeps, popdyn_sweep, exact_count);
criterion_main!(benches);
