use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use embia::init::{bia_init, random_z, stream_rng, BiaConfig};
use embia::nalgebra::DMatrix;
use embia::{
    builtin_karate, em_fit, load_matrix, ConvergenceConfig, CovarianceStructure, DataKind, GaussianMixture,
    LatentClass, LoadOptions, StochasticBlock,
};
use rand::Rng;

fn ais() -> DMatrix<f64> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/ais.csv");
    load_matrix(path, DataKind::Continuous, &LoadOptions::default()).expect("ais fixture").values
}

fn binary(n: usize, m: usize) -> DMatrix<f64> {
    let mut rng = stream_rng(1, 0);
    DMatrix::from_fn(n, m, |i, _| f64::from(rng.gen_bool(if i % 2 == 0 { 0.7 } else { 0.3 })))
}

fn em(c: &mut Criterion) {
    let x = ais();
    let gmm = GaussianMixture::new(&x, CovarianceStructure::Eev).unwrap();
    let b = binary(300, 8);
    let lca = LatentClass::new(&b).unwrap();
    let karate = builtin_karate();
    let sbm = StochasticBlock::with_flat_priors(&karate.values, 4).unwrap();
    let mut seed = 0;
    let mut next = || {
        seed += 1;
        stream_rng(seed, 0)
    };

    let mut group = c.benchmark_group("em_fit");
    group.bench_function("gmm_eev_ais_g2", |bch| {
        bch.iter_batched(
            || random_z(x.nrows(), 2, &mut next()).unwrap(),
            |z| em_fit(&gmm, &z, &ConvergenceConfig::continuous()),
            BatchSize::SmallInput,
        )
    });
    group.bench_function("lca_300x8_g3", |bch| {
        bch.iter_batched(
            || random_z(300, 3, &mut next()).unwrap(),
            |z| em_fit(&lca, &z, &ConvergenceConfig::categorical()),
            BatchSize::SmallInput,
        )
    });
    group.bench_function("sbm_karate_g4", |bch| {
        bch.iter_batched(
            || random_z(34, 4, &mut next()).unwrap(),
            |z| em_fit(&sbm, &z, &ConvergenceConfig::continuous()),
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

fn bia(c: &mut Criterion) {
    let karate = builtin_karate();
    let sbm = StochasticBlock::with_flat_priors(&karate.values, 4).unwrap();
    let mut group = c.benchmark_group("bia_init");
    group.sample_size(10);
    group.bench_function("sbm_karate_j50_t15", |bch| {
        let mut seed = 0;
        bch.iter(|| {
            seed += 1;
            bia_init(&sbm, 4, &BiaConfig::new(50, 15, seed).unwrap(), &ConvergenceConfig::continuous())
        })
    });
    group.finish();
}

criterion_group!(benches, em, bia);
criterion_main!(benches);
