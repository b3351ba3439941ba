use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use krigvoi::config::RunConfig;
use krigvoi::kriging::{FitOptions, KrigingModel, Scaling, TrainingSet};
use krigvoi::prob::{lhs_sample, PoissonBinomial};
use krigvoi::truss::BridgeModel;

fn bridge_inputs(n: usize, seed: u64) -> krigvoi::prob::SampleMatrix {
    lhs_sample(&RunConfig::default().inputs.marginals(), n, seed).unwrap()
}

fn trained(m: usize) -> (KrigingModel, krigvoi::prob::SampleMatrix) {
    let bridge = BridgeModel::default();
    let pool = bridge_inputs(10_000, 1);
    let rows: Vec<Vec<f64>> = pool.rows().take(m).map(|r| r.to_vec()).collect();
    let y: Vec<f64> = rows.iter().map(|r| bridge.deflection(r).unwrap()).collect();
    let training = TrainingSet::from_rows(pool.n_cols(), &rows, &y).unwrap();
    let scaling = Scaling::from_samples(&pool);
    (KrigingModel::fit(&training, &scaling, &FitOptions::default()).unwrap(), pool)
}

fn kriging(c: &mut Criterion) {
    let mut g = c.benchmark_group("kriging");
    g.sample_size(10);
    for m in [20, 60] {
        let bridge = BridgeModel::default();
        let pool = bridge_inputs(1_000, 2);
        let rows: Vec<Vec<f64>> = pool.rows().take(m).map(|r| r.to_vec()).collect();
        let y: Vec<f64> = rows.iter().map(|r| bridge.deflection(r).unwrap()).collect();
        let training = TrainingSet::from_rows(pool.n_cols(), &rows, &y).unwrap();
        let scaling = Scaling::from_samples(&pool);
        g.bench_with_input(BenchmarkId::new("fit", m), &m, |b, _| {
            b.iter(|| KrigingModel::fit(black_box(&training), &scaling, &FitOptions::default()).unwrap())
        });
    }
    let (model, pool) = trained(60);
    g.bench_function("predict_10000_m60", |b| b.iter(|| model.predict(black_box(&pool)).unwrap()));
    g.bench_function("predict_screened_10000_m60", |b| {
        b.iter(|| model.predict_screened(black_box(&pool), &[0.09, 0.11], 8.0).unwrap())
    });
    g.finish();
}

fn poisson_binomial(c: &mut Criterion) {
    let probs: Vec<f64> = (0..2_000).map(|i| ((i * 37) % 1000) as f64 / 2000.0).collect();
    let pb = PoissonBinomial::new(probs).unwrap();
    c.bench_function("poisson_binomial_inverse_cdf_2000", |b| {
        b.iter(|| black_box(&pb).inverse_cdf(0.975).unwrap())
    });
}

fn truss(c: &mut Criterion) {
    let bridge = BridgeModel::default();
    let x = bridge_inputs(1, 3).row(0).to_vec();
    c.bench_function("truss_deflection", |b| b.iter(|| bridge.deflection(black_box(&x)).unwrap()));
}

criterion_group!(benches, kriging, poisson_binomial, truss);
criterion_main!(benches);
