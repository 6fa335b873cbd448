use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::{DMatrix, DVector};
use routinesig::gmm::{bhattacharyya, FitOptions};
use routinesig::synth::EmissionSpec;
use routinesig::ingest::standardize;
use routinesig::{build_transitions, fit_gmm, generate, jsd, CohortSpec, CovarianceStructure};

fn cohort(n_participants: usize, n_days: usize) -> DMatrix<f64> {
    let spec = CohortSpec {
        n_participants,
        n_days,
        emissions: EmissionSpec::easy(),
        ..CohortSpec::reference()
    };
    let records = generate(&spec).unwrap().records;
    standardize(&records).unwrap().values
}

fn em_fit(c: &mut Criterion) {
    let data = cohort(20, 100);
    let mut group = c.benchmark_group("em_fit");
    group.sample_size(10);
    for structure in [CovarianceStructure::Full, CovarianceStructure::Diagonal] {
        let opts = FitOptions {
            n_restarts: 1,
            ..FitOptions::new(4, structure, 1)
        };
        group.bench_with_input(BenchmarkId::from_parameter(structure), &opts, |b, opts| {
            b.iter(|| fit_gmm(black_box(&data), opts).unwrap())
        });
    }
    group.finish();
}

fn distances(c: &mut Criterion) {
    let p: Vec<f64> = (1..=8).map(|i| i as f64 / 36.0).collect();
    let q: Vec<f64> = (1..=8).rev().map(|i| i as f64 / 36.0).collect();
    c.bench_function("jsd_k8", |b| b.iter(|| jsd(black_box(&p), black_box(&q)).unwrap()));

    let d = 13;
    let mu1 = DVector::zeros(d);
    let mu2 = DVector::from_element(d, 0.5);
    let s1 = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { 0.1 });
    let s2 = DMatrix::from_fn(d, d, |i, j| if i == j { 1.5 } else { -0.05 });
    c.bench_function("bhattacharyya_d13", |b| {
        b.iter(|| bhattacharyya(black_box(&mu1), black_box(&s1), black_box(&mu2), black_box(&s2)).unwrap())
    });
}

fn transitions(c: &mut Criterion) {
    let start = CohortSpec::reference().start_date;
    let days: Vec<_> = (0..270u64).map(|t| (start + chrono::Days::new(t), (t * 7 % 8) as usize)).collect();
    c.bench_function("transitions_270_days_k8", |b| b.iter(|| build_transitions(black_box(&days), 8, 1).unwrap()));
}

criterion_group!(benches, em_fit, distances, transitions);
criterion_main!(benches);
