use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ndarray::Axis;
use nodl_core::numerics::binary_search_lambda;
use nodl_core::{Dictionary, Encoder, LearnerConfig, LearnerState, SparsityTarget, SyntheticSpec};

const M: usize = 1024;
const K: usize = 200;

fn stream() -> nodl_core::SyntheticData {
    SyntheticSpec::default()
        .generate()
        .expect("default spec is valid")
}

fn lambda_search(c: &mut Criterion) {
    let dict = Dictionary::random(M, 1, None, 1).unwrap();
    let u = dict.column(0).to_owned();
    let target = SparsityTarget::new(50);
    c.bench_function("binary_search_lambda m=1024 beta=50", |b| {
        b.iter(|| binary_search_lambda(u.view(), &target).unwrap())
    });
}

fn encode(c: &mut Criterion) {
    let data = stream();
    let dict = Dictionary::random(M, K, Some(50), 2).unwrap();
    let enc = Encoder::new(dict.atoms(), true);
    let x = data.train[0].row(0);
    let target = SparsityTarget::new(50);
    c.bench_function("encode_target_nnz m=1024 k=200 beta=50", |b| {
        b.iter(|| enc.encode_target_nnz(x, &target).unwrap())
    });
}

fn trained_state() -> (LearnerState, ndarray::Array2<f64>) {
    let data = stream();
    let mut state = LearnerState::new(M, K, &LearnerConfig::default()).unwrap();
    let batch = data.train[0]
        .samples
        .select(Axis(0), &(0..20).collect::<Vec<_>>());
    state.process_batch(batch.view()).unwrap();
    let next = data.train[0]
        .samples
        .select(Axis(0), &(20..40).collect::<Vec<_>>());
    (state, next)
}

fn dictionary_update(c: &mut Criterion) {
    let (state, _) = trained_state();
    c.bench_function("dictionary_update m=1024 k=220", |b| {
        b.iter_batched(
            || state.clone(),
            |mut s| s.dictionary_update(),
            BatchSize::LargeInput,
        )
    });
}

fn process_batch(c: &mut Criterion) {
    let (state, next) = trained_state();
    let mut group = c.benchmark_group("process_batch");
    group.sample_size(10);
    group.bench_function("NODL batch of 20, m=1024", |b| {
        b.iter_batched(
            || state.clone(),
            |mut s| s.process_batch(next.view()).unwrap(),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(
    benches,
    lambda_search,
    encode,
    dictionary_update,
    process_batch
);
criterion_main!(benches);
