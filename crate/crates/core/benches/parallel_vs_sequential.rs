use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use syllab_core::corpus::{synthesize_corpus, SynthesisConfig};
use syllab_core::nn::tagger::{ModelKind, Tagger, TaggerConfig};
use syllab_core::nn::tensor::{gemm, gemm_sequential, MatRef};
use syllab_core::nn::vocab::Vocabulary;
use syllab_core::par;

fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn bench_gemm(c: &mut Criterion) {
    let mut group = c.benchmark_group("gemm");
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for &(m, k, n) in &[(128, 256, 1024), (1024, 512, 1024)] {
        let a = random(&mut rng, m * k);
        let b = random(&mut rng, k * n);
        let mut out = vec![0.0; m * n];
        let id = format!("{m}x{k}x{n}");
        group.bench_function(BenchmarkId::new("parallel", &id), |bch| {
            bch.iter(|| gemm(1.0, MatRef::new(&a, m, k), MatRef::new(&b, k, n), 0.0, black_box(&mut out)))
        });
        group.bench_function(BenchmarkId::new("sequential", &id), |bch| {
            bch.iter(|| gemm_sequential(1.0, MatRef::new(&a, m, k), MatRef::new(&b, k, n), 0.0, black_box(&mut out)))
        });
    }
    group.finish();
}

fn bench_prediction(c: &mut Criterion) {
    let mut group = c.benchmark_group("batch_prediction");
    group.sample_size(10);
    let words = synthesize_corpus(&SynthesisConfig::published(1024, 5)).unwrap();
    let vocab = Vocabulary::standard();
    let ids: Vec<Vec<usize>> = words.iter().map(|w| vocab.encode(w.surface(), false).unwrap()).collect();
    let chunks: Vec<&[Vec<usize>]> = ids.chunks(128).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = Tagger::new(&mut rng, TaggerConfig::published(ModelKind::Blstm)).unwrap();
    let predict = |chunk: &&[Vec<usize>]| model.predict_ids(chunk, chunk.len()).unwrap();
    #[cfg(feature = "parallel")]
    group.bench_function("blstm_1024_words/parallel", |b| b.iter(|| par::parallel::map(&chunks, predict)));
    group.bench_function("blstm_1024_words/sequential", |b| b.iter(|| par::sequential::map(&chunks, predict)));
    group.finish();
}

criterion_group!(benches, bench_gemm, bench_prediction);
criterion_main!(benches);
