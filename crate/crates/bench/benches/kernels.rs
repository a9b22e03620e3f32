use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use xvqa::explainers::{CaptionGenerator, CaptionerDims, DecodeMode};
use xvqa::kernel::{lstm_sequence_backward, lstm_sequence_forward, LstmParams};
use xvqa::metrics::sentence_accuracy;
use xvqa::reasoner::{AblationMode, ReasonerDims, ReasonerInput, ReasonerModel};
use xvqa::synthworld::{generate_dataset, GenConfig, Instance};
use xvqa_bench::small_world;

fn lstm(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = LstmParams::init(64, 64, &mut rng);
    let xs: Vec<Vec<f64>> = (0..12)
        .map(|_| (0..64).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    c.bench_function("lstm forward 12x64", |b| b.iter(|| lstm_sequence_forward(&p, black_box(&xs))));
    let caches = lstm_sequence_forward(&p, &xs);
    let dh = vec![vec![0.1; 64]; xs.len()];
    c.bench_function("lstm backward 12x64", |b| {
        b.iter_batched(
            || LstmParams::zeros(64, 64),
            |mut g| lstm_sequence_backward(&p, &caches, &dh, &mut g),
            BatchSize::SmallInput,
        )
    });
}

fn metrics(c: &mut Criterion) {
    let w = small_world(500);
    let refs: Vec<Vec<Vec<String>>> = w.val.iter().map(Instance::caption_tokens).collect();
    c.bench_function("fused sentence accuracy x100", |b| {
        b.iter(|| {
            // score each caption against its neighbour's references
            refs.iter()
                .zip(refs.iter().cycle().skip(1))
                .map(|(r, other)| sentence_accuracy(&other[0], r, &w.idf))
                .sum::<f64>()
        })
    });
}

fn models(c: &mut Criterion) {
    let w = small_world(500);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dims = ReasonerDims {
        mode: AblationMode::Full,
        words: w.word_list.len(),
        embed: 32,
        hidden: 32,
        answers: w.candidates.len(),
        batch_norm: true,
        max_len: 20,
    };
    let model = ReasonerModel::init(dims, w.vocab.clone(), &mut rng);
    let inst = &w.val[0];
    let (q, cap) = (inst.question_tokens(), inst.caption_tokens().remove(0));
    let probs = inst.labels();
    let input = ReasonerInput {
        word_probs: Some(&probs),
        caption: Some(&cap),
        question: &q,
    };
    c.bench_function("reasoner forward (full)", |b| b.iter(|| model.reason(black_box(&input)).unwrap()));

    let cdims = CaptionerDims {
        features: inst.scene_features.len(),
        embed: 32,
        image_proj: 32,
        hidden: 64,
    };
    let cap_model = CaptionGenerator::init(cdims, w.vocab.clone(), &mut rng);
    c.bench_function("caption beam 3", |b| {
        b.iter(|| cap_model.generate(&inst.scene_features, 12, DecodeMode::Beam { width: 3 }).unwrap())
    });
}

fn world(c: &mut Criterion) {
    let cfg = GenConfig {
        train_size: 1000,
        val_size: 1,
        ..GenConfig::default()
    };
    c.bench_function("generate 1000 instances", |b| b.iter(|| generate_dataset(black_box(&cfg)).unwrap()));
}

criterion_group!(benches, lstm, metrics, models, world);
criterion_main!(benches);
