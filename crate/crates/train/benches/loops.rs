use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use kgtext_core::data::{synth_corpus, Split, SynthSpec};
use kgtext_core::noise::{NoisePlan, Regime};
use kgtext_core::{Exec, Modality};
use kgtext_neuro::{Dims, Vocabulary};
use kgtext_train::eval::decode_all;
use kgtext_train::trainer::Trainer;
use kgtext_train::{CorpusPools, TrainConfig};

fn pools() -> CorpusPools {
    let pairs: Vec<_> = synth_corpus(&SynthSpec { n_instances: 120, ..SynthSpec::default() }, 2)
        .into_iter()
        .filter(|p| p.split == Split::Train)
        .collect();
    CorpusPools::from_pairs(&pairs)
}

fn trainer(exec: Exec, pools: &CorpusPools) -> Trainer {
    let cfg = TrainConfig {
        exec,
        lr: 5e-3,
        model: Dims { embed: 32, hidden: 48, attention: 48, dropout: 0.0 },
        ..TrainConfig::default()
    };
    Trainer::new(cfg, Vocabulary::build(pools.sequences(), None))
}

fn pretraining(c: &mut Criterion) {
    let pools = pools();
    let plan = NoisePlan::all(Regime::Composed);
    let mut group = c.benchmark_group("pretrain_denoise_epoch");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter_batched(
                || trainer(exec, &pools),
                |mut t| t.pretrain_denoise_epoch(&pools, &plan).unwrap(),
                criterion::BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

fn backtranslation(c: &mut Criterion) {
    let pools = pools();
    let model = trainer(Exec::Sequential, &pools).model;
    let mut group = c.benchmark_group("decode_all");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| decode_all(&model, &pools.texts, Modality::Graph, exec, 64).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, pretraining, backtranslation);
criterion_main!(benches);
