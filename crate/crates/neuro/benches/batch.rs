use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use kgtext_core::data::{synth_corpus, SynthSpec};
use kgtext_core::{Exec, TokenSeq};
use kgtext_neuro::{Dims, Seq2Seq, Vocabulary};

fn setup() -> (Seq2Seq<f32>, Vec<(TokenSeq, TokenSeq)>) {
    let pairs: Vec<(TokenSeq, TokenSeq)> = synth_corpus(&SynthSpec { n_instances: 64, ..SynthSpec::default() }, 1)
        .iter()
        .map(|p| (p.text_seq(), p.graph_seq()))
        .collect();
    let vocab = Vocabulary::build(pairs.iter().flat_map(|(t, g)| [t.tokens.as_slice(), g.tokens.as_slice()]), None);
    let model = Seq2Seq::new(Dims { embed: 32, hidden: 64, attention: 64, dropout: 0.2 }, vocab, 1);
    (model, pairs)
}

fn gradients(c: &mut Criterion) {
    let (model, pairs) = setup();
    let batch: Vec<(&TokenSeq, &TokenSeq)> = pairs.iter().take(16).map(|(t, g)| (t, g)).collect();
    let mut group = c.benchmark_group("batch_gradients");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| model.batch_gradients(exec, &batch, Some((0, 0))).unwrap())
        });
    }
    group.finish();
}

fn decoding(c: &mut Criterion) {
    let (model, pairs) = setup();
    let mut group = c.benchmark_group("decode_greedy");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| exec.map(&pairs, |_, (t, g)| model.decode_greedy(t, g.modality).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, gradients, decoding);
criterion_main!(benches);
