use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use kgtext_core::data::{synth_corpus, SynthSpec};
use kgtext_core::metrics::{ChrfStats, EvalInstance};
use kgtext_core::noise::{corrupt_corpus, NoiseConfig, NoisePlan, Regime};
use kgtext_core::rules::rule_t2g;
use kgtext_core::{Exec, Lexicon, TokenSeq};

fn corpus() -> Vec<kgtext_core::data::Pair> {
    synth_corpus(&SynthSpec { n_instances: 2000, ..SynthSpec::default() }, 3)
}

fn noising(c: &mut Criterion) {
    let pairs = corpus();
    let texts: Vec<TokenSeq> = pairs.iter().map(|p| p.text_seq()).collect();
    let lex = Lexicon::bundled();
    let cfg = NoiseConfig::default();
    let plan = NoisePlan::all(Regime::Composed);
    let mut group = c.benchmark_group("corrupt_corpus");
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| corrupt_corpus(exec, &texts, &plan, &cfg, &lex, 1, "bench"))
        });
    }
    group.finish();
}

fn extraction_and_chrf(c: &mut Criterion) {
    let pairs = corpus();
    let lex = Lexicon::bundled();
    let mut group = c.benchmark_group("rule_t2g");
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| exec.map(&pairs, |_, p| rule_t2g(&p.text, &lex)))
        });
    }
    group.finish();

    let corpus: Vec<EvalInstance<String>> =
        pairs.iter().map(|p| EvalInstance::new(p.text.clone(), vec![p.text.chars().rev().collect()])).collect();
    let mut group = c.benchmark_group("chrf_pairs");
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| exec.map(&corpus, |_, i| ChrfStats::pair(&i.prediction, &i.references[0])))
        });
    }
    group.finish();
}

criterion_group!(benches, noising, extraction_and_chrf);
criterion_main!(benches);
