use std::sync::OnceLock;

use kgtext_core::data::{synth_corpus, Instance, Pair, Split, SynthSpec};
use kgtext_core::metrics::{bleu, EvalInstance};
use kgtext_core::noise::{NoisePlan, Regime};
use kgtext_core::rules::rule_g2t;
use kgtext_core::{Exec, Modality, TokenSeq};
use kgtext_neuro::checkpoint::{self, params_hash};
use kgtext_neuro::{Dims, Vocabulary};
use kgtext_train::eval::{evaluate_g2t, m_unsup, score_texts};
use kgtext_train::run::{run_unsupervised, EvalSets, RunOptions, UnsupervisedRun, ValSets, TSV_HEADER};
use kgtext_train::trainer::{backtranslate_corpus, select_checkpoint, train_supervised, TrainError, Trainer};
use kgtext_train::{CorpusPools, SupervisedPool, TrainConfig};

fn tiny() -> TrainConfig {
    TrainConfig {
        lr: 1e-2,
        model: Dims { embed: 16, hidden: 16, attention: 16, dropout: 0.1 },
        ..TrainConfig::default()
    }
}

fn corpus(n: usize) -> Vec<Pair> {
    synth_corpus(&SynthSpec { n_instances: n, ..SynthSpec::default() }, 0)
}

fn train_split(pairs: &[Pair]) -> Vec<Pair> {
    pairs.iter().filter(|p| p.split == Split::Train).cloned().collect()
}

fn pools_of(pairs: &[Pair]) -> CorpusPools {
    CorpusPools::from_pairs(&train_split(pairs))
}

fn hundred_and_hundred() -> CorpusPools {
    let pools = CorpusPools::from_pairs(&corpus(300));
    CorpusPools { graphs: pools.graphs[..100].to_vec(), texts: pools.texts[..100].to_vec(), ..CorpusPools::default() }
}

fn pretrain_report(regime: Regime) -> kgtext_train::trainer::EpochReport {
    let pools = hundred_and_hundred();
    let cfg = tiny();
    let mut trainer = Trainer::new(cfg, Vocabulary::build(pools.sequences(), None));
    trainer.pretrain_denoise_epoch(&pools, &NoisePlan::all(regime)).unwrap()
}

#[test]
fn sampled_pretraining_uses_every_function_on_every_instance() {
    let r = pretrain_report(Regime::Sampled);
    assert_eq!(r.pairs + r.skipped, 1000);
    assert!(r.mean_loss < r.first_batch_loss, "{r:?}");
}

#[test]
fn composed_pretraining_uses_one_pair_per_instance() {
    let r = pretrain_report(Regime::Composed);
    assert_eq!(r.pairs + r.skipped, 200);
}

fn one_pair() -> (TokenSeq, TokenSeq) {
    let p = corpus(20).into_iter().find(|p| p.graph.len() == 3).unwrap();
    (p.graph_seq(), p.text_seq())
}

#[test]
fn single_pair_is_memorized() {
    let (g, t) = one_pair();
    let pool = SupervisedPool::new(vec![(g.clone(), t.clone())]);
    let cfg = TrainConfig {
        lr: 5e-3,
        max_epochs: 300,
        patience: 300,
        model: Dims { embed: 32, hidden: 32, attention: 32, dropout: 0.0 },
        ..TrainConfig::default()
    };
    let vocab = Vocabulary::build([g.tokens.as_slice(), t.tokens.as_slice()], None);
    let mut trainer = Trainer::new(cfg, vocab);
    for epoch in 1..=300 {
        trainer.supervised_epoch(&pool, epoch).unwrap();
    }
    let m = &trainer.model;
    assert!(m.nll_loss(&g, &t, Modality::Text).unwrap() < 0.1);
    assert!(m.nll_loss(&t, &g, Modality::Graph).unwrap() < 0.1);

    let back = backtranslate_corpus(m, std::slice::from_ref(&g), Modality::Text, Exec::Sequential, 64).unwrap();
    assert_eq!(back.skipped, 0);
    assert_eq!(back.pairs, vec![(t.clone(), g.clone())]);
    let fwd = backtranslate_corpus(m, std::slice::from_ref(&t), Modality::Graph, Exec::Sequential, 64).unwrap();
    assert_eq!(fwd.pairs, vec![(g, t)]);
}

#[test]
fn empty_supervised_pool_is_an_error() {
    let mut trainer = Trainer::new(tiny(), Vocabulary::build(std::iter::empty::<&[String]>(), None));
    let err = trainer.supervised_epoch(&SupervisedPool::default(), 1).unwrap_err();
    assert!(matches!(err, TrainError::EmptySupervisedPool));
}

#[test]
fn early_stopping_on_a_plateau() {
    let pairs = corpus(60);
    let pools = pools_of(&pairs);
    let val: Vec<(TokenSeq, TokenSeq)> =
        pairs.iter().filter(|p| p.split == Split::Val).map(|p| (p.graph_seq(), p.text_seq())).collect();
    // a zero step size keeps the validation loss flat from the first epoch
    let cfg = TrainConfig { lr: 0.0, patience: 3, max_epochs: 30, ..tiny() };
    let mut trainer = Trainer::new(cfg, Vocabulary::build(pools.sequences(), None));
    let mut seen = Vec::new();
    let report = train_supervised(&mut trainer, &pools.supervised, &val, |e, _, _, _| seen.push(e)).unwrap();
    assert_eq!(report.best_epoch, 1);
    assert_eq!(report.epochs_run, 4);
    assert!(report.epochs_run <= report.best_epoch + 3 + 1);
    assert_eq!(seen, vec![1, 2, 3, 4]);
}

#[test]
fn unsupervised_runs_are_blind_to_pairs_and_deterministic() {
    let pairs = corpus(60);
    let pools = pools_of(&pairs);
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = TrainConfig { exec: Exec::Parallel, ..tiny() };
    let opts = RunOptions { iterations: 2, out_dir: Some(dir.path().to_path_buf()), m_unsup: true, keep_models: false };
    let a = run_unsupervised(&cfg, &pools, None, &opts).unwrap();
    assert_eq!(pools.supervised.reads(), 0);

    assert_eq!(a.records.len(), 3);
    for r in &a.records {
        assert!(r.l_denoise.is_finite() && r.l_back.is_finite());
        let m = r.m_unsup.unwrap();
        assert!((0.0..=100.0).contains(&m.text_bleu) && (0.0..=1.0).contains(&m.graph_f1));
    }
    assert!(a.records[1..].iter().all(|r| r.l_back > 0.0));
    assert_eq!(a.checkpoints.len(), 3);
    let log = std::fs::read_to_string(dir.path().join("log.tsv")).unwrap();
    assert_eq!(log.lines().next(), Some(TSV_HEADER));
    assert_eq!(log.lines().count(), 4);
    let (last, manifest) = checkpoint::load(&a.checkpoints[2]).unwrap();
    assert_eq!(manifest.iteration, 2);
    assert_eq!(params_hash(&last), params_hash(&a.trainer.model));

    cfg.exec = Exec::Sequential;
    let b = run_unsupervised(&cfg, &pools, None, &RunOptions { iterations: 2, ..Default::default() }).unwrap();
    assert_eq!(params_hash(&a.trainer.model), params_hash(&b.trainer.model));
    assert_eq!(pools.supervised.reads(), 0);
}

struct Smoke {
    pairs: Vec<Pair>,
    pools: CorpusPools,
    val: ValSets,
    test: EvalSets,
    run: UnsupervisedRun,
}

/// Desk configuration trained on the 500-pair synthetic corpus: pretraining
/// plus three backtranslation iterations, with every model kept.
fn smoke() -> &'static Smoke {
    static SMOKE: OnceLock<Smoke> = OnceLock::new();
    SMOKE.get_or_init(|| {
        let pairs = corpus(500);
        let pools = pools_of(&pairs);
        let cfg = TrainConfig::desk();
        let val = ValSets::new(EvalSets::from_pairs(&pairs, Split::Val), cfg.val_sample, cfg.seed);
        let test = EvalSets::from_pairs(&pairs, Split::Test);
        let opts = RunOptions { iterations: 3, keep_models: true, ..Default::default() };
        let run = run_unsupervised(&cfg, &pools, Some(&val), &opts).unwrap();
        Smoke { pairs, pools, val, test, run }
    })
}

#[test]
fn output_type_controls_the_decoded_modality() {
    let s = smoke();
    let model = &s.run.trainer.model;
    let sources: Vec<&Instance> = s.val.full.g2t.iter().chain(&s.val.full.t2g).collect();
    let is_graph = |seq: &TokenSeq| seq.tokens.iter().any(|t| t == "SEP" || t == "EOF");
    let good = sources
        .iter()
        .filter(|i| {
            let g = model.decode_greedy(&i.source, Modality::Graph).unwrap().tokens;
            let t = model.decode_greedy(&i.source, Modality::Text).unwrap().tokens;
            is_graph(&g) && !is_graph(&t)
        })
        .count();
    let share = good as f64 / sources.len() as f64;
    assert!(share >= 0.95, "type conditioning held for {share:.3} of sources");
}

#[test]
fn generation_beats_the_rule_baseline_after_three_iterations() {
    let s = smoke();
    let rule: Vec<TokenSeq> = s.test.g2t.iter().map(|i| rule_g2t(&i.source.tokens)).collect();
    let baseline = score_texts(&rule, &s.test.g2t).unwrap().bleu;
    let model_bleu = evaluate_g2t(&s.run.trainer.model, &s.test.g2t, Exec::Sequential).unwrap().bleu;
    assert!(model_bleu > baseline, "model {model_bleu:.2} vs rule {baseline:.2}");
}

#[test]
fn text_round_trip_matches_a_second_harness() {
    let s = smoke();
    let model = &s.run.trainer.model;
    let cfg = TrainConfig::desk();
    let reported = m_unsup(model, &s.pools, cfg.exec, cfg.batch_backtranslate).unwrap().text_bleu;

    // one text at a time, sequentially, straight through the decoder
    let corpus: Vec<EvalInstance<Vec<String>>> = s
        .pools
        .texts
        .iter()
        .map(|text| {
            let mut graph = model.decode_greedy(text, Modality::Graph).unwrap().tokens;
            if graph.is_empty() {
                graph = TokenSeq::new(Modality::Graph, vec!["BLANKED".into()]);
            }
            let back = model.decode_greedy(&graph, Modality::Text).unwrap().tokens;
            EvalInstance::new(back.tokens, vec![text.tokens.clone()])
        })
        .collect();
    let scripted = bleu(&corpus).unwrap();
    assert!((reported - scripted).abs() <= 2.0, "{reported:.2} vs {scripted:.2}");
}

#[test]
#[ignore = "val and test splits hold 50 instances each; selection noise exceeds 1 BLEU at this scale"]
fn validation_sample_selects_a_near_best_checkpoint() {
    let s = smoke();
    let by_val: Vec<f64> = s.run.records.iter().map(|r| r.m_val_bleu.unwrap()).collect();
    let by_test: Vec<f64> =
        s.run.models.iter().map(|m| evaluate_g2t(m, &s.test.g2t, Exec::Sequential).unwrap().bleu).collect();
    let picked = select_checkpoint(&by_val).unwrap();
    let best = by_test.iter().cloned().fold(f64::MIN, f64::max);
    println!("M_val BLEU {by_val:?}; test BLEU {by_test:?}; picked {picked}");
    assert!(best - by_test[picked] <= 1.0, "picked {picked} with {:.2}, best {best:.2}", by_test[picked]);
}

#[test]
fn validation_sample_and_full_set_gap() {
    let s = smoke();
    let last = s.run.records.last().unwrap();
    // the synthetic val split is under 100 instances, so the sample is the
    // whole split and both views agree
    assert!(s.val.full.g2t.len() <= 100);
    assert_eq!(last.m_val_bleu, last.val_bleu);
    assert_eq!(last.m_val_f1, last.val_f1);
    assert_eq!(s.pairs.iter().filter(|p| p.split == Split::Val).count(), 50);
}
