//! Independent oracles for the metric and noise statistics.

use std::collections::HashMap;

use kgtext_core::data::{synth_corpus, SynthSpec};
use kgtext_core::lingo::Lexicon;
use kgtext_core::metrics::{bleu, chrf_pp, fact_f1, EvalInstance};
use kgtext_core::noise::{noise_blank, noise_drop, noise_repeat, noise_swap};
use kgtext_core::rules::{rule_g2t, rule_t2g};
use kgtext_core::seeding::substream;
use kgtext_core::serialize;

/// Straightforward chrF++ written from the published definition: byte-slice
/// n-grams over whitespace-free strings, word n-grams over split words,
/// average P and R over orders with any n-gram, F with beta 2.
fn chrf_oracle(corpus: &[(&str, &str)]) -> f64 {
    fn grams(items: &[String], n: usize) -> HashMap<String, f64> {
        let mut m = HashMap::new();
        if items.len() >= n {
            for i in 0..=items.len() - n {
                *m.entry(items[i..i + n].join("\u{1}")).or_insert(0.0) += 1.0;
            }
        }
        m
    }
    let mut stats = [(0.0, 0.0, 0.0); 8];
    for (h, r) in corpus {
        let hc: Vec<String> = h.replace(' ', "").chars().map(|c| c.to_string()).collect();
        let rc: Vec<String> = r.replace(' ', "").chars().map(|c| c.to_string()).collect();
        let hw: Vec<String> = h.split(' ').filter(|s| !s.is_empty()).map(String::from).collect();
        let rw: Vec<String> = r.split(' ').filter(|s| !s.is_empty()).map(String::from).collect();
        let seqs = (1..=6).map(|n| (&hc, &rc, n)).chain((1..=2).map(|n| (&hw, &rw, n)));
        for (k, (hs, rs, n)) in seqs.enumerate() {
            let (gh, gr) = (grams(hs, n), grams(rs, n));
            let m: f64 = gh.iter().map(|(g, c)| c.min(*gr.get(g).unwrap_or(&0.0))).sum();
            stats[k].0 += m;
            stats[k].1 += gh.values().sum::<f64>();
            stats[k].2 += gr.values().sum::<f64>();
        }
    }
    let active: Vec<_> = stats.iter().filter(|s| s.1 + s.2 > 0.0).collect();
    let p = active.iter().map(|s| if s.1 > 0.0 { s.0 / s.1 } else { 0.0 }).sum::<f64>() / active.len() as f64;
    let r = active.iter().map(|s| if s.2 > 0.0 { s.0 / s.2 } else { 0.0 }).sum::<f64>() / active.len() as f64;
    100.0 * 5.0 * p * r / (4.0 * p + r)
}

#[test]
fn chrf_matches_independent_implementation() {
    let toy = [
        ("the dog chases a red ball", "a dog chases the red ball"),
        ("small baby wrapped in blanket", "a baseball cap on a baby's head"),
        ("man wearing a pink hat", "baby wearing a pink hat"),
    ];
    let corpus: Vec<EvalInstance<&str>> = toy.iter().map(|(h, r)| EvalInstance::new(*h, vec![*r])).collect();
    let ours = chrf_pp(&corpus).unwrap();
    let oracle = chrf_oracle(&toy);
    assert!((ours - oracle).abs() < 1e-4, "{ours} vs {oracle}");
    eprintln!("chrF++ toy corpus: {ours:.4}");
}

#[test]
fn bleu_toy_cases() {
    let w = |s: &str| s.split_whitespace().map(String::from).collect::<Vec<_>>();
    // p1..p4 = 3/4, 2/3, 1/2, smoothed 1/2; no brevity penalty
    let c = [EvalInstance::new(w("a b c d"), vec![w("a b c e")])];
    let hand = 100.0 * (0.75f64 * 2.0 / 3.0 * 0.5 * 0.5).powf(0.25);
    assert!((bleu(&c).unwrap() - hand).abs() < 1e-4);

    // brevity penalty: candidate 2 tokens vs reference 4 -> exp(1 - 2)
    let c = [EvalInstance::new(w("a b"), vec![w("a b c d")])];
    let hand = 100.0 * (-1.0f64).exp();
    assert!((bleu(&c).unwrap() - hand).abs() < 1e-4);
}

#[test]
fn fact_f1_derived_example() {
    let g = |fs: &[(&str, &str, &str)]| fs.iter().map(|(s, p, o)| kgtext_core::Fact::new(s, p, o)).collect();
    let prf =
        fact_f1(&[EvalInstance::new(g(&[("a", "r", "b")]), vec![g(&[("a", "r", "b"), ("c", "r", "d")])])]).unwrap();
    assert_eq!((prf.precision, prf.recall, prf.f1), (1.0, 0.5, 2.0 / 3.0));
}

#[test]
fn noise_rates_concentrate() {
    let units: Vec<u32> = (0..100).collect();
    let draws = 1000;
    let (mut dropped, mut blanked, mut repeated) = (0usize, 0usize, 0usize);
    for seed in 0..draws {
        let mut rng = substream(seed, "rates", 0);
        dropped += 100 - noise_drop(units.clone(), 0.1, &mut rng).len();
        blanked += noise_blank(units.clone(), 0.2, || u32::MAX, &mut rng).iter().filter(|u| **u == u32::MAX).count();
        repeated += noise_repeat(units.clone(), 0.2, &mut rng).len() - 100;
    }
    let total = (draws * 100) as f64;
    for (name, count, p) in [("drop", dropped, 0.1), ("blank", blanked, 0.2), ("repeat", repeated, 0.2)] {
        let rate = count as f64 / total;
        assert!((rate - p).abs() <= 0.005, "{name}: {rate}");
    }
}

#[test]
fn unbounded_swap_is_uniform() {
    let n = 60_000;
    let mut counts: HashMap<Vec<u8>, usize> = HashMap::new();
    for i in 0..n {
        *counts.entry(noise_swap(vec![1u8, 2, 3], None, &mut substream(9, "uniform", i))).or_default() += 1;
    }
    assert_eq!(counts.len(), 6);
    let p = 1.0 / 6.0;
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    for (perm, c) in counts {
        let freq = c as f64 / n as f64;
        assert!((freq - p).abs() <= 3.0 * sigma, "{perm:?}: {freq}");
    }
}

#[test]
fn synthetic_templates_suit_the_rules() {
    let lex = Lexicon::bundled();
    let pairs = synth_corpus(&SynthSpec::default(), 7);
    let corpus: Vec<_> =
        pairs.iter().map(|p| EvalInstance::new(rule_t2g(&p.text, &lex), vec![p.graph.clone()])).collect();
    let prf = fact_f1(&corpus).unwrap();
    assert!(prf.f1 >= 0.6, "{prf:?}");
    assert!(prf.f1 < 1.0, "rules should leave room to improve: {prf:?}");

    let text_corpus: Vec<_> = pairs
        .iter()
        .map(|p| {
            let hyp = rule_g2t(&serialize(&p.graph).unwrap().tokens).tokens;
            EvalInstance::new(hyp, vec![p.text_seq().tokens])
        })
        .collect();
    let b = bleu(&text_corpus).unwrap();
    assert!(b > 0.0 && b < 60.0, "{b}");
    eprintln!("synthetic rule baselines: t2g F1 {:.3}, g2t BLEU {b:.2}", prf.f1);
}
