//! Noise functions over words (text) or facts (graphs), and the sampled and
//! composed injection regimes used for denoising objectives.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::kg::{serialize_unchecked, Modality, TokenSeq, BLANKED, EOF};
use crate::lingo::Lexicon;
use crate::rules::{rule_g2t, rule_t2g_tokens};
use crate::seeding::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseFn {
    Swap,
    Drop,
    Blank,
    Repeat,
    Rule,
}

impl NoiseFn {
    pub const ALL: [NoiseFn; 5] = [NoiseFn::Swap, NoiseFn::Drop, NoiseFn::Blank, NoiseFn::Repeat, NoiseFn::Rule];

    pub fn name(self) -> &'static str {
        match self {
            NoiseFn::Swap => "swap",
            NoiseFn::Drop => "drop",
            NoiseFn::Blank => "blank",
            NoiseFn::Repeat => "repeat",
            NoiseFn::Rule => "rule",
        }
    }
}

impl fmt::Display for NoiseFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseFn {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NoiseFn::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| format!("unknown noise function {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    #[default]
    Sampled,
    Composed,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Sampled => "sampled",
            Regime::Composed => "composed",
        })
    }
}

impl FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sampled" => Ok(Regime::Sampled),
            "composed" => Ok(Regime::Composed),
            _ => Err(format!("unknown regime {s:?}")),
        }
    }
}

/// Maximum displacement for `swap`. `None` means unbounded (uniform shuffle).
pub type SwapRadius = Option<usize>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub p_drop: f64,
    pub p_blank: f64,
    pub p_repeat: f64,
    pub k_text: usize,
    /// Absent or null in config files means unbounded.
    pub k_graph: SwapRadius,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { p_drop: 0.1, p_blank: 0.2, p_repeat: 0.2, k_text: 3, k_graph: None }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [("p_drop", self.p_drop), ("p_blank", self.p_blank), ("p_repeat", self.p_repeat)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} = {p} is not a probability"));
            }
        }
        Ok(())
    }

    pub fn radius(&self, modality: Modality) -> SwapRadius {
        match modality {
            Modality::Text => Some(self.k_text),
            Modality::Graph => self.k_graph,
        }
    }
}

/// Permutes `units` so that no unit moves more than `k` places.
///
/// Bounded radius: add uniform jitter in `[0, k+1)` to each index and stable
/// sort. Unbounded: uniform Fisher-Yates shuffle.
pub fn noise_swap<T, R: Rng + ?Sized>(mut units: Vec<T>, k: SwapRadius, rng: &mut R) -> Vec<T> {
    match k {
        None => {
            units.shuffle(rng);
            units
        }
        Some(k) => {
            let mut keyed: Vec<(f64, T)> = units
                .into_iter()
                .enumerate()
                .map(|(i, u)| (i as f64 + rng.gen_range(0.0..(k as f64 + 1.0)), u))
                .collect();
            keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
            keyed.into_iter().map(|(_, u)| u).collect()
        }
    }
}

/// Removes each unit with probability `p`. If every unit would go, one
/// uniformly chosen unit is kept.
pub fn noise_drop<T, R: Rng + ?Sized>(units: Vec<T>, p: f64, rng: &mut R) -> Vec<T> {
    let n = units.len();
    let keep: Vec<bool> = (0..n).map(|_| !rng.gen_bool(p)).collect();
    if n > 0 && !keep.iter().any(|&k| k) {
        let survivor = rng.gen_range(0..n);
        return units.into_iter().nth(survivor).into_iter().collect();
    }
    units.into_iter().zip(keep).filter_map(|(u, k)| k.then_some(u)).collect()
}

/// Replaces each unit with `blank()` with probability `p`.
pub fn noise_blank<T, R: Rng + ?Sized>(units: Vec<T>, p: f64, blank: impl Fn() -> T, rng: &mut R) -> Vec<T> {
    units.into_iter().map(|u| if rng.gen_bool(p) { blank() } else { u }).collect()
}

/// After each original unit, with probability `p`, inserts one copy of it.
pub fn noise_repeat<T: Clone, R: Rng + ?Sized>(units: Vec<T>, p: f64, rng: &mut R) -> Vec<T> {
    let mut out = Vec::with_capacity(units.len() * 2);
    for u in units {
        let again = rng.gen_bool(p);
        if again {
            out.push(u.clone());
        }
        out.push(u);
    }
    out
}

/// Translates with the rule converters; the modality flips.
pub fn noise_rule(instance: &TokenSeq, lexicon: &Lexicon) -> TokenSeq {
    match instance.modality {
        Modality::Graph => rule_g2t(&instance.tokens),
        Modality::Text => serialize_unchecked(&rule_t2g_tokens(&instance.tokens, lexicon)),
    }
}

type Unit = Vec<String>;

fn to_units(seq: &TokenSeq) -> Vec<Unit> {
    match seq.modality {
        Modality::Text => seq.tokens.iter().map(|t| vec![t.clone()]).collect(),
        Modality::Graph if seq.tokens.is_empty() => Vec::new(),
        Modality::Graph => seq.tokens.split(|t| t == EOF).map(<[String]>::to_vec).collect(),
    }
}

fn from_units(modality: Modality, units: Vec<Unit>) -> TokenSeq {
    let tokens = match modality {
        Modality::Text => units.into_iter().flatten().collect(),
        Modality::Graph => {
            let mut tokens = Vec::new();
            for (i, u) in units.into_iter().enumerate() {
                if i > 0 {
                    tokens.push(EOF.to_string());
                }
                tokens.extend(u);
            }
            tokens
        }
    };
    TokenSeq::new(modality, tokens)
}

/// Applies a single noise function to a token sequence. Unit-level
/// functions act on words for text and on whole facts for graphs.
pub fn apply<R: Rng + ?Sized>(
    f: NoiseFn,
    seq: &TokenSeq,
    cfg: &NoiseConfig,
    lexicon: &Lexicon,
    rng: &mut R,
) -> TokenSeq {
    if f == NoiseFn::Rule {
        return noise_rule(seq, lexicon);
    }
    let units = to_units(seq);
    let units = match f {
        NoiseFn::Swap => noise_swap(units, cfg.radius(seq.modality), rng),
        NoiseFn::Drop => noise_drop(units, cfg.p_drop, rng),
        NoiseFn::Blank => noise_blank(units, cfg.p_blank, || vec![BLANKED.to_string()], rng),
        NoiseFn::Repeat => noise_repeat(units, cfg.p_repeat, rng),
        NoiseFn::Rule => unreachable!(),
    };
    from_units(seq.modality, units)
}

/// Which noise functions are active and how they are combined. An empty
/// function set means no noise, `C(x) = x`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoisePlan {
    pub regime: Regime,
    pub functions: Vec<NoiseFn>,
}

impl NoisePlan {
    pub fn all(regime: Regime) -> Self {
        NoisePlan { regime, functions: NoiseFn::ALL.to_vec() }
    }

    pub fn none() -> Self {
        NoisePlan { regime: Regime::Sampled, functions: Vec::new() }
    }

    pub fn only(regime: Regime, f: NoiseFn) -> Self {
        NoisePlan { regime, functions: vec![f] }
    }

    pub fn all_but(regime: Regime, f: NoiseFn) -> Self {
        NoisePlan { regime, functions: NoiseFn::ALL.into_iter().filter(|g| *g != f).collect() }
    }

    pub fn is_identity(&self) -> bool {
        self.functions.is_empty()
    }

    /// Composed pipeline order: rule, swap, drop, blank, repeat (rule is
    /// applied first).
    pub fn pipeline(&self) -> Vec<NoiseFn> {
        const ORDER: [NoiseFn; 5] = [NoiseFn::Rule, NoiseFn::Swap, NoiseFn::Drop, NoiseFn::Blank, NoiseFn::Repeat];
        ORDER.into_iter().filter(|f| self.functions.contains(f)).collect()
    }

    /// Number of denoising pairs one clean instance yields in the
    /// pretraining epoch.
    pub fn pretraining_multiplicity(&self) -> usize {
        match self.regime {
            _ if self.functions.is_empty() => 1,
            Regime::Sampled => self.functions.len(),
            Regime::Composed => 1,
        }
    }
}

/// A `(noisy source, clean target)` denoising pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoisyPair {
    pub source: TokenSeq,
    pub target: TokenSeq,
}

/// Corrupts a clean instance with one draw from the plan: a single uniformly
/// chosen function under the sampled regime, the full pipeline under the
/// composed regime.
pub fn corrupt<R: Rng + ?Sized>(
    instance: &TokenSeq,
    plan: &NoisePlan,
    cfg: &NoiseConfig,
    lexicon: &Lexicon,
    rng: &mut R,
) -> NoisyPair {
    let source = if plan.is_identity() {
        instance.clone()
    } else {
        match plan.regime {
            Regime::Sampled => {
                let f = *plan.functions.choose(rng).expect("non-empty plan");
                apply(f, instance, cfg, lexicon, rng)
            }
            Regime::Composed => {
                plan.pipeline().into_iter().fold(instance.clone(), |seq, f| apply(f, &seq, cfg, lexicon, rng))
            }
        }
    };
    NoisyPair { source, target: instance.clone() }
}

/// All pretraining pairs for one instance: one pair per active function
/// under the sampled regime, one composed pair otherwise.
pub fn pretraining_pairs<R: Rng + ?Sized>(
    instance: &TokenSeq,
    plan: &NoisePlan,
    cfg: &NoiseConfig,
    lexicon: &Lexicon,
    rng: &mut R,
) -> Vec<NoisyPair> {
    match plan.regime {
        Regime::Sampled if !plan.is_identity() => plan
            .functions
            .iter()
            .map(|&f| NoisyPair { source: apply(f, instance, cfg, lexicon, rng), target: instance.clone() })
            .collect(),
        _ => vec![corrupt(instance, plan, cfg, lexicon, rng)],
    }
}

/// Corrupts a whole corpus. Instance `i` draws from its own substream of
/// `(seed, stream, i)`, so output is identical under either execution mode.
pub fn corrupt_corpus(
    exec: Exec,
    instances: &[TokenSeq],
    plan: &NoisePlan,
    cfg: &NoiseConfig,
    lexicon: &Lexicon,
    seed: u64,
    stream: &str,
) -> Vec<NoisyPair> {
    exec.map(instances, |i, inst| corrupt(inst, plan, cfg, lexicon, &mut substream(seed, stream, i as u64)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::deserialize;

    fn text(s: &str) -> TokenSeq {
        TokenSeq::parse(Modality::Text, s)
    }

    fn graph(s: &str) -> TokenSeq {
        TokenSeq::parse(Modality::Graph, s)
    }

    #[test]
    fn identities_at_zero() {
        let mut rng = substream(1, "t", 0);
        let v: Vec<u32> = (0..20).collect();
        assert_eq!(noise_swap(v.clone(), Some(0), &mut rng), v);
        assert_eq!(noise_drop(v.clone(), 0.0, &mut rng), v);
        assert_eq!(noise_blank(v.clone(), 0.0, || 99, &mut rng), v);
        assert_eq!(noise_repeat(v.clone(), 0.0, &mut rng), v);
    }

    #[test]
    fn forced_cases() {
        let mut rng = substream(1, "t", 0);
        assert_eq!(noise_blank(vec!["w1", "w2"], 1.0, || BLANKED, &mut rng), vec![BLANKED, BLANKED]);
        assert_eq!(noise_repeat(vec!['a', 'b'], 1.0, &mut rng), vec!['a', 'a', 'b', 'b']);
        let kept = noise_drop(vec![1, 2, 3], 1.0, &mut rng);
        assert_eq!(kept.len(), 1);
        assert!(noise_drop(Vec::<u8>::new(), 1.0, &mut rng).is_empty());
    }

    #[test]
    fn bounded_swap_displacement() {
        let v: Vec<usize> = (0..10).collect();
        for seed in 0..1000 {
            let out = noise_swap(v.clone(), Some(3), &mut substream(seed, "swap", 0));
            for (pos, &orig) in out.iter().enumerate() {
                assert!(pos.abs_diff(orig) <= 3, "seed {seed}: {out:?}");
            }
        }
    }

    #[test]
    fn rule_noise_flips() {
        let lex = Lexicon::bundled();
        let g = noise_rule(&text("Man wearing a colorful shirt and white pants playing tennis"), &lex);
        assert_eq!(g.modality, Modality::Graph);
        assert_eq!(
            g.as_string(),
            "Man SEP wearing SEP colorful EOF shirt SEP attr SEP colorful EOF pants SEP attr SEP white \
             EOF pants SEP playing SEP tennis"
        );
        assert_eq!(noise_rule(&graph("a SEP r SEP b"), &lex), text("a r b"));
        let e = noise_rule(&TokenSeq::new(Modality::Text, vec![]), &lex);
        assert_eq!((e.modality, e.len()), (Modality::Graph, 0));
        let e = noise_rule(&TokenSeq::new(Modality::Graph, vec![]), &lex);
        assert_eq!((e.modality, e.len()), (Modality::Text, 0));
    }

    #[test]
    fn graph_units_are_whole_facts() {
        let lex = Lexicon::bundled();
        let cfg = NoiseConfig { p_blank: 0.5, p_drop: 0.3, p_repeat: 0.5, ..NoiseConfig::default() };
        let g = graph("a SEP r SEP b EOF c SEP r SEP d EOF e SEP attr SEP wrapped in blanket EOF f SEP q SEP g");
        for seed in 0..200 {
            let mut rng = substream(seed, "units", 0);
            let out = corrupt(&g, &NoisePlan::all(Regime::Composed).without_rule(), &cfg, &lex, &mut rng).source;
            let blanks = out.tokens.iter().filter(|t| *t == BLANKED).count();
            let parsed = deserialize(&out.tokens);
            assert_eq!(parsed.malformed, blanks, "{out}");
            assert!(parsed.graph.facts.iter().all(|f| g.as_string().contains(&f.tokens().join(" "))));
        }
    }

    #[test]
    fn composed_runs_rule_first() {
        let lex = Lexicon::bundled();
        let t = text("Man wearing a colorful shirt and white pants playing tennis");
        let pair =
            corrupt(&t, &NoisePlan::all(Regime::Composed), &NoiseConfig::default(), &lex, &mut substream(5, "c", 0));
        assert_eq!(pair.target, t);
        assert_eq!(pair.source.modality, Modality::Graph);
        let parsed = deserialize(&pair.source.tokens);
        let blanks = pair.source.tokens.iter().filter(|x| *x == BLANKED).count();
        assert_eq!(parsed.malformed, blanks);
        let rule_facts = deserialize(&noise_rule(&t, &lex).tokens).graph.facts;
        assert!(parsed.graph.facts.iter().all(|f| rule_facts.contains(f)));
    }

    #[test]
    fn sampled_modality() {
        let lex = Lexicon::bundled();
        let g = graph("a SEP r SEP b EOF c SEP r SEP d EOF e SEP r SEP f");
        let swap = corrupt(
            &g,
            &NoisePlan::only(Regime::Sampled, NoiseFn::Swap),
            &NoiseConfig::default(),
            &lex,
            &mut substream(3, "s", 0),
        );
        assert_eq!(swap.source.modality, Modality::Graph);
        assert!(crate::kg::fact_multiset_equal(&deserialize(&swap.source.tokens).graph, &deserialize(&g.tokens).graph));
        let rule = corrupt(
            &g,
            &NoisePlan::only(Regime::Sampled, NoiseFn::Rule),
            &NoiseConfig::default(),
            &lex,
            &mut substream(3, "s", 0),
        );
        assert_eq!(rule.source, text("a r b and c r d and e r f"));
        assert_eq!(rule.target, g);
    }

    #[test]
    fn plans() {
        assert_eq!(NoisePlan::all(Regime::Sampled).pretraining_multiplicity(), 5);
        assert_eq!(NoisePlan::all(Regime::Composed).pretraining_multiplicity(), 1);
        assert_eq!(NoisePlan::none().pretraining_multiplicity(), 1);
        assert_eq!(
            NoisePlan::all_but(Regime::Composed, NoiseFn::Drop).pipeline(),
            vec![NoiseFn::Rule, NoiseFn::Swap, NoiseFn::Blank, NoiseFn::Repeat]
        );
        let lex = Lexicon::bundled();
        let t = text("the ball is red");
        let pairs = pretraining_pairs(
            &t,
            &NoisePlan::all(Regime::Sampled),
            &NoiseConfig::default(),
            &lex,
            &mut substream(0, "p", 0),
        );
        assert_eq!(pairs.len(), 5);
        assert_eq!(pairs[4].source, graph("ball SEP attr SEP red"));
        let id = corrupt(&t, &NoisePlan::none(), &NoiseConfig::default(), &lex, &mut substream(0, "p", 0));
        assert_eq!(id.source, t);
    }

    impl NoisePlan {
        fn without_rule(mut self) -> Self {
            self.functions.retain(|f| *f != NoiseFn::Rule);
            self
        }
    }

    #[test]
    fn corpus_corruption_is_mode_independent() {
        let lex = Lexicon::bundled();
        let texts: Vec<TokenSeq> = (0..50).map(|i| text(&format!("the dog {i} chases a red ball"))).collect();
        let plan = NoisePlan::all(Regime::Sampled);
        let cfg = NoiseConfig::default();
        let a = corrupt_corpus(Exec::Sequential, &texts, &plan, &cfg, &lex, 4, "c");
        let b = corrupt_corpus(Exec::Parallel, &texts, &plan, &cfg, &lex, 4, "c");
        assert_eq!(a, b);
    }
}
