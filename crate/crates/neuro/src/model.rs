//! Shared encoder-decoder for both conversion directions.
//!
//! * encoder: bidirectional LSTM over input embeddings; position states are
//!   the concatenated directions (`2H`); the decoder's initial hidden state
//!   is an affine map of the two final states
//! * decoder: LSTM fed `[emb(y_prev); ctx_prev]`, initial cell state = the
//!   embedding of the requested output type
//! * attention: additive, over the concatenated encoder states
//! * output: `P(y) = g * softmax(W_o [s; ctx] + b_o)[y]
//!   + (1 - g) * sum_{j: src_j = y} softmax_j(enc_j . (W_c s))`,
//!   `g = sigmoid(w_g . [s; ctx; emb(y_prev)] + b_g)`
//!
//! Dropout (inverted) is applied to embedded inputs of encoder and decoder
//! in training mode only.

use std::collections::HashMap;

use kgtext_core::seeding::{substream, Rng};
use kgtext_core::{Exec, Modality, TokenSeq};
use rand::distributions::{Distribution, Uniform};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::{Grads, ParamStore, Pid};
use crate::real::{sigmoid, softmax, Real};
use crate::tape::{NodeId, Tape};
use crate::vocab::{Vocabulary, BOS_ID, EOS, EOS_ID, PAD_ID, UNK_ID};

pub const MAX_DECODE_STEPS: usize = 40;
const INIT_RANGE: f64 = 0.08;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("empty input sequence")]
    EmptyInput,
    #[error("parameter {name} has shape {found:?}, expected {expected:?}")]
    ShapeMismatch { name: String, expected: (usize, usize), found: (usize, usize) },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Dims {
    pub embed: usize,
    pub hidden: usize,
    pub attention: usize,
    pub dropout: f64,
}

impl Default for Dims {
    fn default() -> Self {
        Dims { embed: 300, hidden: 250, attention: 250, dropout: 0.2 }
    }
}

impl Dims {
    pub fn validate(&self) -> Result<(), String> {
        if self.embed == 0 || self.hidden == 0 || self.attention == 0 {
            return Err("model dimensions must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    embed: Pid,
    enc_fwd_w: Pid,
    enc_fwd_b: Pid,
    enc_bwd_w: Pid,
    enc_bwd_b: Pid,
    init_w: Pid,
    init_b: Pid,
    type_embed: Pid,
    dec_w: Pid,
    dec_b: Pid,
    att_keys: Pid,
    att_query: Pid,
    att_v: Pid,
    out_w: Pid,
    out_b: Pid,
    copy_w: Pid,
    gate_w: Pid,
    gate_b: Pid,
}

impl Layout {
    fn declare<F: Real>(ps: &mut ParamStore<F>, d: &Dims, v: usize) -> Layout {
        let (e, h, a) = (d.embed, d.hidden, d.attention);
        Layout {
            embed: ps.add("embed", v, e),
            enc_fwd_w: ps.add("enc_fwd_w", 4 * h, e + h),
            enc_fwd_b: ps.add("enc_fwd_b", 4 * h, 1),
            enc_bwd_w: ps.add("enc_bwd_w", 4 * h, e + h),
            enc_bwd_b: ps.add("enc_bwd_b", 4 * h, 1),
            init_w: ps.add("init_w", h, 2 * h),
            init_b: ps.add("init_b", h, 1),
            type_embed: ps.add("type_embed", 2, h),
            dec_w: ps.add("dec_w", 4 * h, e + 2 * h + h),
            dec_b: ps.add("dec_b", 4 * h, 1),
            att_keys: ps.add("att_keys", a, 2 * h),
            att_query: ps.add("att_query", a, h),
            att_v: ps.add("att_v", a, 1),
            out_w: ps.add("out_w", v, 3 * h),
            out_b: ps.add("out_b", v, 1),
            copy_w: ps.add("copy_w", 2 * h, h),
            gate_w: ps.add("gate_w", 1, 3 * h + e),
            gate_b: ps.add("gate_b", 1, 1),
        }
    }

    fn biases(&self) -> [Pid; 6] {
        [self.enc_fwd_b, self.enc_bwd_b, self.init_b, self.dec_b, self.out_b, self.gate_b]
    }

    fn gate(&self) -> [Pid; 2] {
        [self.gate_w, self.gate_b]
    }
}

/// Index of an output type's embedding row.
pub fn type_index(m: Modality) -> usize {
    match m {
        Modality::Text => 0,
        Modality::Graph => 1,
    }
}

/// Encoder output for one source sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding<F> {
    /// One `2H` state per source position.
    pub states: Vec<Vec<F>>,
    /// Decoder initial hidden state (`H`).
    pub final_state: Vec<F>,
}

/// Next-token distribution over the generation vocabulary and the source
/// positions. Entries already include the gate weight, so everything sums
/// to one.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputDistribution<F> {
    pub vocab: Vec<F>,
    pub copy: Vec<F>,
    pub gate: F,
}

impl<F: Real> OutputDistribution<F> {
    pub fn total(&self) -> F {
        self.vocab.iter().copied().sum::<F>() + self.copy.iter().copied().sum::<F>()
    }

    /// Probability of emitting surface `token`, aggregating generation and
    /// every source position holding that surface.
    pub fn prob_of(&self, token: &str, vocab: &Vocabulary, source: &[String]) -> F {
        let gen = vocab.get(token).map_or(F::zero(), |i| self.vocab[i]);
        let copy = source.iter().zip(&self.copy).filter(|(s, _)| *s == token).map(|(_, p)| *p).sum::<F>();
        gen + copy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Emission {
    Vocab(usize),
    Copy(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub tokens: TokenSeq,
    pub steps: Vec<Emission>,
    /// Whether decoding stopped on end-of-sequence rather than the step cap.
    pub finished: bool,
}

/// Summed loss and gradients over a batch of examples.
#[derive(Debug, Clone)]
pub struct BatchGrad<F> {
    pub loss_sum: F,
    pub grads: Grads<F>,
    pub examples: usize,
}

struct Enc {
    states: NodeId,
    keys: NodeId,
    h0: NodeId,
    n: usize,
}

struct Step {
    s: NodeId,
    c: NodeId,
    ctx: NodeId,
    gen: NodeId,
    copy: NodeId,
    gate: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seq2Seq<F> {
    pub dims: Dims,
    pub vocab: Vocabulary,
    pub params: ParamStore<F>,
    layout: Layout,
}

impl<F: Real> Seq2Seq<F> {
    /// Uniform(-0.08, 0.08) weights and embeddings, zero biases, forget-gate
    /// biases at +1.
    pub fn new(dims: Dims, vocab: Vocabulary, seed: u64) -> Self {
        let mut params = ParamStore::default();
        let layout = Layout::declare(&mut params, &dims, vocab.len());
        let mut rng = substream(seed, "init", 0);
        let dist = Uniform::new_inclusive(-INIT_RANGE, INIT_RANGE);
        let biases = layout.biases();
        for (p, t) in params.data.iter_mut().enumerate() {
            if biases.contains(&p) {
                continue;
            }
            for x in t.iter_mut() {
                *x = F::of(dist.sample(&mut rng));
            }
        }
        let h = dims.hidden;
        for b in [layout.enc_fwd_b, layout.enc_bwd_b, layout.dec_b] {
            for x in &mut params.data[b][h..2 * h] {
                *x = F::one();
            }
        }
        Seq2Seq { dims, vocab, params, layout }
    }

    /// Wraps existing parameters, checking every shape.
    pub fn from_params(dims: Dims, vocab: Vocabulary, params: ParamStore<F>) -> Result<Self, ModelError> {
        let mut expected = ParamStore::<F>::default();
        let layout = Layout::declare(&mut expected, &dims, vocab.len());
        if expected.shapes.len() != params.shapes.len() {
            return Err(ModelError::ShapeMismatch {
                name: "<tensor count>".into(),
                expected: (expected.shapes.len(), 1),
                found: (params.shapes.len(), 1),
            });
        }
        for (e, f) in expected.shapes.iter().zip(&params.shapes) {
            if e != f {
                return Err(ModelError::ShapeMismatch {
                    name: e.name.clone(),
                    expected: (e.rows, e.cols),
                    found: (f.rows, f.cols),
                });
            }
        }
        Ok(Seq2Seq { dims, vocab, params, layout })
    }

    pub fn cast<G: Real>(&self) -> Seq2Seq<G> {
        Seq2Seq { dims: self.dims, vocab: self.vocab.clone(), params: self.params.cast(), layout: self.layout }
    }

    pub fn parameter_count(&self) -> usize {
        self.params.count()
    }

    /// Parameter count for a vocabulary size and dims, without building a
    /// model.
    pub fn parameter_count_for(dims: &Dims, vocab_size: usize) -> usize {
        let mut ps = ParamStore::<F>::default();
        Layout::declare(&mut ps, dims, vocab_size);
        ps.shapes.iter().map(|s| s.len()).sum()
    }

    /// Zeroes the copy-gate weights and bias.
    pub fn zero_gate(&mut self) {
        for p in self.layout.gate() {
            self.params.data[p].iter_mut().for_each(|x| *x = F::zero());
        }
    }

    fn source_ids(&self, src: &TokenSeq) -> Vec<usize> {
        src.tokens.iter().map(|t| self.vocab.id(t)).collect()
    }

    fn embed(&self, t: &mut Tape<F>, id: usize, rng: &mut Option<&mut Rng>) -> NodeId {
        let e = t.row(self.layout.embed, id);
        match rng {
            Some(r) if self.dims.dropout > 0.0 => {
                let keep = 1.0 - self.dims.dropout;
                let scale = F::of(1.0 / keep);
                let mask = (0..self.dims.embed).map(|_| if r.gen_bool(keep) { scale } else { F::zero() }).collect();
                t.mask(e, mask)
            }
            _ => e,
        }
    }

    fn run_lstm(&self, t: &mut Tape<F>, w: Pid, b: Pid, inputs: &[NodeId]) -> Vec<NodeId> {
        let h = self.dims.hidden;
        let mut hs = t.zeros(h);
        let mut cs = t.zeros(h);
        let mut out = Vec::with_capacity(inputs.len());
        for &x in inputs {
            let xh = t.concat(&[x, hs]);
            let z = t.affine(w, Some(b), xh);
            let hc = t.lstm(z, cs);
            hs = t.slice(hc, 0, h);
            cs = t.slice(hc, h, h);
            out.push(hs);
        }
        out
    }

    fn encode_on(&self, t: &mut Tape<F>, ids: &[usize], rng: &mut Option<&mut Rng>) -> Enc {
        let l = &self.layout;
        let n = ids.len();
        let embs: Vec<NodeId> = ids.iter().map(|&id| self.embed(t, id, rng)).collect();
        let fwd = self.run_lstm(t, l.enc_fwd_w, l.enc_fwd_b, &embs);
        let rev: Vec<NodeId> = embs.iter().rev().copied().collect();
        let mut bwd = self.run_lstm(t, l.enc_bwd_w, l.enc_bwd_b, &rev);
        bwd.reverse();
        let per_pos: Vec<NodeId> = (0..n).map(|j| t.concat(&[fwd[j], bwd[j]])).collect();
        let states = t.concat(&per_pos);
        let last = t.concat(&[fwd[n - 1], bwd[0]]);
        let h0 = t.affine(l.init_w, Some(l.init_b), last);
        let keys = t.rows_affine(l.att_keys, states, n);
        Enc { states, keys, h0, n }
    }

    fn step(
        &self,
        t: &mut Tape<F>,
        enc: &Enc,
        y_prev: usize,
        state: (NodeId, NodeId, NodeId),
        rng: &mut Option<&mut Rng>,
    ) -> Step {
        let l = &self.layout;
        let h = self.dims.hidden;
        let (s_prev, c_prev, ctx_prev) = state;
        let e = self.embed(t, y_prev, rng);
        let x = t.concat(&[e, ctx_prev, s_prev]);
        let z = t.affine(l.dec_w, Some(l.dec_b), x);
        let hc = t.lstm(z, c_prev);
        let s = t.slice(hc, 0, h);
        let c = t.slice(hc, h, h);
        let q = t.affine(l.att_query, None, s);
        let scores = t.additive_scores(enc.keys, enc.n, q, l.att_v);
        let alpha = t.softmax(scores);
        let ctx = t.mat_t_vec(enc.states, enc.n, alpha);
        let sctx = t.concat(&[s, ctx]);
        let gen = t.affine(l.out_w, Some(l.out_b), sctx);
        let u = t.affine(l.copy_w, None, s);
        let copy = t.mat_vec(enc.states, enc.n, u);
        let gin = t.concat(&[sctx, e]);
        let gate = t.affine(l.gate_w, Some(l.gate_b), gin);
        Step { s, c, ctx, gen, copy, gate }
    }

    fn initial_state(&self, t: &mut Tape<F>, enc: &Enc, output: Modality) -> (NodeId, NodeId, NodeId) {
        let c0 = t.row(self.layout.type_embed, type_index(output));
        let ctx0 = t.zeros(2 * self.dims.hidden);
        (enc.h0, c0, ctx0)
    }

    fn distribution(&self, t: &Tape<F>, step: &Step) -> OutputDistribution<F> {
        let g = sigmoid(t.value(step.gate)[0]);
        let vocab = softmax(t.value(step.gen)).into_iter().map(|p| p * g).collect();
        let copy = softmax(t.value(step.copy)).into_iter().map(|p| p * (F::one() - g)).collect();
        OutputDistribution { vocab, copy, gate: g }
    }

    /// How a target token is supported: generation id (if any) and source
    /// positions with the same surface. Out-of-vocabulary tokens present in
    /// the source are copy-only; absent ones fall back to UNK.
    fn support(&self, token: &str, src: &[String]) -> (Option<usize>, Vec<usize>) {
        let copy_pos: Vec<usize> = src.iter().enumerate().filter(|(_, s)| *s == token).map(|(j, _)| j).collect();
        let gen = match self.vocab.get(token) {
            Some(id) => Some(id),
            None if copy_pos.is_empty() => Some(UNK_ID),
            None => None,
        };
        (gen, copy_pos)
    }

    /// Builds the teacher-forced graph and returns the mean per-token NLL
    /// node.
    fn loss_on(
        &self,
        t: &mut Tape<F>,
        src: &TokenSeq,
        tgt: &TokenSeq,
        output: Modality,
        rng: &mut Option<&mut Rng>,
    ) -> Result<NodeId, ModelError> {
        if src.is_empty() || tgt.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let enc = self.encode_on(t, &self.source_ids(src), rng);
        let mut state = self.initial_state(t, &enc, output);
        let mut y_prev = BOS_ID;
        let mut terms = Vec::with_capacity(tgt.len() + 1);
        for tok in tgt.tokens.iter().map(String::as_str).chain(std::iter::once(EOS)) {
            let st = self.step(t, &enc, y_prev, state, rng);
            let (gen, copy_pos) = if tok == EOS { (Some(EOS_ID), Vec::new()) } else { self.support(tok, &src.tokens) };
            terms.push(t.mixture_nll(st.gen, st.copy, st.gate, gen, copy_pos));
            state = (st.s, st.c, st.ctx);
            y_prev = self.vocab.id(tok);
        }
        let total = t.sum(&terms);
        Ok(t.scale(total, F::one() / F::of(terms.len() as f64)))
    }

    /// Encoder states and decoder initial state.
    pub fn encode(&self, src: &TokenSeq, train_mode: bool, rng: Option<&mut Rng>) -> Result<Encoding<F>, ModelError> {
        if src.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let mut t = Tape::new(&self.params);
        let mut rng = if train_mode { rng } else { None };
        let enc = self.encode_on(&mut t, &self.source_ids(src), &mut rng);
        let d = 2 * self.dims.hidden;
        let states = t.value(enc.states).chunks(d).map(<[F]>::to_vec).collect();
        Ok(Encoding { states, final_state: t.value(enc.h0).to_vec() })
    }

    /// Teacher-forced next-token distributions, one per target token plus
    /// the final end-of-sequence step.
    pub fn distributions(
        &self,
        src: &TokenSeq,
        tgt: &TokenSeq,
        output: Modality,
    ) -> Result<Vec<OutputDistribution<F>>, ModelError> {
        if src.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let mut t = Tape::new(&self.params);
        let mut none = None;
        let enc = self.encode_on(&mut t, &self.source_ids(src), &mut none);
        let mut state = self.initial_state(&mut t, &enc, output);
        let mut y_prev = BOS_ID;
        let mut out = Vec::with_capacity(tgt.len() + 1);
        for i in 0..=tgt.len() {
            let st = self.step(&mut t, &enc, y_prev, state, &mut none);
            out.push(self.distribution(&t, &st));
            state = (st.s, st.c, st.ctx);
            if i < tgt.len() {
                y_prev = self.vocab.id(&tgt.tokens[i]);
            }
        }
        Ok(out)
    }

    /// Mean per-token negative log-likelihood in evaluation mode.
    pub fn nll_loss(&self, src: &TokenSeq, tgt: &TokenSeq, output: Modality) -> Result<F, ModelError> {
        let mut t = Tape::new(&self.params);
        let root = self.loss_on(&mut t, src, tgt, output, &mut None)?;
        Ok(t.value(root)[0])
    }

    /// Loss and parameter gradients; dropout is active iff `rng` is given.
    pub fn loss_and_grads(
        &self,
        src: &TokenSeq,
        tgt: &TokenSeq,
        output: Modality,
        rng: Option<&mut Rng>,
    ) -> Result<(F, Grads<F>), ModelError> {
        let mut t = Tape::new(&self.params);
        let mut rng = rng;
        let root = self.loss_on(&mut t, src, tgt, output, &mut rng)?;
        Ok((t.value(root)[0], t.backward(root)))
    }

    /// Sums per-example losses and gradients over a batch of
    /// `(source, target)` pairs; the output type is each target's modality.
    /// Example `i` uses dropout stream `(seed, "dropout", offset + i)` when
    /// `dropout` is `Some((seed, offset))`. Gradients are added in batch
    /// order, so the result does not depend on `exec`.
    pub fn batch_gradients(
        &self,
        exec: Exec,
        batch: &[(&TokenSeq, &TokenSeq)],
        dropout: Option<(u64, u64)>,
    ) -> Result<BatchGrad<F>, ModelError> {
        let per: Vec<Result<(F, Grads<F>), ModelError>> = exec.map(batch, |i, (src, tgt)| {
            let mut rng = dropout.map(|(seed, off)| substream(seed, "dropout", off + i as u64));
            self.loss_and_grads(src, tgt, tgt.modality, rng.as_mut())
        });
        let mut grads = self.params.zero_grads();
        let mut loss_sum = F::zero();
        for r in per {
            let (l, g) = r?;
            loss_sum += l;
            grads.add_assign(&g);
        }
        Ok(BatchGrad { loss_sum, grads, examples: batch.len() })
    }

    /// Greedy decoding: at each step the surface token with the highest
    /// aggregated probability is emitted, until end-of-sequence or
    /// `max_steps` tokens.
    pub fn decode_greedy_steps(
        &self,
        src: &TokenSeq,
        output: Modality,
        max_steps: usize,
    ) -> Result<DecodeResult, ModelError> {
        if src.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let mut t = Tape::new(&self.params);
        let mut none = None;
        let enc = self.encode_on(&mut t, &self.source_ids(src), &mut none);
        let mut state = self.initial_state(&mut t, &enc, output);
        let mut y_prev = BOS_ID;
        let mut tokens = Vec::new();
        let mut steps = Vec::new();
        let mut finished = false;
        for _ in 0..=max_steps {
            let st = self.step(&mut t, &enc, y_prev, state, &mut none);
            let dist = self.distribution(&t, &st);
            let (token, emission) = self.choose(&dist, &src.tokens);
            if emission == Emission::Vocab(EOS_ID) {
                finished = true;
                break;
            }
            if tokens.len() == max_steps {
                break;
            }
            y_prev = self.vocab.id(&token);
            tokens.push(token);
            steps.push(emission);
            state = (st.s, st.c, st.ctx);
        }
        Ok(DecodeResult { tokens: TokenSeq::new(output, tokens), steps, finished })
    }

    pub fn decode_greedy(&self, src: &TokenSeq, output: Modality) -> Result<DecodeResult, ModelError> {
        self.decode_greedy_steps(src, output, MAX_DECODE_STEPS)
    }

    fn choose(&self, dist: &OutputDistribution<F>, src: &[String]) -> (String, Emission) {
        let mut copy_mass: HashMap<&str, (F, usize, F)> = HashMap::new();
        for (j, (s, p)) in src.iter().zip(&dist.copy).enumerate() {
            let e = copy_mass.entry(s.as_str()).or_insert((F::zero(), j, F::neg_infinity()));
            e.0 += *p;
            if *p > e.2 {
                e.1 = j;
                e.2 = *p;
            }
        }
        let mut best: Option<(F, usize)> = None;
        for (id, p) in dist.vocab.iter().enumerate() {
            if id == PAD_ID || id == BOS_ID {
                continue;
            }
            let total = *p + copy_mass.get(self.vocab.token(id)).map_or(F::zero(), |c| c.0);
            if best.is_none_or(|(b, _)| total > b) {
                best = Some((total, id));
            }
        }
        let (mut best_p, best_id) = best.expect("vocabulary has ordinary tokens");
        let mut choice = (self.vocab.token(best_id).to_string(), Emission::Vocab(best_id));
        if let Some((_, pos, _)) = copy_mass.get(self.vocab.token(best_id)) {
            if copy_mass[self.vocab.token(best_id)].0 > dist.vocab[best_id] {
                choice.1 = Emission::Copy(*pos);
            }
        }
        // source surfaces outside the vocabulary compete on copy mass alone,
        // in source order for determinism
        for (j, s) in src.iter().enumerate() {
            if self.vocab.get(s).is_none() {
                let (mass, pos, _) = copy_mass[s.as_str()];
                if pos == j && mass > best_p {
                    best_p = mass;
                    choice = (s.clone(), Emission::Copy(pos));
                }
            }
        }
        choice
    }
}
