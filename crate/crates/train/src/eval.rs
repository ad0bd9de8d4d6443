//! Corpus decoding, test-set scoring and the two model-selection scorers.

use kgtext_core::data::{Direction, Instance};
use kgtext_core::metrics::{bleu, chrf_pp, fact_f1, EvalInstance, MetricError, Prf};
use kgtext_core::seeding::substream;
use kgtext_core::{deserialize, Exec, KnowledgeGraph, Modality, TokenSeq};
use kgtext_neuro::{DecodeResult, ModelError, Seq2Seq};
use rand::seq::SliceRandom;

use crate::pools::CorpusPools;

/// Greedy-decodes every source in chunks of `batch`, each chunk mapped
/// with `exec`. Output order matches input order.
pub fn decode_all(
    model: &Seq2Seq<f32>,
    sources: &[TokenSeq],
    output: Modality,
    exec: Exec,
    batch: usize,
) -> Result<Vec<DecodeResult>, ModelError> {
    let mut out = Vec::with_capacity(sources.len());
    for chunk in sources.chunks(batch.max(1)) {
        for r in exec.map(chunk, |_, s| model.decode_greedy(s, output)) {
            out.push(r?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextScores {
    pub bleu: f64,
    pub chrf_pp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphScores {
    pub prf: Prf,
    /// Malformed fact segments dropped while reading predictions.
    pub malformed: usize,
}

fn text_scores(predictions: &[TokenSeq], refs: &[Vec<TokenSeq>]) -> Result<TextScores, MetricError> {
    let toks: Vec<EvalInstance<Vec<String>>> = predictions
        .iter()
        .zip(refs)
        .map(|(p, r)| EvalInstance::new(p.tokens.clone(), r.iter().map(|x| x.tokens.clone()).collect()))
        .collect();
    let raw: Vec<EvalInstance<String>> = predictions
        .iter()
        .zip(refs)
        .map(|(p, r)| EvalInstance::new(p.as_string(), r.iter().map(TokenSeq::as_string).collect()))
        .collect();
    Ok(TextScores { bleu: bleu(&toks)?, chrf_pp: chrf_pp(&raw)? })
}

fn graph_scores(predictions: &[TokenSeq], refs: &[Vec<KnowledgeGraph>]) -> Result<GraphScores, MetricError> {
    let mut malformed = 0;
    let corpus: Vec<EvalInstance<KnowledgeGraph>> = predictions
        .iter()
        .zip(refs)
        .map(|(p, r)| {
            let parsed = deserialize(&p.tokens);
            malformed += parsed.malformed;
            EvalInstance::new(parsed.graph, r.clone())
        })
        .collect();
    Ok(GraphScores { prf: fact_f1(&corpus)?, malformed })
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Scores precomputed text predictions against instance references.
pub fn score_texts(predictions: &[TokenSeq], instances: &[Instance]) -> Result<TextScores, MetricError> {
    let refs: Vec<Vec<TokenSeq>> = instances.iter().map(|i| i.references.clone()).collect();
    text_scores(predictions, &refs)
}

/// Scores precomputed graph predictions against instance references.
pub fn score_graphs(predictions: &[TokenSeq], instances: &[Instance]) -> Result<GraphScores, MetricError> {
    let refs: Vec<Vec<KnowledgeGraph>> =
        instances.iter().map(|i| i.references.iter().map(|r| deserialize(&r.tokens).graph).collect()).collect();
    graph_scores(predictions, &refs)
}

fn sources(instances: &[Instance]) -> Vec<TokenSeq> {
    instances.iter().map(|i| i.source.clone()).collect()
}

pub fn evaluate_g2t(model: &Seq2Seq<f32>, instances: &[Instance], exec: Exec) -> Result<TextScores, EvalError> {
    let preds: Vec<TokenSeq> =
        decode_all(model, &sources(instances), Modality::Text, exec, 64)?.into_iter().map(|d| d.tokens).collect();
    Ok(score_texts(&preds, instances)?)
}

pub fn evaluate_t2g(model: &Seq2Seq<f32>, instances: &[Instance], exec: Exec) -> Result<GraphScores, EvalError> {
    let preds: Vec<TokenSeq> =
        decode_all(model, &sources(instances), Modality::Graph, exec, 64)?.into_iter().map(|d| d.tokens).collect();
    Ok(score_graphs(&preds, instances)?)
}

/// Round-trip fidelity on unlabeled data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MUnsup {
    /// BLEU of each text against its text -> graph -> text reconstruction.
    pub text_bleu: f64,
    /// Fact F1 of each graph against its graph -> text -> graph
    /// reconstruction.
    pub graph_f1: f64,
}

impl MUnsup {
    /// The round trip that ends in the task's output direction: texts for
    /// g2t, graphs for t2g.
    pub fn for_direction(&self, d: Direction) -> f64 {
        match d {
            Direction::GraphToText => self.text_bleu,
            Direction::TextToGraph => self.graph_f1,
        }
    }
}

fn non_empty_or_blank(seq: TokenSeq) -> TokenSeq {
    // an empty intermediate cannot be encoded; a single blank token keeps
    // the instance in the score (it will reconstruct badly, as it should)
    if seq.is_empty() {
        TokenSeq::new(seq.modality, vec![kgtext_core::kg::BLANKED.to_string()])
    } else {
        seq
    }
}

pub fn m_unsup(model: &Seq2Seq<f32>, pools: &CorpusPools, exec: Exec, batch: usize) -> Result<MUnsup, EvalError> {
    let round_trip = |pool: &[TokenSeq], via: Modality| -> Result<Vec<TokenSeq>, ModelError> {
        let mid: Vec<TokenSeq> =
            decode_all(model, pool, via, exec, batch)?.into_iter().map(|d| non_empty_or_blank(d.tokens)).collect();
        Ok(decode_all(model, &mid, via.flip(), exec, batch)?.into_iter().map(|d| d.tokens).collect())
    };
    let texts = round_trip(&pools.texts, Modality::Graph)?;
    let text_refs: Vec<Vec<TokenSeq>> = pools.texts.iter().map(|t| vec![t.clone()]).collect();
    let graphs = round_trip(&pools.graphs, Modality::Text)?;
    let graph_refs: Vec<Vec<KnowledgeGraph>> =
        pools.graphs.iter().map(|g| vec![deserialize(&g.tokens).graph]).collect();
    Ok(MUnsup {
        text_bleu: text_scores(&texts, &text_refs)?.bleu,
        graph_f1: graph_scores(&graphs, &graph_refs)?.prf.f1,
    })
}

/// Fixed-seed random subset of `n` validation instances (all of them, with
/// a warning, when fewer exist).
pub fn val_sample(instances: &[Instance], n: usize, seed: u64) -> Vec<Instance> {
    if instances.len() <= n {
        if instances.len() < n {
            log::warn!("validation set has {} instances, fewer than the {n} requested; using all", instances.len());
        }
        return instances.to_vec();
    }
    let mut idx: Vec<usize> = (0..instances.len()).collect();
    idx.shuffle(&mut substream(seed, "val-sample", 0));
    idx.truncate(n);
    idx.sort_unstable();
    idx.into_iter().map(|i| instances[i].clone()).collect()
}

/// BLEU for g2t, fact F1 for t2g, on the validation sample.
pub fn m_val(model: &Seq2Seq<f32>, sample: &[Instance], direction: Direction, exec: Exec) -> Result<f64, EvalError> {
    Ok(match direction {
        Direction::GraphToText => evaluate_g2t(model, sample, exec)?.bleu,
        Direction::TextToGraph => evaluate_t2g(model, sample, exec)?.prf.f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use kgtext_core::data::Split;

    fn inst(i: usize) -> Instance {
        let t = TokenSeq::parse(Modality::Text, &format!("w{i}"));
        Instance { id: i.to_string(), split: Split::Val, source: t.clone(), references: vec![t] }
    }

    #[test]
    fn sample_is_fixed() {
        let all: Vec<Instance> = (0..300).map(inst).collect();
        let a = val_sample(&all, 100, 1);
        assert_eq!(a.len(), 100);
        assert_eq!(a, val_sample(&all, 100, 1));
        assert_ne!(a, val_sample(&all, 100, 2));
        assert_eq!(val_sample(&all[..40], 100, 1).len(), 40);
    }

    #[test]
    fn perfect_predictions_score_full() {
        let all: Vec<Instance> = (0..5).map(inst).collect();
        let preds: Vec<TokenSeq> = all.iter().map(|i| i.source.clone()).collect();
        assert_eq!(score_texts(&preds, &all).unwrap().bleu, 100.0);
    }
}
