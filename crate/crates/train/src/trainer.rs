//! Denoising pretraining, backtranslation iterations and supervised epochs.

use kgtext_core::noise::{corrupt_corpus, pretraining_pairs, NoiseConfig, NoisePlan, NoisyPair};
use kgtext_core::seeding::{derive_seed, substream};
use kgtext_core::{Exec, Lexicon, Modality, TokenSeq};
use kgtext_neuro::{ModelError, Seq2Seq, Vocabulary};
use rand::seq::SliceRandom;

use crate::adam::{Adam, NonFiniteGradient};
use crate::config::TrainConfig;
use crate::eval::decode_all;
use crate::pools::{CorpusPools, SupervisedPool};

/// `(source, target)`; the output type is the target's modality.
pub type Example = (TokenSeq, TokenSeq);

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    NonFiniteGradient(#[from] NonFiniteGradient),
    #[error("non-finite loss at update {0}")]
    NonFiniteLoss(u64),
    #[error("supervised pool is empty")]
    EmptySupervisedPool,
    #[error("no checkpoints to select from")]
    NoCheckpoints,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpochReport {
    /// Training pairs consumed.
    pub pairs: usize,
    /// Pairs skipped because the noisy source was empty.
    pub skipped: usize,
    pub first_batch_loss: f32,
    pub last_batch_loss: f32,
    pub mean_loss: f32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterationReport {
    pub iteration: usize,
    pub l_denoise: f32,
    pub l_back: f32,
    pub back_pairs: usize,
    pub denoise_pairs: usize,
    /// Backtranslations skipped because the decode was empty.
    pub skipped_back: usize,
}

/// Pseudo-parallel pairs from backtranslating a pool.
#[derive(Debug, Clone, PartialEq)]
pub struct Backtranslation {
    /// `(model output, original)`.
    pub pairs: Vec<Example>,
    pub skipped: usize,
}

/// Decodes every instance of `pool` into `output` and pairs the result
/// (as source) with the original (as target). Empty decodes are skipped.
pub fn backtranslate_corpus(
    model: &Seq2Seq<f32>,
    pool: &[TokenSeq],
    output: Modality,
    exec: Exec,
    batch: usize,
) -> Result<Backtranslation, ModelError> {
    let decoded = decode_all(model, pool, output, exec, batch)?;
    let mut pairs = Vec::with_capacity(pool.len());
    let mut skipped = 0;
    for (d, orig) in decoded.into_iter().zip(pool) {
        if d.tokens.is_empty() {
            skipped += 1;
        } else {
            pairs.push((d.tokens, orig.clone()));
        }
    }
    Ok(Backtranslation { pairs, skipped })
}

/// Shuffles, splits by target modality and chunks into batches of `size`;
/// the batch order is shuffled as well. Every batch has a single target
/// modality.
pub fn homogeneous_batches(mut pairs: Vec<Example>, size: usize, rng: &mut impl rand::Rng) -> Vec<Vec<Example>> {
    pairs.shuffle(rng);
    let (graphs, texts): (Vec<Example>, Vec<Example>) =
        pairs.into_iter().partition(|p| p.1.modality == Modality::Graph);
    let mut batches: Vec<Vec<Example>> = Vec::new();
    for group in [graphs, texts] {
        let mut it = group.into_iter().peekable();
        while it.peek().is_some() {
            batches.push(it.by_ref().take(size).collect());
        }
    }
    batches.shuffle(rng);
    batches
}

/// Alternates batches of `a` and `b`, appending whatever remains.
pub fn interleave<T>(a: Vec<T>, b: Vec<T>) -> Vec<(bool, T)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let mut ia = a.into_iter();
    let mut ib = b.into_iter();
    loop {
        match (ia.next(), ib.next()) {
            (None, None) => break,
            (x, y) => {
                out.extend(x.map(|x| (true, x)));
                out.extend(y.map(|y| (false, y)));
            }
        }
    }
    out
}

/// Index of the best score; ties go to the later checkpoint.
pub fn select_checkpoint(scores: &[f64]) -> Result<usize, TrainError> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if best.is_none_or(|b| *s >= scores[b]) {
            best = Some(i);
        }
    }
    best.ok_or(TrainError::NoCheckpoints)
}

fn noisy_to_example(p: NoisyPair) -> Example {
    (p.source, p.target)
}

fn split_empty(pairs: Vec<Example>) -> (Vec<Example>, usize) {
    let n = pairs.len();
    let kept: Vec<Example> = pairs.into_iter().filter(|p| !p.0.is_empty()).collect();
    let skipped = n - kept.len();
    (kept, skipped)
}

/// Mean over pairs of both direction losses, in evaluation mode.
pub fn supervised_loss(model: &Seq2Seq<f32>, pairs: &[(TokenSeq, TokenSeq)], exec: Exec) -> Result<f32, ModelError> {
    let losses = exec.map(pairs, |_, (g, t)| -> Result<f32, ModelError> {
        Ok(model.nll_loss(g, t, Modality::Text)? + model.nll_loss(t, g, Modality::Graph)?)
    });
    let mut sum = 0.0;
    for l in losses {
        sum += l?;
    }
    Ok(sum / pairs.len().max(1) as f32)
}

pub struct Trainer {
    pub model: Seq2Seq<f32>,
    pub adam: Adam<f32>,
    pub cfg: TrainConfig,
    pub lexicon: Lexicon,
    examples_seen: u64,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, vocab: Vocabulary) -> Self {
        let model = Seq2Seq::new(cfg.model, vocab, cfg.seed);
        Self::from_model(cfg, model)
    }

    pub fn from_model(cfg: TrainConfig, model: Seq2Seq<f32>) -> Self {
        let adam = Adam::new(&model.params, cfg.lr as f32);
        Trainer { model, adam, cfg, lexicon: Lexicon::bundled(), examples_seen: 0 }
    }

    pub fn updates(&self) -> u64 {
        self.adam.step
    }

    fn noise(&self) -> &NoiseConfig {
        &self.cfg.noise.params
    }

    /// One optimizer update on the batch mean loss; returns that loss.
    pub fn update(&mut self, batch: &[Example]) -> Result<f32, TrainError> {
        let refs: Vec<(&TokenSeq, &TokenSeq)> = batch.iter().map(|(s, t)| (s, t)).collect();
        let dropout = Some((derive_seed(self.cfg.seed, "dropout", 0), self.examples_seen));
        let mut bg = self.model.batch_gradients(self.cfg.exec, &refs, dropout)?;
        self.examples_seen += batch.len() as u64;
        let n = batch.len() as f32;
        let loss = bg.loss_sum / n;
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss(self.adam.step + 1));
        }
        bg.grads.scale(1.0 / n);
        bg.grads.clip_norm(self.cfg.clip_norm as f32);
        self.adam.update(&mut self.model.params, &bg.grads)?;
        Ok(loss)
    }

    fn run(&mut self, batches: &[Vec<Example>]) -> Result<Vec<f32>, TrainError> {
        batches.iter().map(|b| self.update(b)).collect()
    }

    /// All noise functions individually on every instance (sampled regime:
    /// one pair per active function) or one composed pair per instance.
    pub fn pretrain_denoise_epoch(&mut self, pools: &CorpusPools, plan: &NoisePlan) -> Result<EpochReport, TrainError> {
        let exec = self.cfg.exec;
        let seed = derive_seed(self.cfg.seed, "pretrain", 0);
        let mut pairs = Vec::new();
        for (name, pool) in [("graph", &pools.graphs), ("text", &pools.texts)] {
            let per = exec.map(pool, |i, inst| {
                pretraining_pairs(inst, plan, self.noise(), &self.lexicon, &mut substream(seed, name, i as u64))
            });
            pairs.extend(per.into_iter().flatten().map(noisy_to_example));
        }
        let (pairs, skipped) = split_empty(pairs);
        let batches =
            homogeneous_batches(pairs, self.cfg.batch_train, &mut substream(self.cfg.seed, "shuffle-pretrain", 0));
        let losses = self.run(&batches)?;
        Ok(EpochReport {
            pairs: batches.iter().map(Vec::len).sum(),
            skipped,
            first_batch_loss: losses.first().copied().unwrap_or(0.0),
            last_batch_loss: losses.last().copied().unwrap_or(0.0),
            mean_loss: mean(&losses),
        })
    }

    /// Backtranslates both pools with the current model, draws one noise
    /// sample per instance, and trains on alternating backtranslation and
    /// denoising batches.
    pub fn unsupervised_iteration(
        &mut self,
        pools: &CorpusPools,
        plan: &NoisePlan,
        iteration: usize,
    ) -> Result<IterationReport, TrainError> {
        let exec = self.cfg.exec;
        let bsz = self.cfg.batch_backtranslate;
        let to_text = backtranslate_corpus(&self.model, &pools.graphs, Modality::Text, exec, bsz)?;
        let to_graph = backtranslate_corpus(&self.model, &pools.texts, Modality::Graph, exec, bsz)?;
        let skipped_back = to_text.skipped + to_graph.skipped;
        let back: Vec<Example> = to_text.pairs.into_iter().chain(to_graph.pairs).collect();

        let seed = derive_seed(self.cfg.seed, "denoise", iteration as u64);
        let mut denoise: Vec<Example> = Vec::new();
        for (name, pool) in [("graph", &pools.graphs), ("text", &pools.texts)] {
            let noisy = corrupt_corpus(exec, pool, plan, self.noise(), &self.lexicon, seed, name);
            denoise.extend(noisy.into_iter().map(noisy_to_example));
        }
        let (denoise, _) = split_empty(denoise);

        let mut rng = substream(self.cfg.seed, "shuffle-iteration", iteration as u64);
        let back_batches = homogeneous_batches(back, self.cfg.batch_train, &mut rng);
        let den_batches = homogeneous_batches(denoise, self.cfg.batch_train, &mut rng);
        let report_sizes = (back_batches.iter().map(Vec::len).sum(), den_batches.iter().map(Vec::len).sum());

        let (mut lb, mut ld) = (Vec::new(), Vec::new());
        for (is_back, batch) in interleave(back_batches, den_batches) {
            let l = self.update(&batch)?;
            if is_back {
                lb.push(l);
            } else {
                ld.push(l);
            }
        }
        Ok(IterationReport {
            iteration,
            l_denoise: mean(&ld),
            l_back: mean(&lb),
            back_pairs: report_sizes.0,
            denoise_pairs: report_sizes.1,
            skipped_back,
        })
    }

    /// One pass over the gold pairs in both directions; returns the mean
    /// batch loss.
    pub fn supervised_epoch(&mut self, pool: &SupervisedPool, epoch: usize) -> Result<f32, TrainError> {
        if pool.is_empty() {
            return Err(TrainError::EmptySupervisedPool);
        }
        let examples: Vec<Example> =
            pool.pairs().iter().flat_map(|(g, t)| [(g.clone(), t.clone()), (t.clone(), g.clone())]).collect();
        let batches = homogeneous_batches(
            examples,
            self.cfg.batch_train,
            &mut substream(self.cfg.seed, "shuffle-supervised", epoch as u64),
        );
        Ok(mean(&self.run(&batches)?))
    }
}

#[derive(Debug, Clone)]
pub struct SupervisedReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f32,
    /// `(train loss, validation loss)` per epoch.
    pub history: Vec<(f32, f32)>,
    pub best_model: Seq2Seq<f32>,
}

/// Supervised training with early stopping: stops once validation loss has
/// not improved for `cfg.patience` epochs, or after `cfg.max_epochs`. The
/// callback sees every epoch (1-based) and may save checkpoints.
pub fn train_supervised(
    trainer: &mut Trainer,
    pool: &SupervisedPool,
    val: &[(TokenSeq, TokenSeq)],
    mut on_epoch: impl FnMut(usize, f32, f32, &Trainer),
) -> Result<SupervisedReport, TrainError> {
    let mut report = SupervisedReport {
        epochs_run: 0,
        best_epoch: 0,
        best_val_loss: f32::INFINITY,
        history: Vec::new(),
        best_model: trainer.model.clone(),
    };
    for epoch in 1..=trainer.cfg.max_epochs {
        let train_loss = trainer.supervised_epoch(pool, epoch)?;
        let val_loss = supervised_loss(&trainer.model, val, trainer.cfg.exec)?;
        report.history.push((train_loss, val_loss));
        report.epochs_run = epoch;
        on_epoch(epoch, train_loss, val_loss, trainer);
        if val_loss < report.best_val_loss {
            report.best_val_loss = val_loss;
            report.best_epoch = epoch;
            report.best_model = trainer.model.clone();
        } else if epoch - report.best_epoch >= trainer.cfg.patience {
            break;
        }
    }
    Ok(report)
}

fn mean(xs: &[f32]) -> f32 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f32>() / xs.len() as f32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(target: Modality, i: usize) -> Example {
        let s = TokenSeq::parse(target.flip(), &format!("s{i}"));
        (s, TokenSeq::parse(target, &format!("t{i}")))
    }

    #[test]
    fn batches_are_homogeneous_and_complete() {
        let pairs: Vec<Example> =
            (0..23).map(|i| ex(if i % 3 == 0 { Modality::Graph } else { Modality::Text }, i)).collect();
        let batches = homogeneous_batches(pairs, 4, &mut substream(0, "b", 0));
        assert_eq!(batches.iter().map(Vec::len).sum::<usize>(), 23);
        for b in &batches {
            assert!(b.len() <= 4 && !b.is_empty());
            assert!(b.iter().all(|p| p.1.modality == b[0].1.modality));
        }
    }

    #[test]
    fn interleaving_alternates() {
        let out = interleave(vec![1, 2, 3], vec![10]);
        assert_eq!(out, vec![(true, 1), (false, 10), (true, 2), (true, 3)]);
    }

    #[test]
    fn selection_prefers_later_ties() {
        assert_eq!(select_checkpoint(&[10.0, 20.0, 15.0]).unwrap(), 1);
        assert_eq!(select_checkpoint(&[5.0]).unwrap(), 0);
        assert_eq!(select_checkpoint(&[3.0, 3.0]).unwrap(), 1);
        assert!(matches!(select_checkpoint(&[]), Err(TrainError::NoCheckpoints)));
    }
}
