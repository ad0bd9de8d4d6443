//! Whole training runs: pretraining plus backtranslation iterations with
//! per-iteration evaluation, checkpoints and a TSV log.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use kgtext_core::data::{unify_duplicates, Direction, Instance, Pair, Split};
use kgtext_neuro::checkpoint::{self, CheckpointError};
use kgtext_neuro::{Seq2Seq, Vocabulary};

use crate::config::TrainConfig;
use crate::eval::{evaluate_g2t, evaluate_t2g, m_unsup, m_val, val_sample, EvalError, MUnsup};
use crate::pools::CorpusPools;
use crate::trainer::{EpochReport, TrainError, Trainer};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Multi-reference instances of one split, in both directions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalSets {
    pub g2t: Vec<Instance>,
    pub t2g: Vec<Instance>,
}

impl EvalSets {
    pub fn from_pairs(pairs: &[Pair], split: Split) -> Self {
        let of_split: Vec<Pair> = pairs.iter().filter(|p| p.split == split).cloned().collect();
        let keep = |v: Vec<Instance>| v.into_iter().filter(|i| !i.source.is_empty()).collect();
        EvalSets {
            g2t: keep(unify_duplicates(&of_split, Direction::GraphToText)),
            t2g: keep(unify_duplicates(&of_split, Direction::TextToGraph)),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.g2t.is_empty() && self.t2g.is_empty()
    }

    pub fn direction(&self, d: Direction) -> &[Instance] {
        match d {
            Direction::GraphToText => &self.g2t,
            Direction::TextToGraph => &self.t2g,
        }
    }
}

/// Full validation sets and their fixed-seed selection samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValSets {
    pub full: EvalSets,
    pub sample: EvalSets,
}

impl ValSets {
    pub fn new(full: EvalSets, n: usize, seed: u64) -> Self {
        let sample = EvalSets { g2t: val_sample(&full.g2t, n, seed), t2g: val_sample(&full.t2g, n, seed) };
        ValSets { full, sample }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterationRecord {
    pub iteration: usize,
    pub l_denoise: f32,
    pub l_back: f32,
    pub m_unsup: Option<MUnsup>,
    pub m_val_bleu: Option<f64>,
    pub m_val_f1: Option<f64>,
    pub val_bleu: Option<f64>,
    pub val_f1: Option<f64>,
}

pub const TSV_HEADER: &str =
    "iteration\tL_denoise\tL_back\tM_unsup_bleu\tM_unsup_f1\tM_val_bleu\tM_val_f1\tval_BLEU\tval_F1";

pub fn format_tsv(records: &[IterationRecord]) -> String {
    let opt = |x: Option<f64>| x.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"));
    let mut out = String::from(TSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{}\t{:.4}\t{:.4}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.iteration,
            r.l_denoise,
            r.l_back,
            opt(r.m_unsup.map(|m| m.text_bleu)),
            opt(r.m_unsup.map(|m| m.graph_f1)),
            opt(r.m_val_bleu),
            opt(r.m_val_f1),
            opt(r.val_bleu),
            opt(r.val_f1),
        );
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Backtranslation iterations after pretraining.
    pub iterations: usize,
    /// Where checkpoints (`iter-N.ckpt`) and `log.tsv` go.
    pub out_dir: Option<PathBuf>,
    /// Compute round-trip M_unsup after every iteration.
    pub m_unsup: bool,
    /// Keep every iteration's model in memory.
    pub keep_models: bool,
}

pub struct UnsupervisedRun {
    pub trainer: Trainer,
    pub pretrain: EpochReport,
    pub records: Vec<IterationRecord>,
    pub checkpoints: Vec<PathBuf>,
    pub models: Vec<Seq2Seq<f32>>,
}

pub fn checkpoint_path(dir: &Path, iteration: usize) -> PathBuf {
    dir.join(format!("iter-{iteration}.ckpt"))
}

fn write(path: &Path, contents: &str) -> Result<(), RunError> {
    fs::write(path, contents).map_err(|source| RunError::Io { path: path.into(), source })
}

/// Scores the model on validation data and (optionally) the unlabeled pools.
pub fn evaluate_record(
    record: &mut IterationRecord,
    model: &Seq2Seq<f32>,
    pools: &CorpusPools,
    val: Option<&ValSets>,
    cfg: &TrainConfig,
    with_m_unsup: bool,
) -> Result<(), RunError> {
    if with_m_unsup {
        record.m_unsup = Some(m_unsup(model, pools, cfg.exec, cfg.batch_backtranslate)?);
    }
    if let Some(v) = val {
        if !v.sample.g2t.is_empty() {
            record.m_val_bleu = Some(m_val(model, &v.sample.g2t, Direction::GraphToText, cfg.exec)?);
            record.val_bleu = Some(evaluate_g2t(model, &v.full.g2t, cfg.exec)?.bleu);
        }
        if !v.sample.t2g.is_empty() {
            record.m_val_f1 = Some(m_val(model, &v.sample.t2g, Direction::TextToGraph, cfg.exec)?);
            record.val_f1 = Some(evaluate_t2g(model, &v.full.t2g, cfg.exec)?.prf.f1);
        }
    }
    Ok(())
}

/// Vocabulary from the unlabeled pools, a fresh model, one denoising
/// pretraining epoch (recorded as iteration 0) and `opts.iterations`
/// backtranslation iterations. The supervised pool is never read.
pub fn run_unsupervised(
    cfg: &TrainConfig,
    pools: &CorpusPools,
    val: Option<&ValSets>,
    opts: &RunOptions,
) -> Result<UnsupervisedRun, RunError> {
    let vocab = Vocabulary::build(pools.sequences(), cfg.vocab_max);
    let mut trainer = Trainer::new(cfg.clone(), vocab);
    let plan = cfg.noise.plan();
    if let Some(d) = &opts.out_dir {
        fs::create_dir_all(d).map_err(|source| RunError::Io { path: d.clone(), source })?;
        write(&d.join("config.toml"), &cfg.to_toml())?;
    }

    let mut run = UnsupervisedRun {
        pretrain: EpochReport::default(),
        trainer: Trainer::new(cfg.clone(), Vocabulary::build(std::iter::empty::<&[String]>(), None)),
        records: Vec::new(),
        checkpoints: Vec::new(),
        models: Vec::new(),
    };
    for it in 0..=opts.iterations {
        let mut record = if it == 0 {
            run.pretrain = trainer.pretrain_denoise_epoch(pools, &plan)?;
            log::info!("pretraining: {} pairs, mean loss {:.4}", run.pretrain.pairs, run.pretrain.mean_loss);
            IterationRecord { iteration: 0, l_denoise: run.pretrain.mean_loss, ..Default::default() }
        } else {
            let r = trainer.unsupervised_iteration(pools, &plan, it)?;
            log::info!("iteration {it}: L_denoise {:.4}, L_back {:.4}", r.l_denoise, r.l_back);
            if r.skipped_back > 0 {
                log::info!("iteration {it}: skipped {} empty backtranslations", r.skipped_back);
            }
            IterationRecord { iteration: it, l_denoise: r.l_denoise, l_back: r.l_back, ..Default::default() }
        };
        evaluate_record(&mut record, &trainer.model, pools, val, cfg, opts.m_unsup)?;
        run.records.push(record);
        if let Some(d) = &opts.out_dir {
            let path = checkpoint_path(d, it);
            checkpoint::save(&trainer.model, &path, cfg.seed, it as u64)?;
            run.checkpoints.push(path);
            write(&d.join("log.tsv"), &format_tsv(&run.records))?;
        }
        if opts.keep_models {
            run.models.push(trainer.model.clone());
        }
    }
    run.trainer = trainer;
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_layout() {
        let recs = vec![
            IterationRecord { iteration: 0, l_denoise: 1.5, ..Default::default() },
            IterationRecord {
                iteration: 1,
                l_denoise: 1.0,
                l_back: 2.0,
                m_unsup: Some(MUnsup { text_bleu: 12.5, graph_f1: 0.25 }),
                m_val_bleu: Some(10.0),
                m_val_f1: Some(0.5),
                val_bleu: Some(11.0),
                val_f1: Some(0.4),
            },
        ];
        let tsv = format_tsv(&recs);
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0], TSV_HEADER);
        assert_eq!(lines[1], "0\t1.5000\t0.0000\tNA\tNA\tNA\tNA\tNA\tNA");
        assert_eq!(lines[2], "1\t1.0000\t2.0000\t12.5000\t0.2500\t10.0000\t0.5000\t11.0000\t0.4000");
    }
}
