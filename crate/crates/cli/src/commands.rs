use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use kgtext_core::data::{
    corpus_stats, load_vg, load_webnlg, read_jsonl, records_from_pairs, regions_to_instances, split_and_clean,
    synth_corpus, unify_duplicates, vg_ball_filter, write_jsonl, Direction, Instance, Record, Split, SynthSpec,
};
use kgtext_core::kg::serialize_unchecked;
use kgtext_core::lingo::tokenize;
use kgtext_core::rules::{rule_g2t, rule_t2g, rule_t2g_tokens};
use kgtext_core::{deserialize, KnowledgeGraph, Lexicon, Modality, TokenSeq};
use kgtext_neuro::checkpoint;
use kgtext_neuro::Vocabulary;
use kgtext_train::ablation::{filter_grid, run_cell, CellResult};
use kgtext_train::config::Mode;
use kgtext_train::eval::{decode_all, m_unsup, m_val, score_graphs, score_texts, val_sample};
use kgtext_train::run::{run_unsupervised, EvalSets, RunOptions, ValSets};
use kgtext_train::trainer::{select_checkpoint, train_supervised, Trainer};
use kgtext_train::{CorpusPools, TrainConfig};
use serde::Serialize;

use crate::{
    load_config, read_pairs, require, write_out, AblateArgs, BuildDataArgs, Cli, CliError, ConvertArgs, ConvertMode,
    Criterion, Dataset, EvaluateArgs, SelectArgs, TrainArgs,
};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.into(), source }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

pub fn build_data(cli: &Cli, a: &BuildDataArgs) -> Result<(), CliError> {
    let out = require(&cli.out, "--out directory")?;
    let seed = cli.seed.unwrap_or(0);
    if a.ball_subset && a.dataset != Dataset::Vg {
        return Err(CliError::Usage("--ball-subset applies to --dataset vg only".into()));
    }
    let mut extra: Vec<(&str, usize)> = Vec::new();
    let pairs = match a.dataset {
        Dataset::Webnlg => load_webnlg(require(&a.raw, "--raw directory")?)?,
        Dataset::Vg => {
            let regions = load_vg(require(&a.raw, "--raw directory")?)?;
            let rp = regions_to_instances(&regions)?;
            extra.push(("dropped_regions", rp.dropped));
            let split = split_and_clean(rp.pairs, seed);
            extra.push(("removed_from_train", split.removed_from_train));
            if a.ball_subset {
                vg_ball_filter(&split.pairs)
            } else {
                split.pairs
            }
        }
        Dataset::Synthetic => {
            let spec = SynthSpec { n_instances: a.instances, ..SynthSpec::default() };
            spec.validate().map_err(CliError::Usage)?;
            synth_corpus(&spec, seed)
        }
    };

    create_dir(out)?;
    for split in Split::ALL {
        let of_split: Vec<_> = pairs.iter().filter(|p| p.split == split).cloned().collect();
        write_jsonl(&out.join(format!("{split}.jsonl")), &records_from_pairs(&of_split))?;
    }
    let mut stats = serde_json::to_value(corpus_stats(&pairs)).expect("stats serialize");
    for (k, v) in extra {
        stats[k] = v.into();
    }
    let path = out.join("stats.json");
    fs::write(&path, serde_json::to_string_pretty(&stats).expect("json") + "\n").map_err(io_err(&path))?;
    log::info!("wrote {} pairs to {}", pairs.len(), out.display());
    Ok(())
}

fn apply_noise_flags(cfg: &mut TrainConfig, noise: &crate::NoiseArgs) {
    let plan = noise.apply(&cfg.noise.plan());
    cfg.noise.regime = plan.regime;
    cfg.noise.functions = plan.functions;
}

pub fn train(cli: &Cli, a: &TrainArgs) -> Result<(), CliError> {
    let mut cfg = load_config(cli)?;
    apply_noise_flags(&mut cfg, &a.noise);
    if let Some(n) = a.iterations {
        cfg.max_unsup_iterations = n;
    }
    cfg.validate()?;
    let out = require(&cli.out, "--out directory")?;
    let train_pairs = read_pairs(require(&cfg.data.train, "data.train in the config")?)?;
    let val_pairs = cfg.data.val.as_deref().map(read_pairs).transpose()?;
    let pools = CorpusPools::from_pairs(&train_pairs);
    if pools.skipped_empty > 0 {
        log::warn!("skipped {} training pairs with an empty side", pools.skipped_empty);
    }

    match cfg.mode {
        Mode::Unsupervised => {
            let val = val_pairs
                .map(|v| ValSets::new(EvalSets::from_pairs(&v, Split::Val), cfg.val_sample, cfg.seed))
                .filter(|v| !v.full.is_empty());
            let opts = RunOptions {
                iterations: cfg.max_unsup_iterations,
                out_dir: Some(out.clone()),
                m_unsup: true,
                keep_models: false,
            };
            let run = run_unsupervised(&cfg, &pools, val.as_ref(), &opts)?;
            log::info!("{} checkpoints in {}", run.checkpoints.len(), out.display());
        }
        Mode::Supervised => {
            let val: Vec<(TokenSeq, TokenSeq)> = val_pairs
                .unwrap_or_default()
                .iter()
                .map(|p| (p.graph_seq(), p.text_seq()))
                .filter(|(g, t)| !g.is_empty() && !t.is_empty())
                .collect();
            if val.is_empty() {
                return Err(CliError::Usage("supervised training needs a non-empty data.val".into()));
            }
            create_dir(out)?;
            let cfg_path = out.join("config.toml");
            fs::write(&cfg_path, cfg.to_toml()).map_err(io_err(&cfg_path))?;
            let mut trainer = Trainer::new(cfg.clone(), Vocabulary::build(pools.sequences(), cfg.vocab_max));
            let mut log = String::from("epoch\ttrain_loss\tval_loss\n");
            let mut failure: Option<CliError> = None;
            let report = train_supervised(&mut trainer, &pools.supervised, &val, |epoch, tl, vl, t| {
                let _ = writeln!(log, "{epoch}\t{tl:.4}\t{vl:.4}");
                log::info!("epoch {epoch}: train {tl:.4}, val {vl:.4}");
                let ck = out.join(format!("epoch-{epoch}.ckpt"));
                let res = checkpoint::save(&t.model, &ck, cfg.seed, epoch as u64)
                    .map_err(CliError::from)
                    .and_then(|_| fs::write(out.join("log.tsv"), &log).map_err(io_err(out)));
                if let Err(e) = res {
                    failure.get_or_insert(e);
                }
            })?;
            if let Some(e) = failure {
                return Err(e);
            }
            checkpoint::save(&report.best_model, &out.join("best.ckpt"), cfg.seed, report.best_epoch as u64)?;
            log::info!("best epoch {} (val loss {:.4})", report.best_epoch, report.best_val_loss);
        }
    }
    Ok(())
}

fn fact_triples(g: &KnowledgeGraph) -> Vec<[String; 3]> {
    g.facts.iter().map(|f| [f.subject.clone(), f.predicate.clone(), f.object.clone()]).collect()
}

/// One output record per input text, carrying the predicted graph.
fn per_text(
    records: &[Record],
    mut predict: impl FnMut(&str) -> Result<KnowledgeGraph, CliError>,
) -> Result<Vec<Record>, CliError> {
    let mut out = Vec::new();
    for r in records {
        for (k, text) in r.texts.iter().enumerate() {
            let id = if r.texts.len() > 1 { format!("{}#{k}", r.id) } else { r.id.clone() };
            out.push(Record { id, split: r.split, graph: fact_triples(&predict(text)?), texts: vec![text.clone()] });
        }
    }
    Ok(out)
}

fn emit_jsonl(out: Option<&Path>, records: &[Record]) -> Result<(), CliError> {
    match out {
        Some(path) => Ok(write_jsonl(path, records)?),
        None => {
            let mut s = String::new();
            for r in records {
                s.push_str(&serde_json::to_string(r).expect("record serializes"));
                s.push('\n');
            }
            write_out(None, &s)
        }
    }
}

pub fn convert(cli: &Cli, a: &ConvertArgs) -> Result<(), CliError> {
    let records = read_jsonl(&a.input)?;
    let lexicon = Lexicon::bundled();
    let converted = match a.mode {
        ConvertMode::RuleG2t => records
            .iter()
            .map(|r| {
                let g = serialize_unchecked(&r.knowledge_graph());
                Record { texts: vec![rule_g2t(&g.tokens).as_string()], ..r.clone() }
            })
            .collect(),
        ConvertMode::RuleT2g => per_text(&records, |text| Ok(rule_t2g(text, &lexicon)))?,
        ConvertMode::Model => {
            let direction: Direction = (*require(&a.direction, "--direction for --mode model")?).into();
            let (model, _) = checkpoint::load(require(&a.checkpoint, "--checkpoint for --mode model")?)?;
            let cfg = load_config(cli)?;
            match direction {
                Direction::GraphToText => {
                    let sources: Vec<TokenSeq> =
                        records.iter().map(|r| serialize_unchecked(&r.knowledge_graph())).collect();
                    let decoded = decode_all(&model, &sources, Modality::Text, cfg.exec, cfg.batch_backtranslate)
                        .map_err(|e| CliError::Eval(e.into()))?;
                    records
                        .iter()
                        .zip(decoded)
                        .map(|(r, d)| Record { texts: vec![d.tokens.as_string()], ..r.clone() })
                        .collect()
                }
                Direction::TextToGraph => per_text(&records, |text| {
                    let src = TokenSeq::new(Modality::Text, tokenize(text));
                    let d = model.decode_greedy(&src, Modality::Graph).map_err(|e| CliError::Eval(e.into()))?;
                    Ok(deserialize(&d.tokens.tokens).graph)
                })?,
            }
        }
    };
    emit_jsonl(cli.out.as_deref(), &converted)
}

/// Scores as emitted by `evaluate`. Text metrics are absent for t2g and
/// fact metrics for g2t.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub bleu: Option<f64>,
    pub chrf_pp: Option<f64>,
    pub fact_p: Option<f64>,
    pub fact_r: Option<f64>,
    pub fact_f1: Option<f64>,
    pub n_instances: usize,
    pub n_malformed: usize,
}

fn predictions_from_file(path: &Path, instances: &[Instance], direction: Direction) -> Result<Vec<TokenSeq>, CliError> {
    let mut by_source: HashMap<String, TokenSeq> = HashMap::new();
    for r in read_jsonl(path)? {
        match direction {
            Direction::GraphToText => {
                let key = serialize_unchecked(&r.knowledge_graph()).as_string();
                let text = r.texts.first().map(|t| tokenize(t)).unwrap_or_default();
                by_source.entry(key).or_insert_with(|| TokenSeq::new(Modality::Text, text));
            }
            Direction::TextToGraph => {
                let graph = serialize_unchecked(&r.knowledge_graph());
                for t in &r.texts {
                    by_source.entry(tokenize(t).join(" ")).or_insert_with(|| graph.clone());
                }
            }
        }
    }
    let mut missing = 0;
    let preds = instances
        .iter()
        .map(|i| {
            by_source.get(&i.source.as_string()).cloned().unwrap_or_else(|| {
                missing += 1;
                TokenSeq::new(direction.target(), Vec::new())
            })
        })
        .collect();
    if missing > 0 {
        log::warn!("{missing} reference instances have no prediction; scored as empty");
    }
    Ok(preds)
}

pub fn evaluate(cli: &Cli, a: &EvaluateArgs) -> Result<EvalReport, CliError> {
    let direction: Direction = a.direction.into();
    let pairs = read_pairs(&a.references)?;
    let instances: Vec<Instance> =
        unify_duplicates(&pairs, direction).into_iter().filter(|i| !i.source.is_empty()).collect();
    let predictions: Vec<TokenSeq> = if let Some(p) = &a.predictions {
        predictions_from_file(p, &instances, direction)?
    } else if let Some(ck) = &a.checkpoint {
        let (model, _) = checkpoint::load(ck)?;
        let cfg = load_config(cli)?;
        let sources: Vec<TokenSeq> = instances.iter().map(|i| i.source.clone()).collect();
        decode_all(&model, &sources, direction.target(), cfg.exec, cfg.batch_backtranslate)
            .map_err(|e| CliError::Eval(e.into()))?
            .into_iter()
            .map(|d| d.tokens)
            .collect()
    } else if a.rule {
        let lexicon = Lexicon::bundled();
        instances
            .iter()
            .map(|i| match direction {
                Direction::GraphToText => rule_g2t(&i.source.tokens),
                Direction::TextToGraph => serialize_unchecked(&rule_t2g_tokens(&i.source.tokens, &lexicon)),
            })
            .collect()
    } else {
        return Err(CliError::Usage("one of --predictions, --checkpoint or --rule is required".into()));
    };

    let mut report = EvalReport {
        bleu: None,
        chrf_pp: None,
        fact_p: None,
        fact_r: None,
        fact_f1: None,
        n_instances: instances.len(),
        n_malformed: 0,
    };
    match direction {
        Direction::GraphToText => {
            let s = score_texts(&predictions, &instances).map_err(|e| CliError::Eval(e.into()))?;
            report.bleu = Some(s.bleu);
            report.chrf_pp = Some(s.chrf_pp);
        }
        Direction::TextToGraph => {
            let s = score_graphs(&predictions, &instances).map_err(|e| CliError::Eval(e.into()))?;
            report.fact_p = Some(s.prf.precision);
            report.fact_r = Some(s.prf.recall);
            report.fact_f1 = Some(s.prf.f1);
            report.n_malformed = s.malformed;
        }
    }
    write_out(cli.out.as_deref(), &(serde_json::to_string_pretty(&report).expect("json") + "\n"))?;
    Ok(report)
}

/// Checkpoints named `iter-N.ckpt` or `epoch-N.ckpt`, ordered by N.
pub fn list_checkpoints(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut found: Vec<(u64, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let number = name
            .strip_suffix(".ckpt")
            .and_then(|s| s.strip_prefix("iter-").or_else(|| s.strip_prefix("epoch-")))
            .and_then(|n| n.parse().ok());
        if let Some(n) = number {
            found.push((n, path));
        }
    }
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub scores: Vec<(PathBuf, f64)>,
    pub selected: PathBuf,
}

type Scorer = dyn Fn(&kgtext_neuro::Seq2Seq<f32>) -> Result<f64, CliError>;

pub fn select(cli: &Cli, a: &SelectArgs) -> Result<Selection, CliError> {
    let cfg = load_config(cli)?;
    let checkpoints = list_checkpoints(&a.dir)?;
    let score: Box<Scorer> = match a.criterion {
        Criterion::MValBleu | Criterion::MValF1 => {
            let val = read_pairs(require(&cfg.data.val, "data.val in the config")?)?;
            let sets = EvalSets::from_pairs(&val, Split::Val);
            let direction =
                if a.criterion == Criterion::MValBleu { Direction::GraphToText } else { Direction::TextToGraph };
            let sample = val_sample(sets.direction(direction), cfg.val_sample, cfg.seed);
            Box::new(move |m| Ok(m_val(m, &sample, direction, cfg.exec)?))
        }
        Criterion::MUnsupBleu | Criterion::MUnsupF1 => {
            let pools = CorpusPools::from_pairs(&read_pairs(require(&cfg.data.train, "data.train in the config")?)?);
            let text = a.criterion == Criterion::MUnsupBleu;
            Box::new(move |m| {
                let s = m_unsup(m, &pools, cfg.exec, cfg.batch_backtranslate)?;
                Ok(if text { s.text_bleu } else { s.graph_f1 })
            })
        }
    };
    let mut scores = Vec::with_capacity(checkpoints.len());
    for path in checkpoints {
        let (model, _) = checkpoint::load(&path)?;
        let s = score(&model)?;
        log::info!("{}: {s:.4}", path.display());
        scores.push((path, s));
    }
    let values: Vec<f64> = scores.iter().map(|(_, s)| *s).collect();
    let best = select_checkpoint(&values)?;
    let selection = Selection { selected: scores[best].0.clone(), scores };

    let mut table = String::from("checkpoint\tscore\n");
    for (p, s) in &selection.scores {
        let _ = writeln!(table, "{}\t{s:.4}", p.display());
    }
    let _ = writeln!(table, "selected\t{}", selection.selected.display());
    write_out(cli.out.as_deref(), &table)?;
    Ok(selection)
}

pub const ABLATION_HEADER: &str = "cell\tBLEU\tchrF++\tfact_P\tfact_R\tfact_F1";

pub fn ablation_row(r: &CellResult) -> String {
    format!(
        "{}\t{:.2}\t{:.2}\t{:.4}\t{:.4}\t{:.4}",
        r.cell.name, r.g2t.bleu, r.g2t.chrf_pp, r.t2g.prf.precision, r.t2g.prf.recall, r.t2g.prf.f1
    )
}

pub fn ablate(cli: &Cli, a: &AblateArgs) -> Result<Vec<CellResult>, CliError> {
    let cfg = load_config(cli)?;
    let iterations = a.iterations.unwrap_or(cfg.max_unsup_iterations);
    let n = &a.noise;
    let cells = filter_grid(n.regime, n.only, n.exclude, n.no_noise);
    let train_pairs = read_pairs(require(&cfg.data.train, "data.train in the config")?)?;
    let test_pairs = read_pairs(require(&cfg.data.test, "data.test in the config")?)?;
    let pools = CorpusPools::from_pairs(&train_pairs);
    let test = EvalSets::from_pairs(&test_pairs, Split::Test);

    let mut table = format!("{ABLATION_HEADER}\n");
    let mut results = Vec::with_capacity(cells.len());
    for cell in &cells {
        log::info!("ablation cell: {}", cell.name);
        let r = run_cell(&cfg, cell, &pools, &test, iterations)?;
        table.push_str(&ablation_row(&r));
        table.push('\n');
        if let Some(path) = &cli.out {
            fs::write(path, &table).map_err(io_err(path))?;
        }
        results.push(r);
    }
    if cli.out.is_none() {
        write_out(None, &table)?;
    }
    Ok(results)
}
