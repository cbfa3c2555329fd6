//! End-to-end runs shared by the command-line tool and the integration
//! tests: corpus preparation, training into a run directory, decoding,
//! scoring and distillation.
//!
//! A training run directory holds
//!
//! ```text
//! config.toml       resolved configuration
//! manifest.json     digest, format versions, corpus and model summary
//! train_log.jsonl   one TrainEvent per line
//! model.ckpt        averaged checkpoint
//! metrics.json      deterministic scores (no wall-clock fields)
//! timing.json       wall-clock measurements
//! ```

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use crate::config::{DataConfig, RunConfig, CONFIG_VERSION};
use crate::data::{generate_corpus, CorpusBundle, SentencePair, SplitSizes, TokenId};
use crate::error::{Error, Result};
use crate::eval::{bleu, evaluate, EvalReport, Validity};
use crate::inference::{write_trace, Algorithm, DecodeConfig, Translation, TRACE_VERSION};
use crate::model::{load_checkpoint, save_checkpoint, Checkpoint, DecoderKind, Model};
use crate::numerics::{DType, Real, RngStream};
use crate::train::{alpha_grid, distill_corpus, train, tune_alpha, AlphaTuning, Objective, TrainEvent};

/// Generated or loaded corpus for the `data` section.
pub fn load_corpus(data: &DataConfig) -> Result<CorpusBundle> {
    match &data.dir {
        Some(dir) => CorpusBundle::load_dir(dir, data.max_len),
        None => generate_corpus(
            &data.task_spec(),
            SplitSizes {
                train: data.train_size,
                dev: data.dev_size,
                test: data.test_size,
            },
        ),
    }
}

pub type ValidityCheck = Box<dyn Fn(&[TokenId], &[TokenId]) -> bool>;

/// Task-level correctness test: membership in the lexicon task's set of
/// valid translations. Other tasks have a single correct output, so exact
/// match already covers them.
pub fn validity_check(data: &DataConfig, corpus: &CorpusBundle) -> Option<ValidityCheck> {
    let lexicon = data.task_spec().lexicon()?;
    let (sv, tv) = (corpus.src_vocab.clone(), corpus.tgt_vocab.clone());
    Some(Box::new(move |src: &[TokenId], tgt: &[TokenId]| {
        let s: Vec<&str> = src.iter().map(|&i| sv.word(i).unwrap_or("")).collect();
        let t: Vec<&str> = tgt.iter().map(|&i| tv.word(i).unwrap_or("")).collect();
        lexicon.is_valid(&s, &t)
    }))
}

/// The decode settings a model can actually run: left-to-right models
/// always use beam search.
pub fn effective_decode(decoder: DecoderKind, decode: &DecodeConfig) -> DecodeConfig {
    match decoder {
        DecoderKind::Autoregressive { .. } => DecodeConfig {
            algorithm: Algorithm::Beam,
            ..decode.clone()
        },
        _ => decode.clone(),
    }
}

/// Objective matching the configured decoder when the config leaves the
/// default DisCo objective on a decoder that cannot train with it.
pub fn effective_objective(decoder: DecoderKind, objective: Objective) -> Objective {
    match (decoder, objective) {
        (DecoderKind::Autoregressive { .. }, Objective::Disco) => Objective::Autoregressive,
        (DecoderKind::Cmlm, Objective::Disco) => Objective::Cmlm,
        _ => objective,
    }
}

pub struct Trained<T> {
    pub model: Model<T>,
    pub events: Vec<TrainEvent>,
    pub averaged: Vec<(u64, f64)>,
    pub steps: u64,
    pub train_seconds: f64,
}

/// Initializes and trains a model on `train_pairs`, scoring checkpoints by
/// dev exact match (the valid-translation rate on the lexicon task) under
/// the run's decode settings.
pub fn train_model<T: Real>(cfg: &RunConfig, corpus: &CorpusBundle, train_pairs: &[SentencePair]) -> Result<Trained<T>> {
    let mcfg = cfg.model_config(corpus.src_vocab.len(), corpus.tgt_vocab.len())?;
    let decoder = mcfg.decoder;
    let model = Model::<T>::new(mcfg, &mut RngStream::new(cfg.model.init_seed))?;
    let mut tcfg = cfg.train.clone();
    tcfg.objective = effective_objective(decoder, tcfg.objective);
    let decode = effective_decode(decoder, &cfg.decode);
    let dev: Vec<SentencePair> = corpus.dev.iter().take(cfg.data.eval_sentences).cloned().collect();
    let validity = validity_check(&cfg.data, corpus);
    let mut dev_score = |m: &Model<T>| -> Result<f64> {
        let (report, _) = evaluate(m, &dev, &decode, validity.as_deref(), "")?;
        Ok(report.valid.unwrap_or(report.exact_match))
    };
    let start = Instant::now();
    let out = train(model, train_pairs, &tcfg, &mut dev_score)?;
    Ok(Trained {
        model: out.model,
        events: out.events,
        averaged: out.averaged,
        steps: out.steps,
        train_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Decodes and scores one split.
pub fn score_split<T: Real>(
    model: &Model<T>,
    pairs: &[SentencePair],
    cfg: &RunConfig,
    corpus: &CorpusBundle,
    decode: &DecodeConfig,
) -> Result<(EvalReport, Vec<Translation>)> {
    let check = validity_check(&cfg.data, corpus);
    let validity: Option<Validity<'_>> = check.as_deref().map(|f| f as Validity<'_>);
    let decode = effective_decode(model.config().decoder, decode);
    evaluate(model, pairs, &decode, validity, &cfg.digest())
}

fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Validation(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn manifest(command: &str, cfg: &RunConfig, extra: serde_json::Value) -> serde_json::Value {
    let mut m = json!({
        "command": command,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "config_version": CONFIG_VERSION,
        "trace_version": TRACE_VERSION,
        "config_digest": cfg.digest(),
    });
    if let (Some(obj), serde_json::Value::Object(more)) = (m.as_object_mut(), extra) {
        obj.extend(more);
    }
    m
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    /// Test-split report of the averaged model.
    pub report: EvalReport,
    /// Contents of `metrics.json`.
    pub metrics: serde_json::Value,
}

fn write_run<T: Real>(
    command: &str,
    cfg: &RunConfig,
    corpus: &CorpusBundle,
    trained: &Trained<T>,
    dir: &Path,
    extra_metrics: serde_json::Value,
) -> Result<RunSummary> {
    create_dir(dir)?;
    write_text(&dir.join("config.toml"), &cfg.to_toml())?;
    let mut log = String::new();
    for e in &trained.events {
        log += &serde_json::to_string(e).map_err(|e| Error::Validation(e.to_string()))?;
        log.push('\n');
    }
    write_text(&dir.join("train_log.jsonl"), &log)?;
    save_checkpoint(&dir.join("model.ckpt"), &Checkpoint::from_model(&trained.model))?;

    let (report, outputs) = score_split(&trained.model, &corpus.test, cfg, corpus, &cfg.decode)?;
    let hyps: Vec<String> = outputs.iter().map(|o| corpus.tgt_vocab.decode(&o.tokens)).collect();
    write_text(&dir.join("test.hyp"), &lines(&hyps))?;
    let mut metrics = json!({
        "config_digest": cfg.digest(),
        "steps": trained.steps,
        "averaged_checkpoints": trained.averaged,
        "test": report.deterministic(),
    });
    if let (Some(obj), serde_json::Value::Object(more)) = (metrics.as_object_mut(), extra_metrics) {
        obj.extend(more);
    }
    write_json(&dir.join("metrics.json"), &metrics)?;
    write_json(
        &dir.join("timing.json"),
        &json!({
            "train_seconds": trained.train_seconds,
            "test_wall_ms_per_sentence": report.wall_ms_per_sentence,
        }),
    )?;
    write_json(
        &dir.join("manifest.json"),
        &manifest(
            command,
            cfg,
            json!({
                "precision": T::DTYPE,
                "parameters": trained.model.num_parameters(),
                "train_pairs": corpus.train.len(),
                "src_vocab": corpus.src_vocab.len(),
                "tgt_vocab": corpus.tgt_vocab.len(),
            }),
        ),
    )?;
    Ok(RunSummary {
        dir: dir.to_path_buf(),
        report,
        metrics,
    })
}

fn lines(items: &[String]) -> String {
    let mut s = items.join("\n");
    if !items.is_empty() {
        s.push('\n');
    }
    s
}

/// Trains under `cfg` and writes a run directory.
pub fn train_run(cfg: &RunConfig, dir: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    let corpus = load_corpus(&cfg.data)?;
    match cfg.model.precision {
        DType::F32 => {
            let t = train_model::<f32>(cfg, &corpus, &corpus.train)?;
            write_run("train", cfg, &corpus, &t, dir, json!({}))
        }
        DType::F64 => {
            let t = train_model::<f64>(cfg, &corpus, &corpus.train)?;
            write_run("train", cfg, &corpus, &t, dir, json!({}))
        }
    }
}

/// Writes the corpus of the `data` section to `dir`.
pub fn gen_data(cfg: &RunConfig, dir: &Path) -> Result<CorpusBundle> {
    cfg.validate()?;
    let corpus = load_corpus(&cfg.data)?;
    corpus.save_dir(dir)?;
    write_text(&dir.join("data.toml"), &toml::to_string_pretty(&cfg.data).expect("data section serializes"))?;
    Ok(corpus)
}

/// A checkpoint loaded at the precision it was trained at.
pub enum LoadedModel {
    F32(Model<f32>),
    F64(Model<f64>),
}

impl LoadedModel {
    pub fn load(path: &Path) -> Result<Self> {
        let ckpt = load_checkpoint(path)?;
        Ok(match ckpt.dtype {
            DType::F32 => LoadedModel::F32(ckpt.to_model()?),
            DType::F64 => LoadedModel::F64(ckpt.to_model()?),
        })
    }

    pub fn decoder(&self) -> DecoderKind {
        match self {
            LoadedModel::F32(m) => m.config().decoder,
            LoadedModel::F64(m) => m.config().decoder,
        }
    }
}

/// Decodes each source sentence; returns the outputs in order.
pub fn translate_all<T: Real>(model: &Model<T>, sources: &[Vec<TokenId>], decode: &DecodeConfig) -> Result<Vec<Translation>> {
    let decode = effective_decode(model.config().decoder, decode);
    decode.validate()?;
    sources
        .iter()
        .map(|s| crate::inference::decode_sentence(model, s, &decode))
        .collect()
}

/// Writes `hypotheses` (one detokenized sentence per line) and the trace
/// log of `outputs`.
pub fn write_translations(corpus: &CorpusBundle, outputs: &[Translation], hyp_path: &Path, trace_path: &Path) -> Result<()> {
    let hyps: Vec<String> = outputs.iter().map(|o| corpus.tgt_vocab.decode(&o.tokens)).collect();
    write_text(hyp_path, &lines(&hyps))?;
    let mut trace = Vec::new();
    for (i, o) in outputs.iter().enumerate() {
        write_trace(&mut trace, i, &o.trace)?;
    }
    std::fs::write(trace_path, trace).map_err(|e| Error::io(trace_path, e))
}

/// Outcome of teacher training, alpha tuning, distillation and student
/// training.
pub struct DistillSummary {
    pub teacher: RunSummary,
    pub student: RunSummary,
    pub tuning: AlphaTuning,
}

/// Trains a left-to-right teacher, tunes its length penalty on dev BLEU,
/// rewrites the training targets with its beam outputs and trains the
/// configured model on the result. Writes `teacher/`, `distilled/` and
/// `student/` under `dir`.
pub fn distill_run(cfg: &RunConfig, dir: &Path) -> Result<DistillSummary> {
    cfg.validate()?;
    let corpus = load_corpus(&cfg.data)?;
    let mut tcfg = cfg.clone();
    tcfg.model.decoder = DecoderKind::Autoregressive { contextless: false };
    tcfg.train.objective = Objective::Autoregressive;
    tcfg.decode.algorithm = Algorithm::Beam;
    match cfg.model.precision {
        DType::F32 => distill_with::<f32>(cfg, &tcfg, &corpus, dir),
        DType::F64 => distill_with::<f64>(cfg, &tcfg, &corpus, dir),
    }
}

fn distill_with<T: Real>(cfg: &RunConfig, tcfg: &RunConfig, corpus: &CorpusBundle, dir: &Path) -> Result<DistillSummary> {
    let teacher = train_model::<T>(tcfg, corpus, &corpus.train)?;
    let beam = tcfg.decode.beam;
    let max_len = cfg.data.max_len;
    let dev: Vec<SentencePair> = corpus.dev.iter().take(cfg.data.eval_sentences).cloned().collect();
    let mut dev_bleu = |pairs: &[SentencePair], outs: &[Vec<TokenId>]| -> Result<f64> {
        let refs: Vec<Vec<TokenId>> = pairs.iter().map(|p| p.tgt.clone()).collect();
        bleu(outs, &refs)
    };
    let tuning = tune_alpha(&teacher.model, &dev, beam, max_len, &alpha_grid(), &mut dev_bleu)?;
    let mut tcfg = tcfg.clone();
    tcfg.decode.alpha = tuning.alpha;
    let teacher_run = write_run(
        "distill",
        &tcfg,
        corpus,
        &teacher,
        &dir.join("teacher"),
        json!({ "alpha_scores": tuning.scores, "alpha": tuning.alpha }),
    )?;

    let distilled = distill_corpus(&teacher.model, &corpus.train, beam, tuning.alpha, max_len)?;
    let distilled = corpus.with_train(distilled)?;
    distilled.save_dir(&dir.join("distilled"))?;
    let changed = corpus.train.iter().zip(&distilled.train).filter(|(a, b)| a.tgt != b.tgt).count();
    let student = train_model::<T>(cfg, &distilled, &distilled.train)?;
    let student_run = write_run(
        "distill",
        cfg,
        &distilled,
        &student,
        &dir.join("student"),
        json!({ "distilled_targets_changed": changed }),
    )?;
    Ok(DistillSummary {
        teacher: teacher_run,
        student: student_run,
        tuning,
    })
}
