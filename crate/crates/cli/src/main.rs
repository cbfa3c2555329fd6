use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use disco::config::{load_config, RunConfig};
use disco::data::{CorpusBundle, Split, TokenId};
use disco::diagnostics::{leak_check_model, micro_config, training_grad_check};
use disco::eval::{latency_benchmark, score_outputs, write_bench_csv, BenchEntry, Validity};
use disco::inference::{recount_steps, Algorithm, DecodeConfig};
use disco::model::{DecoderKind, Model};
use disco::numerics::{Real, RngStream};
use disco::pipeline::{
    distill_run, effective_decode, gen_data, load_corpus, train_run, translate_all, validity_check,
    write_translations, LoadedModel,
};
use disco::train::Objective;
use disco::{Error, Result};

#[derive(Parser)]
#[command(name = "disco", version, about = "Train and decode disentangled-context transformers on toy tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one value, e.g. `--set train.max_steps=500`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args, Clone)]
struct DecodeArgs {
    /// Decoding algorithm.
    #[arg(long)]
    alg: Option<Algorithm>,
    /// Length beam of iterative decoders and beam width of left-to-right
    /// search.
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
}

impl DecodeArgs {
    fn apply(&self, d: &DecodeConfig) -> DecodeConfig {
        let mut d = d.clone();
        if let Some(a) = self.alg {
            d.algorithm = a;
        }
        if let Some(b) = self.beam {
            d.length_beam = b;
            d.beam = b;
        }
        if let Some(t) = self.max_iter {
            d.max_iter = t;
        }
        d
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured synthetic corpus into a directory.
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write a run directory.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long = "run-dir")]
        run_dir: PathBuf,
    },
    /// Train a left-to-right teacher, distill the training targets and train
    /// the configured model on them.
    Distill {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long = "run-dir")]
        run_dir: PathBuf,
    },
    /// Decode sentences with a trained run.
    Translate {
        #[arg(long = "run-dir")]
        run_dir: PathBuf,
        /// Source sentences, one per line; defaults to the test split.
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        decode: DecodeArgs,
        /// Output directory (defaults to the run directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a trained run on a split.
    Evaluate {
        #[arg(long = "run-dir")]
        run_dir: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[command(flatten)]
        decode: DecodeArgs,
    },
    /// Time sentence-at-a-time decoding under several algorithms.
    Bench {
        #[arg(long = "run-dir")]
        run_dir: PathBuf,
        /// Left-to-right run used as the speed baseline.
        #[arg(long = "baseline-run")]
        baseline_run: Option<PathBuf>,
        /// Comma-separated algorithms to time with the run's model.
        #[arg(long, value_delimiter = ',', default_value = "easy-first,mask-predict")]
        algs: Vec<Algorithm>,
        #[arg(long)]
        sentences: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of the training loss on a tiny model.
    GradCheck {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 200)]
        coords: usize,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Check that no prediction depends on target tokens outside its
    /// visible context.
    LeakCheck {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Check this checkpoint instead of a freshly initialized model.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn config(args: &ConfigArgs) -> Result<RunConfig> {
    load_config(args.config.as_deref(), &args.overrides)
}

fn run_config(run_dir: &Path) -> Result<RunConfig> {
    load_config(Some(&run_dir.join("config.toml")), &[])
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string(v).expect("json value"));
}

fn read_sources(path: &Path, corpus: &CorpusBundle) -> Result<Vec<Vec<TokenId>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let ids = corpus.src_vocab.encode(line);
            if ids.is_empty() {
                Err(Error::Format {
                    location: format!("{}:{}", path.display(), i + 1),
                    message: "empty source sentence".into(),
                })
            } else {
                Ok(ids)
            }
        })
        .collect()
}

fn translate(run_dir: &Path, input: Option<&Path>, decode: &DecodeArgs, out: Option<&Path>) -> Result<()> {
    let cfg = run_config(run_dir)?;
    let corpus = load_corpus(&cfg.data)?;
    let model = LoadedModel::load(&run_dir.join("model.ckpt"))?;
    let dcfg = effective_decode(model.decoder(), &decode.apply(&cfg.decode));
    let sources = match input {
        Some(p) => read_sources(p, &corpus)?,
        None => corpus.test.iter().map(|p| p.src.clone()).collect(),
    };
    let outputs = match &model {
        LoadedModel::F32(m) => translate_all(m, &sources, &dcfg)?,
        LoadedModel::F64(m) => translate_all(m, &sources, &dcfg)?,
    };
    let out = out.unwrap_or(run_dir);
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    let (hyp, trace) = (out.join("hypotheses.txt"), out.join("trace.jsonl"));
    write_translations(&corpus, &outputs, &hyp, &trace)?;
    let steps: usize = outputs.iter().map(|o| o.steps).sum();
    let manifest = json!({
        "command": "translate",
        "run_dir": run_dir,
        "config_digest": cfg.digest(),
        "decode": dcfg,
        "sentences": outputs.len(),
        "avg_steps": steps as f64 / outputs.len().max(1) as f64,
    });
    std::fs::write(
        out.join("translate_manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("json") + "\n",
    )
    .map_err(|e| Error::Io {
        path: out.join("translate_manifest.json"),
        source: e,
    })?;
    print_json(&json!({ "hypotheses": hyp, "trace": trace, "sentences": outputs.len() }));
    Ok(())
}

fn evaluate(run_dir: &Path, split: Split, decode: &DecodeArgs) -> Result<()> {
    let mut cfg = run_config(run_dir)?;
    cfg.decode = decode.apply(&cfg.decode);
    let corpus = load_corpus(&cfg.data)?;
    let model = LoadedModel::load(&run_dir.join("model.ckpt"))?;
    let dcfg = effective_decode(model.decoder(), &cfg.decode);
    let pairs = corpus.split(split);
    let sources: Vec<Vec<TokenId>> = pairs.iter().map(|p| p.src.clone()).collect();
    let start = std::time::Instant::now();
    let outputs = match &model {
        LoadedModel::F32(m) => translate_all(m, &sources, &dcfg)?,
        LoadedModel::F64(m) => translate_all(m, &sources, &dcfg)?,
    };
    let wall = start.elapsed().as_secs_f64() * 1e3;
    let check = validity_check(&cfg.data, &corpus);
    let validity: Option<Validity<'_>> = check.as_deref().map(|f| f as Validity<'_>);
    let report = score_outputs(pairs, &outputs, validity, &cfg.digest(), wall)?;
    let path = run_dir.join(format!("eval_{}.json", split.name()));
    let text = serde_json::to_string_pretty(&report).expect("json") + "\n";
    std::fs::write(&path, text).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    let mut csv = String::from("length,count,mean_steps\n");
    for b in &report.lengths.bins {
        csv += &format!("{},{},{}\n", b.length, b.count, b.mean_steps);
    }
    let csv_path = run_dir.join(format!("steps_by_length_{}.csv", split.name()));
    std::fs::write(&csv_path, csv).map_err(|e| Error::Io { path: csv_path, source: e })?;
    print!("{}", report.table());
    Ok(())
}

fn alg_name(alg: Algorithm) -> String {
    serde_json::to_value(alg)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn bench_with<T: Real>(
    model: &Model<T>,
    baseline: Option<&Model<T>>,
    base_decode: &DecodeConfig,
    algs: &[Algorithm],
    sources: &[Vec<TokenId>],
    out: &Path,
) -> Result<()> {
    let mut entries = Vec::new();
    if let Some(ar) = baseline {
        entries.push(BenchEntry {
            name: "ar-beam".into(),
            model: ar,
            decode: effective_decode(ar.config().decoder, base_decode),
        });
    }
    for &alg in algs {
        entries.push(BenchEntry {
            name: alg_name(alg),
            model,
            decode: DecodeConfig {
                algorithm: alg,
                ..base_decode.clone()
            },
        });
    }
    let baseline_name = entries
        .first()
        .map(|e| e.name.clone())
        .ok_or_else(|| Error::Config("bench needs at least one algorithm".into()))?;
    let result = latency_benchmark(&entries, sources, &baseline_name)?;
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    let csv_path = out.join("bench.csv");
    let file = std::fs::File::create(&csv_path).map_err(|e| Error::Io {
        path: csv_path.clone(),
        source: e,
    })?;
    write_bench_csv(file, &result.rows).map_err(|e| Error::Io { path: csv_path, source: e })?;
    for (row, trace) in result.rows.iter().zip(&result.traces) {
        let path = out.join(format!("trace_{}.jsonl", row.name));
        let mut buf = Vec::new();
        let mut by_sentence: Vec<(usize, Vec<_>)> = Vec::new();
        for (i, r) in trace {
            match by_sentence.last_mut() {
                Some((j, v)) if j == i => v.push(r.clone()),
                _ => by_sentence.push((*i, vec![r.clone()])),
            }
        }
        for (i, records) in &by_sentence {
            disco::inference::write_trace(&mut buf, *i, records)?;
        }
        std::fs::write(&path, buf).map_err(|e| Error::Io { path, source: e })?;
        let counts = recount_steps(trace)?;
        let recount = counts.values().sum::<usize>() as f64 / counts.len().max(1) as f64;
        print_json(&json!({
            "name": row.name,
            "avg_steps": row.avg_steps,
            "trace_recount": recount,
            "ms_per_sentence": row.ms_per_sentence,
            "speedup": row.speedup,
        }));
    }
    Ok(())
}

fn bench(run_dir: &Path, baseline_run: Option<&Path>, algs: &[Algorithm], sentences: Option<usize>, out: &Path) -> Result<()> {
    let cfg = run_config(run_dir)?;
    let corpus = load_corpus(&cfg.data)?;
    let n = sentences.unwrap_or(corpus.test.len()).min(corpus.test.len());
    let sources: Vec<Vec<TokenId>> = corpus.test[..n].iter().map(|p| p.src.clone()).collect();
    let model = LoadedModel::load(&run_dir.join("model.ckpt"))?;
    let baseline = baseline_run.map(|p| LoadedModel::load(&p.join("model.ckpt"))).transpose()?;
    match (&model, &baseline) {
        (LoadedModel::F32(m), None) => bench_with(m, None, &cfg.decode, algs, &sources, out),
        (LoadedModel::F64(m), None) => bench_with(m, None, &cfg.decode, algs, &sources, out),
        (LoadedModel::F32(m), Some(LoadedModel::F32(b))) => bench_with(m, Some(b), &cfg.decode, algs, &sources, out),
        (LoadedModel::F64(m), Some(LoadedModel::F64(b))) => bench_with(m, Some(b), &cfg.decode, algs, &sources, out),
        _ => Err(Error::Config("benchmarked models must share a precision".into())),
    }
}

fn grad_check(cfg: &RunConfig, coords: usize, tolerance: f64, seed: u64) -> Result<bool> {
    let decoder = cfg.model.decoder;
    let objective = match (decoder, cfg.train.objective) {
        (DecoderKind::Autoregressive { .. }, Objective::Disco) => Objective::Autoregressive,
        (DecoderKind::Cmlm, Objective::Disco) => Objective::Cmlm,
        (_, o) => o,
    };
    let report = training_grad_check(micro_config(decoder), objective, coords, 1e-5, seed)?;
    let pass = report.max_rel_error <= tolerance;
    print_json(&json!({ "pass": pass, "tolerance": tolerance, "report": report }));
    Ok(pass)
}

fn leak_check(cfg: &RunConfig, checkpoint: Option<&Path>, trials: usize, tolerance: f64, seed: u64) -> Result<bool> {
    let model: Model<f64> = match checkpoint {
        Some(p) => disco::model::load_checkpoint(p)?.to_model()?,
        None => {
            let corpus = load_corpus(&cfg.data)?;
            let mcfg = cfg.model_config(corpus.src_vocab.len(), corpus.tgt_vocab.len())?;
            Model::new(mcfg, &mut RngStream::new(cfg.model.init_seed))?
        }
    };
    if model.config().decoder != DecoderKind::Disco {
        return Err(Error::Config("leak-check needs a disco decoder".into()));
    }
    let report = leak_check_model(&model, trials, &mut RngStream::new(seed))?;
    let pass = report.max_deviation <= tolerance;
    print_json(&json!({ "pass": pass, "tolerance": tolerance, "report": report }));
    Ok(pass)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenData { cfg, out } => {
            let corpus = gen_data(&config(&cfg)?, &out)?;
            print_json(&json!({
                "dir": out,
                "train": corpus.train.len(),
                "dev": corpus.dev.len(),
                "test": corpus.test.len(),
            }));
        }
        Command::Train { cfg, run_dir } => {
            let s = train_run(&config(&cfg)?, &run_dir)?;
            print_json(&json!({ "run_dir": s.dir, "metrics": s.metrics }));
        }
        Command::Distill { cfg, run_dir } => {
            let s = distill_run(&config(&cfg)?, &run_dir)?;
            print_json(&json!({
                "alpha": s.tuning.alpha,
                "teacher": s.teacher.metrics,
                "student": s.student.metrics,
            }));
        }
        Command::Translate { run_dir, input, decode, out } => {
            translate(&run_dir, input.as_deref(), &decode, out.as_deref())?
        }
        Command::Evaluate { run_dir, split, decode } => evaluate(&run_dir, split, &decode)?,
        Command::Bench {
            run_dir,
            baseline_run,
            algs,
            sentences,
            out,
        } => bench(&run_dir, baseline_run.as_deref(), &algs, sentences, &out)?,
        Command::GradCheck {
            cfg,
            coords,
            tolerance,
            seed,
        } => return grad_check(&config(&cfg)?, coords, tolerance, seed),
        Command::LeakCheck {
            cfg,
            checkpoint,
            trials,
            tolerance,
            seed,
        } => return leak_check(&config(&cfg)?, checkpoint.as_deref(), trials, tolerance, seed),
    }
    Ok(true)
}

/// One line: `error kind=<kind> message=<json string>`.
fn error_line(kind: &str, message: &str) -> String {
    let flat = message.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join(" ");
    format!("error kind={kind} message={}", serde_json::Value::String(flat))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", error_line("usage", first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            match e {
                Error::Config(_) | Error::Format { .. } | Error::Io { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
