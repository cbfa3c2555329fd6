//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are always printed.
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test -p disco --test acceptance -- 1 4 5`.
//!
//! Failing criteria are reported but do not fail `cargo test` unless
//! `ACCEPTANCE_STRICT=1` is set.

mod common;

use std::path::Path;
use std::time::Instant;

use disco::config::RunConfig;
use disco::context::{autoregressive_mask, cloze_mask, from_order_mask, sample_disco_mask};
use disco::data::{TaskKind, TokenId};
use disco::diagnostics::{leak_suite, micro_config, training_grad_check};
use disco::eval::{iterations_vs_length, EvalReport};
use disco::inference::{length_beam, mask_schedule, refine, Algorithm, ConditionalModel, DecodeConfig, Ordering, TraceRecord};
use disco::model::{DecoderKind, Model, ModelConfig, VisibilityMask};
use disco::numerics::RngStream;
use disco::pipeline::{distill_run, load_corpus, score_split, train_model, train_run, LoadedModel};
use disco::train::Objective;

use common::{is_mixed, oracle_encode, oracle_row, two_mode_table, TableModel};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---- 1-5: properties and oracles ----

fn c1_no_leakage() -> Outcome {
    let start = Instant::now();
    let r = leak_suite(1000, 20, 2024).expect("leak suite runs");
    let secs = start.elapsed().as_secs_f64();
    outcome(
        r.trials == 1000 && r.max_deviation <= 1e-9 && secs <= 120.0,
        format!(
            "{} trials, {} rows, max deviation {:.3e} (tol 1e-9), {secs:.1}s (limit 120s)",
            r.trials, r.rows_checked, r.max_deviation
        ),
    )
}

fn c2_one_shot_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = RngStream::new(77);
    let vocab = 37;
    let cfg = ModelConfig::desk_scale(vocab, vocab, 12);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let model = Model::<f64>::new(cfg.clone(), &mut rng.derive("model", &[i])).expect("model");
        let n = 1 + rng.below(12);
        let src: Vec<TokenId> = (0..1 + rng.below(12)).map(|_| rng.below(vocab) as TokenId).collect();
        let tgt: Vec<TokenId> = (0..n).map(|_| rng.below(vocab) as TokenId).collect();
        let mask = match i % 4 {
            0 => cloze_mask(n),
            1 => autoregressive_mask(n),
            _ => sample_disco_mask(n, &mut rng),
        };
        let enc = model.encode(&src).expect("encode");
        let enc_rows: Vec<Vec<f64>> = (0..src.len() + 1).map(|r| enc.row(r).to_vec()).collect();
        let enc_oracle = oracle_encode(&model, &src);
        for (a, b) in enc_rows.iter().flatten().zip(enc_oracle.iter().flatten()) {
            worst = worst.max((a - b).abs());
        }
        let logits = model.disco_forward(&enc, &tgt, &mask).expect("forward");
        for row in 0..n {
            let o = oracle_row(&model, &enc_rows, &tgt, &mask, row);
            for (a, b) in logits.row(row).iter().zip(&o) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-6 && secs <= 120.0,
        format!("100 instances, max |logit - oracle| {worst:.3e} (tol 1e-6), {secs:.1}s"),
    )
}

fn c3_gradients() -> Outcome {
    let mut worst = 0.0f64;
    let mut params = 0;
    let mut checked = usize::MAX;
    let mut detail = Vec::new();
    for (decoder, objective, seed) in [
        (DecoderKind::Disco, Objective::Disco, 1),
        (DecoderKind::Disco, Objective::EasyFirst, 2),
        (DecoderKind::Cmlm, Objective::Cmlm, 3),
        (DecoderKind::Autoregressive { contextless: false }, Objective::Autoregressive, 4),
    ] {
        let r = training_grad_check(micro_config(decoder), objective, 200, 1e-5, seed).expect("grad check");
        worst = worst.max(r.max_rel_error);
        params = params.max(r.parameters);
        checked = checked.min(r.checked);
        detail.push(format!("{objective:?} {:.1e}", r.max_rel_error));
    }
    outcome(
        worst <= 1e-4 && params <= 1000 && checked >= 200,
        format!(
            "{params} parameters, {checked} coordinates per objective, max rel error {worst:.2e} (tol 1e-4) [{}]",
            detail.join(", ")
        ),
    )
}

fn c4_schedule() -> Outcome {
    let mut cases = 0;
    let mut bad = Vec::new();
    for n in 1..=64usize {
        for t_max in 1..=64usize {
            for t in 1..=t_max {
                // largest i with i·T ≤ N·(T−t+1)
                let bound = n * (t_max - t + 1);
                let mut i = 0;
                while (i + 1) * t_max <= bound {
                    i += 1;
                }
                cases += 1;
                if mask_schedule(n, t_max, t) != i {
                    bad.push((n, t_max, t));
                }
            }
        }
    }
    outcome(bad.is_empty(), format!("{cases} (N, T, t) cases, {} mismatches", bad.len()))
}

fn alg1_table() -> TableModel {
    // lengths 1..4; the two most probable are 3 and 4
    let mut m = TableModel::new(vec![-6.0, -4.0, -0.5, -1.0]);
    m.set(3, 0, &[], 10, 0.5);
    m.set(3, 1, &[], 11, 0.9);
    m.set(3, 2, &[], 12, 0.7);
    m.set(3, 2, &[(1, 11)], 12, 0.8);
    m.set(3, 0, &[(1, 11), (2, 12)], 13, 0.6);
    m.set(4, 0, &[], 20, 0.4);
    m.set(4, 1, &[], 21, 0.3);
    m.set(4, 2, &[], 22, 0.95);
    m.set(4, 3, &[], 23, 0.5);
    m.set(4, 3, &[(2, 22)], 23, 0.9);
    m.set(4, 0, &[(2, 22), (3, 23)], 20, 0.9);
    m.set(4, 1, &[(0, 20), (2, 22), (3, 23)], 24, 0.9);
    m
}

fn c5_alg1_trace() -> Outcome {
    let model = alg1_table();
    let lengths = length_beam(&model.length_log_probs(&()).unwrap(), 2).unwrap();
    let out = refine(&model, &(), &lengths, Ordering::EasyFirst, 5, false).expect("decode");

    // Hand simulation.
    // t=1, N=3: conf (.5,.9,.7), ranks (3,1,2); N=4: conf (.4,.3,.95,.5), ranks (3,4,1,2).
    // Rows: N=3 {0:{1,2}, 1:{}, 2:{1}}; N=4 {0:{2,3}, 1:{0,2,3}, 2:{}, 3:{2}}.
    // t=2: N=3 -> (13,11,12) conf (.6,.9,.8); N=4 -> (20,24,22,23) conf (.9,.9,.95,.9).
    // t=3: nothing changes; k* is N=4 from t=2 on, so decoding returns at t=3.
    let avg = |c: &[f64]| c.iter().map(|p: &f64| p.ln()).sum::<f64>() / c.len() as f64;
    let s1 = (avg(&[0.5, 0.9, 0.7]), avg(&[0.4, 0.3, 0.95, 0.5]));
    let s2 = (avg(&[0.6, 0.9, 0.8]), avg(&[0.9, 0.9, 0.95, 0.9]));
    let k1 = if s1.0 >= s1.1 { 0 } else { 1 };
    let k2 = if s2.0 >= s2.1 { 0 } else { 1 };
    let rows3 = vec![vec![false, true, true], vec![false; 3], vec![false, true, false]];
    let rows4 = vec![
        vec![false, false, true, true],
        vec![true, false, true, true],
        vec![false; 4],
        vec![false, false, true, false],
    ];
    let order3 = VisibilityMask::from_rows(&rows3).unwrap().digest();
    let order4 = VisibilityMask::from_rows(&rows4).unwrap().digest();
    let empty3 = VisibilityMask::empty(3).digest();
    let empty4 = VisibilityMask::empty(4).digest();
    #[rustfmt::skip]
    let expected: Vec<(usize, usize, Vec<TokenId>, Vec<f64>, String, bool)> = vec![
        (1, 0, vec![10, 11, 12], vec![0.5, 0.9, 0.7], empty3.clone(), k1 == 0),
        (1, 1, vec![20, 21, 22, 23], vec![0.4, 0.3, 0.95, 0.5], empty4.clone(), k1 == 1),
        (2, 0, vec![13, 11, 12], vec![0.6, 0.9, 0.8], order3.clone(), k2 == 0),
        (2, 1, vec![20, 24, 22, 23], vec![0.9, 0.9, 0.95, 0.9], order4.clone(), k2 == 1),
        (3, 0, vec![13, 11, 12], vec![0.6, 0.9, 0.8], order3, k2 == 0),
        (3, 1, vec![20, 24, 22, 23], vec![0.9, 0.9, 0.95, 0.9], order4, k2 == 1),
    ];
    let mut got = Vec::new();
    let mut result = None;
    for r in &out.trace {
        match r {
            TraceRecord::Iteration { t, beam, tokens, confidences, mask, selected, .. } => {
                got.push((*t, *beam, tokens.clone(), confidences.clone(), mask.clone(), *selected))
            }
            TraceRecord::Result { steps, tokens, converged, .. } => result = Some((*steps, tokens.clone(), *converged)),
        }
    }
    let ranks: Vec<Option<Vec<usize>>> = out.beams.iter().map(|h| h.ranks.clone()).collect();
    let ranks_ok = ranks == vec![Some(vec![3, 1, 2]), Some(vec![3, 4, 1, 2])];
    let masks_ok = from_order_mask(&[3, 1, 2]).unwrap().digest() == got[2].4;
    let pass = lengths == vec![3, 4]
        && (k1, k2) == (0, 1)
        && got == expected
        && ranks_ok
        && masks_ok
        && result == Some((3, vec![20, 24, 22, 23], true));
    outcome(
        pass,
        format!(
            "beam lengths {lengths:?}, k* per iteration ({k1}, {k2}, {k2}), {} iteration records, result {:?}",
            got.len(),
            result
        ),
    )
}

// ---- trained runs ----

fn toy_config(task: TaskKind, steps: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.data.task = task;
    cfg.train.max_steps = steps;
    cfg.train.tokens_per_batch = 1024;
    cfg.train.peak_lr = 1e-3;
    cfg.train.warmup_steps = 200;
    cfg.train.eval_every = 250;
    cfg.decode = DecodeConfig {
        algorithm: Algorithm::EasyFirst,
        length_beam: 5,
        max_iter: 10,
        check_fixed_point: true,
        ..DecodeConfig::default()
    };
    cfg
}

struct ToyRun {
    name: &'static str,
    model: Model<f32>,
    cfg: RunConfig,
    corpus: disco::data::CorpusBundle,
    train_seconds: f64,
}

impl ToyRun {
    fn report(&self, dev: bool, decode: &DecodeConfig) -> EvalReport {
        let pairs = if dev { &self.corpus.dev } else { &self.corpus.test };
        score_split(&self.model, pairs, &self.cfg, &self.corpus, decode).expect("decode").0
    }
}

fn train_toy(name: &'static str, task: TaskKind, steps: u64) -> ToyRun {
    let cfg = toy_config(task, steps);
    let corpus = load_corpus(&cfg.data).expect("corpus");
    let t = train_model::<f32>(&cfg, &corpus, &corpus.train).expect("training");
    eprintln!("[acceptance] trained {name}: {} steps in {:.0}s", t.steps, t.train_seconds);
    ToyRun {
        name,
        model: t.model,
        cfg,
        corpus,
        train_seconds: t.train_seconds,
    }
}

fn decode(alg: Algorithm, k: usize) -> DecodeConfig {
    DecodeConfig {
        algorithm: alg,
        length_beam: k,
        max_iter: 10,
        check_fixed_point: alg == Algorithm::EasyFirst,
        ..DecodeConfig::default()
    }
}

fn c6_fixed_point(runs: &[&ToyRun]) -> Outcome {
    let mut sentences = 0;
    let mut violations = 0;
    for run in runs {
        let r = run.report(true, &decode(Algorithm::EasyFirst, 5));
        sentences += run.corpus.dev.len();
        violations += r.fixed_point_violations;
    }
    outcome(
        violations == 0,
        format!(
            "{sentences} dev sentences over {} models, {violations} outputs changed by an extra iteration",
            runs.len()
        ),
    )
}

fn c7_toy_tasks(runs: &[&ToyRun]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for run in runs {
        let ef = run.report(false, &decode(Algorithm::EasyFirst, 5));
        let mp = run.report(false, &decode(Algorithm::MaskPredict, 5));
        let ef1 = run.report(false, &decode(Algorithm::EasyFirst, 1));
        let mp1 = run.report(false, &decode(Algorithm::MaskPredict, 1));
        let ok = ef.exact_match >= 95.0
            && ef.avg_steps < 10.0
            && (mp.exact_match - ef.exact_match).abs() <= 2.0
            && mp.lengths.bins.iter().all(|b| b.mean_steps == 10.0)
            && run.train_seconds <= 900.0;
        pass &= ok;
        parts.push(format!(
            "{}: easy-first K=5 EM {:.1} steps {:.2}, mask-predict K=5 EM {:.1} steps {:.2}, train {:.0}s \
             (K=1: easy-first EM {:.1} steps {:.2}, mask-predict EM {:.1})",
            run.name, ef.exact_match, ef.avg_steps, mp.exact_match, mp.avg_steps, run.train_seconds,
            ef1.exact_match, ef1.avg_steps, mp1.exact_match
        ));
    }
    outcome(pass, parts.join("; "))
}

struct LexiconRuns {
    raw: ToyRun,
    distilled_model: Model<f32>,
    distilled_corpus: disco::data::CorpusBundle,
    teacher_valid: Option<f64>,
}

fn train_lexicon(dir: &Path) -> LexiconRuns {
    let raw = train_toy("lexicon", TaskKind::AmbiguousLexicon, 1000);
    let summary = distill_run(&raw.cfg, dir).expect("distillation");
    let student = match LoadedModel::load(&dir.join("student").join("model.ckpt")).expect("student") {
        LoadedModel::F32(m) => m,
        LoadedModel::F64(_) => panic!("student trained at f32"),
    };
    let distilled_corpus = disco::data::CorpusBundle::load_dir(&dir.join("distilled"), raw.cfg.data.max_len).expect("distilled");
    LexiconRuns {
        raw,
        distilled_model: student,
        distilled_corpus,
        teacher_valid: summary.teacher.report.valid,
    }
}

fn c8_distillation(lex: &LexiconRuns) -> Outcome {
    let cfg = &lex.raw.cfg;
    let corpus = &lex.raw.corpus;
    let student_corpus = disco::data::CorpusBundle {
        test: corpus.test.clone(),
        ..lex.distilled_corpus.clone()
    };
    let mut lines = Vec::new();
    let mut margin = 0.0;
    for k in [5, 1] {
        let d = decode(Algorithm::EasyFirst, k);
        let raw = score_split(&lex.raw.model, &corpus.test, cfg, corpus, &d).unwrap().0;
        let dis = score_split(&lex.distilled_model, &corpus.test, cfg, &student_corpus, &d).unwrap().0;
        let (rv, dv) = (raw.valid.unwrap_or(0.0), dis.valid.unwrap_or(0.0));
        if k == 5 {
            margin = dv - rv;
        }
        lines.push(format!(
            "K={k}: valid raw {rv:.1} distilled {dv:.1} (reference match raw {:.1} distilled {:.1})",
            raw.exact_match, dis.exact_match
        ));
    }
    outcome(
        margin > 0.0,
        format!(
            "margin {margin:+.1} points at K=5; {}; teacher valid {:.1}",
            lines.join("; "),
            lex.teacher_valid.unwrap_or(0.0)
        ),
    )
}

fn c9_ablations(copy: &ToyRun) -> Outcome {
    let table = two_mode_table();
    let abi = refine(&table, &(), &[2], Ordering::AllButItself, 10, false).unwrap();
    let ef = refine(&table, &(), &[2], Ordering::EasyFirst, 10, false).unwrap();
    let mixed = abi
        .trace
        .iter()
        .filter_map(|r| match r {
            TraceRecord::Result { tokens, .. } => Some(tokens.clone()),
            _ => None,
        })
        .any(|t| is_mixed(&t));
    let fixed = copy.report(false, &decode(Algorithm::LeftToRight, 5));
    let easy = copy.report(false, &decode(Algorithm::EasyFirst, 5));
    outcome(
        mixed && fixed.avg_steps > easy.avg_steps,
        format!(
            "all-but-itself returns {:?} (mixed: {mixed}), easy-first returns {:?}; copy avg steps left-to-right {:.3} vs easy-first {:.3}",
            abi.tokens(),
            ef.tokens(),
            fixed.avg_steps,
            easy.avg_steps
        ),
    )
}

fn c10_length_vs_iterations(lex: &ToyRun, others: &[&ToyRun]) -> Outcome {
    let (_, outs) = disco::eval::evaluate(&lex.model, &lex.corpus.dev, &decode(Algorithm::EasyFirst, 5), None, "").unwrap();
    let trace: Vec<(usize, TraceRecord)> = outs
        .iter()
        .enumerate()
        .flat_map(|(i, o)| o.trace.iter().cloned().map(move |r| (i, r)))
        .collect();
    let table = iterations_vs_length(&trace);
    let rho = table.spearman;
    let rest: Vec<String> = others
        .iter()
        .map(|r| {
            let s = r.report(true, &decode(Algorithm::EasyFirst, 5)).lengths.spearman;
            format!("{} {}", r.name, s.map_or("undefined (constant steps)".to_string(), |v| format!("{v:.3}")))
        })
        .collect();
    let bins: Vec<String> = table.bins.iter().map(|b| format!("{}:{:.2}", b.length, b.mean_steps)).collect();
    outcome(
        rho.is_some_and(|r| r > 0.0),
        format!(
            "lexicon dev spearman {} over {} sentences, mean steps by length [{}]; {}",
            rho.map_or("undefined".into(), |v| format!("{v:.3}")),
            outs.len(),
            bins.join(" "),
            rest.join(", ")
        ),
    )
}

fn c11_reproducibility() -> Outcome {
    let mut cfg = toy_config(TaskKind::Reverse, 80);
    cfg.data.train_size = 800;
    cfg.data.dev_size = 40;
    cfg.data.test_size = 40;
    cfg.data.eval_sentences = 20;
    cfg.train.eval_every = 40;
    cfg.train.tokens_per_batch = 512;
    let dir = tempfile::tempdir().unwrap();
    let a = train_run(&cfg, &dir.path().join("a")).expect("run a");
    let b = train_run(&cfg, &dir.path().join("b")).expect("run b");
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    let same: Vec<bool> = ["metrics.json", "train_log.jsonl", "model.ckpt", "test.hyp"]
        .iter()
        .map(|f| read(&a.dir, f) == read(&b.dir, f))
        .collect();
    let timing_differs = read(&a.dir, "timing.json") != read(&b.dir, "timing.json");
    outcome(
        same.iter().all(|&s| s),
        format!(
            "metrics.json, train_log.jsonl, model.ckpt, test.hyp identical: {same:?} (timing.json differs: {timing_differs})"
        ),
    )
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |c: usize| wanted.is_empty() || wanted.contains(&c);
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |c: usize, o: Outcome| {
        println!("criterion {c:>2} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((c, o));
    };
    let cheap: [(usize, fn() -> Outcome); 5] = [
        (1, c1_no_leakage),
        (2, c2_one_shot_equivalence),
        (3, c3_gradients),
        (4, c4_schedule),
        (5, c5_alg1_trace),
    ];
    for (c, f) in cheap {
        if want(c) {
            report(c, f());
        }
    }
    let needs_copy = [6, 7, 9].iter().any(|&c| want(c));
    let needs_reverse = [6, 7].iter().any(|&c| want(c));
    let needs_lexicon = [6, 8, 10].iter().any(|&c| want(c));
    let copy = needs_copy.then(|| train_toy("copy", TaskKind::Copy, 1000));
    let reverse = needs_reverse.then(|| train_toy("reverse", TaskKind::Reverse, 2500));
    let lex_dir = tempfile::tempdir().unwrap();
    let lexicon = needs_lexicon.then(|| train_lexicon(lex_dir.path()));
    if want(6) {
        let student = lexicon.as_ref().map(|l| ToyRun {
            name: "lexicon-distilled",
            model: l.distilled_model.clone(),
            cfg: l.raw.cfg.clone(),
            corpus: l.distilled_corpus.clone(),
            train_seconds: 0.0,
        });
        let mut runs: Vec<&ToyRun> = Vec::new();
        runs.extend(copy.as_ref());
        runs.extend(reverse.as_ref());
        runs.extend(lexicon.as_ref().map(|l| &l.raw));
        runs.extend(student.as_ref());
        report(6, c6_fixed_point(&runs));
    }
    if want(7) {
        let runs: Vec<&ToyRun> = copy.iter().chain(reverse.iter()).collect();
        report(7, c7_toy_tasks(&runs));
    }
    if want(8) {
        report(8, c8_distillation(lexicon.as_ref().unwrap()));
    }
    if want(9) {
        report(9, c9_ablations(copy.as_ref().unwrap()));
    }
    if want(10) {
        let others: Vec<&ToyRun> = copy.iter().chain(reverse.iter()).collect();
        report(10, c10_length_vs_iterations(&lexicon.as_ref().unwrap().raw, &others));
    }
    if want(11) {
        report(11, c11_reproducibility());
    }
    let failed: Vec<usize> = results.iter().filter(|(_, o)| !o.pass).map(|(c, _)| *c).collect();
    println!(
        "acceptance: {} of {} criteria pass{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() { String::new() } else { format!("; failing: {failed:?}") }
    );
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && !failed.is_empty() {
        std::process::exit(1);
    }
}
