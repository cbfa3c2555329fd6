//! Scoring, reports and latency measurement.

mod bench;
mod bleu;
mod report;


pub use bench::{latency_benchmark, write_bench_csv, BenchEntry, BenchResult, BenchRow};
pub use bleu::{bleu, bleu_with, sentence_bleu, BleuStats, Smoothing, MAX_ORDER};
pub use report::{
    evaluate, exact_match, iterations_vs_length, length_table, score_outputs, spearman, EvalReport, LengthBin,
    LengthTable, Validity,
};
