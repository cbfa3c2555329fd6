use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngStream;

use super::corpus::{CorpusBundle, SentencePair};
use super::vocab::Vocab;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Copy,
    Reverse,
    SortedDigits,
    AmbiguousLexicon,
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "copy" => Ok(TaskKind::Copy),
            "reverse" => Ok(TaskKind::Reverse),
            "sorted-digits" => Ok(TaskKind::SortedDigits),
            "ambiguous-lexicon" => Ok(TaskKind::AmbiguousLexicon),
            other => Err(Error::Config(format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub task: TaskKind,
    /// Number of source word types (ignored by sorted-digits, which uses 0-9).
    pub vocab_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
    /// Lexicon task: target words per source word.
    #[serde(default = "default_translations")]
    pub translations: usize,
    /// Lexicon task: probability of swapping each adjacent pair.
    #[serde(default = "default_swap")]
    pub swap_prob: f64,
}

fn default_translations() -> usize {
    2
}

fn default_swap() -> f64 {
    0.3
}

impl TaskSpec {
    pub fn new(task: TaskKind, vocab_size: usize, min_len: usize, max_len: usize, seed: u64) -> Self {
        TaskSpec {
            task,
            vocab_size,
            min_len,
            max_len,
            seed,
            translations: default_translations(),
            swap_prob: default_swap(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::Config(format!(
                "task length range {}..={} is empty or starts at 0",
                self.min_len, self.max_len
            )));
        }
        if self.task != TaskKind::SortedDigits && self.vocab_size == 0 {
            return Err(Error::Config("task vocab_size must be positive".into()));
        }
        if self.task == TaskKind::AmbiguousLexicon && self.translations == 0 {
            return Err(Error::Config("lexicon needs at least one translation per word".into()));
        }
        if !(0.0..=1.0).contains(&self.swap_prob) {
            return Err(Error::Config(format!("swap_prob {} not in [0,1]", self.swap_prob)));
        }
        Ok(())
    }

    pub fn source_words(&self) -> Vec<String> {
        match self.task {
            TaskKind::SortedDigits => (0..10).map(|d| d.to_string()).collect(),
            TaskKind::AmbiguousLexicon => (0..self.vocab_size).map(|i| format!("s{i}")).collect(),
            TaskKind::Copy | TaskKind::Reverse => {
                (0..self.vocab_size).map(|i| format!("w{i}")).collect()
            }
        }
    }

    pub fn lexicon(&self) -> Option<Lexicon> {
        (self.task == TaskKind::AmbiguousLexicon).then(|| Lexicon {
            entries: (0..self.vocab_size)
                .map(|i| {
                    (
                        format!("s{i}"),
                        (0..self.translations).map(|j| format!("t{i}.{j}")).collect(),
                    )
                })
                .collect(),
        })
    }
}

/// Ambiguity table: each source word maps to a set of interchangeable
/// target words; translation sets of different words are disjoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    pub entries: Vec<(String, Vec<String>)>,
}

impl Lexicon {
    pub fn translations(&self, src: &str) -> Option<&[String]> {
        self.entries
            .iter()
            .find(|(s, _)| s == src)
            .map(|(_, t)| t.as_slice())
    }

    fn word_ok(&self, src: &str, tgt: &str) -> bool {
        self.translations(src)
            .is_some_and(|ts| ts.iter().any(|t| t == tgt))
    }

    /// Whether `tgt` is one of the outputs the generator could produce for
    /// `src`: same length, each adjacent pair `(2i, 2i+1)` either in order or
    /// swapped, every word a valid translation.
    pub fn is_valid(&self, src: &[&str], tgt: &[&str]) -> bool {
        if src.len() != tgt.len() {
            return false;
        }
        let mut i = 0;
        while i + 1 < src.len() {
            let straight = self.word_ok(src[i], tgt[i]) && self.word_ok(src[i + 1], tgt[i + 1]);
            let swapped = self.word_ok(src[i], tgt[i + 1]) && self.word_ok(src[i + 1], tgt[i]);
            if !straight && !swapped {
                return false;
            }
            i += 2;
        }
        i == src.len() || self.word_ok(src[i], tgt[i])
    }

    pub fn target_words(&self) -> Vec<String> {
        self.entries.iter().flat_map(|(_, t)| t.iter().cloned()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

/// Target words for one source sentence.
pub fn transduce(spec: &TaskSpec, lexicon: Option<&Lexicon>, src: &[String], rng: &mut RngStream) -> Vec<String> {
    match spec.task {
        TaskKind::Copy => src.to_vec(),
        TaskKind::Reverse => src.iter().rev().cloned().collect(),
        TaskKind::SortedDigits => {
            let mut t = src.to_vec();
            t.sort_by_key(|d| d.parse::<u32>().unwrap_or(u32::MAX));
            t
        }
        TaskKind::AmbiguousLexicon => {
            let lex = lexicon.expect("lexicon task carries a table");
            let mut t: Vec<String> = src
                .iter()
                .map(|w| {
                    let options = lex.translations(w).expect("source word in table");
                    options[rng.below(options.len())].clone()
                })
                .collect();
            let mut i = 0;
            while i + 1 < t.len() {
                if rng.uniform() < spec.swap_prob {
                    t.swap(i, i + 1);
                }
                i += 2;
            }
            t
        }
    }
}

/// Deterministic corpus for `spec`; every split draws from its own substream.
pub fn generate_corpus(spec: &TaskSpec, sizes: SplitSizes) -> Result<CorpusBundle> {
    spec.validate()?;
    if sizes.train == 0 || sizes.dev == 0 || sizes.test == 0 {
        return Err(Error::Validation("every split needs at least one pair".into()));
    }
    let words = spec.source_words();
    let lexicon = spec.lexicon();
    let tgt_words = match &lexicon {
        Some(l) => l.target_words(),
        None => words.clone(),
    };
    let src_vocab = Vocab::new(words.iter().cloned())?;
    let tgt_vocab = Vocab::new(tgt_words)?;
    let root = RngStream::new(spec.seed);
    let split = |label: &str, n: usize| -> Vec<SentencePair> {
        let mut rng = root.derive(label, &[]);
        (0..n)
            .map(|_| {
                let len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
                let src: Vec<String> = (0..len)
                    .map(|_| words[rng.below(words.len())].clone())
                    .collect();
                let tgt = transduce(spec, lexicon.as_ref(), &src, &mut rng);
                SentencePair {
                    src: src.iter().map(|w| src_vocab.id_or_unk(w)).collect(),
                    tgt: tgt.iter().map(|w| tgt_vocab.id_or_unk(w)).collect(),
                }
            })
            .collect()
    };
    let train = split("train", sizes.train);
    let dev = split("dev", sizes.dev);
    let test = split("test", sizes.test);
    CorpusBundle::new(src_vocab, tgt_vocab, train, dev, test, spec.max_len)
}
