use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::vocab::{TokenId, Vocab};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SentencePair {
    pub src: Vec<TokenId>,
    pub tgt: Vec<TokenId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

/// Parallel corpus with both vocabularies; ids always resolve and no
/// sentence exceeds `max_positions`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusBundle {
    pub src_vocab: Vocab,
    pub tgt_vocab: Vocab,
    pub train: Vec<SentencePair>,
    pub dev: Vec<SentencePair>,
    pub test: Vec<SentencePair>,
    pub max_positions: usize,
}

impl CorpusBundle {
    pub fn new(
        src_vocab: Vocab,
        tgt_vocab: Vocab,
        train: Vec<SentencePair>,
        dev: Vec<SentencePair>,
        test: Vec<SentencePair>,
        max_positions: usize,
    ) -> Result<Self> {
        let b = CorpusBundle {
            src_vocab,
            tgt_vocab,
            train,
            dev,
            test,
            max_positions,
        };
        for split in Split::ALL {
            for (i, p) in b.split(split).iter().enumerate() {
                let loc = || format!("{} pair {}", split.name(), i + 1);
                if p.src.is_empty() || p.tgt.is_empty() {
                    return Err(Error::format(loc(), "empty sentence"));
                }
                if p.src.len() > max_positions || p.tgt.len() > max_positions {
                    return Err(Error::Length(format!(
                        "{}: longer than {max_positions} tokens",
                        loc()
                    )));
                }
                if !p.src.iter().all(|&t| b.src_vocab.contains(t))
                    || !p.tgt.iter().all(|&t| b.tgt_vocab.contains(t))
                {
                    return Err(Error::Index(format!("{}: id outside vocabulary", loc())));
                }
            }
        }
        Ok(b)
    }

    pub fn split(&self, split: Split) -> &[SentencePair] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    /// Same vocabularies and limits, different training targets.
    pub fn with_train(&self, train: Vec<SentencePair>) -> Result<Self> {
        CorpusBundle::new(
            self.src_vocab.clone(),
            self.tgt_vocab.clone(),
            train,
            self.dev.clone(),
            self.test.clone(),
            self.max_positions,
        )
    }

    /// Writes `{split}.src`, `{split}.tgt`, `src.vocab`, `tgt.vocab`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.src_vocab.save(&dir.join("src.vocab"))?;
        self.tgt_vocab.save(&dir.join("tgt.vocab"))?;
        for split in Split::ALL {
            let (s, t) = split_paths(dir, split);
            let pairs = self.split(split);
            let src: Vec<String> = pairs.iter().map(|p| self.src_vocab.decode(&p.src)).collect();
            let tgt: Vec<String> = pairs.iter().map(|p| self.tgt_vocab.decode(&p.tgt)).collect();
            write_parallel(&s, &t, &src, &tgt)?;
        }
        Ok(())
    }

    /// Reads a directory written by [`save_dir`](Self::save_dir). When the
    /// vocabulary files are missing they are built from the train split.
    pub fn load_dir(dir: &Path, max_positions: usize) -> Result<Self> {
        let (ts, tt) = split_paths(dir, Split::Train);
        let train_text = read_parallel(&ts, &tt)?;
        let src_vocab_path = dir.join("src.vocab");
        let tgt_vocab_path = dir.join("tgt.vocab");
        let src_vocab = if src_vocab_path.exists() {
            Vocab::load(&src_vocab_path)?
        } else {
            build_vocab(train_text.iter().map(|(s, _)| s.as_slice()))?
        };
        let tgt_vocab = if tgt_vocab_path.exists() {
            Vocab::load(&tgt_vocab_path)?
        } else {
            build_vocab(train_text.iter().map(|(_, t)| t.as_slice()))?
        };
        let to_ids = |text: Vec<(Vec<String>, Vec<String>)>| -> Vec<SentencePair> {
            text.into_iter()
                .map(|(s, t)| SentencePair {
                    src: s.iter().map(|w| src_vocab.id_or_unk(w)).collect(),
                    tgt: t.iter().map(|w| tgt_vocab.id_or_unk(w)).collect(),
                })
                .collect()
        };
        let train = to_ids(train_text);
        let (ds, dt) = split_paths(dir, Split::Dev);
        let dev = to_ids(read_parallel(&ds, &dt)?);
        let (es, et) = split_paths(dir, Split::Test);
        let test = to_ids(read_parallel(&es, &et)?);
        CorpusBundle::new(src_vocab, tgt_vocab, train, dev, test, max_positions)
    }
}

pub fn split_paths(dir: &Path, split: Split) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{}.src", split.name())),
        dir.join(format!("{}.tgt", split.name())),
    )
}

/// Vocabulary of every type seen at least once, most frequent first, ties
/// in lexical order.
pub fn build_vocab<'a, I>(sentences: I) -> Result<Vocab>
where
    I: IntoIterator<Item = &'a [String]>,
{
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for s in sentences {
        for w in s {
            *counts.entry(w.as_str()).or_default() += 1;
        }
    }
    let mut types: Vec<(&str, usize)> = counts.into_iter().collect();
    types.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    Vocab::new(types.into_iter().map(|(w, _)| w.to_string()))
}

/// Whitespace-tokenized aligned text; empty lines and count mismatches are
/// format errors naming the offending line.
pub fn parse_parallel(src: &str, tgt: &str, src_name: &str, tgt_name: &str) -> Result<Vec<(Vec<String>, Vec<String>)>> {
    let src_lines: Vec<&str> = src.lines().collect();
    let tgt_lines: Vec<&str> = tgt.lines().collect();
    if src_lines.len() != tgt_lines.len() {
        return Err(Error::format(
            format!("{src_name} / {tgt_name}"),
            format!(
                "misaligned: {} source lines, {} target lines",
                src_lines.len(),
                tgt_lines.len()
            ),
        ));
    }
    let mut out = Vec::with_capacity(src_lines.len());
    for (i, (s, t)) in src_lines.iter().zip(&tgt_lines).enumerate() {
        let s: Vec<String> = s.split_whitespace().map(str::to_string).collect();
        let t: Vec<String> = t.split_whitespace().map(str::to_string).collect();
        if s.is_empty() {
            return Err(Error::format(format!("{src_name} line {}", i + 1), "empty sentence"));
        }
        if t.is_empty() {
            return Err(Error::format(format!("{tgt_name} line {}", i + 1), "empty sentence"));
        }
        out.push((s, t));
    }
    Ok(out)
}

pub fn read_parallel(src: &Path, tgt: &Path) -> Result<Vec<(Vec<String>, Vec<String>)>> {
    let s = std::fs::read_to_string(src).map_err(|e| Error::io(src, e))?;
    let t = std::fs::read_to_string(tgt).map_err(|e| Error::io(tgt, e))?;
    parse_parallel(&s, &t, &src.display().to_string(), &tgt.display().to_string())
}

pub fn write_parallel(src: &Path, tgt: &Path, src_lines: &[String], tgt_lines: &[String]) -> Result<()> {
    if src_lines.len() != tgt_lines.len() {
        return Err(Error::Validation("parallel sides differ in length".into()));
    }
    write_lines(src, src_lines)?;
    write_lines(tgt, tgt_lines)
}

pub fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut text = String::new();
    for l in lines {
        text.push_str(l);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
