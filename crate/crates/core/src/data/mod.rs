//! Vocabularies, synthetic parallel tasks, text IO and batching.
//!
//! Parallel text is two aligned UTF-8 files, one whitespace-tokenized
//! sentence per line. A vocabulary file lists one word per line; the word on
//! line `k` (0-based) has id `NUM_SPECIALS + k`, after the fixed specials
//! `<pad> </s> <unk> <len> <mask>`.

pub mod batch;
pub mod corpus;
pub mod tasks;
pub mod vocab;

pub use batch::{batch_by_tokens, pad_to, Batch};
pub use corpus::{build_vocab, parse_parallel, read_parallel, write_parallel, CorpusBundle, SentencePair, Split};
pub use tasks::{generate_corpus, Lexicon, SplitSizes, TaskKind, TaskSpec};
pub use vocab::{TokenId, Vocab, EOS, LENGTH, MASK, NUM_SPECIALS, PAD, UNK};
