use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const EOS: TokenId = 1;
pub const UNK: TokenId = 2;
/// Prepended to every source sentence; its encoder state feeds the length head.
pub const LENGTH: TokenId = 3;
/// Only the contextual masked-LM baseline feeds this; the disentangled
/// decoder never sees a mask symbol.
pub const MASK: TokenId = 4;
pub const NUM_SPECIALS: usize = 5;

pub const SPECIAL_NAMES: [&str; NUM_SPECIALS] = ["<pad>", "</s>", "<unk>", "<len>", "<mask>"];

/// Closed vocabulary: the special table followed by word types.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocab {
    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab {
            words: Vec::new(),
            index: HashMap::new(),
        };
        for (i, w) in words.into_iter().enumerate() {
            let w = w.into();
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(Error::format(
                    format!("vocabulary entry {}", i + 1),
                    format!("invalid token {w:?}"),
                ));
            }
            if SPECIAL_NAMES.contains(&w.as_str()) {
                return Err(Error::format(
                    format!("vocabulary entry {}", i + 1),
                    format!("{w} is reserved"),
                ));
            }
            if v.index.contains_key(&w) {
                return Err(Error::format(
                    format!("vocabulary entry {}", i + 1),
                    format!("duplicate token {w}"),
                ));
            }
            v.index.insert(w.clone(), (NUM_SPECIALS + v.words.len()) as TokenId);
            v.words.push(w);
        }
        Ok(v)
    }

    /// Total id space including specials.
    pub fn len(&self) -> usize {
        NUM_SPECIALS + self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> Option<TokenId> {
        self.index.get(word).copied()
    }

    pub fn id_or_unk(&self, word: &str) -> TokenId {
        self.id(word).unwrap_or(UNK)
    }

    pub fn word(&self, id: TokenId) -> Option<&str> {
        let i = id as usize;
        if i < NUM_SPECIALS {
            Some(SPECIAL_NAMES[i])
        } else {
            self.words.get(i - NUM_SPECIALS).map(String::as_str)
        }
    }

    pub fn contains(&self, id: TokenId) -> bool {
        (id as usize) < self.len()
    }

    pub fn encode(&self, sentence: &str) -> Vec<TokenId> {
        sentence.split_whitespace().map(|w| self.id_or_unk(w)).collect()
    }

    /// Space-joined words; specials other than UNK are dropped.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .filter(|&&i| i == UNK || i as usize >= NUM_SPECIALS)
            .filter_map(|&i| self.word(i))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// One word per line; line `k` (0-based) has id `NUM_SPECIALS + k`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for w in &self.words {
            s.push_str(w);
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::new(text.lines())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_follow_specials() {
        let v = Vocab::new(["a", "b"]).unwrap();
        assert_eq!(v.len(), NUM_SPECIALS + 2);
        assert_eq!(v.id("a"), Some(NUM_SPECIALS as TokenId));
        assert_eq!(v.word(LENGTH), Some("<len>"));
        assert_eq!(v.encode("b zz a"), vec![6, UNK, 5]);
        assert_eq!(v.decode(&[5, EOS, 6]), "a b");
    }

    #[test]
    fn text_round_trip() {
        let v = Vocab::new(["x", "y", "z"]).unwrap();
        assert_eq!(Vocab::parse(&v.to_text()).unwrap(), v);
    }

    #[test]
    fn rejects_duplicates_and_reserved() {
        assert!(Vocab::new(["a", "a"]).is_err());
        assert!(Vocab::new(["<unk>"]).is_err());
        assert!(Vocab::parse("a\n\nb\n").is_err());
    }
}
