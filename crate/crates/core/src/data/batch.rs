use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::numerics::RngStream;

use super::corpus::SentencePair;
use super::vocab::{TokenId, PAD};

/// Indices of the pairs in one batch plus the padded width shared by them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub width: usize,
}

impl Batch {
    /// Slots including padding: `len × width`.
    pub fn padded_tokens(&self) -> usize {
        self.indices.len() * self.width
    }
}

fn pair_width(p: &SentencePair) -> usize {
    p.src.len().max(p.tgt.len())
}

/// Length-bucketed batches whose padded size stays within `tokens_per_batch`.
///
/// Pairs are sorted by width (random tie order when `rng` is given), packed
/// greedily, and the batch order is shuffled by the same stream.
pub fn batch_by_tokens(
    pairs: &[SentencePair],
    tokens_per_batch: usize,
    rng: Option<&mut RngStream>,
) -> Result<Vec<Batch>> {
    if let Some((i, p)) = pairs
        .iter()
        .enumerate()
        .find(|(_, p)| pair_width(p) > tokens_per_batch)
    {
        return Err(Error::Length(format!(
            "pair {} has {} tokens, batch budget is {tokens_per_batch}",
            i + 1,
            pair_width(p)
        )));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut rng = rng;
    if let Some(r) = rng.as_deref_mut() {
        order.shuffle(r);
    }
    // stable sort keeps the shuffled order within a width bucket
    order.sort_by_key(|&i| pair_width(&pairs[i]));
    let mut batches = Vec::new();
    let mut current = Batch {
        indices: Vec::new(),
        width: 0,
    };
    for i in order {
        let w = pair_width(&pairs[i]).max(current.width);
        if !current.indices.is_empty() && (current.indices.len() + 1) * w > tokens_per_batch {
            batches.push(std::mem::replace(
                &mut current,
                Batch {
                    indices: Vec::new(),
                    width: 0,
                },
            ));
        }
        current.width = current.width.max(pair_width(&pairs[i]));
        current.indices.push(i);
    }
    if !current.indices.is_empty() {
        batches.push(current);
    }
    if let Some(r) = rng {
        batches.shuffle(r);
    }
    Ok(batches)
}

/// `seq` right-padded with PAD to `width`.
pub fn pad_to(seq: &[TokenId], width: usize) -> Vec<TokenId> {
    let mut v = seq.to_vec();
    v.resize(width.max(seq.len()), PAD);
    v
}
