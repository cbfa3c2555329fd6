//! Visibility masks for every training objective and decoding mode.
//!
//! Order-based masks take 1-based ranks `z`: position `n` observes `i`
//! exactly when `z[i] < z[n]`.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::VisibilityMask;
use crate::numerics::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskMode {
    DiscoRandom,
    Cmlm,
    Autoregressive,
    Permutation,
    Cloze,
    FromOrder,
}

/// A mask recipe. `order` is required by `FromOrder` and ignored otherwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSpec {
    pub mode: MaskMode,
    pub order: Option<Vec<usize>>,
}

/// A drawn mask plus, for the masked-LM objective, which positions are
/// masked (the only ones that contribute to its loss).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledMask {
    pub mask: VisibilityMask,
    pub masked: Option<Vec<bool>>,
}

impl MaskSpec {
    pub fn new(mode: MaskMode) -> Self {
        MaskSpec { mode, order: None }
    }

    pub fn from_order(z: Vec<usize>) -> Self {
        MaskSpec {
            mode: MaskMode::FromOrder,
            order: Some(z),
        }
    }

    pub fn sample(&self, n: usize, rng: &mut RngStream) -> Result<SampledMask> {
        let plain = |mask| SampledMask { mask, masked: None };
        Ok(match self.mode {
            MaskMode::DiscoRandom => plain(sample_disco_mask(n, rng)),
            MaskMode::Cmlm => {
                let (mask, masked) = cmlm_mask(n, rng);
                SampledMask {
                    mask,
                    masked: Some(masked),
                }
            }
            MaskMode::Autoregressive => plain(autoregressive_mask(n)),
            MaskMode::Permutation => plain(from_order_mask(&random_ranks(n, rng))?),
            MaskMode::Cloze => plain(cloze_mask(n)),
            MaskMode::FromOrder => {
                let z = self
                    .order
                    .as_ref()
                    .ok_or_else(|| Error::Validation("from-order mask needs ranks".into()))?;
                if z.len() != n {
                    return Err(Error::Dimension(format!("{} ranks for {n} positions", z.len())));
                }
                plain(from_order_mask(z)?)
            }
        })
    }
}

/// Each row independently observes `u ~ Uniform{0..N-1}` of the other
/// positions, chosen uniformly without replacement.
pub fn sample_disco_mask(n: usize, rng: &mut RngStream) -> VisibilityMask {
    let mut mask = VisibilityMask::empty(n);
    for row in 0..n {
        let u = rng.below(n);
        for j in index::sample(rng, n - 1, u) {
            let m = if j >= row { j + 1 } else { j };
            mask.set(row, m, true);
        }
    }
    mask
}

/// Masks `m ~ Uniform{1..N}` positions; every row observes the unmasked
/// positions other than itself.
pub fn cmlm_mask(n: usize, rng: &mut RngStream) -> (VisibilityMask, Vec<bool>) {
    let mut masked = vec![false; n];
    if n == 0 {
        return (VisibilityMask::empty(0), masked);
    }
    let m = 1 + rng.below(n);
    for i in index::sample(rng, n, m) {
        masked[i] = true;
    }
    (shared_mask(&masked), masked)
}

/// Identical rows: everything not in `hidden` is observed (except self).
pub fn shared_mask(hidden: &[bool]) -> VisibilityMask {
    VisibilityMask::from_fn(hidden.len(), |_, m| !hidden[m])
}

pub fn autoregressive_mask(n: usize) -> VisibilityMask {
    VisibilityMask::from_fn(n, |row, m| m < row)
}

pub fn cloze_mask(n: usize) -> VisibilityMask {
    VisibilityMask::from_fn(n, |_, _| true)
}

/// Checks that `z` is a bijection onto `1..=N`.
pub fn validate_ranks(z: &[usize]) -> Result<()> {
    let mut seen = vec![false; z.len()];
    for (i, &r) in z.iter().enumerate() {
        if r == 0 || r > z.len() || seen[r - 1] {
            return Err(Error::Validation(format!(
                "ranks are not a permutation of 1..={}: entry {i} is {r}",
                z.len()
            )));
        }
        seen[r - 1] = true;
    }
    Ok(())
}

pub fn from_order_mask(z: &[usize]) -> Result<VisibilityMask> {
    validate_ranks(z)?;
    Ok(VisibilityMask::from_fn(z.len(), |row, m| z[m] < z[row]))
}

/// Ranks by descending confidence, ties to the lower index: the most
/// confident position gets rank 1.
pub fn ranks_from_confidence(conf: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..conf.len()).collect();
    order.sort_by(|&a, &b| conf[b].total_cmp(&conf[a]).then(a.cmp(&b)));
    let mut z = vec![0; conf.len()];
    for (r, &i) in order.iter().enumerate() {
        z[i] = r + 1;
    }
    z
}

pub fn identity_ranks(n: usize) -> Vec<usize> {
    (1..=n).collect()
}

pub fn reversed_ranks(n: usize) -> Vec<usize> {
    (1..=n).rev().collect()
}

pub fn random_ranks(n: usize, rng: &mut RngStream) -> Vec<usize> {
    let perm = index::sample(rng, n, n).into_vec();
    let mut z = vec![0; n];
    for (r, i) in perm.into_iter().enumerate() {
        z[i] = r + 1;
    }
    z
}
