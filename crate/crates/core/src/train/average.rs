use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Real};

#[derive(Debug, Clone)]
pub struct RankedCheckpoint<T> {
    pub metric: f64,
    pub step: u64,
    pub params: ParamStore<T>,
}

/// The `k` best checkpoints seen so far, best first (ties: later step).
#[derive(Debug, Clone)]
pub struct BestCheckpoints<T> {
    k: usize,
    entries: Vec<RankedCheckpoint<T>>,
}

impl<T: Real> BestCheckpoints<T> {
    pub fn new(k: usize) -> Self {
        BestCheckpoints {
            k: k.max(1),
            entries: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.k
    }

    pub fn entries(&self) -> &[RankedCheckpoint<T>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Keeps `params` if it ranks among the best `k`; returns whether it did.
    pub fn offer(&mut self, metric: f64, step: u64, params: &ParamStore<T>) -> bool {
        let pos = self
            .entries
            .iter()
            .position(|e| metric > e.metric || (metric == e.metric && step > e.step))
            .unwrap_or(self.entries.len());
        if pos >= self.k {
            return false;
        }
        self.entries.insert(
            pos,
            RankedCheckpoint {
                metric,
                step,
                params: params.clone(),
            },
        );
        self.entries.truncate(self.k);
        true
    }

    pub fn average(&self) -> Result<ParamStore<T>> {
        let stores: Vec<&ParamStore<T>> = self.entries.iter().map(|e| &e.params).collect();
        average_params(&stores)
    }
}

/// Element-wise arithmetic mean. Each coordinate is summed in sorted order,
/// so the result does not depend on the order of `stores`.
pub fn average_params<T: Real>(stores: &[&ParamStore<T>]) -> Result<ParamStore<T>> {
    let first = *stores
        .first()
        .ok_or_else(|| Error::Validation("no checkpoints to average".into()))?;
    if stores.iter().any(|s| !s.same_layout(first)) {
        return Err(Error::Dimension("checkpoints have different layouts".into()));
    }
    let mut out = first.clone();
    let count = stores.len() as f64;
    let ids: Vec<_> = first.ids().collect();
    let mut vals = Vec::with_capacity(stores.len());
    for id in ids {
        let n = first.get(id).len();
        let mut data = Vec::with_capacity(n);
        for i in 0..n {
            vals.clear();
            vals.extend(stores.iter().map(|s| s.get(id).data()[i].f64()));
            vals.sort_by(f64::total_cmp);
            data.push(T::of(vals.iter().sum::<f64>() / count));
        }
        let t = out.get_mut(id);
        t.data_mut().copy_from_slice(&data);
        t.clear_grad();
    }
    Ok(out)
}
