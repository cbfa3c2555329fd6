use crate::error::{Error, Result};

/// Per-query visibility over target positions: `observes(n, m)` means the
/// prediction at position `n` may read the token at position `m`.
///
/// The diagonal is always false.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VisibilityMask {
    size: usize,
    observed: Vec<bool>,
}

impl VisibilityMask {
    /// Nothing visible anywhere.
    pub fn empty(size: usize) -> Self {
        VisibilityMask {
            size,
            observed: vec![false; size * size],
        }
    }

    /// Builds a mask from a predicate; diagonal entries are forced false.
    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut observed = Vec::with_capacity(size * size);
        for n in 0..size {
            for m in 0..size {
                observed.push(n != m && f(n, m));
            }
        }
        VisibilityMask { size, observed }
    }

    /// Strict constructor: rejects a true diagonal.
    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let size = rows.len();
        let mut observed = Vec::with_capacity(size * size);
        for (n, row) in rows.iter().enumerate() {
            if row.len() != size {
                return Err(Error::Dimension(format!(
                    "mask row {n} has {} entries, expected {size}",
                    row.len()
                )));
            }
            if row[n] {
                return Err(Error::Validation(format!("position {n} observes itself")));
            }
            observed.extend_from_slice(row);
        }
        Ok(VisibilityMask { size, observed })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn observes(&self, n: usize, m: usize) -> bool {
        self.observed[n * self.size + m]
    }

    pub fn set(&mut self, n: usize, m: usize, value: bool) {
        if n != m {
            self.observed[n * self.size + m] = value;
        }
    }

    pub fn row(&self, n: usize) -> &[bool] {
        &self.observed[n * self.size..(n + 1) * self.size]
    }

    pub fn observed_positions(&self, n: usize) -> Vec<usize> {
        (0..self.size).filter(|&m| self.observes(n, m)).collect()
    }

    pub fn row_count(&self, n: usize) -> usize {
        self.row(n).iter().filter(|&&b| b).count()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.observed
    }

    /// True when some chain of observations leads back to its start.
    pub fn has_cycle(&self) -> bool {
        // Kahn's algorithm on edges n -> m ("n observes m").
        let mut indegree = vec![0usize; self.size];
        for n in 0..self.size {
            for m in 0..self.size {
                if self.observes(n, m) {
                    indegree[m] += 1;
                }
            }
        }
        let mut stack: Vec<usize> = (0..self.size).filter(|&m| indegree[m] == 0).collect();
        let mut seen = 0;
        while let Some(n) = stack.pop() {
            seen += 1;
            for m in 0..self.size {
                if self.observes(n, m) {
                    indegree[m] -= 1;
                    if indegree[m] == 0 {
                        stack.push(m);
                    }
                }
            }
        }
        seen != self.size
    }

    /// Short hex digest of the mask bits, for trace logs.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.size as u64).to_le_bytes());
        let bytes: Vec<u8> = self.observed.iter().map(|&b| b as u8).collect();
        h.update(&bytes);
        hex::encode(&h.finalize()[..8])
    }
}
