use std::ops::Index;

use serde::{Deserialize, Serialize};

/// A finitely supported real sequence on the non-negative integers.
///
/// Entries past `values.len()` are zero; `support_end()` is the first index
/// that is guaranteed to vanish.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    values: Vec<f64>,
}

impl Signal {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(len: usize) -> Self {
        Self { values: vec![0.0; len] }
    }

    /// Unit mass at `m`.
    pub fn delta(m: usize) -> Self {
        let mut values = vec![0.0; m + 1];
        values[m] = 1.0;
        Self { values }
    }

    pub fn support_end(&self) -> usize {
        self.values.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at `n`, zero outside the stored range.
    pub fn get(&self, n: usize) -> f64 {
        self.values.get(n).copied().unwrap_or(0.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Copy padded (or cut) to exactly `len` entries.
    pub fn resized(&self, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        let k = len.min(self.values.len());
        out[..k].copy_from_slice(&self.values[..k]);
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Signal {
        Signal::new(self.values.iter().map(|&v| f(v)).collect())
    }

    /// Largest index carrying a non-zero value, plus one.
    pub fn effective_support(&self) -> usize {
        self.values
            .iter()
            .rposition(|&v| v != 0.0)
            .map_or(0, |i| i + 1)
    }
}

impl From<Vec<f64>> for Signal {
    fn from(values: Vec<f64>) -> Self {
        Self::new(values)
    }
}

impl Index<usize> for Signal {
    type Output = f64;

    fn index(&self, n: usize) -> &f64 {
        &self.values[n]
    }
}
