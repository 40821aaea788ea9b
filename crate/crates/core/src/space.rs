use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Cartesian product `S_1 × … × S_N` of finite component state spaces.
///
/// Component states are labelled `0..|S_k|`. Flat indices are row-major
/// over `(x¹, …, x^N)` with `x^N` varying fastest, which is the ordering
/// produced by iterated Kronecker products.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProductStateSpace {
    sizes: Vec<usize>,
    strides: Vec<usize>,
    cardinality: usize,
}

impl ProductStateSpace {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::OutOfRange { index: Vec::new(), sizes });
        }
        let mut strides = vec![1; sizes.len()];
        for k in (0..sizes.len() - 1).rev() {
            strides[k] = strides[k + 1] * sizes[k + 1];
        }
        let cardinality = sizes.iter().product();
        Ok(Self { sizes, strides, cardinality })
    }

    /// Single-component space with `n` states.
    pub fn single(n: usize) -> Result<Self> {
        Self::new(vec![n])
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_components(&self) -> usize {
        self.sizes.len()
    }

    pub fn component_size(&self, k: usize) -> usize {
        self.sizes[k]
    }

    /// Total number of joint states `d = ∏ |S_k|`.
    pub fn cardinality(&self) -> usize {
        self.cardinality
    }

    pub fn flat_index(&self, x: &[usize]) -> Result<usize> {
        if x.len() != self.sizes.len() || x.iter().zip(&self.sizes).any(|(xi, s)| xi >= s) {
            return Err(Error::OutOfRange { index: x.to_vec(), sizes: self.sizes.clone() });
        }
        Ok(x.iter().zip(&self.strides).map(|(xi, st)| xi * st).sum())
    }

    pub fn multi_index(&self, i: usize) -> Result<Vec<usize>> {
        if i >= self.cardinality {
            return Err(Error::OutOfRange { index: vec![i], sizes: self.sizes.clone() });
        }
        Ok(self.coords(i))
    }

    /// Component `k` of flat state `i` (no range check beyond debug).
    #[inline]
    pub fn component(&self, i: usize, k: usize) -> usize {
        debug_assert!(i < self.cardinality);
        (i / self.strides[k]) % self.sizes[k]
    }

    fn coords(&self, i: usize) -> Vec<usize> {
        (0..self.sizes.len()).map(|k| self.component(i, k)).collect()
    }

    /// Flat index of `i` with component `k` replaced by `value`.
    #[inline]
    pub fn with_component(&self, i: usize, k: usize, value: usize) -> usize {
        i - self.component(i, k) * self.strides[k] + value * self.strides[k]
    }

    /// All flat states whose component `k` equals `value`, in increasing order.
    pub fn states_with(&self, k: usize, value: usize) -> Vec<usize> {
        (0..self.cardinality).filter(|&i| self.component(i, k) == value).collect()
    }

    /// Marginal of a joint probability vector onto component `k`.
    pub fn marginal(&self, probs: &[f64], k: usize) -> Vec<f64> {
        debug_assert_eq!(probs.len(), self.cardinality);
        let mut out = vec![0.0; self.sizes[k]];
        for (i, p) in probs.iter().enumerate() {
            out[self.component(i, k)] += p;
        }
        out
    }

    /// Whether every component has the same size as the first one.
    pub fn is_homogeneous(&self) -> bool {
        self.sizes.iter().all(|&s| s == self.sizes[0])
    }
}
