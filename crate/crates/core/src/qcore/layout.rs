use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Qubit partition `[s₁ | s₂ | … | s_m | env]`.
///
/// Dimension 1 occupies the most significant qubits of the basis index, the
/// environment the least significant ones. Every tensor index in the crate is
/// derived from this one convention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubspaceLayout {
    pub dims: Vec<usize>,
    pub env_qubits: usize,
}

/// Largest total register the dense routines are sized for.
pub const MAX_QUBITS: usize = 12;

impl SubspaceLayout {
    pub fn new(dims: Vec<usize>, env_qubits: usize) -> Result<Self> {
        let layout = Self { dims, env_qubits };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::InvalidParams("layout needs at least one dimension".into()));
        }
        if self.dims.contains(&0) {
            return Err(Error::InvalidParams("every dimension needs at least one qubit".into()));
        }
        if self.total_qubits() > MAX_QUBITS {
            return Err(Error::InvalidParams(format!(
                "{} qubits exceeds the dense limit of {MAX_QUBITS}",
                self.total_qubits()
            )));
        }
        Ok(())
    }

    pub fn num_dims(&self) -> usize {
        self.dims.len()
    }

    pub fn system_qubits(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn total_qubits(&self) -> usize {
        self.system_qubits() + self.env_qubits
    }

    pub fn full_dim(&self) -> usize {
        1 << self.total_qubits()
    }

    /// Number of basis states (symbols) in dimension `d`.
    pub fn symbols(&self, d: usize) -> usize {
        1 << self.dims[d]
    }

    /// Index of the first qubit of dimension `d`.
    pub fn offset(&self, d: usize) -> usize {
        self.dims[..d].iter().sum()
    }

    /// Qubit range `[start, start+len)` of dimension `d`.
    pub fn qubit_range(&self, d: usize) -> (usize, usize) {
        (self.offset(d), self.dims[d])
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        if d >= self.dims.len() {
            return Err(Error::OutOfRange(format!(
                "dimension {d} of a {}-dimensional layout",
                self.dims.len()
            )));
        }
        Ok(())
    }

    /// Full-register basis index with `symbols[d]` in each system subspace and
    /// the environment in |0…0⟩.
    pub fn embed(&self, symbols: &[usize]) -> Result<usize> {
        if symbols.len() != self.dims.len() {
            return Err(Error::Shape(format!(
                "{} symbols for {} dimensions",
                symbols.len(),
                self.dims.len()
            )));
        }
        let mut idx = 0usize;
        for (d, (&s, &n)) in symbols.iter().zip(&self.dims).enumerate() {
            if s >= 1 << n {
                return Err(Error::OutOfRange(format!(
                    "symbol {s} in dimension {d} with {} states",
                    1 << n
                )));
            }
            idx = (idx << n) | s;
        }
        Ok(idx << self.env_qubits)
    }

    /// Basis index with symbol `i` in dimension `d` and zeros elsewhere.
    pub fn embed_single(&self, d: usize, i: usize) -> Result<usize> {
        self.check_dim(d)?;
        let mut symbols = vec![0; self.dims.len()];
        symbols[d] = i;
        self.embed(&symbols)
    }

    /// Split a system-register index (environment already removed) into
    /// per-dimension symbols.
    pub fn split_system_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for d in (0..self.dims.len()).rev() {
            let n = self.dims[d];
            out[d] = idx & ((1 << n) - 1);
            idx >>= n;
        }
        out
    }

    /// Stinespring advisory: the environment never needs more than `2·Σnᵢ`
    /// qubits (dimension `n_s²`). Not enforced.
    pub fn exceeds_stinespring_bound(&self) -> bool {
        self.env_qubits > 2 * self.system_qubits()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_uses_msb_first() {
        let l = SubspaceLayout::new(vec![1, 2], 2).unwrap();
        assert_eq!(l.total_qubits(), 5);
        // s1=1, s2=0b10, env=00 -> 1 10 00
        assert_eq!(l.embed(&[1, 2]).unwrap(), 0b11000);
        assert_eq!(l.embed_single(1, 3).unwrap(), 0b01100);
        assert_eq!(l.split_system_index(0b110), vec![1, 2]);
        assert!(l.embed(&[2, 0]).is_err());
        assert!(l.embed(&[0]).is_err());
    }

    #[test]
    fn validation() {
        assert!(SubspaceLayout::new(vec![], 1).is_err());
        assert!(SubspaceLayout::new(vec![0], 1).is_err());
        assert!(SubspaceLayout::new(vec![6, 6], 1).is_err());
        let l = SubspaceLayout::new(vec![1], 3).unwrap();
        assert!(l.exceeds_stinespring_bound());
        assert!(!SubspaceLayout::new(vec![1, 1], 2).unwrap().exceeds_stinespring_bound());
    }
}
