//! Truncated single-mode and composite Fock spaces.

use crate::error::{Result, SimError};

/// A single bosonic mode truncated to Fock states `|0> ... |dim-1>`.
///
/// A two-level ancilla is represented as a mode with `dim = 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModeSpace {
    dim: usize,
}

impl ModeSpace {
    /// Creates a mode with the given Fock truncation (`dim >= 2`).
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(SimError::InvalidDimension(format!(
                "mode dimension must be >= 2, got {dim}"
            )));
        }
        Ok(Self { dim })
    }

    /// Number of retained Fock levels.
    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// An ordered tensor product of modes.
///
/// The mode order is fixed and identifies subsystems by index. Flat indices
/// are row-major with the last mode fastest, matching nested Kronecker
/// products `(A (x) B) (x) C`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompositeSpace {
    modes: Vec<ModeSpace>,
}

impl CompositeSpace {
    /// Creates a composite space from an ordered mode list.
    pub fn new(modes: Vec<ModeSpace>) -> Result<Self> {
        if modes.is_empty() {
            return Err(SimError::InvalidDimension(
                "composite space needs at least one mode".into(),
            ));
        }
        Ok(Self { modes })
    }

    /// Single-mode space of the given dimension.
    pub fn single(dim: usize) -> Result<Self> {
        Ok(Self {
            modes: vec![ModeSpace::new(dim)?],
        })
    }

    /// Composite space from plain dimensions, in order.
    pub fn from_dims(dims: &[usize]) -> Result<Self> {
        let modes = dims
            .iter()
            .map(|&d| ModeSpace::new(d))
            .collect::<Result<Vec<_>>>()?;
        Self::new(modes)
    }

    /// Number of modes.
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    /// Modes in order.
    pub fn modes(&self) -> &[ModeSpace] {
        &self.modes
    }

    /// Dimension of mode `i`.
    pub fn mode_dim(&self, i: usize) -> Result<usize> {
        self.modes
            .get(i)
            .map(|m| m.dim())
            .ok_or_else(|| SimError::SignatureMismatch(format!("mode index {i} out of range")))
    }

    /// Mode dimensions in order.
    pub fn dims(&self) -> Vec<usize> {
        self.modes.iter().map(|m| m.dim()).collect()
    }

    /// Total Hilbert-space dimension (product of mode dims).
    pub fn total_dim(&self) -> usize {
        self.modes.iter().map(|m| m.dim()).product()
    }

    /// Row-major strides: `flat = sum_i multi[i] * stride[i]`, last mode fastest.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.modes.len()];
        for i in (0..self.modes.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.modes[i + 1].dim();
        }
        strides
    }

    /// Flat index of a multi-index.
    pub fn flat_index(&self, multi: &[usize]) -> Result<usize> {
        if multi.len() != self.modes.len() {
            return Err(SimError::SignatureMismatch(format!(
                "multi-index rank {} does not match {} modes",
                multi.len(),
                self.modes.len()
            )));
        }
        let strides = self.strides();
        let mut flat = 0;
        for (i, (&idx, m)) in multi.iter().zip(&self.modes).enumerate() {
            if idx >= m.dim() {
                return Err(SimError::SignatureMismatch(format!(
                    "index {idx} out of range for mode {i} (dim {})",
                    m.dim()
                )));
            }
            flat += idx * strides[i];
        }
        Ok(flat)
    }

    /// Digit of `flat` belonging to mode `i`.
    pub fn mode_digit(&self, flat: usize, i: usize) -> usize {
        let strides = self.strides();
        (flat / strides[i]) % self.modes[i].dim()
    }

    /// Concatenation `self (x) other` (appends the other space's modes).
    pub fn tensor(&self, other: &CompositeSpace) -> CompositeSpace {
        let mut modes = self.modes.clone();
        modes.extend_from_slice(&other.modes);
        CompositeSpace { modes }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_dimensions() {
        assert!(ModeSpace::new(0).is_err());
        assert!(ModeSpace::new(1).is_err());
        assert!(ModeSpace::new(2).is_ok());
        assert!(CompositeSpace::new(vec![]).is_err());
    }

    #[test]
    fn strides_are_row_major_last_mode_fastest() {
        let s = CompositeSpace::from_dims(&[3, 4, 5]).unwrap();
        assert_eq!(s.strides(), vec![20, 5, 1]);
        assert_eq!(s.total_dim(), 60);
        assert_eq!(s.flat_index(&[1, 2, 3]).unwrap(), 20 + 10 + 3);
        assert_eq!(s.mode_digit(33, 0), 1);
        assert_eq!(s.mode_digit(33, 1), 2);
        assert_eq!(s.mode_digit(33, 2), 3);
    }

    #[test]
    fn flat_index_validates_rank_and_range() {
        let s = CompositeSpace::from_dims(&[2, 2]).unwrap();
        assert!(s.flat_index(&[0]).is_err());
        assert!(s.flat_index(&[0, 2]).is_err());
    }

    #[test]
    fn tensor_appends_modes() {
        let a = CompositeSpace::from_dims(&[2, 3]).unwrap();
        let b = CompositeSpace::single(4).unwrap();
        let t = a.tensor(&b);
        assert_eq!(t.dims(), vec![2, 3, 4]);
    }
}
