//! Normalized state vectors over composite truncated Fock spaces.

use nalgebra::DVector;
use num_complex::Complex64;

use super::space::CompositeSpace;
use crate::error::{Result, SimError};

/// Norm floor below which a vector is considered zero.
pub(crate) const ZERO_NORM: f64 = 1e-12;

/// A normalized pure state.
///
/// Constructors normalize; an unnormalized amplitude vector only ever exists
/// transiently inside measurement branching.
#[derive(Clone, Debug)]
pub struct Ket {
    space: CompositeSpace,
    amp: DVector<Complex64>,
}

impl Ket {
    /// Wraps and normalizes an amplitude vector.
    pub fn new(space: CompositeSpace, amp: DVector<Complex64>) -> Result<Self> {
        if amp.len() != space.total_dim() {
            return Err(SimError::SignatureMismatch(format!(
                "amplitude length {} does not match space dimension {}",
                amp.len(),
                space.total_dim()
            )));
        }
        let norm = amp.norm();
        if norm < ZERO_NORM {
            return Err(SimError::ZeroVector(
                "cannot normalize a (near-)zero amplitude vector".into(),
            ));
        }
        Ok(Self {
            space,
            amp: amp / Complex64::new(norm, 0.0),
        })
    }

    /// Basis state `|multi[0], multi[1], ...>`.
    pub fn basis_state(space: CompositeSpace, multi: &[usize]) -> Result<Self> {
        let flat = space.flat_index(multi)?;
        let mut amp = DVector::zeros(space.total_dim());
        amp[flat] = Complex64::new(1.0, 0.0);
        Ok(Self { space, amp })
    }

    /// The state's space.
    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    /// Amplitudes (normalized).
    pub fn amp(&self) -> &DVector<Complex64> {
        &self.amp
    }

    /// Inner product `<self|other>`.
    pub fn overlap(&self, other: &Ket) -> Result<Complex64> {
        if self.space != other.space {
            return Err(SimError::SignatureMismatch(
                "overlap between states on different spaces".into(),
            ));
        }
        Ok(self.amp.dotc(&other.amp))
    }

    /// Tensor product `self (x) other`.
    pub fn tensor(&self, other: &Ket) -> Ket {
        let space = self.space.tensor(&other.space);
        let n = other.amp.len();
        let mut amp = DVector::zeros(self.amp.len() * n);
        for (i, a) in self.amp.iter().enumerate() {
            for (j, b) in other.amp.iter().enumerate() {
                amp[i * n + j] = a * b;
            }
        }
        Ket { space, amp }
    }

    /// Linear combination of same-space states, renormalized.
    pub fn superpose(terms: &[(Complex64, &Ket)]) -> Result<Ket> {
        let first = terms
            .first()
            .ok_or_else(|| SimError::InvalidArgument("empty superposition".into()))?;
        let space = first.1.space.clone();
        let mut amp = DVector::zeros(space.total_dim());
        for (c, k) in terms {
            if k.space != space {
                return Err(SimError::SignatureMismatch(
                    "superposition terms on different spaces".into(),
                ));
            }
            amp += &k.amp * *c;
        }
        Ket::new(space, amp)
    }

    /// Mass `sum |amp|^2` on composite indices whose digit at `mode` is `level`.
    pub fn level_mass(&self, mode: usize, level: usize) -> Result<f64> {
        let dims = self.space.dims();
        if mode >= dims.len() {
            return Err(SimError::SignatureMismatch(format!(
                "mode index {mode} out of range"
            )));
        }
        let stride = self.space.strides()[mode];
        let dim = dims[mode];
        let mut mass = 0.0;
        for (i, a) in self.amp.iter().enumerate() {
            if (i / stride) % dim == level {
                mass += a.norm_sqr();
            }
        }
        Ok(mass)
    }

    /// Mass on composite indices whose digit at `mode` lies in the residue
    /// class `residue` modulo `modulus` (e.g. modulus 2 for photon parity,
    /// modulus 4 for qudit classes).
    pub fn class_mass(&self, mode: usize, modulus: usize, residue: usize) -> Result<f64> {
        let dims = self.space.dims();
        if mode >= dims.len() {
            return Err(SimError::SignatureMismatch(format!(
                "mode index {mode} out of range"
            )));
        }
        if modulus == 0 || residue >= modulus {
            return Err(SimError::InvalidArgument(format!(
                "residue {residue} invalid for modulus {modulus}"
            )));
        }
        let stride = self.space.strides()[mode];
        let dim = dims[mode];
        let mut mass = 0.0;
        for (i, a) in self.amp.iter().enumerate() {
            if ((i / stride) % dim) % modulus == residue {
                mass += a.norm_sqr();
            }
        }
        Ok(mass)
    }

    /// Per-mode occupancy of the top retained Fock level.
    ///
    /// This is the truncation diagnostic: a state pressing against the
    /// boundary of any mode has leaked probability out of the retained basis.
    pub fn boundary_occupancy(&self) -> Vec<f64> {
        let dims = self.space.dims();
        (0..dims.len())
            .map(|m| self.level_mass(m, dims[m] - 1).expect("mode in range"))
            .collect()
    }

    pub(crate) fn from_normalized_unchecked(
        space: CompositeSpace,
        amp: DVector<Complex64>,
    ) -> Self {
        Self { space, amp }
    }
}
