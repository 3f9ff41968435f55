//! Density matrices on composite truncated Fock spaces.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::ket::Ket;
use super::space::CompositeSpace;
use crate::error::{Result, SimError};

/// Tolerances for the density-matrix invariants.
pub(crate) const HERMITICITY_TOL: f64 = 1e-10;
pub(crate) const TRACE_TOL: f64 = 1e-9;
pub(crate) const MIN_EIGENVALUE_FLOOR: f64 = -1e-8;

/// A mixed state: Hermitian, unit trace, positive semidefinite.
///
/// Construction checks hermiticity and trace. Positivity is priced like an
/// eigendecomposition, so it lives in [`DensityMatrix::validate`] and is
/// exercised by tests and snapshot spot-checks rather than on every build.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    space: CompositeSpace,
    mat: DMatrix<Complex64>,
}

impl DensityMatrix {
    /// Wraps a matrix after checking hermiticity (1e-10) and unit trace (1e-9).
    pub fn new(space: CompositeSpace, mat: DMatrix<Complex64>) -> Result<Self> {
        let n = space.total_dim();
        if mat.nrows() != n || mat.ncols() != n {
            return Err(SimError::SignatureMismatch(format!(
                "matrix is {}x{}, space dimension is {n}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let mut herm_defect: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                herm_defect = herm_defect.max((mat[(i, j)] - mat[(j, i)].conj()).norm());
            }
        }
        if herm_defect > HERMITICITY_TOL {
            return Err(SimError::PropertyViolation(format!(
                "density matrix hermiticity defect {herm_defect:.3e}"
            )));
        }
        let tr = mat.diagonal().sum();
        if (tr - Complex64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(SimError::PropertyViolation(format!(
                "density matrix trace {tr} is not 1"
            )));
        }
        Ok(Self { space, mat })
    }

    /// Pure-state density matrix `|psi><psi|`.
    pub fn from_ket(psi: &Ket) -> Self {
        let amp = psi.amp();
        let n = amp.len();
        let mut mat = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                mat[(i, j)] = amp[i] * amp[j].conj();
            }
        }
        Self {
            space: psi.space().clone(),
            mat,
        }
    }

    /// Convex mixture of same-space density matrices (weights renormalized).
    pub fn mix(parts: &[(f64, DensityMatrix)]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| SimError::InvalidArgument("empty mixture".into()))?;
        let space = first.1.space.clone();
        let total: f64 = parts.iter().map(|(w, _)| *w).sum();
        if total <= 0.0 {
            return Err(SimError::InvalidArgument("mixture weights sum to 0".into()));
        }
        let n = space.total_dim();
        let mut mat = DMatrix::zeros(n, n);
        for (w, rho) in parts {
            if rho.space != space {
                return Err(SimError::SignatureMismatch(
                    "mixture parts on different spaces".into(),
                ));
            }
            mat += &rho.mat * Complex64::new(w / total, 0.0);
        }
        Self::new(space, mat)
    }

    /// The state's space.
    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    /// The matrix.
    pub fn mat(&self) -> &DMatrix<Complex64> {
        &self.mat
    }

    /// Trace (1 within tolerance by construction).
    pub fn trace(&self) -> Complex64 {
        self.mat.diagonal().sum()
    }

    /// Purity `Tr rho^2` (real by hermiticity).
    pub fn purity(&self) -> f64 {
        let n = self.mat.nrows();
        let mut p = 0.0;
        for i in 0..n {
            for j in 0..n {
                p += (self.mat[(i, j)] * self.mat[(j, i)]).re;
            }
        }
        p
    }

    /// Full invariant check including positivity (min eigenvalue >= -1e-8).
    pub fn validate(&self) -> Result<()> {
        let eig = self.mat.clone().symmetric_eigen();
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < MIN_EIGENVALUE_FLOOR {
            return Err(SimError::PropertyViolation(format!(
                "density matrix minimum eigenvalue {min:.3e}"
            )));
        }
        Ok(())
    }

    /// Spectral decomposition restricted to weights above `floor`.
    ///
    /// Returns `(weights, vectors)` with vectors as matrix columns, used by
    /// rank-aware consumers such as the Wigner evaluator.
    pub fn significant_eigenpairs(&self, floor: f64) -> (Vec<f64>, DMatrix<Complex64>) {
        let eig = self.mat.clone().symmetric_eigen();
        let keep: Vec<usize> = (0..eig.eigenvalues.len())
            .filter(|&i| eig.eigenvalues[i] > floor)
            .collect();
        let n = self.mat.nrows();
        let mut vecs = DMatrix::zeros(n, keep.len());
        let mut weights = Vec::with_capacity(keep.len());
        for (col, &i) in keep.iter().enumerate() {
            weights.push(eig.eigenvalues[i]);
            vecs.set_column(col, &eig.eigenvectors.column(i));
        }
        (weights, vecs)
    }

    pub(crate) fn new_unchecked(space: CompositeSpace, mat: DMatrix<Complex64>) -> Self {
        Self { space, mat }
    }
}
