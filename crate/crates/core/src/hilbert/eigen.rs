//! Cached spectral decompositions powering exact unitary evolution.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::operator::{LinearOperator, MatRepr};
use crate::error::{Result, SimError};

/// Cross-sector matrix elements larger than this (relative to the largest
/// element) invalidate a claimed conserved-sector partition.
const BLOCK_LEAK_TOL: f64 = 1e-12;

/// Spectral data for a Hermitian operator, in the cheapest faithful form.
#[derive(Clone, Debug)]
pub(crate) enum EigenPlan {
    /// Diagonal Hamiltonian: eigenvalues only, eigenvectors are basis states.
    Diagonal { evals: DVector<f64> },
    /// Full dense decomposition `H = V diag(evals) V^dag`.
    Dense {
        evals: DVector<f64>,
        evecs: DMatrix<Complex64>,
    },
    /// Independent dense decompositions of conserved sectors.
    Blocked {
        sectors: Vec<BlockEigen>,
    },
}

#[derive(Clone, Debug)]
pub(crate) struct BlockEigen {
    pub indices: Vec<usize>,
    pub evals: DVector<f64>,
    pub evecs: DMatrix<Complex64>,
}

impl EigenPlan {
    /// Builds the plan for a hermitian-tagged operator.
    pub fn build(op: &LinearOperator) -> Result<Self> {
        if !op.tags().hermitian {
            return Err(SimError::PropertyViolation(
                "spectral evolution requires a hermitian-tagged operator".into(),
            ));
        }
        match op.repr() {
            MatRepr::Diagonal(d) => Ok(EigenPlan::Diagonal {
                evals: d.map(|z| z.re),
            }),
            MatRepr::Dense(m) => {
                if let Some(partition) = op.block_partition() {
                    Self::build_blocked(m, partition)
                } else {
                    let eig = m.clone().symmetric_eigen();
                    Ok(EigenPlan::Dense {
                        evals: eig.eigenvalues,
                        evecs: eig.eigenvectors,
                    })
                }
            }
        }
    }

    fn build_blocked(m: &DMatrix<Complex64>, partition: &[Vec<usize>]) -> Result<Self> {
        let scale = 1.0_f64.max(m.iter().map(|z| z.norm()).fold(0.0, f64::max));
        let n = m.nrows();
        let mut sector_of = vec![usize::MAX; n];
        for (s, sector) in partition.iter().enumerate() {
            for &i in sector {
                sector_of[i] = s;
            }
        }
        let mut leak: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if sector_of[i] != sector_of[j] {
                    leak = leak.max(m[(i, j)].norm());
                }
            }
        }
        if leak > BLOCK_LEAK_TOL * scale {
            return Err(SimError::PropertyViolation(format!(
                "claimed conserved sectors are coupled: leak {leak:.3e}"
            )));
        }
        let mut sectors = Vec::with_capacity(partition.len());
        for indices in partition {
            let k = indices.len();
            let mut sub = DMatrix::zeros(k, k);
            for (r, &i) in indices.iter().enumerate() {
                for (c, &j) in indices.iter().enumerate() {
                    sub[(r, c)] = m[(i, j)];
                }
            }
            let eig = sub.symmetric_eigen();
            sectors.push(BlockEigen {
                indices: indices.clone(),
                evals: eig.eigenvalues,
                evecs: eig.eigenvectors,
            });
        }
        Ok(EigenPlan::Blocked { sectors })
    }

    /// Applies `exp(+i H t)` to raw amplitudes.
    pub fn evolve_vec(&self, v: &DVector<Complex64>, t: f64) -> DVector<Complex64> {
        match self {
            EigenPlan::Diagonal { evals } => {
                let mut out = v.clone();
                for i in 0..out.len() {
                    out[i] *= Complex64::from_polar(1.0, evals[i] * t);
                }
                out
            }
            EigenPlan::Dense { evals, evecs } => {
                let mut coeffs = evecs.adjoint() * v;
                for i in 0..coeffs.len() {
                    coeffs[i] *= Complex64::from_polar(1.0, evals[i] * t);
                }
                evecs * coeffs
            }
            EigenPlan::Blocked { sectors } => {
                let mut out = DVector::zeros(v.len());
                for block in sectors {
                    let sub = DVector::from_iterator(
                        block.indices.len(),
                        block.indices.iter().map(|&i| v[i]),
                    );
                    let mut coeffs = block.evecs.adjoint() * sub;
                    for i in 0..coeffs.len() {
                        coeffs[i] *= Complex64::from_polar(1.0, block.evals[i] * t);
                    }
                    let rotated = &block.evecs * coeffs;
                    for (r, &i) in block.indices.iter().enumerate() {
                        out[i] = rotated[r];
                    }
                }
                out
            }
        }
    }
}
