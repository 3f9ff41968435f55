//! Linear operators with property tags and cached spectral data.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::density::DensityMatrix;
use super::eigen::EigenPlan;
use super::ket::Ket;
use super::space::CompositeSpace;
use crate::error::{Result, SimError};

/// Tolerance within which tagged operator properties must hold.
pub(crate) const TAG_TOL: f64 = 1e-9;

/// Optional structural flags. Tagged properties are verified on construction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpTags {
    pub hermitian: bool,
    pub unitary: bool,
    pub diagonal: bool,
}

impl OpTags {
    pub fn hermitian() -> Self {
        Self {
            hermitian: true,
            ..Self::default()
        }
    }

    pub fn unitary() -> Self {
        Self {
            unitary: true,
            ..Self::default()
        }
    }

    pub fn diagonal_unitary() -> Self {
        Self {
            unitary: true,
            diagonal: true,
            hermitian: false,
        }
    }
}

/// Internal storage: dense matrix or diagonal-only.
///
/// Diagonal storage keeps multi-mode diagonal Hamiltonians (cross-Kerr at
/// three-cavity dimensions) at O(N) memory instead of O(N^2).
#[derive(Clone, Debug)]
pub(crate) enum MatRepr {
    Dense(DMatrix<Complex64>),
    Diagonal(DVector<Complex64>),
}

/// A complex matrix acting on a composite space, carrying its space
/// signature, optional property tags, an optional conserved-sector partition,
/// and a lazily built, shareable eigendecomposition.
#[derive(Clone, Debug)]
pub struct LinearOperator {
    space: CompositeSpace,
    repr: MatRepr,
    tags: OpTags,
    blocks: Option<Arc<Vec<Vec<usize>>>>,
    plan: Arc<OnceLock<EigenPlan>>,
}

impl LinearOperator {
    /// Wraps a dense matrix with no tags.
    pub fn new(space: CompositeSpace, mat: DMatrix<Complex64>) -> Result<Self> {
        Self::with_tags(space, mat, OpTags::default())
    }

    /// Wraps a dense matrix, verifying every set tag within 1e-9
    /// (relative to the largest matrix element for hermiticity).
    pub fn with_tags(space: CompositeSpace, mat: DMatrix<Complex64>, tags: OpTags) -> Result<Self> {
        let n = space.total_dim();
        if mat.nrows() != n || mat.ncols() != n {
            return Err(SimError::SignatureMismatch(format!(
                "matrix is {}x{}, space dimension is {n}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let op = Self {
            space,
            repr: MatRepr::Dense(mat),
            tags,
            blocks: None,
            plan: Arc::new(OnceLock::new()),
        };
        op.verify_tags()?;
        Ok(op)
    }

    /// Wraps a diagonal, verifying tags; `diagonal` is set implicitly.
    pub fn from_diagonal(
        space: CompositeSpace,
        diag: DVector<Complex64>,
        mut tags: OpTags,
    ) -> Result<Self> {
        let n = space.total_dim();
        if diag.len() != n {
            return Err(SimError::SignatureMismatch(format!(
                "diagonal length {} does not match space dimension {n}",
                diag.len()
            )));
        }
        tags.diagonal = true;
        let op = Self {
            space,
            repr: MatRepr::Diagonal(diag),
            tags,
            blocks: None,
            plan: Arc::new(OnceLock::new()),
        };
        op.verify_tags()?;
        Ok(op)
    }

    /// Identity on a space.
    pub fn identity(space: CompositeSpace) -> Self {
        let n = space.total_dim();
        Self {
            space,
            repr: MatRepr::Diagonal(DVector::from_element(n, Complex64::new(1.0, 0.0))),
            tags: OpTags {
                hermitian: true,
                unitary: true,
                diagonal: true,
            },
            blocks: None,
            plan: Arc::new(OnceLock::new()),
        }
    }

    /// The operator's space signature.
    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    /// The tags.
    pub fn tags(&self) -> OpTags {
        self.tags
    }

    /// Dense copy of the matrix (materializes diagonal storage).
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        match &self.repr {
            MatRepr::Dense(m) => m.clone(),
            MatRepr::Diagonal(d) => DMatrix::from_diagonal(d),
        }
    }

    /// Borrow the dense matrix if stored densely.
    pub fn as_dense(&self) -> Option<&DMatrix<Complex64>> {
        match &self.repr {
            MatRepr::Dense(m) => Some(m),
            MatRepr::Diagonal(_) => None,
        }
    }

    /// Borrow the diagonal if stored diagonally.
    pub fn as_diagonal(&self) -> Option<&DVector<Complex64>> {
        match &self.repr {
            MatRepr::Dense(_) => None,
            MatRepr::Diagonal(d) => Some(d),
        }
    }

    pub(crate) fn plan_cell(&self) -> &OnceLock<EigenPlan> {
        &self.plan
    }

    pub(crate) fn repr(&self) -> &MatRepr {
        &self.repr
    }

    pub(crate) fn block_partition(&self) -> Option<&Arc<Vec<Vec<usize>>>> {
        self.blocks.as_ref()
    }

    /// Attaches a conserved-sector partition of the basis indices.
    ///
    /// The partition must cover every index exactly once; the spectral builder
    /// additionally verifies that no matrix element couples different sectors
    /// before trusting the blocks.
    pub fn with_block_partition(mut self, sectors: Vec<Vec<usize>>) -> Result<Self> {
        let n = self.space.total_dim();
        let mut seen = vec![false; n];
        for sector in &sectors {
            for &i in sector {
                if i >= n || seen[i] {
                    return Err(SimError::InvalidArgument(
                        "block partition must cover each basis index exactly once".into(),
                    ));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(SimError::InvalidArgument(
                "block partition must cover all basis indices".into(),
            ));
        }
        self.blocks = Some(Arc::new(sectors));
        self.plan = Arc::new(OnceLock::new());
        Ok(self)
    }

    /// Adjoint (conjugate transpose). Tags carry over; the cache does not.
    pub fn adjoint(&self) -> Self {
        let repr = match &self.repr {
            MatRepr::Dense(m) => MatRepr::Dense(m.adjoint()),
            MatRepr::Diagonal(d) => MatRepr::Diagonal(d.map(|z| z.conj())),
        };
        Self {
            space: self.space.clone(),
            repr,
            tags: self.tags,
            blocks: self.blocks.clone(),
            plan: Arc::new(OnceLock::new()),
        }
    }

    /// Operator product `self * other`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.space != other.space {
            return Err(SimError::SignatureMismatch(
                "product of operators on different spaces".into(),
            ));
        }
        let tags = OpTags {
            hermitian: false,
            unitary: self.tags.unitary && other.tags.unitary,
            diagonal: self.tags.diagonal && other.tags.diagonal,
        };
        let repr = match (&self.repr, &other.repr) {
            (MatRepr::Diagonal(a), MatRepr::Diagonal(b)) => {
                MatRepr::Diagonal(a.component_mul(b))
            }
            (MatRepr::Diagonal(a), MatRepr::Dense(b)) => {
                let mut m = b.clone();
                for i in 0..m.nrows() {
                    let s = a[i];
                    for j in 0..m.ncols() {
                        m[(i, j)] *= s;
                    }
                }
                MatRepr::Dense(m)
            }
            (MatRepr::Dense(a), MatRepr::Diagonal(b)) => {
                let mut m = a.clone();
                for j in 0..m.ncols() {
                    let s = b[j];
                    for i in 0..m.nrows() {
                        m[(i, j)] *= s;
                    }
                }
                MatRepr::Dense(m)
            }
            (MatRepr::Dense(a), MatRepr::Dense(b)) => MatRepr::Dense(a * b),
        };
        Ok(Self {
            space: self.space.clone(),
            repr,
            tags,
            blocks: None,
            plan: Arc::new(OnceLock::new()),
        })
    }

    /// Operator sum.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.space != other.space {
            return Err(SimError::SignatureMismatch(
                "sum of operators on different spaces".into(),
            ));
        }
        let tags = OpTags {
            hermitian: self.tags.hermitian && other.tags.hermitian,
            unitary: false,
            diagonal: self.tags.diagonal && other.tags.diagonal,
        };
        let repr = match (&self.repr, &other.repr) {
            (MatRepr::Diagonal(a), MatRepr::Diagonal(b)) => MatRepr::Diagonal(a + b),
            _ => MatRepr::Dense(self.to_dense() + other.to_dense()),
        };
        Ok(Self {
            space: self.space.clone(),
            repr,
            tags,
            blocks: None,
            plan: Arc::new(OnceLock::new()),
        })
    }

    /// Scalar multiple.
    pub fn scale(&self, c: Complex64) -> Self {
        let real_scale = c.im.abs() < 1e-15;
        let tags = OpTags {
            hermitian: self.tags.hermitian && real_scale,
            unitary: self.tags.unitary && (c.norm() - 1.0).abs() < 1e-15,
            diagonal: self.tags.diagonal,
        };
        let repr = match &self.repr {
            MatRepr::Dense(m) => MatRepr::Dense(m * c),
            MatRepr::Diagonal(d) => MatRepr::Diagonal(d * c),
        };
        Self {
            space: self.space.clone(),
            repr,
            tags,
            blocks: self.blocks.clone(),
            plan: Arc::new(OnceLock::new()),
        }
    }

    /// Applies the operator to raw amplitudes.
    pub(crate) fn apply_vec(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        match &self.repr {
            MatRepr::Dense(m) => m * v,
            MatRepr::Diagonal(d) => d.component_mul(v),
        }
    }

    /// Applies the operator to a state and renormalizes.
    ///
    /// Norm is preserved automatically for unitary operators; a non-unitary
    /// operator's image is renormalized (zero images error out).
    pub fn apply(&self, psi: &Ket) -> Result<Ket> {
        if self.space != *psi.space() {
            return Err(SimError::SignatureMismatch(
                "operator applied to a state on a different space".into(),
            ));
        }
        Ket::new(self.space.clone(), self.apply_vec(psi.amp()))
    }

    /// Conjugation `U rho U^dag` for a tagged-unitary operator.
    pub fn conjugate_density(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if self.space != *rho.space() {
            return Err(SimError::SignatureMismatch(
                "operator conjugating a state on a different space".into(),
            ));
        }
        if !self.tags.unitary {
            return Err(SimError::PropertyViolation(
                "conjugate_density requires a unitary-tagged operator".into(),
            ));
        }
        let u = self.to_dense();
        let mat = &u * rho.mat() * u.adjoint();
        Ok(DensityMatrix::new_unchecked(self.space.clone(), mat))
    }

    /// Largest absolute element.
    pub fn max_abs(&self) -> f64 {
        match &self.repr {
            MatRepr::Dense(m) => m.iter().map(|z| z.norm()).fold(0.0, f64::max),
            MatRepr::Diagonal(d) => d.iter().map(|z| z.norm()).fold(0.0, f64::max),
        }
    }

    /// Hermiticity defect `max |M - M^dag|`.
    pub fn hermiticity_defect(&self) -> f64 {
        match &self.repr {
            MatRepr::Diagonal(d) => d.iter().map(|z| z.im.abs()).fold(0.0, f64::max),
            MatRepr::Dense(m) => {
                let mut defect: f64 = 0.0;
                for i in 0..m.nrows() {
                    for j in i..m.ncols() {
                        defect = defect.max((m[(i, j)] - m[(j, i)].conj()).norm());
                    }
                }
                defect
            }
        }
    }

    /// Unitarity defect `max |M^dag M - I|`.
    pub fn unitarity_defect(&self) -> f64 {
        match &self.repr {
            MatRepr::Diagonal(d) => d
                .iter()
                .map(|z| (z.norm_sqr() - 1.0).abs())
                .fold(0.0, f64::max),
            MatRepr::Dense(m) => {
                let p = m.adjoint() * m;
                let mut defect: f64 = 0.0;
                for i in 0..p.nrows() {
                    for j in 0..p.ncols() {
                        let target = if i == j { 1.0 } else { 0.0 };
                        defect = defect.max((p[(i, j)] - Complex64::new(target, 0.0)).norm());
                    }
                }
                defect
            }
        }
    }

    /// Off-diagonal magnitude (0 for diagonal storage).
    pub fn offdiagonal_max(&self) -> f64 {
        match &self.repr {
            MatRepr::Diagonal(_) => 0.0,
            MatRepr::Dense(m) => {
                let mut defect: f64 = 0.0;
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        if i != j {
                            defect = defect.max(m[(i, j)].norm());
                        }
                    }
                }
                defect
            }
        }
    }

    fn verify_tags(&self) -> Result<()> {
        let scale = 1.0_f64.max(self.max_abs());
        if self.tags.hermitian {
            let defect = self.hermiticity_defect();
            if defect > TAG_TOL * scale {
                return Err(SimError::PropertyViolation(format!(
                    "hermitian tag violated: defect {defect:.3e}"
                )));
            }
        }
        if self.tags.unitary {
            let defect = self.unitarity_defect();
            if defect > TAG_TOL {
                return Err(SimError::PropertyViolation(format!(
                    "unitary tag violated: defect {defect:.3e}"
                )));
            }
        }
        if self.tags.diagonal {
            let defect = self.offdiagonal_max();
            if defect > TAG_TOL {
                return Err(SimError::PropertyViolation(format!(
                    "diagonal tag violated: off-diagonal {defect:.3e}"
                )));
            }
        }
        Ok(())
    }
}
