//! Linear algebra over truncated composite Fock spaces: states, operators,
//! exact spectral time evolution, partial traces, and mode-local application.

mod density;
mod eigen;
mod ket;
mod operator;
mod space;

pub use density::DensityMatrix;
pub use ket::Ket;
pub use operator::{LinearOperator, OpTags};
pub use space::{CompositeSpace, ModeSpace};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Result, SimError};
use eigen::EigenPlan;

/// Evolution results must keep unit norm within this bound.
const NORM_DRIFT_TOL: f64 = 1e-9;

/// Default per-mode cap on top-Fock-level occupancy after an evolution.
pub const DEFAULT_EVOLVE_TAIL_TOL: f64 = 1e-6;

/// Annihilation operator: entries `<n-1|a|n> = sqrt(n)`.
pub fn annihilation(dim: usize) -> Result<LinearOperator> {
    if dim < 2 {
        return Err(SimError::InvalidDimension(format!(
            "ladder operators need dim >= 2, got {dim}"
        )));
    }
    let space = CompositeSpace::single(dim)?;
    let mut m = DMatrix::zeros(dim, dim);
    for n in 1..dim {
        m[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    LinearOperator::new(space, m)
}

/// Creation operator, the adjoint of [`annihilation`].
pub fn creation(dim: usize) -> Result<LinearOperator> {
    Ok(annihilation(dim)?.adjoint())
}

/// Number operator `a^dag a`, stored diagonally.
pub fn number(dim: usize) -> Result<LinearOperator> {
    if dim < 2 {
        return Err(SimError::InvalidDimension(format!(
            "number operator needs dim >= 2, got {dim}"
        )));
    }
    let space = CompositeSpace::single(dim)?;
    let diag = DVector::from_iterator(dim, (0..dim).map(|n| Complex64::new(n as f64, 0.0)));
    LinearOperator::from_diagonal(space, diag, OpTags::hermitian())
}

/// Embeds a single-mode operator into a composite space at `mode_index`,
/// tensoring identities on every other mode. Diagonal inputs stay diagonal.
pub fn embed(
    op: &LinearOperator,
    mode_index: usize,
    space: &CompositeSpace,
) -> Result<LinearOperator> {
    if op.space().n_modes() != 1 {
        return Err(SimError::SignatureMismatch(
            "embed takes a single-mode operator".into(),
        ));
    }
    let dims = space.dims();
    if mode_index >= dims.len() {
        return Err(SimError::SignatureMismatch(format!(
            "mode index {mode_index} out of range for {}-mode space",
            dims.len()
        )));
    }
    let d = dims[mode_index];
    if op.space().total_dim() != d {
        return Err(SimError::SignatureMismatch(format!(
            "operator dimension {} does not match mode dimension {d}",
            op.space().total_dim()
        )));
    }
    let tags = op.tags();
    if let Some(diag) = op.as_diagonal() {
        let stride = space.strides()[mode_index];
        let total = space.total_dim();
        let big = DVector::from_iterator(total, (0..total).map(|i| diag[(i / stride) % d]));
        return LinearOperator::from_diagonal(space.clone(), big, tags);
    }
    let pre: usize = dims[..mode_index].iter().product();
    let post: usize = dims[mode_index + 1..].iter().product();
    let eye_pre = DMatrix::<Complex64>::identity(pre, pre);
    let eye_post = DMatrix::<Complex64>::identity(post, post);
    let m = eye_pre
        .kronecker(op.as_dense().expect("dense by construction"))
        .kronecker(&eye_post);
    LinearOperator::with_tags(space.clone(), m, tags)
}

fn ensure_plan(h: &LinearOperator) -> Result<&EigenPlan> {
    let cell = h.plan_cell();
    if cell.get().is_none() {
        let built = EigenPlan::build(h)?;
        let _ = cell.set(built);
    }
    Ok(cell.get().expect("plan initialized above"))
}

/// Evolves `psi` by `exp(+iHt)` with the default truncation gate on every mode.
pub fn evolve(h: &LinearOperator, t: f64, psi: &Ket) -> Result<Ket> {
    let tols = vec![DEFAULT_EVOLVE_TAIL_TOL; psi.space().n_modes()];
    evolve_checked(h, t, psi, &tols)
}

/// Evolves `psi` by `exp(+iHt)` with an explicit per-mode cap on the
/// top-Fock-level occupancy of the result (`f64::INFINITY` disables a mode's
/// check; a finite-level mode whose boundary is physical should be exempted).
///
/// The Hermitian eigendecomposition of `h` is built once and cached on the
/// operator, so repeated calls at different times reuse it.
pub fn evolve_checked(h: &LinearOperator, t: f64, psi: &Ket, tail_tols: &[f64]) -> Result<Ket> {
    if h.space() != psi.space() {
        return Err(SimError::SignatureMismatch(
            "Hamiltonian and state live on different spaces".into(),
        ));
    }
    if tail_tols.len() != psi.space().n_modes() {
        return Err(SimError::InvalidArgument(format!(
            "need one tail tolerance per mode ({} modes, got {})",
            psi.space().n_modes(),
            tail_tols.len()
        )));
    }
    let plan = ensure_plan(h)?;
    let out = plan.evolve_vec(psi.amp(), t);
    let norm = out.norm();
    if (norm - 1.0).abs() > NORM_DRIFT_TOL {
        return Err(SimError::Numerical(format!(
            "evolution broke normalization: |norm - 1| = {:.3e}",
            (norm - 1.0).abs()
        )));
    }
    let out = Ket::from_normalized_unchecked(psi.space().clone(), out / Complex64::from(norm));
    for (mode, (&occ, &tol)) in out
        .boundary_occupancy()
        .iter()
        .zip(tail_tols.iter())
        .enumerate()
    {
        if occ > tol {
            return Err(SimError::Truncation(format!(
                "mode {mode} top-level occupancy {occ:.3e} exceeds {tol:.1e}; raise the truncation"
            )));
        }
    }
    Ok(out)
}

/// Enumerates flat-index offsets contributed by a subset of modes.
///
/// Returns the selected mode dimensions and, for each sub-index in row-major
/// order over those dimensions, the offset into the full flat index.
fn subspace_offsets(space: &CompositeSpace, modes: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let full_dims = space.dims();
    let full_strides = space.strides();
    let dims: Vec<usize> = modes.iter().map(|&m| full_dims[m]).collect();
    let total: usize = dims.iter().product::<usize>().max(1);
    let mut offsets = vec![0usize; total];
    for (k, slot) in offsets.iter_mut().enumerate() {
        let mut rem = k;
        let mut off = 0;
        for j in (0..dims.len()).rev() {
            off += (rem % dims[j]) * full_strides[modes[j]];
            rem /= dims[j];
        }
        *slot = off;
    }
    (dims, offsets)
}

fn check_mode_subset(space: &CompositeSpace, modes: &[usize]) -> Result<()> {
    if modes.is_empty() {
        return Err(SimError::InvalidArgument("empty mode list".into()));
    }
    for w in modes.windows(2) {
        if w[1] <= w[0] {
            return Err(SimError::InvalidArgument(
                "mode indices must be strictly increasing".into(),
            ));
        }
    }
    if *modes.last().expect("non-empty") >= space.n_modes() {
        return Err(SimError::SignatureMismatch(format!(
            "mode index {} out of range for {}-mode space",
            modes.last().expect("non-empty"),
            space.n_modes()
        )));
    }
    Ok(())
}

/// Reduced density matrix on `keep` (strictly increasing mode indices).
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let space = rho.space();
    check_mode_subset(space, keep)?;
    let rest: Vec<usize> = (0..space.n_modes()).filter(|m| !keep.contains(m)).collect();
    let (keep_dims, keep_off) = subspace_offsets(space, keep);
    let (_, rest_off) = subspace_offsets(space, &rest);
    let nk = keep_off.len();
    let mat = rho.mat();
    let mut out = DMatrix::zeros(nk, nk);
    for i in 0..nk {
        for j in 0..nk {
            let mut acc = Complex64::new(0.0, 0.0);
            for &r in &rest_off {
                acc += mat[(keep_off[i] + r, keep_off[j] + r)];
            }
            out[(i, j)] = acc;
        }
    }
    let drift = (out.trace() - mat.trace()).norm();
    if drift > 1e-10 {
        return Err(SimError::Numerical(format!(
            "partial trace changed the trace by {drift:.3e}"
        )));
    }
    Ok(DensityMatrix::new_unchecked(
        CompositeSpace::from_dims(&keep_dims)?,
        out,
    ))
}

/// Projects one mode of a density matrix onto a single-mode ket and traces
/// it out: returns the projection probability `Tr[(|v><v| ⊗ 1) rho]` and the
/// normalized conditional state of the remaining modes.
pub fn project_mode(
    rho: &DensityMatrix,
    mode: usize,
    onto: &Ket,
) -> Result<(f64, DensityMatrix)> {
    let space = rho.space();
    check_mode_subset(space, &[mode])?;
    if space.n_modes() < 2 {
        return Err(SimError::InvalidArgument(
            "projecting the only mode leaves no state; use fidelity instead".into(),
        ));
    }
    if onto.space().n_modes() != 1 || onto.space().total_dim() != space.mode_dim(mode)? {
        return Err(SimError::SignatureMismatch(
            "projection ket must be single-mode with the projected mode's dimension".into(),
        ));
    }
    let rest: Vec<usize> = (0..space.n_modes()).filter(|&m| m != mode).collect();
    let (rest_dims, rest_off) = subspace_offsets(space, &rest);
    let (_, mode_off) = subspace_offsets(space, &[mode]);
    let v = onto.amp();
    let nr = rest_off.len();
    let mat = rho.mat();
    let mut out = DMatrix::zeros(nr, nr);
    for i in 0..nr {
        for j in 0..nr {
            let mut acc = Complex64::new(0.0, 0.0);
            for (n, &on) in mode_off.iter().enumerate() {
                for (np, &onp) in mode_off.iter().enumerate() {
                    acc += v[n].conj() * mat[(rest_off[i] + on, rest_off[j] + onp)] * v[np];
                }
            }
            out[(i, j)] = acc;
        }
    }
    let prob = out.trace().re;
    if prob < 1e-14 {
        return Err(SimError::NoOutcome(format!(
            "mode projection has vanishing probability {prob:.3e}"
        )));
    }
    out /= Complex64::from(prob);
    Ok((
        prob.clamp(0.0, 1.0),
        DensityMatrix::new_unchecked(CompositeSpace::from_dims(&rest_dims)?, out),
    ))
}

/// Contracts one mode of a pure state against a single-mode ket:
/// `phi = <v|_mode psi`. Returns the contraction mass `||phi||^2` (equal to 1
/// exactly when `psi = |v> ⊗ phi` along that mode) and the normalized
/// remainder on the other modes.
pub fn contract_mode(psi: &Ket, mode: usize, onto: &Ket) -> Result<(f64, Ket)> {
    let space = psi.space();
    check_mode_subset(space, &[mode])?;
    if space.n_modes() < 2 {
        return Err(SimError::InvalidArgument(
            "contracting the only mode leaves no state; use overlap instead".into(),
        ));
    }
    if onto.space().n_modes() != 1 || onto.space().total_dim() != space.mode_dim(mode)? {
        return Err(SimError::SignatureMismatch(
            "contraction ket must be single-mode with the contracted mode's dimension".into(),
        ));
    }
    let rest: Vec<usize> = (0..space.n_modes()).filter(|&m| m != mode).collect();
    let (rest_dims, rest_off) = subspace_offsets(space, &rest);
    let (_, mode_off) = subspace_offsets(space, &[mode]);
    let v = onto.amp();
    let amp = psi.amp();
    let mut out = DVector::zeros(rest_off.len());
    for (i, &ro) in rest_off.iter().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (n, &on) in mode_off.iter().enumerate() {
            acc += v[n].conj() * amp[ro + on];
        }
        out[i] = acc;
    }
    let mass = out.norm_squared();
    let ket = Ket::new(CompositeSpace::from_dims(&rest_dims)?, out)?;
    Ok((mass, ket))
}

/// States that support expectation values and overlap fidelity.
pub trait QuantumState {
    fn state_space(&self) -> &CompositeSpace;
    /// `<psi|O|psi>` or `Tr(O rho)`.
    fn expectation_of(&self, op: &LinearOperator) -> Result<Complex64>;
    /// `|<target|psi>|^2` or `|<target|rho|target>|`, clamped to [0,1].
    fn fidelity_with(&self, target: &Ket) -> Result<f64>;
}

impl QuantumState for Ket {
    fn state_space(&self) -> &CompositeSpace {
        self.space()
    }

    fn expectation_of(&self, op: &LinearOperator) -> Result<Complex64> {
        if op.space() != self.space() {
            return Err(SimError::SignatureMismatch(
                "operator and state live on different spaces".into(),
            ));
        }
        Ok(self.amp().dotc(&op.apply_vec(self.amp())))
    }

    fn fidelity_with(&self, target: &Ket) -> Result<f64> {
        let ov = target.overlap(self)?;
        Ok(ov.norm_sqr().clamp(0.0, 1.0))
    }
}

impl QuantumState for DensityMatrix {
    fn state_space(&self) -> &CompositeSpace {
        self.space()
    }

    fn expectation_of(&self, op: &LinearOperator) -> Result<Complex64> {
        if op.space() != self.space() {
            return Err(SimError::SignatureMismatch(
                "operator and state live on different spaces".into(),
            ));
        }
        let rho = self.mat();
        let mut acc = Complex64::new(0.0, 0.0);
        if let Some(d) = op.as_diagonal() {
            for i in 0..d.len() {
                acc += d[i] * rho[(i, i)];
            }
        } else {
            let o = op.as_dense().expect("dense by construction");
            for i in 0..o.nrows() {
                for j in 0..o.ncols() {
                    acc += o[(i, j)] * rho[(j, i)];
                }
            }
        }
        Ok(acc)
    }

    fn fidelity_with(&self, target: &Ket) -> Result<f64> {
        if target.space() != self.space() {
            return Err(SimError::SignatureMismatch(
                "target and state live on different spaces".into(),
            ));
        }
        let v = target.amp();
        Ok(v.dotc(&(self.mat() * v)).norm().clamp(0.0, 1.0))
    }
}

/// `<psi|O|psi>` or `Tr(O rho)`.
pub fn expectation<S: QuantumState + ?Sized>(op: &LinearOperator, state: &S) -> Result<Complex64> {
    state.expectation_of(op)
}

/// Overlap fidelity against a pure target: `|<t|psi>|^2` or `|<t|rho|t>|`.
pub fn fidelity_pure<S: QuantumState + ?Sized>(target: &Ket, state: &S) -> Result<f64> {
    state.fidelity_with(target)
}

pub(crate) fn apply_on_modes_vec(
    op: &LinearOperator,
    modes: &[usize],
    space: &CompositeSpace,
    v: &DVector<Complex64>,
) -> Result<DVector<Complex64>> {
    check_mode_subset(space, modes)?;
    let full_dims = space.dims();
    let sel_dims: Vec<usize> = modes.iter().map(|&m| full_dims[m]).collect();
    if op.space().dims() != sel_dims {
        return Err(SimError::SignatureMismatch(format!(
            "operator dims {:?} do not match selected mode dims {:?}",
            op.space().dims(),
            sel_dims
        )));
    }
    if let Some(diag) = op.as_diagonal() {
        // Sub-strides over the selected modes, row-major (last fastest).
        let mut sub_strides = vec![1usize; modes.len()];
        for j in (0..modes.len().saturating_sub(1)).rev() {
            sub_strides[j] = sub_strides[j + 1] * sel_dims[j + 1];
        }
        let full_strides = space.strides();
        let mut out = v.clone();
        for (i, slot) in out.iter_mut().enumerate() {
            let mut sub = 0usize;
            for (j, &m) in modes.iter().enumerate() {
                sub += ((i / full_strides[m]) % full_dims[m]) * sub_strides[j];
            }
            *slot *= diag[sub];
        }
        return Ok(out);
    }
    let rest: Vec<usize> = (0..space.n_modes()).filter(|m| !modes.contains(m)).collect();
    let (_, sel_off) = subspace_offsets(space, modes);
    let (_, rest_off) = subspace_offsets(space, &rest);
    let m = op.as_dense().expect("dense by construction");
    let k = sel_off.len();
    let mut out = DVector::zeros(v.len());
    let mut gathered = DVector::zeros(k);
    for &r in &rest_off {
        for (s, &off) in sel_off.iter().enumerate() {
            gathered[s] = v[r + off];
        }
        let local = m * &gathered;
        for (s, &off) in sel_off.iter().enumerate() {
            out[r + off] = local[s];
        }
    }
    Ok(out)
}

/// Applies an operator that lives on a subset of modes, without materializing
/// its embedding; the result is renormalized (non-unitary images included).
pub fn apply_on_modes(op: &LinearOperator, modes: &[usize], psi: &Ket) -> Result<Ket> {
    let out = apply_on_modes_vec(op, modes, psi.space(), psi.amp())?;
    Ket::new(psi.space().clone(), out)
}

/// Expectation of a single-mode operator on one mode of a composite state.
pub fn expectation_local(op: &LinearOperator, mode: usize, psi: &Ket) -> Result<Complex64> {
    let out = apply_on_modes_vec(op, &[mode], psi.space(), psi.amp())?;
    Ok(psi.amp().dotc(&out))
}

/// Reduced density matrix of a pure state on `keep` modes, computed without
/// forming the full outer product.
pub fn reduced_density_from_ket(psi: &Ket, keep: &[usize]) -> Result<DensityMatrix> {
    let space = psi.space();
    check_mode_subset(space, keep)?;
    let rest: Vec<usize> = (0..space.n_modes()).filter(|m| !keep.contains(m)).collect();
    let (keep_dims, keep_off) = subspace_offsets(space, keep);
    let (_, rest_off) = subspace_offsets(space, &rest);
    let nk = keep_off.len();
    let nr = rest_off.len();
    let amp = psi.amp();
    let mut m = DMatrix::zeros(nk, nr);
    for i in 0..nk {
        for (r, &roff) in rest_off.iter().enumerate() {
            m[(i, r)] = amp[keep_off[i] + roff];
        }
    }
    let rho = &m * m.adjoint();
    Ok(DensityMatrix::new_unchecked(
        CompositeSpace::from_dims(&keep_dims)?,
        rho,
    ))
}
