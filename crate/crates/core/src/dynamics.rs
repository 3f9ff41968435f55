//! Hamiltonians and time evolution: ideal cross-Kerr cluster generation with
//! closed-form targets, and the two-cavity/transmon exchange model whose
//! conditional dynamics approximates the cross-Kerr gate.
//!
//! Units: frequencies enter in GHz and are converted to 1/us by the chosen
//! [`UnitConvention`]; times are in us throughout.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Result, SimError};
use crate::hilbert::{
    annihilation, evolve_checked, expectation_local, number, project_mode,
    reduced_density_from_ket, CompositeSpace, DensityMatrix, Ket, LinearOperator, OpTags,
    DEFAULT_EVOLVE_TAIL_TOL,
};
use crate::states::{
    cat, coherent_with_tol, cv_qudit, i_pow, CatQuditParams, Parity, DEFAULT_STATE_TAIL_TOL,
};

const TAU: f64 = std::f64::consts::TAU;

/// Cross-Kerr coupling rates in 1/us: `K_ab n_a n_b` plus an optional
/// `K_bc n_b n_c` leg for the three-mode chain.
#[derive(Clone, Copy, Debug)]
pub struct CrossKerrParams {
    k_ab: f64,
    k_bc: Option<f64>,
}

impl CrossKerrParams {
    /// Two-mode coupling at rate `k_ab > 0`.
    pub fn new(k_ab: f64) -> Result<Self> {
        if !(k_ab > 0.0) || !k_ab.is_finite() {
            return Err(SimError::InvalidArgument(format!(
                "cross-Kerr rate must be positive and finite, got {k_ab}"
            )));
        }
        Ok(Self { k_ab, k_bc: None })
    }

    /// Three-mode chain; `k_bc >= 0` (zero leaves the third mode untouched).
    pub fn chain(k_ab: f64, k_bc: f64) -> Result<Self> {
        let mut p = Self::new(k_ab)?;
        if !(k_bc >= 0.0) || !k_bc.is_finite() {
            return Err(SimError::InvalidArgument(format!(
                "second cross-Kerr rate must be non-negative and finite, got {k_bc}"
            )));
        }
        p.k_bc = Some(k_bc);
        Ok(p)
    }

    pub fn k_ab(&self) -> f64 {
        self.k_ab
    }

    pub fn k_bc(&self) -> Option<f64> {
        self.k_bc
    }

    /// Coherent revival period `2 pi / K_ab` of the first leg.
    pub fn revival_time(&self) -> f64 {
        TAU / self.k_ab
    }

    /// True when both legs run at the same rate, so the three-mode chain
    /// reaches its symmetric closed form.
    pub fn symmetric(&self) -> bool {
        match self.k_bc {
            Some(k) => (k - self.k_ab).abs() < 1e-12 * self.k_ab.abs(),
            None => true,
        }
    }
}

/// Diagonal cross-Kerr Hamiltonian on two or three modes.
pub fn cross_kerr_hamiltonian(params: &CrossKerrParams, dims: &[usize]) -> Result<LinearOperator> {
    match (dims.len(), params.k_bc) {
        (2, None) => {}
        (3, Some(_)) => {}
        (n, leg) => {
            return Err(SimError::SignatureMismatch(format!(
                "cross-Kerr legs ({}) do not match mode count ({n})",
                if leg.is_some() { 2 } else { 1 }
            )));
        }
    }
    let space = CompositeSpace::from_dims(dims)?;
    let n = space.total_dim();
    let mut diag = nalgebra::DVector::zeros(n);
    for i in 0..n {
        let na = space.mode_digit(i, 0) as f64;
        let nb = space.mode_digit(i, 1) as f64;
        let mut e = params.k_ab * na * nb;
        if let Some(k_bc) = params.k_bc {
            let nc = space.mode_digit(i, 2) as f64;
            e += k_bc * nb * nc;
        }
        diag[i] = Complex64::from(e);
    }
    LinearOperator::from_diagonal(
        space,
        diag,
        OpTags {
            hermitian: true,
            unitary: false,
            diagonal: true,
        },
    )
}

/// Two-mode cluster generation: `|alpha>|alpha>` evolved under the
/// cross-Kerr coupling for `revival_time / d`, entangling photon-number
/// classes mod `d` of the first mode with rotated coherent components of
/// the second. `d` is 2 or 4.
pub fn ideal_cluster2(alpha: f64, d: usize, params: &CrossKerrParams, dim: usize) -> Result<Ket> {
    ideal_cluster2_with_tol(alpha, d, params, dim, DEFAULT_STATE_TAIL_TOL, DEFAULT_EVOLVE_TAIL_TOL)
}

/// [`ideal_cluster2`] with explicit truncation-tail tolerances for the
/// initial coherent states and for the evolved boundary occupancy.
pub fn ideal_cluster2_with_tol(
    alpha: f64,
    d: usize,
    params: &CrossKerrParams,
    dim: usize,
    state_tail_tol: f64,
    evolve_tail_tol: f64,
) -> Result<Ket> {
    if d != 2 && d != 4 {
        return Err(SimError::InvalidArgument(format!(
            "class count d must be 2 or 4, got {d}"
        )));
    }
    if params.k_bc.is_some() {
        return Err(SimError::InvalidArgument(
            "two-mode cluster takes a single-leg coupling".into(),
        ));
    }
    let a = coherent_with_tol(Complex64::from(alpha), dim, state_tail_tol)?;
    let psi0 = a.tensor(&a);
    let h = cross_kerr_hamiltonian(params, &[dim, dim])?;
    evolve_checked(&h, params.revival_time() / d as f64, &psi0, &[evolve_tail_tol; 2])
}

/// Three-mode chain cluster: `|alpha>^3` evolved for `revival_time / 4`,
/// entangling the middle mode's photon classes mod 4 with both neighbours.
pub fn ideal_cluster3(alpha: f64, params: &CrossKerrParams, dim: usize) -> Result<Ket> {
    ideal_cluster3_with_tol(alpha, params, dim, DEFAULT_STATE_TAIL_TOL, DEFAULT_EVOLVE_TAIL_TOL)
}

/// [`ideal_cluster3`] with explicit truncation-tail tolerances.
pub fn ideal_cluster3_with_tol(
    alpha: f64,
    params: &CrossKerrParams,
    dim: usize,
    state_tail_tol: f64,
    evolve_tail_tol: f64,
) -> Result<Ket> {
    if params.k_bc.is_none() {
        return Err(SimError::InvalidArgument(
            "three-mode cluster needs both coupling legs (use chain)".into(),
        ));
    }
    let a = coherent_with_tol(Complex64::from(alpha), dim, state_tail_tol)?;
    let psi0 = a.tensor(&a).tensor(&a);
    let h = cross_kerr_hamiltonian(params, &[dim, dim, dim])?;
    evolve_checked(&h, params.revival_time() / 4.0, &psi0, &[evolve_tail_tol; 3])
}

/// Closed form of the two-mode cluster: the globally normalized sum of
/// number-class projections of `|alpha>` on the first mode paired with
/// rotated coherent components on the second.
pub fn analytic_cluster2(alpha: f64, d: usize, dim: usize) -> Result<Ket> {
    analytic_cluster2_with_tol(alpha, d, dim, DEFAULT_STATE_TAIL_TOL)
}

/// [`analytic_cluster2`] with an explicit truncation-tail tolerance.
pub fn analytic_cluster2_with_tol(
    alpha: f64,
    d: usize,
    dim: usize,
    state_tail_tol: f64,
) -> Result<Ket> {
    let coh = coherent_with_tol(Complex64::from(alpha), dim, state_tail_tol)?;
    match d {
        2 => {
            let parts: Vec<(Complex64, Ket)> = [(Parity::Even, 1.0), (Parity::Odd, -1.0)]
                .into_iter()
                .map(|(sector, sign)| -> Result<(Complex64, Ket)> {
                    let w = coh.class_mass(0, 2, sector.residue())?.sqrt();
                    let b = coherent_with_tol(Complex64::from(sign * alpha), dim, state_tail_tol)?;
                    Ok((Complex64::from(w), cat(alpha, sector, dim)?.tensor(&b)))
                })
                .collect::<Result<_>>()?;
            let refs: Vec<(Complex64, &Ket)> = parts.iter().map(|(w, s)| (*w, s)).collect();
            Ket::superpose(&refs)
        }
        4 => {
            let qp = CatQuditParams::new(alpha, dim)?.with_tail_tol(state_tail_tol);
            let parts: Vec<(Complex64, Ket)> = (0..4)
                .map(|k| -> Result<(Complex64, Ket)> {
                    let w = coh.class_mass(0, 4, k)?.sqrt();
                    let b = coherent_with_tol(
                        i_pow(k as i64) * Complex64::from(alpha),
                        dim,
                        state_tail_tol,
                    )?;
                    Ok((Complex64::from(w), cv_qudit(k, &qp)?.tensor(&b)))
                })
                .collect::<Result<_>>()?;
            let refs: Vec<(Complex64, &Ket)> = parts.iter().map(|(w, s)| (*w, s)).collect();
            Ket::superpose(&refs)
        }
        other => Err(SimError::InvalidArgument(format!(
            "class count d must be 2 or 4, got {other}"
        ))),
    }
}

/// Closed form of the three-mode chain cluster: number classes mod 4 of the
/// middle mode steer matching coherent rotations on both neighbours.
pub fn analytic_cluster3(alpha: f64, dim: usize) -> Result<Ket> {
    analytic_cluster3_with_tol(alpha, dim, DEFAULT_STATE_TAIL_TOL)
}

/// [`analytic_cluster3`] with an explicit truncation-tail tolerance.
pub fn analytic_cluster3_with_tol(alpha: f64, dim: usize, state_tail_tol: f64) -> Result<Ket> {
    let coh = coherent_with_tol(Complex64::from(alpha), dim, state_tail_tol)?;
    let qp = CatQuditParams::new(alpha, dim)?.with_tail_tol(state_tail_tol);
    let parts: Vec<(Complex64, Ket)> = (0..4)
        .map(|k| -> Result<(Complex64, Ket)> {
            let w = coh.class_mass(0, 4, k)?.sqrt();
            let side = coherent_with_tol(i_pow(k as i64) * Complex64::from(alpha), dim, state_tail_tol)?;
            Ok((
                Complex64::from(w),
                side.tensor(&cv_qudit(k, &qp)?).tensor(&side),
            ))
        })
        .collect::<Result<_>>()?;
    let refs: Vec<(Complex64, &Ket)> = parts.iter().map(|(w, s)| (*w, s)).collect();
    Ket::superpose(&refs)
}

/// How configured frequencies in GHz map to internal rates in 1/us.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnitConvention {
    /// Values are ordinary frequencies: rate = 1e3 * value.
    Plain,
    /// Values are angular-frequency magnitudes: rate = 2 pi * 1e3 * value.
    Angular,
}

impl UnitConvention {
    /// GHz-to-(1/us) conversion factor.
    pub fn energy_scale(&self) -> f64 {
        match self {
            UnitConvention::Plain => 1e3,
            UnitConvention::Angular => TAU * 1e3,
        }
    }
}

/// Form of the transmon anharmonicity term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnharmonicityForm {
    /// `K_m n^2`.
    NumberSquared,
    /// `K_m n (n - 1)` (normal-ordered Kerr).
    NormalOrdered,
}

impl AnharmonicityForm {
    fn value(&self, m: usize) -> f64 {
        let m = m as f64;
        match self {
            AnharmonicityForm::NumberSquared => m * m,
            AnharmonicityForm::NormalOrdered => m * (m - 1.0),
        }
    }
}

/// Two cavities exchange-coupled to one anharmonic transmon mode.
/// Frequencies and rates are in GHz; see [`UnitConvention`].
#[derive(Clone, Copy, Debug)]
pub struct ExchangeModelParams {
    pub omega_a: f64,
    pub omega_b: f64,
    pub omega_m: f64,
    pub lambda_am: f64,
    pub lambda_bm: f64,
    pub k_m: f64,
    pub transmon_levels: usize,
    pub convention: UnitConvention,
    pub anharmonicity: AnharmonicityForm,
}

impl ExchangeModelParams {
    pub fn new(
        omega_a: f64,
        omega_b: f64,
        omega_m: f64,
        lambda_am: f64,
        lambda_bm: f64,
        k_m: f64,
    ) -> Self {
        Self {
            omega_a,
            omega_b,
            omega_m,
            lambda_am,
            lambda_bm,
            k_m,
            transmon_levels: 3,
            convention: UnitConvention::Angular,
            anharmonicity: AnharmonicityForm::NumberSquared,
        }
    }
}

/// Grouping of basis indices by total excitation number `n_a + n_b + n_m`,
/// which the exchange Hamiltonian conserves.
fn excitation_sectors(space: &CompositeSpace) -> Vec<Vec<usize>> {
    let mut sectors: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..space.total_dim() {
        let total = (0..space.n_modes())
            .map(|m| space.mode_digit(i, m))
            .sum::<usize>();
        sectors.entry(total).or_default().push(i);
    }
    sectors.into_values().collect()
}

/// Exchange-model Hamiltonian on modes (cavity A, cavity B, transmon), with
/// the excitation-number block structure attached so the propagator
/// diagonalizes sector by sector.
pub fn exchange_hamiltonian(
    params: &ExchangeModelParams,
    dim_a: usize,
    dim_b: usize,
) -> Result<LinearOperator> {
    if params.transmon_levels < 2 {
        return Err(SimError::InvalidDimension(format!(
            "transmon needs at least 2 levels, got {}",
            params.transmon_levels
        )));
    }
    let levels = params.transmon_levels;
    let space = CompositeSpace::from_dims(&[dim_a, dim_b, levels])?;
    let n = space.total_dim();
    let scale = params.convention.energy_scale();
    let mut h = DMatrix::zeros(n, n);
    for a in 0..dim_a {
        for b in 0..dim_b {
            for m in 0..levels {
                let i = space.flat_index(&[a, b, m])?;
                h[(i, i)] = Complex64::from(
                    scale
                        * (params.omega_a * a as f64
                            + params.omega_b * b as f64
                            + params.omega_m * m as f64
                            + params.k_m * params.anharmonicity.value(m)),
                );
                // a_M^dag a_A moves one quantum from cavity A to the transmon.
                if a > 0 && m + 1 < levels {
                    let j = space.flat_index(&[a - 1, b, m + 1])?;
                    let elt =
                        Complex64::from(scale * params.lambda_am * ((a * (m + 1)) as f64).sqrt());
                    h[(j, i)] = elt;
                    h[(i, j)] = elt;
                }
                if b > 0 && m + 1 < levels {
                    let j = space.flat_index(&[a, b - 1, m + 1])?;
                    let elt =
                        Complex64::from(scale * params.lambda_bm * ((b * (m + 1)) as f64).sqrt());
                    h[(j, i)] = elt;
                    h[(i, j)] = elt;
                }
            }
        }
    }
    let sectors = excitation_sectors(&space);
    LinearOperator::with_tags(space, h, OpTags::hermitian())?.with_block_partition(sectors)
}

/// One sampled joint state of the two cavities along a trajectory.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub time: f64,
    pub rho_ab: DensityMatrix,
}

/// Time series of cavity amplitudes and transmon occupation, with optional
/// reduced-state snapshots.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `<a_A>` per time point.
    pub a_a: Vec<Complex64>,
    /// `<a_B>` per time point.
    pub a_b: Vec<Complex64>,
    /// `<n_M>` per time point.
    pub n_m: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    /// Largest top-level occupancy seen on any probed state, per mode.
    pub max_boundary: Vec<f64>,
}

/// Evolves `|alpha>|alpha>|g>` under the exchange model, recording cavity
/// amplitude and transmon occupation series at `times` and reduced cavity
/// states at `snapshot_times`. The transmon's top level is a physical state,
/// so only the cavity modes are tail-checked.
pub fn exchange_trajectory(
    params: &ExchangeModelParams,
    alpha: f64,
    dim_a: usize,
    dim_b: usize,
    times: &[f64],
    snapshot_times: &[f64],
) -> Result<Trajectory> {
    let h = exchange_hamiltonian(params, dim_a, dim_b)?;
    let a0 = coherent_with_tol(Complex64::from(alpha), dim_a, DEFAULT_STATE_TAIL_TOL)?;
    let b0 = coherent_with_tol(Complex64::from(alpha), dim_b, DEFAULT_STATE_TAIL_TOL)?;
    let g = Ket::basis_state(CompositeSpace::single(params.transmon_levels)?, &[0])?;
    let psi0 = a0.tensor(&b0).tensor(&g);
    let tols = [
        DEFAULT_EVOLVE_TAIL_TOL,
        DEFAULT_EVOLVE_TAIL_TOL,
        f64::INFINITY,
    ];
    let op_a = annihilation(dim_a)?;
    let op_b = annihilation(dim_b)?;
    let op_nm = number(params.transmon_levels)?;
    let mut traj = Trajectory {
        times: times.to_vec(),
        a_a: Vec::with_capacity(times.len()),
        a_b: Vec::with_capacity(times.len()),
        n_m: Vec::with_capacity(times.len()),
        snapshots: Vec::with_capacity(snapshot_times.len()),
        max_boundary: vec![0.0; 3],
    };
    let track = |psi: &Ket, traj: &mut Trajectory| {
        for (m, occ) in psi.boundary_occupancy().into_iter().enumerate() {
            if occ > traj.max_boundary[m] {
                traj.max_boundary[m] = occ;
            }
        }
    };
    for &t in times {
        let psi = evolve_checked(&h, t, &psi0, &tols)?;
        traj.a_a.push(expectation_local(&op_a, 0, &psi)?);
        traj.a_b.push(expectation_local(&op_b, 1, &psi)?);
        traj.n_m.push(expectation_local(&op_nm, 2, &psi)?.re);
        track(&psi, &mut traj);
    }
    for &t in snapshot_times {
        let psi = evolve_checked(&h, t, &psi0, &tols)?;
        track(&psi, &mut traj);
        let rho_ab = reduced_density_from_ket(&psi, &[0, 1])?;
        let drift = (rho_ab.trace() - Complex64::from(1.0)).norm();
        if drift > 1e-9 {
            return Err(SimError::Numerical(format!(
                "snapshot at t = {t} lost trace by {drift:.3e}"
            )));
        }
        traj.snapshots.push(Snapshot { time: t, rho_ab });
    }
    Ok(traj)
}

/// One conditional reduced state of mode B, labeled by the Fock level mode A
/// was found in.
#[derive(Clone, Debug)]
pub struct ConditionalState {
    pub outcome: usize,
    pub prob: f64,
    pub state: DensityMatrix,
}

/// Conditional reduced cavity states extracted from a joint two-cavity state.
#[derive(Clone, Debug)]
pub struct ProjectedCavityStates {
    /// Mode-A state conditioned on mode B found along the coherent axis, with
    /// the outcome probability; `None` when that probability is negligible.
    pub a_given_b_coherent: Option<(f64, DensityMatrix)>,
    /// Mode-B states conditioned on mode A found in Fock `|k>`, `k = 0..3`;
    /// negligible-probability branches are omitted.
    pub b_given_a_fock: Vec<ConditionalState>,
}

/// Smallest projection probability kept as a conditional branch.
const PROJECTION_PROB_FLOOR: f64 = 1e-12;

/// Projects a joint two-cavity state two ways: mode B onto the coherent
/// state `|axis>` (leaving a conditional mode-A state) and mode A onto each
/// of the Fock levels `k = 0..3` (leaving conditional mode-B states).
pub fn projected_cavity_states(
    rho_ab: &DensityMatrix,
    axis: Complex64,
) -> Result<ProjectedCavityStates> {
    let dim_b = rho_ab.space().mode_dim(1)?;
    let coherent_b = coherent_with_tol(axis, dim_b, DEFAULT_STATE_TAIL_TOL)?;
    projected_cavity_states_onto(rho_ab, &coherent_b)
}

/// As [`projected_cavity_states`], but with an arbitrary single-mode
/// projection target for cavity B.
pub fn projected_cavity_states_onto(
    rho_ab: &DensityMatrix,
    onto_b: &Ket,
) -> Result<ProjectedCavityStates> {
    let space = rho_ab.space();
    if space.n_modes() != 2 {
        return Err(SimError::SignatureMismatch(format!(
            "conditional projections expect two cavity modes, got {}",
            space.n_modes()
        )));
    }
    let a_given_b_coherent = match project_mode(rho_ab, 1, onto_b) {
        Ok((prob, state)) if prob >= PROJECTION_PROB_FLOOR => Some((prob, state)),
        Ok(_) | Err(SimError::NoOutcome(_)) => None,
        Err(e) => return Err(e),
    };
    let fock_space = CompositeSpace::single(space.mode_dim(0)?)?;
    let mut b_given_a_fock = Vec::with_capacity(4);
    for k in 0..4 {
        let fock = Ket::basis_state(fock_space.clone(), &[k])?;
        match project_mode(rho_ab, 0, &fock) {
            Ok((prob, state)) if prob >= PROJECTION_PROB_FLOOR => {
                b_given_a_fock.push(ConditionalState {
                    outcome: k,
                    prob,
                    state,
                });
            }
            Ok(_) | Err(SimError::NoOutcome(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(ProjectedCavityStates {
        a_given_b_coherent,
        b_given_a_fock,
    })
}
