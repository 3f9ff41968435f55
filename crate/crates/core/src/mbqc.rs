//! Logical measurement-based computation on the qudit cluster chain: the
//! two-level-chain byproduct oracle, the realized logical gate table, and the
//! full cavity protocol with enumerated or sampled measurement branches.
//!
//! The protocol consumes the three-mode cluster resource: a parity
//! measurement on the middle mode selects the logical sector, phase gates on
//! the outer modes imprint the rotation angles, and a parity measurement plus
//! a four-outcome coherent measurement on the outer modes leave the middle
//! mode carrying a single-qubit gate applied to the logical plus state. The
//! byproduct gate per outcome follows from the projection algebra of the
//! parity-conditional phase gates: the odd-parity outcome on the first mode
//! conjugates the sign of the first rotation angle, and in the odd sector the
//! coherent outcomes cycle one step because the sector's complementary
//! components are rotated by a quarter turn.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::dynamics::{analytic_cluster3_with_tol, ideal_cluster3_with_tol, CrossKerrParams};
use crate::error::{Result, SimError};
use crate::gates::{
    coherent_label, displacement, measure_coherent_four, measure_parity, parity_projector,
    sample_branch, snap_p1, snap_p2,
};
use crate::hilbert::{
    apply_on_modes, contract_mode, fidelity_pure, CompositeSpace, Ket, DEFAULT_EVOLVE_TAIL_TOL,
};
use crate::states::{
    coherent_with_tol, i_pow, CatQuditParams, LogicalQubit, Parity, DEFAULT_STATE_TAIL_TOL,
};

/// Minimum factor weight retained when peeling measured modes off a branch.
const CONTRACTION_MASS_TOL: f64 = 1e-8;

/// Measurement angles steering the logical rotation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProtocolAngles {
    pub theta1: f64,
    pub theta2: f64,
}

impl ProtocolAngles {
    pub fn new(theta1: f64, theta2: f64) -> Self {
        Self { theta1, theta2 }
    }
}

/// Outcome of the four-target coherent measurement: the phase `i^k` of the
/// detected component.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoherentOutcome {
    One,
    I,
    MinusOne,
    MinusI,
}

impl CoherentOutcome {
    pub const ALL: [CoherentOutcome; 4] = [
        CoherentOutcome::One,
        CoherentOutcome::I,
        CoherentOutcome::MinusOne,
        CoherentOutcome::MinusI,
    ];

    /// The exponent `k` in the detected component `|i^k alpha>`.
    pub fn index(self) -> usize {
        match self {
            CoherentOutcome::One => 0,
            CoherentOutcome::I => 1,
            CoherentOutcome::MinusOne => 2,
            CoherentOutcome::MinusI => 3,
        }
    }

    pub fn from_index(k: usize) -> Self {
        Self::ALL[k % 4]
    }

    /// Parses a four-outcome measurement branch label.
    pub fn from_label(label: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|o| o.label() == label)
            .ok_or_else(|| {
                SimError::InvalidArgument(format!("unknown coherent outcome label `{label}`"))
            })
    }

    pub fn label(self) -> &'static str {
        coherent_label(self.index())
    }
}

impl fmt::Display for CoherentOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Sign selecting one of the two phase-basis vectors of a two-level mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisSign {
    Plus,
    Minus,
}

impl BasisSign {
    pub fn sign(self) -> f64 {
        match self {
            BasisSign::Plus => 1.0,
            BasisSign::Minus => -1.0,
        }
    }
}

impl fmt::Display for BasisSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisSign::Plus => "+",
            BasisSign::Minus => "-",
        })
    }
}

/// A named 2x2 unitary in the ordered logical basis `{|0^L>, |1^L>}`.
#[derive(Clone, Debug)]
pub struct LogicalGate {
    name: String,
    mat: Matrix2<Complex64>,
}

impl LogicalGate {
    /// Rejects matrices that are not unitary within 1e-10.
    pub fn new(name: impl Into<String>, mat: Matrix2<Complex64>) -> Result<Self> {
        let gram = mat.adjoint() * mat;
        let defect = (gram - Matrix2::identity())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if defect > 1e-10 {
            return Err(SimError::PropertyViolation(format!(
                "logical gate is not unitary (defect {defect:.3e})"
            )));
        }
        Ok(Self {
            name: name.into(),
            mat,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn matrix(&self) -> &Matrix2<Complex64> {
        &self.mat
    }

    /// Amplitudes of the gate applied to the logical plus state.
    pub fn apply_plus(&self) -> (Complex64, Complex64) {
        let half = Complex64::from(std::f64::consts::FRAC_1_SQRT_2);
        let v = self.mat * Vector2::new(half, half);
        (v[0], v[1])
    }
}

fn phase(arg: f64) -> Complex64 {
    Complex64::from_polar(1.0, arg)
}

fn rz_mat(theta: f64) -> Matrix2<Complex64> {
    Matrix2::new(
        phase(-theta / 2.0),
        Complex64::ZERO,
        Complex64::ZERO,
        phase(theta / 2.0),
    )
}

fn h_mat() -> Matrix2<Complex64> {
    let s = Complex64::from(std::f64::consts::FRAC_1_SQRT_2);
    Matrix2::new(s, s, s, -s)
}

fn x_mat() -> Matrix2<Complex64> {
    Matrix2::new(
        Complex64::ZERO,
        Complex64::ONE,
        Complex64::ONE,
        Complex64::ZERO,
    )
}

fn z_mat() -> Matrix2<Complex64> {
    Matrix2::new(
        Complex64::ONE,
        Complex64::ZERO,
        Complex64::ZERO,
        -Complex64::ONE,
    )
}

/// Three-qubit chain cluster `(|0,+,0> + |1,-,1>)/sqrt(2)`.
pub fn qubit_cluster3() -> Result<Ket> {
    let space = CompositeSpace::from_dims(&[2, 2, 2])?;
    let mut amp = nalgebra::DVector::zeros(8);
    amp[space.flat_index(&[0, 0, 0])?] = Complex64::from(0.5);
    amp[space.flat_index(&[0, 1, 0])?] = Complex64::from(0.5);
    amp[space.flat_index(&[1, 0, 1])?] = Complex64::from(0.5);
    amp[space.flat_index(&[1, 1, 1])?] = Complex64::from(-0.5);
    Ket::new(space, amp)
}

/// Phase-basis vector `(|0> + sign e^{-i theta} |1>)/sqrt(2)` of a two-level mode.
pub fn theta_basis_state(theta: f64, sign: BasisSign) -> Result<Ket> {
    let space = CompositeSpace::from_dims(&[2])?;
    let s = Complex64::from(std::f64::consts::FRAC_1_SQRT_2);
    let amp = nalgebra::DVector::from_vec(vec![
        s,
        Complex64::from(sign.sign()) * phase(-theta) * s,
    ]);
    Ket::new(space, amp)
}

/// Projects one two-level mode onto a phase-basis vector, returning the
/// outcome probability and the normalized remainder on the other modes.
pub fn qubit_measure_theta(
    state: &Ket,
    qubit_index: usize,
    theta: f64,
    sign: BasisSign,
) -> Result<(f64, Ket)> {
    if state.space().mode_dim(qubit_index)? != 2 {
        return Err(SimError::SignatureMismatch(
            "phase-basis measurement expects a two-level mode".into(),
        ));
    }
    contract_mode(state, qubit_index, &theta_basis_state(theta, sign)?)
}

/// Core rotation `Rz(t1) H Rz(t2)` shared by every byproduct row.
fn core_mat(t1: f64, t2: f64) -> Matrix2<Complex64> {
    rz_mat(t1) * h_mat() * rz_mat(t2)
}

fn core_name(sign: f64) -> &'static str {
    if sign >= 0.0 {
        "Rz(t1) H Rz(t2)"
    } else {
        "Rz(-t1) H Rz(t2)"
    }
}

/// Byproduct gate of the two-measurement qubit chain: measuring the first
/// mode in `|s1 theta1>` and the middle mode in `|s2 theta2>` leaves the last
/// mode in this gate applied to `|+>`, exactly and with uniform outcome
/// probability 1/4.
pub fn qubit_byproduct_gate(
    s1: BasisSign,
    s2: BasisSign,
    angles: &ProtocolAngles,
) -> Result<LogicalGate> {
    let (t1, t2) = (angles.theta1, angles.theta2);
    let f12 = phase((t1 + t2) / 2.0);
    let (name, mat) = match (s1, s2) {
        (BasisSign::Plus, BasisSign::Plus) => ("Rz(t1) H Rz(t2)".to_string(), core_mat(t1, t2)),
        (BasisSign::Minus, BasisSign::Plus) => {
            ("Z Rz(t1) H Rz(t2)".to_string(), z_mat() * core_mat(t1, t2))
        }
        (BasisSign::Plus, BasisSign::Minus) => {
            ("X Rz(-t1) H Rz(t2)".to_string(), x_mat() * core_mat(-t1, t2))
        }
        (BasisSign::Minus, BasisSign::Minus) => (
            "Z X Rz(-t1) H Rz(t2)".to_string(),
            z_mat() * x_mat() * core_mat(-t1, t2),
        ),
    };
    LogicalGate::new(name, mat.map(|z| z * f12))
}

/// Left factors applied to the core rotation, outermost first.
#[derive(Clone, Copy)]
enum RowFactor {
    Rz90,
    Z,
    X,
}

impl RowFactor {
    fn matrix(self) -> Matrix2<Complex64> {
        match self {
            RowFactor::Rz90 => rz_mat(FRAC_PI_2),
            RowFactor::Z => z_mat(),
            RowFactor::X => x_mat(),
        }
    }

    fn token(self) -> &'static str {
        match self {
            RowFactor::Rz90 => "Rz(pi/2)",
            RowFactor::Z => "Z",
            RowFactor::X => "X",
        }
    }
}

/// Byproduct gate the measurement sequence realizes for an outcome triple.
///
/// Structure per even-sector outcome (first-mode parity, coherent component):
/// the plain component pairs carry `{1, Z}` and the quarter-turn pairs carry
/// `Rz(pi/2) {Z X, X}` byproducts around the core rotation. An odd
/// first-mode parity additionally conjugates the sign of `theta1` (its
/// projection picks the conjugate cross phase), and an odd middle-mode
/// sector looks the row up at the outcome cycled one step back (the sector's
/// complementary components sit a quarter turn ahead).
pub fn logical_byproduct_gate(
    parity_b: Parity,
    parity_a: Parity,
    outcome: CoherentOutcome,
    angles: &ProtocolAngles,
) -> Result<LogicalGate> {
    let shifted = match parity_b {
        Parity::Even => outcome,
        Parity::Odd => CoherentOutcome::from_index(outcome.index() + 3),
    };
    let flip = match parity_a {
        Parity::Even => 1.0,
        Parity::Odd => -1.0,
    };
    let t1 = flip * angles.theta1;
    let t2 = angles.theta2;
    // (left factors, core-angle sign, offset in the prefactor e^{i(t1+t2+off)/2})
    let (factors, core_sign, off): (&[RowFactor], f64, f64) = match (parity_a, shifted) {
        (Parity::Even, CoherentOutcome::One) => (&[], 1.0, 0.0),
        (Parity::Even, CoherentOutcome::MinusOne) => (&[RowFactor::Z], 1.0, 0.0),
        (Parity::Even, CoherentOutcome::I) => {
            (&[RowFactor::Rz90, RowFactor::Z, RowFactor::X], -1.0, FRAC_PI_2)
        }
        (Parity::Even, CoherentOutcome::MinusI) => {
            (&[RowFactor::Rz90, RowFactor::X], -1.0, FRAC_PI_2)
        }
        (Parity::Odd, CoherentOutcome::One) => (&[RowFactor::X], -1.0, 0.0),
        (Parity::Odd, CoherentOutcome::MinusOne) => (&[RowFactor::X, RowFactor::Z], -1.0, 0.0),
        (Parity::Odd, CoherentOutcome::I) => (&[RowFactor::Rz90], 1.0, -FRAC_PI_2),
        (Parity::Odd, CoherentOutcome::MinusI) => {
            (&[RowFactor::Rz90, RowFactor::Z], 1.0, 3.0 * FRAC_PI_2)
        }
    };
    let mut mat = core_mat(core_sign * t1, t2);
    for factor in factors.iter().rev() {
        mat = factor.matrix() * mat;
    }
    let prefactor = phase((t1 + t2 + off) / 2.0);
    let mut tokens: Vec<&str> = factors.iter().map(|f| f.token()).collect();
    tokens.push(core_name(core_sign * flip));
    LogicalGate::new(tokens.join(" "), mat.map(|z| z * prefactor))
}

/// Which construction supplies the three-mode entangled resource.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClusterSource {
    /// Closed-form number-class superposition.
    Analytic,
    /// Cross-Kerr evolution of a coherent product to the quarter revival.
    Ideal,
}

/// Ordering of the diagonal phase gates on the last mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SnapOrder {
    /// Parity-conditional gate first, upper-class gate second.
    Separate,
    /// Both phase profiles pre-multiplied into a single diagonal gate.
    Combined,
}

/// Configuration of a protocol run.
#[derive(Clone, Copy, Debug)]
pub struct ProtocolOptions {
    pub source: ClusterSource,
    pub dim: usize,
    pub state_tail_tol: f64,
    pub evolve_tail_tol: f64,
    pub snap_order: SnapOrder,
}

impl ProtocolOptions {
    pub fn new(dim: usize) -> Self {
        Self {
            source: ClusterSource::Analytic,
            dim,
            state_tail_tol: DEFAULT_STATE_TAIL_TOL,
            evolve_tail_tol: DEFAULT_EVOLVE_TAIL_TOL,
            snap_order: SnapOrder::Separate,
        }
    }
}

/// One enumerated measurement branch with its realized and predicted data.
#[derive(Clone, Debug)]
pub struct ProtocolRecord {
    pub angles: ProtocolAngles,
    pub parity_b: Parity,
    pub parity_a: Parity,
    pub coherent_c: CoherentOutcome,
    /// Joint probability of the outcome triple.
    pub prob: f64,
    /// Normalized middle-mode state after peeling the measured modes off.
    pub b_state: Ket,
    pub expected_gate: LogicalGate,
    /// Fidelity of `b_state` against the predicted logical embedding.
    pub overlap: f64,
}

/// Aggregate verification of an enumerated branch set.
#[derive(Clone, Copy, Debug)]
pub struct ProtocolReport {
    pub total_prob: f64,
    pub min_overlap: f64,
    /// Probability-weighted mean overlap.
    pub mean_overlap: f64,
}

fn parity_from_label(label: &str) -> Result<Parity> {
    match label {
        "even" => Ok(Parity::Even),
        "odd" => Ok(Parity::Odd),
        other => Err(SimError::InvalidArgument(format!(
            "unknown parity label `{other}`"
        ))),
    }
}

fn build_cluster(alpha: f64, opts: &ProtocolOptions) -> Result<Ket> {
    match opts.source {
        ClusterSource::Analytic => {
            analytic_cluster3_with_tol(alpha, opts.dim, opts.state_tail_tol)
        }
        ClusterSource::Ideal => {
            // The cluster form is rate-invariant; any revival time works.
            let params = CrossKerrParams::chain(1.0, 1.0)?;
            ideal_cluster3_with_tol(
                alpha,
                &params,
                opts.dim,
                opts.state_tail_tol,
                opts.evolve_tail_tol,
            )
        }
    }
}

fn apply_snaps(state: &Ket, angles: &ProtocolAngles, opts: &ProtocolOptions) -> Result<Ket> {
    let dim = opts.dim;
    let first = snap_p1(angles.theta1 / 2.0, dim)?;
    let rotated = apply_on_modes(&first, &[0], state)?;
    match opts.snap_order {
        SnapOrder::Separate => {
            let p1 = snap_p1(-angles.theta1 / 2.0, dim)?;
            let p2 = snap_p2(angles.theta2, dim)?;
            let rotated = apply_on_modes(&p1, &[2], &rotated)?;
            apply_on_modes(&p2, &[2], &rotated)
        }
        SnapOrder::Combined => {
            let combined = snap_p2(angles.theta2, dim)?.mul(&snap_p1(-angles.theta1 / 2.0, dim)?)?;
            apply_on_modes(&combined, &[2], &rotated)
        }
    }
}

fn check_contraction_mass(mass: f64, what: &str) -> Result<()> {
    if mass < 1.0 - CONTRACTION_MASS_TOL {
        return Err(SimError::PropertyViolation(format!(
            "branch did not factorize over {what} (residual weight {:.3e})",
            1.0 - mass
        )));
    }
    Ok(())
}

/// Peels the measured modes off a fully measured four-mode branch state and
/// packages the remaining middle-mode state with its prediction.
fn finish_branch(
    alpha: f64,
    angles: &ProtocolAngles,
    opts: &ProtocolOptions,
    parity_b: Parity,
    parity_a: Parity,
    outcome: CoherentOutcome,
    prob: f64,
    post: &Ket,
) -> Result<ProtocolRecord> {
    let dim = opts.dim;
    // The measure-and-reset readouts leave the ancilla in its ground state.
    let ground = Ket::basis_state(CompositeSpace::from_dims(&[2])?, &[0])?;
    let (anc_mass, rest) = contract_mode(post, 3, &ground)?;
    check_contraction_mass(anc_mass, "the ancilla")?;
    // The coherent readout leaves the last mode in a displaced vacuum.
    let vacuum = Ket::basis_state(CompositeSpace::from_dims(&[dim])?, &[0])?;
    let target = i_pow(outcome.index() as i64) * Complex64::from(alpha);
    let c_factor = displacement(target, dim)?.apply(&vacuum)?;
    let (c_mass, rest) = contract_mode(&rest, 2, &c_factor)?;
    check_contraction_mass(c_mass, "the last mode")?;
    // The first mode holds the parity projection of its sector's component;
    // its own phase gate is constant on each parity sector.
    let axis = i_pow(parity_b.residue() as i64) * Complex64::from(alpha);
    let coherent_a = coherent_with_tol(axis, dim, opts.state_tail_tol)?;
    let a_factor = parity_projector(parity_a, dim)?.apply(&coherent_a)?;
    let (a_mass, b_state) = contract_mode(&rest, 0, &a_factor)?;
    check_contraction_mass(a_mass, "the first mode")?;

    let expected_gate = logical_byproduct_gate(parity_b, parity_a, outcome, angles)?;
    let (b0, b1) = expected_gate.apply_plus();
    let params = CatQuditParams::new(alpha, dim)?.with_tail_tol(opts.state_tail_tol);
    let predicted = LogicalQubit::new(b0, b1, parity_b, params)?.to_ket()?;
    let overlap = fidelity_pure(&predicted, &b_state)?;
    Ok(ProtocolRecord {
        angles: *angles,
        parity_b,
        parity_a,
        coherent_c: outcome,
        prob,
        b_state,
        expected_gate,
        overlap,
    })
}

/// Runs the full protocol and enumerates every measurement branch, ordered
/// middle-mode parity (even, odd) x first-mode parity (even, odd) x coherent
/// outcome (1, i, -1, -i). Branch probabilities are joint probabilities and
/// sum to one over the enumeration.
pub fn run_logical_protocol(
    alpha: f64,
    angles: &ProtocolAngles,
    opts: &ProtocolOptions,
) -> Result<Vec<ProtocolRecord>> {
    let cluster = build_cluster(alpha, opts)?;
    let ground = Ket::basis_state(CompositeSpace::from_dims(&[2])?, &[0])?;
    let state = cluster.tensor(&ground);
    let mut records = Vec::with_capacity(16);
    for b_branch in measure_parity(&state, 1, 3)? {
        let parity_b = parity_from_label(&b_branch.label)?;
        let rotated = apply_snaps(&b_branch.post, angles, opts)?;
        for a_branch in measure_parity(&rotated, 0, 3)? {
            let parity_a = parity_from_label(&a_branch.label)?;
            for c_branch in measure_coherent_four(alpha, &a_branch.post, 2, 3)? {
                let outcome = CoherentOutcome::from_label(&c_branch.label)?;
                let prob = b_branch.prob * a_branch.prob * c_branch.prob;
                records.push(finish_branch(
                    alpha,
                    angles,
                    opts,
                    parity_b,
                    parity_a,
                    outcome,
                    prob,
                    &c_branch.post,
                )?);
            }
        }
    }
    Ok(records)
}

/// Samples a single protocol trajectory with a seeded generator; the record's
/// probability is joint, matching the corresponding enumerated branch.
pub fn sample_logical_protocol(
    alpha: f64,
    angles: &ProtocolAngles,
    opts: &ProtocolOptions,
    seed: u64,
) -> Result<ProtocolRecord> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let cluster = build_cluster(alpha, opts)?;
    let ground = Ket::basis_state(CompositeSpace::from_dims(&[2])?, &[0])?;
    let state = cluster.tensor(&ground);
    let b_branches = measure_parity(&state, 1, 3)?;
    let b_branch = sample_branch(&b_branches, &mut rng)?;
    let parity_b = parity_from_label(&b_branch.label)?;
    let rotated = apply_snaps(&b_branch.post, angles, opts)?;
    let a_branches = measure_parity(&rotated, 0, 3)?;
    let a_branch = sample_branch(&a_branches, &mut rng)?;
    let parity_a = parity_from_label(&a_branch.label)?;
    let c_branches = measure_coherent_four(alpha, &a_branch.post, 2, 3)?;
    let c_branch = sample_branch(&c_branches, &mut rng)?;
    let outcome = CoherentOutcome::from_label(&c_branch.label)?;
    let prob = b_branch.prob * a_branch.prob * c_branch.prob;
    finish_branch(
        alpha,
        angles,
        opts,
        parity_b,
        parity_a,
        outcome,
        prob,
        &c_branch.post,
    )
}

/// Summarizes an enumerated branch set; empty input reports zeros.
pub fn verify_protocol(records: &[ProtocolRecord]) -> ProtocolReport {
    if records.is_empty() {
        return ProtocolReport {
            total_prob: 0.0,
            min_overlap: 0.0,
            mean_overlap: 0.0,
        };
    }
    let total_prob: f64 = records.iter().map(|r| r.prob).sum();
    let min_overlap = records.iter().map(|r| r.overlap).fold(f64::INFINITY, f64::min);
    let mean_overlap = if total_prob > 0.0 {
        records.iter().map(|r| r.prob * r.overlap).sum::<f64>() / total_prob
    } else {
        0.0
    };
    ProtocolReport {
        total_prob,
        min_overlap,
        mean_overlap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const GENERIC_ANGLES: ProtocolAngles = ProtocolAngles {
        theta1: 0.8,
        theta2: 1.25,
    };

    fn gate_distance_up_to_phase(a: &Matrix2<Complex64>, b: &Matrix2<Complex64>) -> f64 {
        // Align on the largest entry of `a`, then compare entrywise.
        let (mut idx, mut best) = (0, 0.0);
        for (i, z) in a.iter().enumerate() {
            if z.norm() > best {
                best = z.norm();
                idx = i;
            }
        }
        let za = a.iter().nth(idx).copied().unwrap();
        let zb = b.iter().nth(idx).copied().unwrap();
        if zb.norm() < 1e-14 {
            return 1.0;
        }
        let align = za / zb;
        (a - b.map(|z| z * align))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn qubit_cluster_amplitudes_and_symmetry() {
        let cluster = qubit_cluster3().unwrap();
        let space = cluster.space().clone();
        let half = Complex64::from(0.5);
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    let amp = cluster.amp()[space.flat_index(&[a, b, c]).unwrap()];
                    let want = match (a, b, c) {
                        (0, 0, 0) | (0, 1, 0) | (1, 0, 1) => half,
                        (1, 1, 1) => -half,
                        _ => Complex64::ZERO,
                    };
                    assert!((amp - want).norm() < 1e-15, "amp({a}{b}{c}) = {amp}");
                    let swapped = cluster.amp()[space.flat_index(&[c, b, a]).unwrap()];
                    assert!((amp - swapped).norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn qubit_chain_reproduces_byproduct_rows_exactly() {
        let signs = [BasisSign::Plus, BasisSign::Minus];
        for &t1 in &[0.35, 0.8, 1.9] {
            for &t2 in &[0.0, 0.8, 1.25] {
                let angles = ProtocolAngles::new(t1, t2);
                for s1 in signs {
                    for s2 in signs {
                        let cluster = qubit_cluster3().unwrap();
                        let (p1, rest) = qubit_measure_theta(&cluster, 0, t1, s1).unwrap();
                        // After the first contraction the middle mode is index 0.
                        let (p2, out) = qubit_measure_theta(&rest, 0, t2, s2).unwrap();
                        assert_abs_diff_eq!(p1 * p2, 0.25, epsilon = 1e-12);
                        let gate = qubit_byproduct_gate(s1, s2, &angles).unwrap();
                        let (b0, b1) = gate.apply_plus();
                        // Exact equality including the global phase.
                        assert!((out.amp()[0] - b0).norm() < 1e-12, "({s1},{s2}) bit 0");
                        assert!((out.amp()[1] - b1).norm() < 1e-12, "({s1},{s2}) bit 1");
                    }
                }
            }
        }
    }

    #[test]
    fn gate_rows_are_unitary_and_named() {
        let angles = GENERIC_ANGLES;
        for parity_b in [Parity::Even, Parity::Odd] {
            for parity_a in [Parity::Even, Parity::Odd] {
                for outcome in CoherentOutcome::ALL {
                    let gate =
                        logical_byproduct_gate(parity_b, parity_a, outcome, &angles).unwrap();
                    assert!(gate.name().contains("H"), "name `{}`", gate.name());
                    let gram = gate.matrix().adjoint() * gate.matrix();
                    let defect = (gram - Matrix2::identity())
                        .iter()
                        .map(|z| z.norm())
                        .fold(0.0, f64::max);
                    assert!(defect < 1e-12);
                }
            }
        }
        // Specialization: trivial angles and the plain branch give the
        // basis-swap rotation alone.
        let trivial = ProtocolAngles::new(0.0, 0.0);
        let gate = logical_byproduct_gate(
            Parity::Even,
            Parity::Even,
            CoherentOutcome::One,
            &trivial,
        )
        .unwrap();
        assert!(gate_distance_up_to_phase(gate.matrix(), &h_mat()) < 1e-14);
    }

    #[test]
    fn logical_rows_relate_to_qubit_rows() {
        let angles = GENERIC_ANGLES;
        let flipped = ProtocolAngles::new(-angles.theta1, angles.theta2);
        // Plain-component outcomes in the even sector carry the same gates as
        // the qubit chain rows with a plus second sign.
        for (outcome, s1) in [
            (CoherentOutcome::One, BasisSign::Plus),
            (CoherentOutcome::MinusOne, BasisSign::Minus),
        ] {
            let logical =
                logical_byproduct_gate(Parity::Even, Parity::Even, outcome, &angles).unwrap();
            let qubit = qubit_byproduct_gate(s1, BasisSign::Plus, &angles).unwrap();
            assert!(gate_distance_up_to_phase(logical.matrix(), qubit.matrix()) < 1e-12);
        }
        // The odd first-mode parity conjugates the rotation sign relative to
        // the qubit chain's minus-sign rows.
        let logical =
            logical_byproduct_gate(Parity::Even, Parity::Odd, CoherentOutcome::One, &angles)
                .unwrap();
        let qubit = qubit_byproduct_gate(BasisSign::Plus, BasisSign::Minus, &flipped).unwrap();
        assert!(gate_distance_up_to_phase(logical.matrix(), qubit.matrix()) < 1e-12);
        assert_eq!(logical.name(), "X Rz(t1) H Rz(t2)");
        // The odd sector cycles the coherent outcome one step back.
        for parity_a in [Parity::Even, Parity::Odd] {
            for outcome in CoherentOutcome::ALL {
                let odd =
                    logical_byproduct_gate(Parity::Odd, parity_a, outcome, &angles).unwrap();
                let even = logical_byproduct_gate(
                    Parity::Even,
                    parity_a,
                    CoherentOutcome::from_index(outcome.index() + 3),
                    &angles,
                )
                .unwrap();
                assert_eq!(odd.name(), even.name());
                let diff = (odd.matrix() - even.matrix())
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max);
                assert!(diff < 1e-14);
            }
        }
    }

    #[test]
    fn enumerated_protocol_matches_predictions() {
        let opts = ProtocolOptions::new(24);
        let records = run_logical_protocol(2.0, &GENERIC_ANGLES, &opts).unwrap();
        assert_eq!(records.len(), 16);
        let report = verify_protocol(&records);
        assert_abs_diff_eq!(report.total_prob, 1.0, epsilon = 1e-8);
        assert!(
            report.min_overlap >= 0.995,
            "min overlap {}",
            report.min_overlap
        );
        // The middle-mode parity split equals the even class weight of the
        // coherent component.
        let even_prob: f64 = records
            .iter()
            .filter(|r| r.parity_b == Parity::Even)
            .map(|r| r.prob)
            .sum();
        assert_abs_diff_eq!(even_prob, 0.50016773131395131, epsilon = 1e-9);
        // Branches come out in the documented fixed order.
        let first = &records[0];
        assert_eq!(first.parity_b, Parity::Even);
        assert_eq!(first.parity_a, Parity::Even);
        assert_eq!(first.coherent_c, CoherentOutcome::One);
        assert_eq!(records[15].coherent_c, CoherentOutcome::MinusI);
    }

    #[test]
    fn evolved_and_analytic_sources_agree() {
        let analytic = ProtocolOptions::new(24);
        let ideal = ProtocolOptions {
            source: ClusterSource::Ideal,
            ..analytic
        };
        let a = run_logical_protocol(2.0, &GENERIC_ANGLES, &analytic).unwrap();
        let b = run_logical_protocol(2.0, &GENERIC_ANGLES, &ideal).unwrap();
        assert_eq!(a.len(), b.len());
        for (ra, rb) in a.iter().zip(&b) {
            assert_abs_diff_eq!(ra.prob, rb.prob, epsilon = 1e-9);
            assert_abs_diff_eq!(ra.overlap, rb.overlap, epsilon = 1e-9);
            let cross = fidelity_pure(&ra.b_state, &rb.b_state).unwrap();
            assert!(cross > 1.0 - 1e-9);
        }
    }

    #[test]
    fn combined_phase_gate_order_is_equivalent() {
        let separate = ProtocolOptions::new(24);
        let combined = ProtocolOptions {
            snap_order: SnapOrder::Combined,
            ..separate
        };
        let a = run_logical_protocol(2.0, &GENERIC_ANGLES, &separate).unwrap();
        let b = run_logical_protocol(2.0, &GENERIC_ANGLES, &combined).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            assert_abs_diff_eq!(ra.prob, rb.prob, epsilon = 1e-12);
            let cross = fidelity_pure(&ra.b_state, &rb.b_state).unwrap();
            assert!(cross > 1.0 - 1e-12);
        }
    }

    #[test]
    fn sampler_is_deterministic_and_consistent() {
        let opts = ProtocolOptions::new(24);
        let records = run_logical_protocol(2.0, &GENERIC_ANGLES, &opts).unwrap();
        for seed in [1u64, 7, 42] {
            let sampled = sample_logical_protocol(2.0, &GENERIC_ANGLES, &opts, seed).unwrap();
            let again = sample_logical_protocol(2.0, &GENERIC_ANGLES, &opts, seed).unwrap();
            assert_eq!(sampled.parity_b, again.parity_b);
            assert_eq!(sampled.parity_a, again.parity_a);
            assert_eq!(sampled.coherent_c, again.coherent_c);
            let matching = records
                .iter()
                .find(|r| {
                    r.parity_b == sampled.parity_b
                        && r.parity_a == sampled.parity_a
                        && r.coherent_c == sampled.coherent_c
                })
                .expect("sampled branch must appear in the enumeration");
            assert_abs_diff_eq!(matching.prob, sampled.prob, epsilon = 1e-12);
            let cross = fidelity_pure(&matching.b_state, &sampled.b_state).unwrap();
            assert!(cross > 1.0 - 1e-12);
        }
    }

    #[test]
    fn outcome_labels_round_trip() {
        for outcome in CoherentOutcome::ALL {
            assert_eq!(
                CoherentOutcome::from_label(outcome.label()).unwrap(),
                outcome
            );
            assert_eq!(CoherentOutcome::from_index(outcome.index()), outcome);
        }
        assert!(CoherentOutcome::from_label("2").is_err());
        assert_eq!(format!("{}", CoherentOutcome::MinusI), "-i");
        assert_eq!(format!("{}", BasisSign::Minus), "-");
    }
}
