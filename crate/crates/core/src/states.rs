//! State constructors: coherent states, Schrodinger cat states, cat qudits,
//! complementary qudits, and the even/odd logical qubit encoding.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Result, SimError};
use crate::hilbert::{CompositeSpace, Ket};

/// Default cap on the Poisson mass discarded by a Fock truncation.
pub const DEFAULT_STATE_TAIL_TOL: f64 = 1e-8;

/// Photon-number parity sector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    /// The opposite sector.
    pub fn flipped(self) -> Self {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }

    /// Residue of the sector's Fock support modulo 2.
    pub fn residue(self) -> usize {
        match self {
            Parity::Even => 0,
            Parity::Odd => 1,
        }
    }
}

impl std::fmt::Display for Parity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Parity::Even => write!(f, "even"),
            Parity::Odd => write!(f, "odd"),
        }
    }
}

/// `i^k` for any integer `k`.
pub(crate) fn i_pow(k: i64) -> Complex64 {
    match k.rem_euclid(4) {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Smallest truncation `dim` whose top level and everything above it hold
/// less than 1e-10 of the Poisson(|alpha|^2) photon distribution.
pub fn default_truncation(alpha: f64) -> usize {
    let lambda = alpha * alpha;
    if lambda == 0.0 {
        return 2;
    }
    // Cumulative Poisson mass below n, built by recurrence.
    let mut p = (-lambda).exp();
    let mut below = 0.0;
    let mut n = 0usize;
    loop {
        // Tail from level n (inclusive) is 1 - below.
        if n >= 2 && 1.0 - below < 1e-10 {
            // dim - 1 = n, so levels n.. hold < 1e-10.
            return n + 1;
        }
        below += p;
        n += 1;
        p *= lambda / n as f64;
        if n > 10_000 {
            return n;
        }
    }
}

/// Coherent state `|alpha>` truncated to `dim` levels, renormalized; errors
/// if the discarded Poisson mass exceeds the default tolerance.
pub fn coherent(alpha: Complex64, dim: usize) -> Result<Ket> {
    coherent_with_tol(alpha, dim, DEFAULT_STATE_TAIL_TOL)
}

/// Coherent state with an explicit cap on the discarded mass.
pub fn coherent_with_tol(alpha: Complex64, dim: usize, tail_tol: f64) -> Result<Ket> {
    let space = CompositeSpace::single(dim)?;
    let mut amp = DVector::zeros(dim);
    let mut c = Complex64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    for n in 0..dim {
        amp[n] = c;
        c *= alpha / Complex64::from(((n + 1) as f64).sqrt());
    }
    let deficit = 1.0 - amp.norm_squared();
    if deficit > tail_tol {
        return Err(SimError::Truncation(format!(
            "coherent state |alpha|={:.3} at dim {dim} discards mass {deficit:.3e} > {tail_tol:.1e}",
            alpha.norm()
        )));
    }
    Ket::new(space, amp)
}

/// Even (+) or odd (-) Schrodinger cat state `|alpha> +/- |-alpha>`,
/// normalized numerically.
pub fn cat(alpha: f64, parity: Parity, dim: usize) -> Result<Ket> {
    cat_with_tol(alpha, parity, dim, DEFAULT_STATE_TAIL_TOL)
}

/// Cat state with an explicit truncation tolerance.
pub fn cat_with_tol(alpha: f64, parity: Parity, dim: usize, tail_tol: f64) -> Result<Ket> {
    if alpha < 0.0 {
        return Err(SimError::InvalidArgument(
            "cat amplitude must be non-negative".into(),
        ));
    }
    let plus = coherent_with_tol(Complex64::from(alpha), dim, tail_tol)?;
    let minus = coherent_with_tol(Complex64::from(-alpha), dim, tail_tol)?;
    let sign = match parity {
        Parity::Even => Complex64::new(1.0, 0.0),
        Parity::Odd => Complex64::new(-1.0, 0.0),
    };
    Ket::superpose(&[(Complex64::new(1.0, 0.0), &plus), (sign, &minus)])
}

/// Parameters of the four-component cat qudit family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CatQuditParams {
    alpha: f64,
    d: usize,
    dim: usize,
    tail_tol: f64,
}

impl CatQuditParams {
    /// Validates `alpha > 0`; the qudit dimension is fixed to 4.
    pub fn new(alpha: f64, dim: usize) -> Result<Self> {
        if alpha <= 0.0 {
            return Err(SimError::InvalidArgument(format!(
                "qudit amplitude must be positive, got {alpha}"
            )));
        }
        if dim < 5 {
            return Err(SimError::InvalidDimension(format!(
                "qudit truncation must retain all four Fock classes, got dim {dim}"
            )));
        }
        Ok(Self {
            alpha,
            d: 4,
            dim,
            tail_tol: DEFAULT_STATE_TAIL_TOL,
        })
    }

    /// Same parameters with a relaxed/tightened truncation tolerance.
    pub fn with_tail_tol(mut self, tail_tol: f64) -> Self {
        self.tail_tol = tail_tol;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tail_tol(&self) -> f64 {
        self.tail_tol
    }

    /// The single-mode space the qudit lives on.
    pub fn space(&self) -> CompositeSpace {
        CompositeSpace::single(self.dim).expect("dim validated at construction")
    }
}

/// Cat qudit `|k_4>`: the normalized projection of `|alpha>` onto Fock
/// numbers congruent to `k` mod 4, equal to the phased four-component
/// superposition `sum_j i^{-kj} |i^j alpha>`.
pub fn cv_qudit(k: usize, params: &CatQuditParams) -> Result<Ket> {
    if k >= 4 {
        return Err(SimError::InvalidArgument(format!(
            "qudit label must be 0..3, got {k}"
        )));
    }
    let terms: Vec<(Complex64, Ket)> = (0..4)
        .map(|j| {
            let coeff = i_pow(-(k as i64) * j);
            let component = complementary_qudit(j as usize, params)?;
            Ok((coeff, component))
        })
        .collect::<Result<_>>()?;
    let refs: Vec<(Complex64, &Ket)> = terms.iter().map(|(c, s)| (*c, s)).collect();
    Ket::superpose(&refs)
}

/// Complementary qudit `|k~_4> = |i^k alpha>`.
pub fn complementary_qudit(k: usize, params: &CatQuditParams) -> Result<Ket> {
    if k >= 4 {
        return Err(SimError::InvalidArgument(format!(
            "qudit label must be 0..3, got {k}"
        )));
    }
    coherent_with_tol(
        i_pow(k as i64) * Complex64::from(params.alpha),
        params.dim,
        params.tail_tol,
    )
}

/// Logical basis state `|bit^L_sector>`.
///
/// Even sector: `|0^L_e>` is the even cat along `alpha`, `|1^L_e>` the even
/// cat along `i alpha`. Odd sector: odd cats, with a `-i` phase on the
/// `|1^L_o>` state so that photon loss maps amplitudes as `(a0, a1) ->
/// (a0, -a1)` in this basis.
pub fn logical_basis(bit: u8, sector: Parity, params: &CatQuditParams) -> Result<Ket> {
    let alpha = Complex64::from(params.alpha);
    let (axis, global): (Complex64, Complex64) = match bit {
        0 => (alpha, Complex64::new(1.0, 0.0)),
        1 => (
            Complex64::new(0.0, 1.0) * alpha,
            match sector {
                Parity::Even => Complex64::new(1.0, 0.0),
                Parity::Odd => Complex64::new(0.0, -1.0),
            },
        ),
        _ => {
            return Err(SimError::InvalidArgument(format!(
                "logical bit must be 0 or 1, got {bit}"
            )))
        }
    };
    let plus = coherent_with_tol(axis, params.dim, params.tail_tol)?;
    let minus = coherent_with_tol(-axis, params.dim, params.tail_tol)?;
    let sign = match sector {
        Parity::Even => Complex64::new(1.0, 0.0),
        Parity::Odd => Complex64::new(-1.0, 0.0),
    };
    Ket::superpose(&[(global, &plus), (global * sign, &minus)])
}

/// Logical `|+^L_sector>`: the cat qudit `|0_4>` (even) or `|1_4>` (odd).
pub fn logical_plus(sector: Parity, params: &CatQuditParams) -> Result<Ket> {
    cv_qudit(sector.residue(), params)
}

/// Logical `|-^L_sector>`: the cat qudit `|2_4>` (even) or `|3_4>` (odd).
pub fn logical_minus(sector: Parity, params: &CatQuditParams) -> Result<Ket> {
    cv_qudit(2 + sector.residue(), params)
}

/// A logical qubit: amplitudes over the (slightly non-orthogonal) logical
/// basis of one parity sector.
#[derive(Clone, Copy, Debug)]
pub struct LogicalQubit {
    a0: Complex64,
    a1: Complex64,
    sector: Parity,
    params: CatQuditParams,
}

impl LogicalQubit {
    /// Normalizes `(a0, a1)`; rejects the zero vector.
    pub fn new(
        a0: Complex64,
        a1: Complex64,
        sector: Parity,
        params: CatQuditParams,
    ) -> Result<Self> {
        let norm = (a0.norm_sqr() + a1.norm_sqr()).sqrt();
        if norm < 1e-12 {
            return Err(SimError::ZeroVector(
                "logical amplitudes are both zero".into(),
            ));
        }
        Ok(Self {
            a0: a0 / Complex64::from(norm),
            a1: a1 / Complex64::from(norm),
            sector,
            params,
        })
    }

    pub fn a0(&self) -> Complex64 {
        self.a0
    }

    pub fn a1(&self) -> Complex64 {
        self.a1
    }

    pub fn sector(&self) -> Parity {
        self.sector
    }

    pub fn params(&self) -> &CatQuditParams {
        &self.params
    }

    /// Fock-space embedding `a0|0^L> + a1|1^L>`, renormalized (the logical
    /// basis is not exactly orthogonal, so the raw sum's norm differs from 1
    /// by O(e^{-2 alpha^2})).
    pub fn to_ket(&self) -> Result<Ket> {
        let b0 = logical_basis(0, self.sector, &self.params)?;
        let b1 = logical_basis(1, self.sector, &self.params)?;
        Ket::superpose(&[(self.a0, &b0), (self.a1, &b1)])
    }
}

/// Normalized image of the state under single-photon loss (annihilation).
pub fn apply_photon_loss(state: &Ket) -> Result<Ket> {
    if state.space().n_modes() != 1 {
        return Err(SimError::SignatureMismatch(
            "photon loss acts on a single-mode state".into(),
        ));
    }
    let a = crate::hilbert::annihilation(state.space().total_dim())?;
    a.apply(state)
}
