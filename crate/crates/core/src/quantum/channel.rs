use std::fmt;

use serde::{Deserialize, Serialize};

use super::linalg::{czero, paulis, LocalMatrix};
use crate::{Error, Result, Scalar};

/// Completeness tolerance for `Σ K†K = I` in double precision. Single
/// precision is allowed 64 ulp instead.
pub const COMPLETENESS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelKind {
    BitFlip,
    PhaseFlip,
    Depolarizing,
    AmplitudeDamping,
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A CPTP map in Kraus form.
///
/// Single-qubit depolarizing uses `ρ → (1-p)ρ + p·I/2`, i.e. weight `1-3p/4` on
/// the identity and `p/4` on each of X, Y, Z, so `p = 1` is the fully mixing
/// channel. Two-qubit depolarizing puts `1-p` on `I⊗I` and `p/15` on each of the
/// other 15 Pauli products.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausChannel<T> {
    kind: ChannelKind,
    param: T,
    n_qubits: usize,
    operators: Vec<LocalMatrix<T>>,
    standard: bool,
}

fn check_probability<T: Scalar>(what: ChannelKind, p: T) -> Result<()> {
    if !(p >= T::zero() && p <= T::one()) {
        return Err(Error::ProbabilityRange { what: what.to_string(), value: p.as_f64() });
    }
    Ok(())
}

impl<T: Scalar> KrausChannel<T> {
    /// Builds a channel from explicit operators, checking completeness.
    pub fn from_operators(kind: ChannelKind, param: T, operators: Vec<LocalMatrix<T>>) -> Result<Self> {
        Self::build(kind, param, operators, false)
    }

    fn build(kind: ChannelKind, param: T, operators: Vec<LocalMatrix<T>>, standard: bool) -> Result<Self> {
        let Some(first) = operators.first() else {
            return Err(Error::InvalidArgument("channel needs at least one Kraus operator".into()));
        };
        let dim = first.dim();
        if !dim.is_power_of_two() || dim < 2 || operators.iter().any(|k| k.dim() != dim) {
            return Err(Error::Dimension(format!("Kraus operators for {kind} must share a 2^k dimension")));
        }
        let ch = Self { kind, param, n_qubits: dim.trailing_zeros() as usize, operators, standard };
        let deviation = ch.completeness_deviation().as_f64();
        let tol = COMPLETENESS_TOL.max(64.0 * T::epsilon().as_f64());
        if !(deviation <= tol) {
            return Err(Error::IncompleteChannel { name: kind.to_string(), deviation });
        }
        Ok(ch)
    }

    pub fn bit_flip(p: T) -> Result<Self> {
        check_probability(ChannelKind::BitFlip, p)?;
        let [i, x, _, _] = paulis();
        Self::build(ChannelKind::BitFlip, p, vec![i.scale((T::one() - p).sqrt()), x.scale(p.sqrt())], true)
    }

    pub fn phase_flip(p: T) -> Result<Self> {
        check_probability(ChannelKind::PhaseFlip, p)?;
        let [i, _, _, z] = paulis();
        Self::build(ChannelKind::PhaseFlip, p, vec![i.scale((T::one() - p).sqrt()), z.scale(p.sqrt())], true)
    }

    pub fn depolarizing(p: T) -> Result<Self> {
        check_probability(ChannelKind::Depolarizing, p)?;
        let [i, x, y, z] = paulis();
        let w0 = (T::one() - T::lit(0.75) * p).sqrt();
        let w = (p / T::lit(4.0)).sqrt();
        Self::build(ChannelKind::Depolarizing, p, vec![i.scale(w0), x.scale(w), y.scale(w), z.scale(w)], true)
    }

    pub fn depolarizing_two_qubit(p: T) -> Result<Self> {
        check_probability(ChannelKind::Depolarizing, p)?;
        let ps = paulis::<T>();
        let w0 = (T::one() - p).sqrt();
        let w = (p / T::lit(15.0)).sqrt();
        let mut ops = Vec::with_capacity(16);
        for (a, pa) in ps.iter().enumerate() {
            for (b, pb) in ps.iter().enumerate() {
                let weight = if a == 0 && b == 0 { w0 } else { w };
                ops.push(pa.kron(pb).scale(weight));
            }
        }
        Self::build(ChannelKind::Depolarizing, p, ops, true)
    }

    pub fn amplitude_damping(gamma: T) -> Result<Self> {
        check_probability(ChannelKind::AmplitudeDamping, gamma)?;
        let mut k0 = LocalMatrix::identity(2);
        k0.set(1, 1, num_complex::Complex::new((T::one() - gamma).sqrt(), T::zero()));
        let mut k1 = LocalMatrix::zeros(2);
        k1.set(0, 1, num_complex::Complex::new(gamma.sqrt(), T::zero()));
        Self::build(ChannelKind::AmplitudeDamping, gamma, vec![k0, k1], true)
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    pub fn param(&self) -> T {
        self.param
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// True when built by one of the named constructors, so the operator set
    /// is the canonical one for its kind.
    pub fn is_standard(&self) -> bool {
        self.standard
    }

    pub fn operators(&self) -> &[LocalMatrix<T>] {
        &self.operators
    }

    /// `max |Σ K†K − I|` entrywise.
    pub fn completeness_deviation(&self) -> T {
        let dim = 1 << self.n_qubits;
        let sum = self.operators.iter().fold(LocalMatrix::zeros(dim), |acc, k| acc.add(&k.adjoint().matmul(k)));
        sum.max_abs_diff(&LocalMatrix::identity(dim))
    }

    /// Superoperator `Σ K ⊗ K̄` for single-qubit channels, acting on the
    /// row-major vectorization `[ρ00, ρ01, ρ10, ρ11]`.
    pub(crate) fn superoperator(&self) -> [[num_complex::Complex<T>; 4]; 4] {
        debug_assert_eq!(self.n_qubits, 1);
        superoperator_of(&self.operators)
    }
}

pub(crate) fn superoperator_of<T: Scalar>(ops: &[LocalMatrix<T>]) -> [[num_complex::Complex<T>; 4]; 4] {
    let mut s = [[czero::<T>(); 4]; 4];
    for k in ops {
        for (row, (i, j)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
            for (col, (a, b)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                s[row][col] += k.get(i, a) * k.get(j, b).conj();
            }
        }
    }
    s
}
