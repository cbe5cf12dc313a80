use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::linalg::{c, czero, LocalMatrix};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GateKind {
    H,
    X,
    SX,
    RX,
    RY,
    RZ,
    CNOT,
    CZ,
    CRX,
    CRZ,
}

impl GateKind {
    pub const ALL: [GateKind; 10] = [
        GateKind::H,
        GateKind::X,
        GateKind::SX,
        GateKind::RX,
        GateKind::RY,
        GateKind::RZ,
        GateKind::CNOT,
        GateKind::CZ,
        GateKind::CRX,
        GateKind::CRZ,
    ];

    pub fn arity(self) -> usize {
        match self {
            GateKind::CNOT | GateKind::CZ | GateKind::CRX | GateKind::CRZ => 2,
            _ => 1,
        }
    }

    pub fn is_parameterized(self) -> bool {
        matches!(self, GateKind::RX | GateKind::RY | GateKind::RZ | GateKind::CRX | GateKind::CRZ)
    }

    pub fn is_controlled(self) -> bool {
        self.arity() == 2
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for GateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GateKind::ALL
            .into_iter()
            .find(|k| k.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown gate kind {s:?}")))
    }
}

/// A gate application. For two-qubit kinds `qubits = [control, target]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GateOp<T> {
    kind: GateKind,
    qubits: Vec<usize>,
    angle: Option<T>,
}

impl<T: Scalar> GateOp<T> {
    pub fn new(kind: GateKind, qubits: Vec<usize>, angle: Option<T>) -> Result<Self> {
        if qubits.len() != kind.arity() {
            return Err(Error::GateArity { kind: kind.to_string(), expected: kind.arity(), got: qubits.len() });
        }
        if qubits.len() == 2 && qubits[0] == qubits[1] {
            return Err(Error::DuplicateQubits { kind: kind.to_string(), qubits });
        }
        if kind.is_parameterized() != angle.is_some() {
            return Err(Error::AngleMismatch { kind: kind.to_string() });
        }
        Ok(Self { kind, qubits, angle })
    }

    fn fixed(kind: GateKind, qubits: Vec<usize>, angle: Option<T>) -> Self {
        Self::new(kind, qubits, angle).expect("gate constructor arguments are well-formed")
    }

    pub fn h(q: usize) -> Self {
        Self::fixed(GateKind::H, vec![q], None)
    }
    pub fn x(q: usize) -> Self {
        Self::fixed(GateKind::X, vec![q], None)
    }
    pub fn sx(q: usize) -> Self {
        Self::fixed(GateKind::SX, vec![q], None)
    }
    pub fn rx(q: usize, theta: T) -> Self {
        Self::fixed(GateKind::RX, vec![q], Some(theta))
    }
    pub fn ry(q: usize, theta: T) -> Self {
        Self::fixed(GateKind::RY, vec![q], Some(theta))
    }
    pub fn rz(q: usize, theta: T) -> Self {
        Self::fixed(GateKind::RZ, vec![q], Some(theta))
    }
    /// Panics if `control == target`.
    pub fn cnot(control: usize, target: usize) -> Self {
        Self::fixed(GateKind::CNOT, vec![control, target], None)
    }
    pub fn cz(control: usize, target: usize) -> Self {
        Self::fixed(GateKind::CZ, vec![control, target], None)
    }
    pub fn crx(control: usize, target: usize, theta: T) -> Self {
        Self::fixed(GateKind::CRX, vec![control, target], Some(theta))
    }
    pub fn crz(control: usize, target: usize, theta: T) -> Self {
        Self::fixed(GateKind::CRZ, vec![control, target], Some(theta))
    }

    pub fn kind(&self) -> GateKind {
        self.kind
    }

    pub fn qubits(&self) -> &[usize] {
        &self.qubits
    }

    pub fn angle(&self) -> Option<T> {
        self.angle
    }

    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        match self.qubits.iter().find(|&&q| q >= n_qubits) {
            Some(&index) => Err(Error::QubitOutOfRange { index, n_qubits }),
            None => Ok(()),
        }
    }

    /// The 2x2 single-qubit unitary, or for controlled kinds the 2x2 block
    /// applied to the target when the control is set.
    pub fn base_unitary(&self) -> LocalMatrix<T> {
        let half = self.angle.map(|a| a / T::lit(2.0)).unwrap_or_else(T::zero);
        let (co, si) = (half.cos(), half.sin());
        let cplx = |re: T, im: T| num_complex::Complex::new(re, im);
        let z = T::zero();
        match self.kind {
            GateKind::H => {
                let r = std::f64::consts::FRAC_1_SQRT_2;
                LocalMatrix::from_real(2, &[r, r, r, -r])
            }
            GateKind::X | GateKind::CNOT => LocalMatrix::from_real(2, &[0.0, 1.0, 1.0, 0.0]),
            GateKind::CZ => LocalMatrix::from_real(2, &[1.0, 0.0, 0.0, -1.0]),
            GateKind::SX => LocalMatrix::from_rows(2, vec![c(0.5, 0.5), c(0.5, -0.5), c(0.5, -0.5), c(0.5, 0.5)]),
            GateKind::RX | GateKind::CRX => {
                LocalMatrix::from_rows(2, vec![cplx(co, z), cplx(z, -si), cplx(z, -si), cplx(co, z)])
            }
            GateKind::RY => LocalMatrix::from_rows(2, vec![cplx(co, z), cplx(-si, z), cplx(si, z), cplx(co, z)]),
            GateKind::RZ | GateKind::CRZ => {
                LocalMatrix::from_rows(2, vec![cplx(co, -si), czero(), czero(), cplx(co, si)])
            }
        }
    }

    /// Full local unitary over `self.qubits()` (local bit j = `qubits[j]`).
    pub fn unitary(&self) -> LocalMatrix<T> {
        let u = self.base_unitary();
        if !self.kind.is_controlled() {
            return u;
        }
        // control = local bit 0, target = local bit 1
        let mut m = LocalMatrix::identity(4);
        for (a, ra) in [(0usize, 1usize), (1, 3)] {
            for (b, rb) in [(0usize, 1usize), (1, 3)] {
                m.set(ra, rb, u.get(a, b));
            }
        }
        m
    }
}
