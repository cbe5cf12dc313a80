use num_complex::Complex;

use super::channel::{ChannelKind, KrausChannel};
use super::gate::GateOp;
use super::linalg::{czero, LocalMatrix};
use crate::{Error, Result, Scalar};

/// Mixed state of `n` qubits as a dense `2^n × 2^n` row-major matrix.
/// Qubit 0 is the least significant bit of the basis index.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T> {
    n_qubits: usize,
    dim: usize,
    data: Vec<Complex<T>>,
}

/// Largest register the dense simulator accepts.
pub const MAX_QUBITS: usize = 10;

impl<T: Scalar> DensityMatrix<T> {
    /// `|0…0⟩⟨0…0|`.
    pub fn zero_state(n_qubits: usize) -> Result<Self> {
        let mut rho = Self::zeros(n_qubits)?;
        rho.data[0] = Complex::new(T::one(), T::zero());
        Ok(rho)
    }

    /// `I / 2^n`.
    pub fn maximally_mixed(n_qubits: usize) -> Result<Self> {
        let mut rho = Self::zeros(n_qubits)?;
        let w = T::one() / T::lit(rho.dim as f64);
        for i in 0..rho.dim {
            rho.data[i * rho.dim + i] = Complex::new(w, T::zero());
        }
        Ok(rho)
    }

    /// Computational basis state `|index⟩⟨index|`.
    pub fn basis_state(n_qubits: usize, index: usize) -> Result<Self> {
        let mut rho = Self::zeros(n_qubits)?;
        if index >= rho.dim {
            return Err(Error::InvalidArgument(format!("basis index {index} >= {}", rho.dim)));
        }
        rho.data[index * rho.dim + index] = Complex::new(T::one(), T::zero());
        Ok(rho)
    }

    /// `|ψ⟩⟨ψ|` for a normalized state vector.
    pub fn from_pure(amplitudes: &[Complex<T>]) -> Result<Self> {
        let dim = amplitudes.len();
        if !dim.is_power_of_two() || dim < 2 {
            return Err(Error::Dimension(format!("state vector length {dim} is not 2^n")));
        }
        let mut rho = Self::zeros(dim.trailing_zeros() as usize)?;
        for r in 0..dim {
            for c in 0..dim {
                rho.data[r * dim + c] = amplitudes[r] * amplitudes[c].conj();
            }
        }
        Ok(rho)
    }

    /// `ρ_{n-1} ⊗ … ⊗ ρ_0` from per-qubit 2x2 states (`locals[q]` is qubit q).
    pub fn from_product(locals: &[LocalMatrix<T>]) -> Result<Self> {
        if locals.iter().any(|m| m.dim() != 2) {
            return Err(Error::Dimension("product factors must be 2x2".into()));
        }
        let mut rho = Self::zeros(locals.len())?;
        // Kronecker products from the most significant qubit down.
        let mut acc = vec![Complex::new(T::one(), T::zero())];
        let mut side = 1;
        for m in locals.iter().rev() {
            let next_side = side * 2;
            let mut next = vec![czero::<T>(); next_side * next_side];
            for i in 0..side {
                for j in 0..side {
                    let a = acc[i * side + j];
                    for x in 0..2 {
                        for y in 0..2 {
                            next[(2 * i + x) * next_side + 2 * j + y] = a * m.get(x, y);
                        }
                    }
                }
            }
            acc = next;
            side = next_side;
        }
        rho.data = acc;
        Ok(rho)
    }

    /// Raw constructor; checks shape only.
    pub fn from_data(n_qubits: usize, data: Vec<Complex<T>>) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if data.len() != dim * dim {
            return Err(Error::Dimension(format!("expected {} entries, got {}", dim * dim, data.len())));
        }
        Ok(Self { n_qubits, dim, data })
    }

    fn zeros(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::InvalidArgument(format!("qubit count {n_qubits} not in 1..={MAX_QUBITS}")));
        }
        let dim = 1usize << n_qubits;
        Ok(Self { n_qubits, dim, data: vec![czero(); dim * dim] })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex<T> {
        self.data[r * self.dim + c]
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn trace(&self) -> Complex<T> {
        (0..self.dim).fold(czero(), |acc, i| acc + self.data[i * self.dim + i])
    }

    /// `max |ρ − ρ†|` entrywise.
    pub fn hermiticity_deviation(&self) -> T {
        let d = self.dim;
        let mut worst = T::zero();
        for r in 0..d {
            for c in r..d {
                worst = worst.max((self.data[r * d + c] - self.data[c * d + r].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue (computed in f64). O(dim³); meant for tests and debugging.
    pub fn min_eigenvalue(&self) -> f64 {
        let d = self.dim;
        let m = nalgebra::DMatrix::from_fn(d, d, |r, c| {
            let z = self.data[r * d + c];
            // symmetrize so the solver sees an exactly Hermitian input
            let w = self.data[c * d + r].conj();
            Complex::new((z.re.as_f64() + w.re.as_f64()) / 2.0, (z.im.as_f64() + w.im.as_f64()) / 2.0)
        });
        nalgebra::SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Checks unit trace and Hermiticity within `tol`, and the eigenvalue floor `-psd_tol`.
    pub fn check_invariants(&self, tol: f64, psd_tol: f64) -> Result<()> {
        let tr = self.trace();
        if (tr.re.as_f64() - 1.0).abs() > tol || tr.im.as_f64().abs() > tol {
            return Err(Error::InvalidArgument(format!("trace {tr} deviates from 1")));
        }
        let herm = self.hermiticity_deviation().as_f64();
        if herm > tol {
            return Err(Error::InvalidArgument(format!("hermiticity deviation {herm:e}")));
        }
        let min_eig = self.min_eigenvalue();
        if min_eig < -psd_tol {
            return Err(Error::InvalidArgument(format!("negative eigenvalue {min_eig:e}")));
        }
        Ok(())
    }

    fn check_qubits(&self, qubits: &[usize]) -> Result<()> {
        for (i, &q) in qubits.iter().enumerate() {
            if q >= self.n_qubits {
                return Err(Error::QubitOutOfRange { index: q, n_qubits: self.n_qubits });
            }
            if qubits[..i].contains(&q) {
                return Err(Error::DuplicateQubits { kind: "operation".into(), qubits: qubits.to_vec() });
            }
        }
        Ok(())
    }

    /// `ρ' = UρU†`.
    pub fn apply_gate(&self, gate: &GateOp<T>) -> Result<Self> {
        let mut out = self.clone();
        out.apply_gate_mut(gate)?;
        Ok(out)
    }

    pub fn apply_gate_mut(&mut self, gate: &GateOp<T>) -> Result<()> {
        gate.validate(self.n_qubits)?;
        let q = gate.qubits();
        if gate.kind().is_controlled() {
            self.apply_controlled(&gate.base_unitary(), q[0], q[1]);
        } else {
            let u = gate.base_unitary();
            let s = super::channel::superoperator_of(std::slice::from_ref(&u));
            self.apply_superop_1q(&s, q[0]);
        }
        Ok(())
    }

    /// Applies an arbitrary local unitary given as a full matrix on `qubits`.
    pub fn apply_unitary(&mut self, u: &LocalMatrix<T>, qubits: &[usize]) -> Result<()> {
        self.check_qubits(qubits)?;
        if u.dim() != 1 << qubits.len() {
            return Err(Error::Dimension(format!("{}x{} matrix on {} qubit(s)", u.dim(), u.dim(), qubits.len())));
        }
        self.left_apply(u, qubits);
        self.right_apply_adjoint(u, qubits);
        Ok(())
    }

    /// `ρ' = Σ K_i ρ K_i†`.
    pub fn apply_channel(&self, channel: &KrausChannel<T>, qubits: &[usize]) -> Result<Self> {
        let mut out = self.clone();
        out.apply_channel_mut(channel, qubits)?;
        Ok(out)
    }

    pub fn apply_channel_mut(&mut self, channel: &KrausChannel<T>, qubits: &[usize]) -> Result<()> {
        self.check_qubits(qubits)?;
        if qubits.len() != channel.n_qubits() {
            return Err(Error::Dimension(format!(
                "{}-qubit channel applied to {} qubit(s)",
                channel.n_qubits(),
                qubits.len()
            )));
        }
        match (channel.n_qubits(), channel.kind()) {
            (1, _) => self.apply_superop_1q(&channel.superoperator(), qubits[0]),
            (2, ChannelKind::Depolarizing) if channel.is_standard() => {
                self.depolarize_pair(channel.param(), qubits[0], qubits[1])
            }
            _ => self.apply_kraus_sum(channel.operators(), qubits),
        }
        Ok(())
    }

    /// Reference route: explicit `Σ K ρ K†` with full local matrices. Slower
    /// than `apply_channel`, used to cross-check the specialized kernels.
    pub fn apply_kraus_reference(&self, channel: &KrausChannel<T>, qubits: &[usize]) -> Result<Self> {
        self.check_qubits(qubits)?;
        if qubits.len() != channel.n_qubits() {
            return Err(Error::Dimension("channel arity mismatch".into()));
        }
        let mut out = self.clone();
        out.apply_kraus_sum(channel.operators(), qubits);
        Ok(out)
    }

    fn apply_kraus_sum(&mut self, ops: &[LocalMatrix<T>], qubits: &[usize]) {
        let mut acc = vec![czero(); self.data.len()];
        for k in ops {
            let mut term = self.clone();
            term.left_apply(k, qubits);
            term.right_apply_adjoint(k, qubits);
            for (a, t) in acc.iter_mut().zip(&term.data) {
                *a += *t;
            }
        }
        self.data = acc;
    }

    /// 2x2 reduced state of one qubit.
    pub fn reduced_qubit(&self, qubit: usize) -> Result<LocalMatrix<T>> {
        self.check_qubits(&[qubit])?;
        let m = 1usize << qubit;
        let mut out = LocalMatrix::zeros(2);
        for base in (0..self.dim).filter(|i| i & m == 0) {
            for a in 0..2 {
                for b in 0..2 {
                    let v = out.get(a, b) + self.get(base | (a * m), base | (b * m));
                    out.set(a, b, v);
                }
            }
        }
        Ok(out)
    }

    /// `tr(Z_q ρ)`, exact.
    pub fn expectation_z(&self, qubit: usize) -> Result<T> {
        self.check_qubits(&[qubit])?;
        let m = 1usize << qubit;
        Ok((0..self.dim).fold(T::zero(), |acc, i| {
            let p = self.data[i * self.dim + i].re;
            if i & m == 0 {
                acc + p
            } else {
                acc - p
            }
        }))
    }

    /// Probability of reading 0 on `qubit` (before readout error).
    pub fn prob_zero(&self, qubit: usize) -> Result<T> {
        let z = self.expectation_z(qubit)?;
        Ok(((T::one() + z) / T::lit(2.0)).max(T::zero()).min(T::one()))
    }

    // ---- kernels ----

    fn local_offsets(qubits: &[usize]) -> (usize, Vec<usize>) {
        let mask = qubits.iter().fold(0usize, |m, &q| m | (1 << q));
        let offsets = (0..1usize << qubits.len())
            .map(|j| qubits.iter().enumerate().fold(0usize, |o, (b, &q)| o | (((j >> b) & 1) << q)))
            .collect();
        (mask, offsets)
    }

    /// ρ ← Mρ
    fn left_apply(&mut self, m: &LocalMatrix<T>, qubits: &[usize]) {
        let d = self.dim;
        let (mask, offsets) = Self::local_offsets(qubits);
        let ld = offsets.len();
        let mut v = vec![czero::<T>(); ld];
        for base in (0..d).filter(|r| r & mask == 0) {
            for col in 0..d {
                for (j, off) in offsets.iter().enumerate() {
                    v[j] = self.data[(base | off) * d + col];
                }
                for (a, off) in offsets.iter().enumerate() {
                    let mut s = czero();
                    for (b, vb) in v.iter().enumerate() {
                        s += m.get(a, b) * vb;
                    }
                    self.data[(base | off) * d + col] = s;
                }
            }
        }
    }

    /// ρ ← ρM†
    fn right_apply_adjoint(&mut self, m: &LocalMatrix<T>, qubits: &[usize]) {
        let d = self.dim;
        let (mask, offsets) = Self::local_offsets(qubits);
        let ld = offsets.len();
        let mut v = vec![czero::<T>(); ld];
        for row in 0..d {
            let r = row * d;
            for base in (0..d).filter(|c| c & mask == 0) {
                for (j, off) in offsets.iter().enumerate() {
                    v[j] = self.data[r + (base | off)];
                }
                for (a, off) in offsets.iter().enumerate() {
                    let mut s = czero();
                    for (b, vb) in v.iter().enumerate() {
                        s += vb * m.get(a, b).conj();
                    }
                    self.data[r + (base | off)] = s;
                }
            }
        }
    }

    /// Row pair `(r, r | bit)` as disjoint mutable slices, `r` without `bit`.
    fn row_pair(&mut self, r: usize, bit: usize) -> (&mut [Complex<T>], &mut [Complex<T>]) {
        let d = self.dim;
        let (lo, hi) = self.data.split_at_mut((r | bit) * d);
        (&mut lo[r * d..r * d + d], &mut hi[..d])
    }

    /// Indices in `0..dim` with all of `set` bits on and all of `clear` bits off.
    fn indices_with(&self, set: usize, clear: usize) -> Vec<usize> {
        (0..self.dim).filter(|i| i & set == set && i & clear == 0).collect()
    }

    /// Applies a single-qubit superoperator blockwise.
    pub(crate) fn apply_superop_1q(&mut self, s: &[[Complex<T>; 4]; 4], qubit: usize) {
        let m = 1usize << qubit;
        let base = self.indices_with(0, m);
        for &r0 in &base {
            let (ra, rb) = self.row_pair(r0, m);
            for &c0 in &base {
                let c1 = c0 | m;
                let v = [ra[c0], ra[c1], rb[c0], rb[c1]];
                let w = |i: usize| s[i][0] * v[0] + s[i][1] * v[1] + s[i][2] * v[2] + s[i][3] * v[3];
                ra[c0] = w(0);
                ra[c1] = w(1);
                rb[c0] = w(2);
                rb[c1] = w(3);
            }
        }
    }

    /// Controlled-U: acts with `u` on `target` in the control-set subspace only.
    fn apply_controlled(&mut self, u: &LocalMatrix<T>, control: usize, target: usize) {
        let d = self.dim;
        let (cm, tm) = (1usize << control, 1usize << target);
        let (u00, u01, u10, u11) = (u.get(0, 0), u.get(0, 1), u.get(1, 0), u.get(1, 1));
        let pairs = self.indices_with(cm, tm);
        for &r0 in &pairs {
            let (ra, rb) = self.row_pair(r0, tm);
            for (a, b) in ra.iter_mut().zip(rb.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = u00 * x + u01 * y;
                *b = u10 * x + u11 * y;
            }
        }
        let (v00, v01, v10, v11) = (u00.conj(), u01.conj(), u10.conj(), u11.conj());
        for row in self.data.chunks_exact_mut(d) {
            for &c0 in &pairs {
                let (a, b) = (row[c0], row[c0 | tm]);
                row[c0] = a * v00 + b * v01;
                row[c0 | tm] = a * v10 + b * v11;
            }
        }
    }

    /// Closed form of the standard two-qubit depolarizing channel:
    /// `(1 − 16p/15)ρ + (4p/15)·I_A ⊗ tr_A ρ`.
    fn depolarize_pair(&mut self, p: T, qa: usize, qb: usize) {
        let d = self.dim;
        let (mask, offsets) = Self::local_offsets(&[qa, qb]);
        let keep = T::one() - T::lit(16.0) * p / T::lit(15.0);
        let mix = T::lit(4.0) * p / T::lit(15.0);
        let base = self.indices_with(0, mask);
        for &r0 in &base {
            for &c0 in &base {
                let t = offsets.iter().fold(czero::<T>(), |acc, o| acc + self.data[(r0 | o) * d + (c0 | o)]);
                for (x, ox) in offsets.iter().enumerate() {
                    let row = (r0 | ox) * d;
                    for (y, oy) in offsets.iter().enumerate() {
                        let idx = row + (c0 | oy);
                        let mut v = self.data[idx] * keep;
                        if x == y {
                            v += t * mix;
                        }
                        self.data[idx] = v;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::linalg::paulis;
    use rand::{Rng, SeedableRng};

    type Rho = DensityMatrix<f64>;

    fn plus() -> Rho {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        Rho::from_pure(&[Complex::new(r, 0.0), Complex::new(r, 0.0)]).unwrap()
    }

    fn expectation_x(rho: &Rho) -> f64 {
        let x = &paulis::<f64>()[1];
        (0..2).flat_map(|r| (0..2).map(move |c| (r, c))).map(|(r, c)| (x.get(r, c) * rho.get(c, r)).re).sum()
    }

    fn random_state(n: usize, seed: u64) -> Rho {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let dim = 1 << n;
        // mixture of two random pure states
        let mut acc: Option<Rho> = None;
        for w in [0.7, 0.3] {
            let amps: Vec<Complex<f64>> =
                (0..dim).map(|_| Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
            let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            let amps: Vec<_> = amps.into_iter().map(|a| a / norm).collect();
            let pure = Rho::from_pure(&amps).unwrap();
            acc = Some(match acc {
                None => Rho::from_data(n, pure.data.iter().map(|z| z * w).collect()).unwrap(),
                Some(a) => Rho::from_data(n, a.data.iter().zip(&pure.data).map(|(x, y)| x + y * w).collect()).unwrap(),
            });
        }
        acc.unwrap()
    }

    #[test]
    fn x_flips_zero_to_one() {
        let rho = Rho::zero_state(1).unwrap().apply_gate(&GateOp::x(0)).unwrap();
        assert_eq!(rho.expectation_z(0).unwrap(), -1.0);
        assert!((rho.get(1, 1).re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rz_leaves_diagonal_state_alone() {
        let rho = Rho::zero_state(1).unwrap();
        for theta in [0.0, 0.3, 2.0, -5.0] {
            let out = rho.apply_gate(&GateOp::rz(0, theta)).unwrap();
            assert!(out.data.iter().zip(&rho.data).all(|(a, b)| (a - b).norm() < 1e-15));
        }
    }

    #[test]
    fn hadamard_gives_zero_expectation() {
        let rho = Rho::zero_state(3).unwrap().apply_gate(&GateOp::h(0)).unwrap();
        assert!(rho.expectation_z(0).unwrap().abs() < 1e-15);
        assert!((rho.expectation_z(1).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn expectation_examples() {
        // |0⟩ on qubit 0, |1⟩ on qubit 1 -> index 0b10
        let rho = Rho::basis_state(2, 0b10).unwrap();
        assert_eq!(rho.expectation_z(1).unwrap(), -1.0);
        assert_eq!(rho.expectation_z(0).unwrap(), 1.0);
        let mixed = Rho::maximally_mixed(3).unwrap();
        for q in 0..3 {
            assert!(mixed.expectation_z(q).unwrap().abs() < 1e-15);
        }
        assert!(matches!(mixed.expectation_z(3), Err(Error::QubitOutOfRange { .. })));
    }

    #[test]
    fn channel_limits() {
        let dep = KrausChannel::depolarizing(1.0).unwrap();
        let out = random_state(1, 3).apply_channel(&dep, &[0]).unwrap();
        let half = Rho::maximally_mixed(1).unwrap();
        assert!(out.data.iter().zip(&half.data).all(|(a, b)| (a - b).norm() < 1e-14));

        let ad = KrausChannel::amplitude_damping(1.0).unwrap();
        let out = Rho::basis_state(1, 1).unwrap().apply_channel(&ad, &[0]).unwrap();
        assert!((out.get(0, 0).re - 1.0).abs() < 1e-15 && out.get(1, 1).norm() < 1e-15);

        let bf = KrausChannel::bit_flip(0.5).unwrap();
        let out = Rho::zero_state(1).unwrap().apply_channel(&bf, &[0]).unwrap();
        assert!(out.data.iter().zip(&half.data).all(|(a, b)| (a - b).norm() < 1e-15));
    }

    #[test]
    fn phase_flip_on_plus_state_matches_kraus_algebra() {
        // ⟨X⟩ for K0 = √(1−p) I, K1 = √p Z on |+⟩: (1−p)·1 + p·⟨+|ZXZ|+⟩ = (1−p) − p.
        for (p, expected) in [(0.0, 1.0), (0.25, 0.5), (0.5, 0.0)] {
            let ch = KrausChannel::phase_flip(p).unwrap();
            let out = plus().apply_channel(&ch, &[0]).unwrap();
            assert!((expectation_x(&out) - expected).abs() < 1e-14, "p={p}");
        }
    }

    #[test]
    fn fast_kernels_match_reference_kraus_sum() {
        let rho = random_state(3, 9);
        let channels_1q = [
            KrausChannel::bit_flip(0.3).unwrap(),
            KrausChannel::phase_flip(0.2).unwrap(),
            KrausChannel::depolarizing(0.4).unwrap(),
            KrausChannel::amplitude_damping(0.35).unwrap(),
        ];
        for ch in &channels_1q {
            for q in 0..3 {
                let fast = rho.apply_channel(ch, &[q]).unwrap();
                let slow = rho.apply_kraus_reference(ch, &[q]).unwrap();
                assert!(fast.data.iter().zip(&slow.data).all(|(a, b)| (a - b).norm() < 1e-13));
            }
        }
        let dep2 = KrausChannel::depolarizing_two_qubit(0.45).unwrap();
        for pair in [[0, 1], [2, 0], [1, 2]] {
            let fast = rho.apply_channel(&dep2, &pair).unwrap();
            let slow = rho.apply_kraus_reference(&dep2, &pair).unwrap();
            assert!(fast.data.iter().zip(&slow.data).all(|(a, b)| (a - b).norm() < 1e-13));
        }
    }

    #[test]
    fn gate_kernels_match_full_unitary_conjugation() {
        let rho = random_state(3, 21);
        let gates = [
            GateOp::h(1),
            GateOp::sx(2),
            GateOp::ry(0, 0.77),
            GateOp::cnot(2, 0),
            GateOp::cz(0, 1),
            GateOp::crx(1, 2, 1.3),
            GateOp::crz(0, 2, -0.4),
        ];
        for g in &gates {
            let fast = rho.apply_gate(g).unwrap();
            let mut slow = rho.clone();
            slow.apply_unitary(&g.unitary(), g.qubits()).unwrap();
            assert!(fast.data.iter().zip(&slow.data).all(|(a, b)| (a - b).norm() < 1e-13), "{:?}", g.kind());
        }
    }

    #[test]
    fn reduced_state_of_product() {
        let a = Rho::zero_state(1).unwrap().apply_gate(&GateOp::ry(0, 0.6)).unwrap();
        let b = Rho::zero_state(1).unwrap().apply_gate(&GateOp::rx(0, 1.9)).unwrap();
        let to_local = |r: &Rho| LocalMatrix::from_rows(2, r.data.clone());
        let prod = Rho::from_product(&[to_local(&a), to_local(&b)]).unwrap();
        assert!(prod.reduced_qubit(0).unwrap().max_abs_diff(&to_local(&a)) < 1e-15);
        assert!(prod.reduced_qubit(1).unwrap().max_abs_diff(&to_local(&b)) < 1e-15);
        assert!((prod.trace().re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn channel_arity_and_range_errors() {
        let rho = Rho::zero_state(2).unwrap();
        let dep2 = KrausChannel::depolarizing_two_qubit(0.1).unwrap();
        assert!(matches!(rho.apply_channel(&dep2, &[0]), Err(Error::Dimension(_))));
        assert!(matches!(rho.apply_channel(&dep2, &[0, 2]), Err(Error::QubitOutOfRange { .. })));
        assert!(rho.apply_gate(&GateOp::h(5)).is_err());
    }

    #[test]
    fn psd_check_detects_negative_eigenvalue() {
        let bad = Rho::from_data(
            1,
            vec![Complex::new(1.2, 0.0), Complex::new(0.0, 0.0), Complex::new(0.0, 0.0), Complex::new(-0.2, 0.0)],
        )
        .unwrap();
        assert!(bad.check_invariants(1e-10, 1e-9).is_err());
        assert!(random_state(2, 5).check_invariants(1e-10, 1e-9).is_ok());
    }
}
