use num_complex::Complex;

use crate::Scalar;

/// Dense square complex matrix acting on a handful of qubits (2x2, 4x4, ...).
/// Row-major. Local basis index bit `j` corresponds to the `j`-th target qubit.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMatrix<T> {
    dim: usize,
    data: Vec<Complex<T>>,
}

impl<T: Scalar> LocalMatrix<T> {
    pub fn from_rows(dim: usize, data: Vec<Complex<T>>) -> Self {
        assert_eq!(data.len(), dim * dim, "LocalMatrix data must be dim*dim");
        Self { dim, data }
    }

    pub fn from_real(dim: usize, data: &[f64]) -> Self {
        Self::from_rows(dim, data.iter().map(|&x| Complex::new(T::lit(x), T::zero())).collect())
    }

    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![Complex::new(T::zero(), T::zero()); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = Complex::new(T::one(), T::zero());
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex<T> {
        self.data[r * self.dim + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex<T>) {
        self.data[r * self.dim + c] = v;
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn n_qubits(&self) -> usize {
        self.dim.trailing_zeros() as usize
    }

    pub fn adjoint(&self) -> Self {
        let d = self.dim;
        let mut out = Self::zeros(d);
        for r in 0..d {
            for c in 0..d {
                out.data[c * d + r] = self.data[r * d + c].conj();
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let d = self.dim;
        let mut out = Self::zeros(d);
        for r in 0..d {
            for k in 0..d {
                let a = self.data[r * d + k];
                if a.re == T::zero() && a.im == T::zero() {
                    continue;
                }
                for c in 0..d {
                    out.data[r * d + c] += a * other.data[k * d + c];
                }
            }
        }
        out
    }

    pub fn scale(&self, s: T) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|&z| z * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self { dim: self.dim, data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect() }
    }

    /// `self ⊗ other` with `other` occupying the low bits of the index.
    pub fn kron(&self, other: &Self) -> Self {
        let (da, db) = (self.dim, other.dim);
        let d = da * db;
        let mut out = Self::zeros(d);
        for ra in 0..da {
            for ca in 0..da {
                let a = self.get(ra, ca);
                for rb in 0..db {
                    for cb in 0..db {
                        out.data[(ra * db + rb) * d + ca * db + cb] = a * other.get(rb, cb);
                    }
                }
            }
        }
        out
    }

    pub fn trace(&self) -> Complex<T> {
        (0..self.dim).map(|i| self.get(i, i)).fold(Complex::new(T::zero(), T::zero()), |a, b| a + b)
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data.iter().zip(&other.data).map(|(&a, &b)| (a - b).norm()).fold(T::zero(), T::max)
    }
}

#[inline]
pub(crate) fn c<T: Scalar>(re: f64, im: f64) -> Complex<T> {
    Complex::new(T::lit(re), T::lit(im))
}

#[inline]
pub(crate) fn czero<T: Scalar>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

/// Pauli matrices I, X, Y, Z.
pub fn paulis<T: Scalar>() -> [LocalMatrix<T>; 4] {
    [
        LocalMatrix::identity(2),
        LocalMatrix::from_real(2, &[0.0, 1.0, 1.0, 0.0]),
        LocalMatrix::from_rows(2, vec![czero(), c(0.0, -1.0), c(0.0, 1.0), czero()]),
        LocalMatrix::from_real(2, &[1.0, 0.0, 0.0, -1.0]),
    ]
}
