use rand::Rng;
use serde::{Deserialize, Serialize};

use super::density::DensityMatrix;
use crate::{Error, Result, Scalar};

const ROW_SUM_TOL: f64 = 1e-12;

/// Per-qubit classical readout error; entry `[i][j] = P(read j | true i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 2]; 2]", into = "[[f64; 2]; 2]")]
pub struct ReadoutConfusion([[f64; 2]; 2]);

impl ReadoutConfusion {
    pub const IDENTITY: ReadoutConfusion = ReadoutConfusion([[1.0, 0.0], [0.0, 1.0]]);

    pub fn new(rows: [[f64; 2]; 2]) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::ProbabilityRange { what: format!("readout row {i}"), value: row[0].min(row[1]) });
            }
            if (row[0] + row[1] - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidArgument(format!("readout row {i} sums to {}", row[0] + row[1])));
            }
        }
        Ok(Self(rows))
    }

    /// Symmetric-in-form constructor from the two flip probabilities.
    pub fn from_flips(p_read1_given0: f64, p_read0_given1: f64) -> Result<Self> {
        Self::new([[1.0 - p_read1_given0, p_read1_given0], [p_read0_given1, 1.0 - p_read0_given1]])
    }

    pub fn rows(&self) -> [[f64; 2]; 2] {
        self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0 == Self::IDENTITY.0
    }

    /// Probability of reading 0 given the true probability of 0.
    pub fn read_zero_probability<T: Scalar>(&self, p0: T) -> T {
        p0 * T::lit(self.0[0][0]) + (T::one() - p0) * T::lit(self.0[1][0])
    }

    /// Expected value of the ±1 readout estimator given the true `P(0)`.
    pub fn expected_z<T: Scalar>(&self, p0: T) -> T {
        T::lit(2.0) * self.read_zero_probability(p0) - T::one()
    }
}

impl Default for ReadoutConfusion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl TryFrom<[[f64; 2]; 2]> for ReadoutConfusion {
    type Error = Error;

    fn try_from(rows: [[f64; 2]; 2]) -> Result<Self> {
        Self::new(rows)
    }
}

impl From<ReadoutConfusion> for [[f64; 2]; 2] {
    fn from(r: ReadoutConfusion) -> Self {
        r.0
    }
}

/// Draws `shots` outcomes with true `P(0) = p0`, flips each through the
/// confusion matrix and returns `(n0 − n1) / shots`.
pub fn sample_z_from_probability<T: Scalar, R: Rng + ?Sized>(
    p0: T,
    shots: usize,
    confusion: &ReadoutConfusion,
    rng: &mut R,
) -> Result<T> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be at least 1".into()));
    }
    let p0 = p0.as_f64().clamp(0.0, 1.0);
    let [[_, flip0], [flip1, _]] = confusion.rows();
    let mut n0 = 0usize;
    for _ in 0..shots {
        let true_zero = rng.random::<f64>() < p0;
        let flip = if true_zero { flip0 } else { flip1 };
        let read_zero = if flip > 0.0 && rng.random::<f64>() < flip { !true_zero } else { true_zero };
        n0 += usize::from(read_zero);
    }
    let n1 = shots - n0;
    Ok((T::lit(n0 as f64) - T::lit(n1 as f64)) / T::lit(shots as f64))
}

/// Shot-sampled `⟨Z_q⟩` with readout error.
pub fn sample_expectation_z<T: Scalar, R: Rng + ?Sized>(
    rho: &DensityMatrix<T>,
    qubit: usize,
    shots: usize,
    confusion: &ReadoutConfusion,
    rng: &mut R,
) -> Result<T> {
    let p0 = rho.prob_zero(qubit)?;
    sample_z_from_probability(p0, shots, confusion, rng)
}
