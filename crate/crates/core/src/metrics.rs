//! Accuracy, total variation distance, label mismatch, clone ratio, and the
//! expectations registry that pins reference-run values.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::circuit::Shots;
use crate::dataset::LabeledDataset;
use crate::device::DeviceProfile;
use crate::qnn::{argmax, HybridModel};
use crate::{Error, Result, Scalar};

/// Tolerance for deciding that a vector is a probability distribution.
pub const DISTRIBUTION_TOL: f64 = 1e-6;

fn check_distribution<T: Scalar>(p: &[T], what: &str) -> Result<()> {
    let sum: f64 = p.iter().map(|v| v.as_f64()).sum();
    if p.is_empty() || p.iter().any(|v| !(v.as_f64() >= -DISTRIBUTION_TOL)) || (sum - 1.0).abs() > DISTRIBUTION_TOL {
        return Err(Error::InvalidArgument(format!("{what} is not a probability distribution (sum {sum})")));
    }
    Ok(())
}

/// `½ Σ |pᵢ − qᵢ|`, clamped to `[0, 1]`.
pub fn tvd<T: Scalar>(p: &[T], q: &[T]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension(format!("TVD between {} and {} classes", p.len(), q.len())));
    }
    check_distribution(p, "first argument")?;
    check_distribution(q, "second argument")?;
    let d: f64 = p.iter().zip(q).map(|(a, b)| (a.as_f64() - b.as_f64()).abs()).sum();
    Ok((0.5 * d).clamp(0.0, 1.0))
}

pub fn mismatch_rate(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Dimension(format!("label lists of length {} and {}", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count() as f64 / a.len() as f64)
}

pub fn clone_ratio(clone_acc: f64, victim_acc: f64) -> Result<f64> {
    if !(victim_acc > 0.0) {
        return Err(Error::InvalidArgument(format!("victim accuracy {victim_acc} must be positive")));
    }
    Ok(clone_acc / victim_acc)
}

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
pub fn accuracy_of<T: Scalar>(probs: &[Vec<T>], labels: &[usize]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::EmptyDataset("no predictions".into()));
    }
    if probs.len() != labels.len() {
        return Err(Error::Dimension(format!("{} predictions for {} labels", probs.len(), labels.len())));
    }
    let hits = probs.iter().zip(labels).filter(|(p, &y)| argmax(p) == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Test accuracy of `model` on `ds` when run on `profile`.
pub fn accuracy<T: Scalar>(
    model: &HybridModel<T>,
    ds: &LabeledDataset<T>,
    profile: &DeviceProfile,
    shots: Shots,
    seed: u64,
) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset(ds.name.clone()));
    }
    let probs = crate::qnn::predict_rows(model, ds.features(), profile, shots, seed)?;
    accuracy_of(&probs, ds.labels())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricContext {
    pub experiment: String,
    pub seeds: Vec<u64>,
    pub shots: Shots,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub name: String,
    pub value: f64,
    pub context: MetricContext,
}

impl MetricRecord {
    pub fn new(name: impl Into<String>, value: f64, context: MetricContext) -> Result<Self> {
        let name = name.into();
        if !value.is_finite() {
            return Err(Error::InvalidArgument(format!("metric {name} is not finite")));
        }
        Ok(Self { name, value, context })
    }
}

pub const EXPECTATIONS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub value: f64,
    pub tolerance: f64,
}

impl Expectation {
    pub fn admits(&self, observed: f64) -> bool {
        (observed - self.value).abs() <= self.tolerance
    }
}

/// Pinned reference values keyed by experiment id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    pub version: u32,
    pub entries: BTreeMap<String, Expectation>,
}

impl Default for Expectations {
    fn default() -> Self {
        Self { version: EXPECTATIONS_VERSION, entries: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    /// First observation; now recorded.
    Recorded,
    Within {
        expected: Expectation,
    },
    Outside {
        expected: Expectation,
    },
}

impl Expectations {
    pub fn from_toml(text: &str) -> Result<Self> {
        let e: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if e.version != EXPECTATIONS_VERSION {
            return Err(Error::Parse(format!("expectations version {} is not supported", e.version)));
        }
        Ok(e)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("expectations serialise")
    }

    pub fn load(path: &Path) -> Result<Self> {
        match std::fs::read_to_string(path) {
            Ok(text) => Self::from_toml(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::fsutil::write_atomic(path, self.to_toml().as_bytes())
    }

    /// Compares against the pinned value, pinning `observed` if `id` is new.
    pub fn check(&mut self, id: &str, observed: f64, tolerance: f64) -> Verdict {
        match self.entries.get(id) {
            Some(&expected) if expected.admits(observed) => Verdict::Within { expected },
            Some(&expected) => Verdict::Outside { expected },
            None => {
                self.entries.insert(id.to_owned(), Expectation { value: observed, tolerance });
                Verdict::Recorded
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn tvd_examples() {
        assert_eq!(tvd(&[0.3, 0.7f64], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(tvd(&[1.0, 0.0f64], &[0.0, 1.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(tvd(&[0.6, 0.4f64], &[0.4, 0.6]).unwrap(), 0.2, epsilon = 1e-15);
        assert_eq!(tvd(&[1.0, 0.0, 0.0, 0.0f64], &[0.0, 1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert!(tvd(&[0.5, 0.6f64], &[0.5, 0.5]).is_err());
        assert!(tvd(&[1.0f64], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn mismatch_examples() {
        assert_eq!(mismatch_rate(&[1, 2, 3], &[1, 2, 3]).unwrap(), 0.0);
        assert_eq!(mismatch_rate(&[0, 0], &[1, 1]).unwrap(), 1.0);
        let a: Vec<usize> = (0..10).collect();
        let mut b = a.clone();
        b[4] = 9;
        assert_abs_diff_eq!(mismatch_rate(&a, &b).unwrap(), 0.1);
        assert!(mismatch_rate(&[1], &[]).is_err());
    }

    #[test]
    fn clone_ratio_examples() {
        assert_eq!(clone_ratio(0.7, 0.7).unwrap(), 1.0);
        assert_eq!(format!("{:.3}", clone_ratio(0.880, 0.896).unwrap()), "0.982");
        assert_eq!(format!("{:.3}", clone_ratio(0.680, 0.796).unwrap()), "0.854");
        assert!(clone_ratio(0.5, 0.0).is_err());
    }

    #[test]
    fn accuracy_of_uniform_and_oracle() {
        let labels = [0, 1, 0, 3, 2, 0];
        let uniform = vec![vec![0.25f64; 4]; 6];
        assert_abs_diff_eq!(accuracy_of(&uniform, &labels).unwrap(), 0.5);
        let oracle: Vec<Vec<f64>> =
            labels.iter().map(|&y| (0..4).map(|c| f64::from(u8::from(c == y))).collect()).collect();
        assert_eq!(accuracy_of(&oracle, &labels).unwrap(), 1.0);
        assert!(accuracy_of::<f64>(&[], &[]).is_err());
    }

    #[test]
    fn metric_records_must_be_finite() {
        let ctx = MetricContext { experiment: "x".into(), seeds: vec![1], shots: Shots::Analytic };
        assert!(MetricRecord::new("a", f64::NAN, ctx.clone()).is_err());
        assert!(MetricRecord::new("a", 0.5, ctx).is_ok());
    }

    #[test]
    fn expectations_registry() {
        let mut e = Expectations::default();
        assert_eq!(e.check("victim.acc", 0.8, 0.05), Verdict::Recorded);
        assert!(matches!(e.check("victim.acc", 0.83, 0.0), Verdict::Within { .. }));
        assert!(matches!(e.check("victim.acc", 0.9, 0.0), Verdict::Outside { .. }));
        let back = Expectations::from_toml(&e.to_toml()).unwrap();
        assert_eq!(back, e);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("exp.toml");
        assert_eq!(Expectations::load(&p).unwrap(), Expectations::default());
        e.save(&p).unwrap();
        assert_eq!(Expectations::load(&p).unwrap(), e);
    }
}
