use crate::{Error, Result, Scalar};

/// Floor applied to probabilities before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

fn floored_ln<T: Scalar>(p: T) -> T {
    p.max(T::lit(LOG_FLOOR)).ln()
}

/// Negative log-likelihood `−ln p[label]`.
pub fn loss_nll<T: Scalar>(probs: &[T], label: usize) -> Result<T> {
    let p = probs
        .get(label)
        .ok_or_else(|| Error::Dimension(format!("label {label} out of range for {} classes", probs.len())))?;
    Ok(-floored_ln(*p))
}

/// `KL(target ‖ probs) = Σ tᵢ ln(tᵢ / pᵢ)`, with `0 · ln 0 = 0`.
pub fn loss_kl<T: Scalar>(probs: &[T], target: &[T]) -> Result<T> {
    if probs.len() != target.len() {
        return Err(Error::Dimension(format!("KL divergence between {} and {} classes", target.len(), probs.len())));
    }
    let mut acc = T::zero();
    for (&p, &t) in probs.iter().zip(target) {
        if t > T::zero() {
            acc += t * (floored_ln(t) - floored_ln(p));
        }
    }
    // rounding can leave a tiny negative for identical inputs
    Ok(acc.max(T::zero()))
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn nll_examples() {
        assert_abs_diff_eq!(loss_nll(&[0.25f64; 4], 2).unwrap(), 4f64.ln(), epsilon = 1e-15);
        assert_eq!(loss_nll(&[0.0, 1.0f64], 1).unwrap(), 0.0);
        assert_abs_diff_eq!(loss_nll(&[0.7, 0.1, 0.1, 0.1f64], 0).unwrap(), 0.356_674_943_938_732_4, epsilon = 1e-12);
        assert_abs_diff_eq!(loss_nll(&[1.0, 0.0f64], 1).unwrap(), -(1e-12f64).ln(), epsilon = 1e-9);
        assert!(loss_nll(&[1.0f64], 1).is_err());
    }

    #[test]
    fn kl_examples() {
        let p = [0.2, 0.3, 0.5f64];
        assert_eq!(loss_kl(&p, &p).unwrap(), 0.0);
        assert_abs_diff_eq!(loss_kl(&[0.5, 0.5f64], &[1.0, 0.0]).unwrap(), 2f64.ln(), epsilon = 1e-15);
        assert!(loss_kl(&[1.0f64], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn kl_is_non_negative() {
        let mut rng = stream(3, Purpose::Evaluation, &[]);
        let mut draw = |k: usize| {
            let v: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect::<Vec<_>>()
        };
        for i in 0..1000 {
            let k = 2 + i % 5;
            let (p, t) = (draw(k), draw(k));
            assert!(loss_kl(&p, &t).unwrap() >= 0.0);
        }
    }

    #[test]
    fn softmax_is_stable_and_normalised() {
        let p = softmax(&[1000.0f64, 1000.0, -1000.0]);
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-15);
        assert_eq!(p[2], 0.0);
        assert_eq!(softmax(&[0.0f64; 4]), vec![0.25; 4]);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.25f64; 4]), 0);
        assert_eq!(argmax(&[0.1, 0.4, 0.4, 0.1f64]), 1);
        assert_eq!(argmax(&[0.1, 0.2, 0.7f64]), 2);
    }
}
