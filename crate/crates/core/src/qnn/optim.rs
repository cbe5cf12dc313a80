use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Result, Scalar};

/// Two-sided SPSA estimate with one Rademacher draw `Δ`:
/// `ĝᵢ = [L(θ + cΔ) − L(θ − cΔ)] / (2c Δᵢ)`.
///
/// `loss_at` is called exactly twice, first at `θ + cΔ` then at `θ − cΔ`.
pub fn spsa_gradient<T, F, R>(mut loss_at: F, theta: &[T], c: T, rng: &mut R) -> Result<Vec<T>>
where
    T: Scalar,
    F: FnMut(&[T]) -> Result<T>,
    R: Rng + ?Sized,
{
    let delta: Vec<T> = (0..theta.len()).map(|_| if rng.random::<bool>() { T::one() } else { -T::one() }).collect();
    let plus: Vec<T> = theta.iter().zip(&delta).map(|(&t, &d)| t + c * d).collect();
    let minus: Vec<T> = theta.iter().zip(&delta).map(|(&t, &d)| t - c * d).collect();
    let diff = loss_at(&plus)? - loss_at(&minus)?;
    let two_c = c + c;
    Ok(delta.iter().map(|&d| diff / (two_c * d)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self { m: vec![T::zero(); len], v: vec![T::zero(); len], t: 0 }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step<T: Scalar>(params: &mut [T], grads: &[T], state: &mut AdamState<T>, lr: T, cfg: &AdamConfig) {
    assert_eq!(params.len(), grads.len(), "parameter and gradient lengths differ");
    assert_eq!(params.len(), state.m.len(), "optimizer state does not match parameters");
    state.t += 1;
    let (b1, b2, eps) = (T::lit(cfg.beta1), T::lit(cfg.beta2), T::lit(cfg.epsilon));
    let bc1 = T::one() - b1.powi(state.t as i32);
    let bc2 = T::one() - b2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (T::one() - b1) * g;
        state.v[i] = b2 * state.v[i] + (T::one() - b2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}
