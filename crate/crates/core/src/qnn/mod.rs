//! Hybrid quantum-classical classifier: angle encoding, PQC, per-qubit `⟨Z⟩`,
//! linear head, softmax. Also its losses, optimizers and training loop.

mod checkpoint;
mod loss;
mod optim;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use loss::{argmax, loss_kl, loss_nll, softmax, LOG_FLOOR};
pub use optim::{adam_step, spsa_gradient, AdamConfig, AdamState};
pub use train::{
    predict_rows, train, DeviceSchedule, EpochRecord, HeadGradient, LossKind, Targets, TrainConfig, TrainData,
    TrainHistory,
};

use std::f64::consts::TAU;

use rand::Rng;

use crate::circuit::{build_model_circuit, execute, weave_noise, PqcTemplate, Shots};
use crate::device::DeviceProfile;
use crate::rng::{stream, Purpose};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct HybridModel<T> {
    template: PqcTemplate,
    k: usize,
    theta: Vec<T>,
    /// `k × n_qubits`, row-major.
    weights: Vec<T>,
    bias: Vec<T>,
}

impl<T: Scalar> HybridModel<T> {
    pub fn new(template: PqcTemplate, k: usize, theta: Vec<T>, weights: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("model needs at least one class".into()));
        }
        let n = template.n_qubits();
        if theta.len() != template.param_count() {
            return Err(Error::Dimension(format!(
                "{} PQC with {n} qubits takes {} parameters, got {}",
                template.id(),
                template.param_count(),
                theta.len()
            )));
        }
        if weights.len() != k * n || bias.len() != k {
            return Err(Error::Dimension(format!(
                "head for {k} classes and {n} qubits needs {} weights and {k} biases, got {} and {}",
                k * n,
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self { template, k, theta, weights, bias })
    }

    /// `θ ~ U[0, 2π)`, `W, b ~ U[−0.1, 0.1]`.
    pub fn init(template: PqcTemplate, k: usize, seed: u64) -> Result<Self> {
        let mut rng = stream(seed, Purpose::Init, &[]);
        let n = template.n_qubits();
        let theta = (0..template.param_count()).map(|_| T::lit(rng.random::<f64>() * TAU)).collect();
        let mut head = |len: usize| -> Vec<T> { (0..len).map(|_| T::lit(rng.random_range(-0.1..=0.1))).collect() };
        let weights = head(k * n);
        let bias = head(k);
        Self::new(template, k, theta, weights, bias)
    }

    pub fn template(&self) -> &PqcTemplate {
        &self.template
    }

    pub fn n_qubits(&self) -> usize {
        self.template.n_qubits()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn theta(&self) -> &[T] {
        &self.theta
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn param_count(&self) -> usize {
        self.theta.len() + self.weights.len() + self.bias.len()
    }

    /// `θ ⧺ W ⧺ b`.
    pub fn params(&self) -> Vec<T> {
        let mut p = Vec::with_capacity(self.param_count());
        p.extend_from_slice(&self.theta);
        p.extend_from_slice(&self.weights);
        p.extend_from_slice(&self.bias);
        p
    }

    pub fn set_params(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Dimension(format!("expected {} parameters, got {}", self.param_count(), params.len())));
        }
        let (t, rest) = params.split_at(self.theta.len());
        let (w, b) = rest.split_at(self.weights.len());
        self.theta.copy_from_slice(t);
        self.weights.copy_from_slice(w);
        self.bias.copy_from_slice(b);
        Ok(())
    }

    pub fn with_params(&self, params: &[T]) -> Result<Self> {
        let mut m = self.clone();
        m.set_params(params)?;
        Ok(m)
    }

    /// Per-qubit `⟨Z⟩` after the noisy circuit and readout.
    pub fn expectations<R: Rng + ?Sized>(
        &self,
        x: &[T],
        profile: &DeviceProfile,
        shots: Shots,
        rng: &mut R,
    ) -> Result<Vec<T>> {
        let circuit = build_model_circuit(x, &self.template, &self.theta)?;
        let noisy = weave_noise(&circuit, profile)?;
        execute(&noisy, shots, rng)
    }

    /// `W e + b`.
    pub fn logits(&self, e: &[T]) -> Result<Vec<T>> {
        let n = self.n_qubits();
        if e.len() != n {
            return Err(Error::Dimension(format!("head expects {n} expectations, got {}", e.len())));
        }
        Ok((0..self.k)
            .map(|c| self.weights[c * n..(c + 1) * n].iter().zip(e).fold(self.bias[c], |acc, (&w, &z)| acc + w * z))
            .collect())
    }

    /// Class probabilities for one input.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        x: &[T],
        profile: &DeviceProfile,
        shots: Shots,
        rng: &mut R,
    ) -> Result<Vec<T>> {
        let e = self.expectations(x, profile, shots, rng)?;
        Ok(softmax(&self.logits(&e)?))
    }
}
