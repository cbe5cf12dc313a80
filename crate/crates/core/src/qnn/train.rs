use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{argmax, loss_kl, loss_nll};
use super::optim::{adam_step, spsa_gradient, AdamConfig, AdamState};
use super::HybridModel;
use crate::circuit::Shots;
use crate::dataset::LabeledDataset;
use crate::device::DeviceProfile;
use crate::rng::{stream, Purpose};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    /// Negative log-likelihood against hard labels.
    #[serde(rename = "nll_top1")]
    NllTop1,
    /// KL divergence against full probability vectors.
    #[serde(rename = "kl_topk")]
    KlTopK,
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::NllTop1 => "nll_top1",
            LossKind::KlTopK => "kl_topk",
        })
    }
}

/// How the classical head's gradient is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadGradient {
    /// The head is part of the SPSA-perturbed vector.
    #[default]
    Spsa,
    /// SPSA for `θ` only; exact softmax-cross-entropy gradient for `W` and `b`,
    /// at the cost of one extra forward per sample.
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub loss: LossKind,
    pub spsa_c: f64,
    pub shots: Shots,
    pub head_gradient: HeadGradient,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 25,
            learning_rate: 0.01,
            batch_size: 32,
            adam: AdamConfig::default(),
            loss: LossKind::NllTop1,
            spsa_c: 0.1,
            shots: Shots::Analytic,
            head_gradient: HeadGradient::Spsa,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        let field = |f: &str, msg: &str| Err(Error::validation(format!("{path}.{f}"), msg));
        if self.epochs == 0 {
            return field("epochs", "must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return field("learning_rate", "must be positive");
        }
        if self.batch_size == 0 {
            return field("batch_size", "must be at least 1");
        }
        if !(self.spsa_c > 0.0 && self.spsa_c.is_finite()) {
            return field("spsa_c", "must be positive");
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return field("adam", "betas must lie in [0, 1)");
        }
        if !(self.adam.epsilon > 0.0) {
            return field("adam.epsilon", "must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets<T> {
    Labels(Vec<usize>),
    Distributions(Vec<Vec<T>>),
}

impl<T> Targets<T> {
    pub fn len(&self) -> usize {
        match self {
            Targets::Labels(l) => l.len(),
            Targets::Distributions(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn loss_kind(&self) -> LossKind {
        match self {
            Targets::Labels(_) => LossKind::NllTop1,
            Targets::Distributions(_) => LossKind::KlTopK,
        }
    }
}

/// Training inputs with hard or soft targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainData<T> {
    features: Vec<Vec<T>>,
    targets: Targets<T>,
    k: usize,
}

impl<T: Scalar> TrainData<T> {
    pub fn new(features: Vec<Vec<T>>, targets: Targets<T>, k: usize) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptyDataset("training data".into()));
        }
        if features.len() != targets.len() {
            return Err(Error::Dimension(format!("{} inputs but {} targets", features.len(), targets.len())));
        }
        match &targets {
            Targets::Labels(l) if l.iter().any(|&c| c >= k) => {
                return Err(Error::InvalidArgument(format!("label outside 0..{k}")));
            }
            Targets::Distributions(d) => {
                for (i, row) in d.iter().enumerate() {
                    let sum: T = row.iter().copied().sum();
                    if row.len() != k || (sum - T::one()).abs() > T::lit(1e-6) || row.iter().any(|p| *p < T::zero()) {
                        return Err(Error::InvalidArgument(format!(
                            "target {i} is not a distribution over {k} classes"
                        )));
                    }
                }
            }
            _ => {}
        }
        Ok(Self { features, targets, k })
    }

    pub fn labeled(ds: &LabeledDataset<T>) -> Result<Self> {
        Self::new(ds.features().to_vec(), Targets::Labels(ds.labels().to_vec()), ds.k())
    }

    pub fn features(&self) -> &[Vec<T>] {
        &self.features
    }

    pub fn targets(&self) -> &Targets<T> {
        &self.targets
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    fn loss(&self, i: usize, probs: &[T]) -> Result<T> {
        match &self.targets {
            Targets::Labels(l) => loss_nll(probs, l[i]),
            Targets::Distributions(d) => loss_kl(probs, &d[i]),
        }
    }

    /// `∂loss/∂logits = p − t` for both losses.
    fn logit_residual(&self, i: usize, probs: &[T]) -> Vec<T> {
        match &self.targets {
            Targets::Labels(l) => {
                probs.iter().enumerate().map(|(c, &p)| if c == l[i] { p - T::one() } else { p }).collect()
            }
            Targets::Distributions(d) => probs.iter().zip(&d[i]).map(|(&p, &t)| p - t).collect(),
        }
    }
}

/// Device used for each stretch of epochs, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSchedule {
    phases: Vec<(DeviceProfile, usize)>,
}

impl DeviceSchedule {
    pub fn new(phases: Vec<(DeviceProfile, usize)>) -> Result<Self> {
        let phases: Vec<_> = phases.into_iter().filter(|(_, n)| *n > 0).collect();
        if phases.is_empty() {
            return Err(Error::InvalidArgument("device schedule covers no epochs".into()));
        }
        Ok(Self { phases })
    }

    pub fn single(profile: DeviceProfile, epochs: usize) -> Result<Self> {
        Self::new(vec![(profile, epochs)])
    }

    /// Most epochs on `primary`, the last fifth on `secondary` (20 + 5 for 25).
    pub fn split(primary: DeviceProfile, secondary: DeviceProfile, epochs: usize) -> Result<Self> {
        let tail = epochs / 5;
        Self::new(vec![(primary, epochs - tail), (secondary, tail)])
    }

    pub fn phases(&self) -> &[(DeviceProfile, usize)] {
        &self.phases
    }

    pub fn total_epochs(&self) -> usize {
        self.phases.iter().map(|(_, n)| n).sum()
    }

    pub fn profile_for(&self, epoch: usize) -> &DeviceProfile {
        let mut acc = 0;
        for (p, n) in &self.phases {
            acc += n;
            if epoch < acc {
                return p;
            }
        }
        &self.phases.last().expect("schedule is nonempty").0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub device: String,
    pub train_loss: f64,
    pub test_accuracy: Option<f64>,
    pub test_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Total forward passes, training and evaluation.
    pub forward_passes: u64,
}

impl TrainHistory {
    pub fn final_test_accuracy(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.test_accuracy)
    }
}

struct Ctx<'a, T> {
    data: &'a TrainData<T>,
    cfg: &'a TrainConfig,
    seed: u64,
    forwards: AtomicU64,
}

impl<T: Scalar> Ctx<'_, T> {
    fn mean_loss(&self, m: &HybridModel<T>, idx: &[usize], profile: &DeviceProfile, tags: [u64; 3]) -> Result<T> {
        let losses = idx
            .par_iter()
            .map(|&i| {
                let mut rng = stream(self.seed, Purpose::Shots, &[tags[0], tags[1], tags[2], i as u64]);
                let p = m.forward(&self.data.features[i], profile, self.cfg.shots, &mut rng)?;
                self.data.loss(i, &p)
            })
            .collect::<Result<Vec<T>>>()?;
        self.forwards.fetch_add(idx.len() as u64, Ordering::Relaxed);
        Ok(losses.into_iter().sum::<T>() / T::lit(idx.len() as f64))
    }

    /// Mean loss plus exact head gradient `(∂W, ∂b)` at `m`.
    fn head_gradient(
        &self,
        m: &HybridModel<T>,
        idx: &[usize],
        profile: &DeviceProfile,
        tags: [u64; 3],
    ) -> Result<(T, Vec<T>)> {
        let (n, k) = (m.n_qubits(), m.k());
        let per_sample = idx
            .par_iter()
            .map(|&i| {
                let mut rng = stream(self.seed, Purpose::Shots, &[tags[0], tags[1], tags[2], i as u64]);
                let e = m.expectations(&self.data.features[i], profile, self.cfg.shots, &mut rng)?;
                let p = super::softmax(&m.logits(&e)?);
                Ok((self.data.loss(i, &p)?, e, self.data.logit_residual(i, &p)))
            })
            .collect::<Result<Vec<_>>>()?;
        self.forwards.fetch_add(idx.len() as u64, Ordering::Relaxed);
        let scale = T::one() / T::lit(idx.len() as f64);
        let mut grad = vec![T::zero(); k * n + k];
        let mut loss = T::zero();
        for (l, e, r) in per_sample {
            loss += l;
            for c in 0..k {
                for j in 0..n {
                    grad[c * n + j] += r[c] * e[j] * scale;
                }
                grad[k * n + c] += r[c] * scale;
            }
        }
        Ok((loss * scale, grad))
    }
}

/// Mini-batch SPSA + Adam. One perturbation per batch; the batch gradient is
/// that of the mean batch loss. Every random draw comes from a stream keyed by
/// `seed` and the (epoch, batch, sample) position, so results do not depend on
/// thread scheduling.
pub fn train<T: Scalar>(
    model: &HybridModel<T>,
    data: &TrainData<T>,
    test: Option<&LabeledDataset<T>>,
    cfg: &TrainConfig,
    schedule: &DeviceSchedule,
    seed: u64,
) -> Result<(HybridModel<T>, TrainHistory)> {
    cfg.validate("train")?;
    if data.is_empty() {
        return Err(Error::EmptyDataset("training data".into()));
    }
    if data.targets().loss_kind() != cfg.loss {
        return Err(Error::InvalidArgument(format!(
            "loss {:?} does not match {:?} targets",
            cfg.loss,
            data.targets().loss_kind()
        )));
    }
    if data.k() != model.k() {
        return Err(Error::Dimension(format!("model has {} classes, data has {}", model.k(), data.k())));
    }
    if schedule.total_epochs() != cfg.epochs {
        return Err(Error::InvalidArgument(format!(
            "device schedule covers {} epochs, config asks for {}",
            schedule.total_epochs(),
            cfg.epochs
        )));
    }

    let ctx = Ctx { data, cfg, seed, forwards: AtomicU64::new(0) };
    let mut model = model.clone();
    let mut params = model.params();
    let n_theta = model.theta().len();
    let mut adam = AdamState::new(params.len());
    let (lr, c) = (T::lit(cfg.learning_rate), T::lit(cfg.spsa_c));
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 0..cfg.epochs {
        let profile = schedule.profile_for(epoch);
        order.shuffle(&mut stream(seed, Purpose::Shuffle, &[epoch as u64]));
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let (e, b64) = (epoch as u64, b as u64);
            let mut delta_rng = stream(seed, Purpose::Perturbation, &[e, b64]);
            let mut sweep = 0u64;
            let (grad, batch_loss) = match cfg.head_gradient {
                HeadGradient::Spsa => {
                    let mut pm = T::zero();
                    let g = spsa_gradient(
                        |p: &[T]| {
                            sweep += 1;
                            let l = ctx.mean_loss(&model.with_params(p)?, idx, profile, [e, b64, sweep])?;
                            pm += l;
                            Ok(l)
                        },
                        &params,
                        c,
                        &mut delta_rng,
                    )?;
                    (g, pm / T::lit(2.0))
                }
                HeadGradient::Analytic => {
                    let (theta, head) = params.split_at(n_theta);
                    let mut g = spsa_gradient(
                        |t: &[T]| {
                            sweep += 1;
                            let full: Vec<T> = t.iter().chain(head).copied().collect();
                            ctx.mean_loss(&model.with_params(&full)?, idx, profile, [e, b64, sweep])
                        },
                        theta,
                        c,
                        &mut delta_rng,
                    )?;
                    let (l, head_grad) = ctx.head_gradient(&model, idx, profile, [e, b64, 0])?;
                    g.extend(head_grad);
                    (g, l)
                }
            };
            loss_sum += batch_loss.as_f64() * idx.len() as f64;
            adam_step(&mut params, &grad, &mut adam, lr, &cfg.adam);
            model.set_params(&params)?;
        }

        let train_loss = loss_sum / data.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::InvalidArgument(format!("training loss became non-finite at epoch {epoch}")));
        }
        let (test_accuracy, test_loss) = match test {
            Some(ds) => {
                let (acc, loss) = evaluate(&model, ds, profile, cfg.shots, derive_eval_seed(seed, epoch))?;
                ctx.forwards.fetch_add(ds.len() as u64, Ordering::Relaxed);
                (Some(acc), Some(loss))
            }
            None => (None, None),
        };
        history.epochs.push(EpochRecord { epoch, device: profile.name.clone(), train_loss, test_accuracy, test_loss });
    }
    history.forward_passes = ctx.forwards.load(Ordering::Relaxed);
    Ok((model, history))
}

fn derive_eval_seed(seed: u64, epoch: usize) -> u64 {
    crate::rng::derive_seed(seed, &[Purpose::Evaluation as u64, epoch as u64])
}

/// Class probabilities for every row, one shot stream per row.
pub fn predict_rows<T: Scalar>(
    model: &HybridModel<T>,
    rows: &[Vec<T>],
    profile: &DeviceProfile,
    shots: Shots,
    seed: u64,
) -> Result<Vec<Vec<T>>> {
    rows.par_iter()
        .enumerate()
        .map(|(i, x)| model.forward(x, profile, shots, &mut stream(seed, Purpose::Evaluation, &[i as u64])))
        .collect()
}

/// `(accuracy, mean NLL)` of `model` on `ds`.
pub(crate) fn evaluate<T: Scalar>(
    model: &HybridModel<T>,
    ds: &LabeledDataset<T>,
    profile: &DeviceProfile,
    shots: Shots,
    seed: u64,
) -> Result<(f64, f64)> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset(ds.name.clone()));
    }
    let probs = predict_rows(model, ds.features(), profile, shots, seed)?;
    let mut correct = 0usize;
    let mut loss = 0.0;
    for (p, &y) in probs.iter().zip(ds.labels()) {
        correct += usize::from(argmax(p) == y);
        loss += loss_nll(p, y)?.as_f64();
    }
    Ok((correct as f64 / ds.len() as f64, loss / ds.len() as f64))
}
