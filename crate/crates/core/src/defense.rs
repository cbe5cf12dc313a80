//! Victim-side serving with device (HVIP) or device-and-architecture (HAVIP)
//! randomisation, and measurement of the perturbation it adds.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attack::{run_attack, AttackCell, AttackReport, AttackSetup};
use crate::circuit::Shots;
use crate::dataset::{LabeledDataset, QuerySet};
use crate::device::{validate_weights, weighted_index, DeviceProfile};
use crate::metrics::{accuracy_of, mismatch_rate, tvd};
use crate::qnn::{argmax, HybridModel};
use crate::rng::{derive_seed, stream, Purpose};
use crate::{Error, Result, Scalar};

/// One answered query. The ticket is an opaque identifier; it carries no
/// information about which model or device produced the answer.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub probs: Vec<T>,
    pub ticket: u64,
}

/// The only interface the attacker has to the victim.
pub trait VictimService<T>: Send + Sync {
    fn predict(&self, x: &[T]) -> Result<Prediction<T>>;
}

/// A trained model served on a device.
#[derive(Debug, Clone)]
pub struct Deployment<T> {
    pub model: Arc<HybridModel<T>>,
    pub device: DeviceProfile,
}

impl<T> Deployment<T> {
    pub fn new(model: Arc<HybridModel<T>>, device: DeviceProfile) -> Self {
        Self { model, device }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DefenseKind {
    #[serde(rename = "none")]
    NoDefense,
    #[serde(rename = "hvip")]
    Hvip,
    #[serde(rename = "havip")]
    Havip,
}

impl std::fmt::Display for DefenseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DefenseKind::NoDefense => "none",
            DefenseKind::Hvip => "hvip",
            DefenseKind::Havip => "havip",
        })
    }
}

#[derive(Debug, Clone)]
pub enum DefensePolicy<T> {
    NoDefense(Deployment<T>),
    /// One model, chosen device per query.
    Hvip {
        model: Arc<HybridModel<T>>,
        devices: Vec<DeviceProfile>,
        probs: Vec<f64>,
    },
    /// Chosen (model, device) pair per query.
    Havip {
        deployments: Vec<Deployment<T>>,
        probs: Vec<f64>,
    },
}

impl<T: Scalar> DefensePolicy<T> {
    pub fn hvip(model: Arc<HybridModel<T>>, devices: Vec<DeviceProfile>, probs: Vec<f64>) -> Result<Self> {
        let p = Self::Hvip { model, devices, probs };
        p.validate()?;
        Ok(p)
    }

    pub fn havip(deployments: Vec<Deployment<T>>, probs: Vec<f64>) -> Result<Self> {
        let p = Self::Havip { deployments, probs };
        p.validate()?;
        Ok(p)
    }

    pub fn kind(&self) -> DefenseKind {
        match self {
            Self::NoDefense(_) => DefenseKind::NoDefense,
            Self::Hvip { .. } => DefenseKind::Hvip,
            Self::Havip { .. } => DefenseKind::Havip,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::NoDefense(_) => {}
            Self::Hvip { devices, probs, .. } => {
                if devices.len() < 2 {
                    return Err(Error::InvalidArgument("HVIP needs at least two devices".into()));
                }
                if probs.len() != devices.len() {
                    return Err(Error::Dimension("HVIP needs one probability per device".into()));
                }
                validate_weights(probs)?;
            }
            Self::Havip { deployments, probs } => {
                if deployments.len() < 2 {
                    return Err(Error::InvalidArgument("HAVIP needs at least two (model, device) pairs".into()));
                }
                if probs.len() != deployments.len() {
                    return Err(Error::Dimension("HAVIP needs one probability per pair".into()));
                }
                validate_weights(probs)?;
                let k = deployments[0].model.k();
                if deployments.iter().any(|d| d.model.k() != k) {
                    return Err(Error::Dimension("HAVIP models must share the class count".into()));
                }
            }
        }
        Ok(())
    }

    /// Selectable `(model, device)` branches and their weights.
    pub fn branches(&self) -> (Vec<(&HybridModel<T>, &DeviceProfile)>, Vec<f64>) {
        match self {
            Self::NoDefense(d) => (vec![(&*d.model, &d.device)], vec![1.0]),
            Self::Hvip { model, devices, probs } => {
                (devices.iter().map(|dev| (&**model, dev)).collect(), probs.clone())
            }
            Self::Havip { deployments, probs } => {
                (deployments.iter().map(|d| (&*d.model, &d.device)).collect(), probs.clone())
            }
        }
    }

    /// The first-listed branch, served without randomisation.
    pub fn baseline(&self) -> Deployment<T> {
        match self {
            Self::NoDefense(d) => d.clone(),
            Self::Hvip { model, devices, .. } => Deployment::new(model.clone(), devices[0].clone()),
            Self::Havip { deployments, .. } => deployments[0].clone(),
        }
    }

    pub fn k(&self) -> usize {
        self.branches().0[0].0.k()
    }
}

/// Samples a branch with `select_rng`, then runs it. Returns the
/// probabilities and the branch index.
pub fn serve_query<T: Scalar, R: Rng + ?Sized>(
    policy: &DefensePolicy<T>,
    x: &[T],
    shots: Shots,
    select_rng: &mut R,
    shot_rng: &mut R,
) -> Result<(Vec<T>, usize)> {
    let (branches, weights) = policy.branches();
    let i = if branches.len() == 1 { 0 } else { weighted_index(&weights, select_rng) };
    let (model, device) = branches[i];
    Ok((model.forward(x, device, shots, shot_rng)?, i))
}

/// Victim-side record of one served query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServeRecord {
    pub ordinal: u64,
    pub ticket: u64,
    pub branch: usize,
}

/// In-process victim endpoint. Query `i` (by arrival order) uses selection
/// and shot streams keyed by `i`, so a fixed query sequence is answered
/// identically on every run.
pub struct DefendedVictim<T> {
    policy: DefensePolicy<T>,
    shots: Shots,
    seed: u64,
    ordinal: AtomicU64,
    log: Mutex<Vec<ServeRecord>>,
}

impl<T: Scalar> DefendedVictim<T> {
    pub fn new(policy: DefensePolicy<T>, shots: Shots, seed: u64) -> Result<Self> {
        policy.validate()?;
        Ok(Self { policy, shots, seed, ordinal: AtomicU64::new(0), log: Mutex::new(Vec::new()) })
    }

    pub fn policy(&self) -> &DefensePolicy<T> {
        &self.policy
    }

    /// Victim-side log, in arrival order.
    pub fn log(&self) -> Vec<ServeRecord> {
        let mut log = self.log.lock().expect("log lock").clone();
        log.sort_by_key(|r| r.ordinal);
        log
    }

    /// Per-branch selection counts so far.
    pub fn branch_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.policy.branches().0.len()];
        for r in self.log.lock().expect("log lock").iter() {
            counts[r.branch] += 1;
        }
        counts
    }
}

impl<T: Scalar> VictimService<T> for DefendedVictim<T> {
    fn predict(&self, x: &[T]) -> Result<Prediction<T>> {
        let ordinal = self.ordinal.fetch_add(1, Ordering::SeqCst);
        let mut select = stream(self.seed, Purpose::Selection, &[ordinal]);
        let mut shots = stream(self.seed, Purpose::Shots, &[ordinal]);
        let (probs, branch) = serve_query(&self.policy, x, self.shots, &mut select, &mut shots)?;
        let ticket = derive_seed(self.seed, &[Purpose::Ticket as u64, ordinal]);
        self.log.lock().expect("log lock").push(ServeRecord { ordinal, ticket, branch });
        Ok(Prediction { probs, ticket })
    }
}

/// Accuracy of a black-box service on labeled data, querying rows in order.
pub fn service_accuracy<T: Scalar>(service: &dyn VictimService<T>, ds: &LabeledDataset<T>) -> Result<f64> {
    let probs = ds.features().iter().map(|x| service.predict(x).map(|p| p.probs)).collect::<Result<Vec<_>>>()?;
    accuracy_of(&probs, ds.labels())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObfuscationReport {
    pub defense: DefenseKind,
    pub shots: Shots,
    pub queries: usize,
    pub top1_mismatch_rate: f64,
    pub mean_tvd: f64,
    pub per_query_tvd: Vec<f64>,
}

/// Compares the defended service against its baseline branch on every query.
/// Both sides draw shot noise from the same per-query stream, so identical
/// branches yield identical answers.
pub fn measure_obfuscation<T: Scalar>(
    policy: &DefensePolicy<T>,
    qs: &QuerySet<T>,
    shots: Shots,
    seed: u64,
) -> Result<ObfuscationReport> {
    if qs.is_empty() {
        return Err(Error::EmptyDataset("query set".into()));
    }
    let base = policy.baseline();
    let victim = DefendedVictim::new(policy.clone(), shots, seed)?;
    let mut per_query_tvd = Vec::with_capacity(qs.len());
    let (mut base_labels, mut def_labels) = (Vec::new(), Vec::new());
    for (i, x) in qs.features().iter().enumerate() {
        let mut rng = stream(seed, Purpose::Shots, &[i as u64]);
        let b = base.model.forward(x, &base.device, shots, &mut rng)?;
        let d = victim.predict(x)?.probs;
        per_query_tvd.push(tvd(&b, &d)?);
        base_labels.push(argmax(&b));
        def_labels.push(argmax(&d));
    }
    let mean_tvd = per_query_tvd.iter().sum::<f64>() / per_query_tvd.len() as f64;
    Ok(ObfuscationReport {
        defense: policy.kind(),
        shots,
        queries: qs.len(),
        top1_mismatch_rate: mismatch_rate(&base_labels, &def_labels)?,
        mean_tvd,
        per_query_tvd,
    })
}

/// Clone results against the defended service and against its undefended
/// baseline, with matched seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefendedAttackReport {
    pub defense: DefenseKind,
    pub defended: AttackReport,
    pub undefended: AttackReport,
    /// `defended.clone_accuracy − undefended.clone_accuracy`.
    pub gap: f64,
}

pub fn evaluate_defended_attack<T: Scalar>(
    policy: &DefensePolicy<T>,
    setup: &AttackSetup<'_, T>,
    cell: &AttackCell,
    shots: Shots,
) -> Result<DefendedAttackReport> {
    let defended = run_attack(setup, cell, |seed| DefendedVictim::new(policy.clone(), shots, seed))?;
    let baseline = DefensePolicy::NoDefense(policy.baseline());
    let undefended = run_attack(setup, cell, |seed| DefendedVictim::new(baseline.clone(), shots, seed))?;
    Ok(DefendedAttackReport {
        defense: policy.kind(),
        gap: defended.clone_accuracy - undefended.clone_accuracy,
        defended,
        undefended,
    })
}
