//! Model extraction: query a black-box victim, assemble the attacker dataset
//! `D_A` and train a substitute model on it.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{PqcId, PqcTemplate, Shots};
use crate::dataset::{build_query_set, LabeledDataset, QueryKind, QuerySet};
use crate::defense::{service_accuracy, VictimService};
use crate::device::DeviceProfile;
use crate::metrics::{accuracy, clone_ratio};
use crate::qnn::{argmax, train, DeviceSchedule, HybridModel, LossKind, Targets, TrainConfig, TrainData, TrainHistory};
use crate::rng::{derive_seed, Purpose};
use crate::{Error, Result, Scalar};

/// What the victim reveals per query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResponseMode {
    #[serde(rename = "top1")]
    Top1,
    #[serde(rename = "topk")]
    TopK,
}

impl ResponseMode {
    pub fn loss(self) -> LossKind {
        match self {
            ResponseMode::Top1 => LossKind::NllTop1,
            ResponseMode::TopK => LossKind::KlTopK,
        }
    }
}

impl fmt::Display for ResponseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResponseMode::Top1 => "top1",
            ResponseMode::TopK => "topk",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryLogEntry {
    pub index: usize,
    pub ticket: u64,
    pub attempts: usize,
}

/// Queries paired with victim answers.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialDataset<T> {
    features: Vec<Vec<T>>,
    responses: Targets<T>,
    mode: ResponseMode,
    k: usize,
    query_log: Vec<QueryLogEntry>,
}

impl<T: Scalar> AdversarialDataset<T> {
    pub fn features(&self) -> &[Vec<T>] {
        &self.features
    }

    pub fn responses(&self) -> &Targets<T> {
        &self.responses
    }

    pub fn mode(&self) -> ResponseMode {
        self.mode
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn query_log(&self) -> &[QueryLogEntry] {
        &self.query_log
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Total failed attempts that were retried.
    pub fn retries(&self) -> usize {
        self.query_log.iter().map(|e| e.attempts - 1).sum()
    }

    pub fn to_train_data(&self) -> Result<TrainData<T>> {
        TrainData::new(self.features.clone(), self.responses.clone(), self.k)
    }
}

/// Sends every query in order, retrying each up to `max_attempts` times.
pub fn query_victim<T: Scalar>(
    service: &dyn VictimService<T>,
    qs: &QuerySet<T>,
    mode: ResponseMode,
    max_attempts: usize,
) -> Result<AdversarialDataset<T>> {
    let max_attempts = max_attempts.max(1);
    let mut labels = Vec::new();
    let mut vectors = Vec::new();
    let mut query_log = Vec::with_capacity(qs.len());
    let mut k = None;
    for (index, x) in qs.features().iter().enumerate() {
        let mut attempts = 0;
        let answer = loop {
            attempts += 1;
            match service.predict(x) {
                Ok(a) => break a,
                Err(e) if attempts >= max_attempts => {
                    return Err(Error::QueryFailed { index, attempts, message: e.to_string() });
                }
                Err(_) => continue,
            }
        };
        let sum: f64 = answer.probs.iter().map(|p| p.as_f64()).sum();
        if answer.probs.is_empty()
            || (sum - 1.0).abs() > 1e-9
            || *k.get_or_insert(answer.probs.len()) != answer.probs.len()
        {
            return Err(Error::QueryFailed { index, attempts, message: "victim answer is not a distribution".into() });
        }
        match mode {
            ResponseMode::Top1 => labels.push(argmax(&answer.probs)),
            ResponseMode::TopK => vectors.push(answer.probs),
        }
        query_log.push(QueryLogEntry { index, ticket: answer.ticket, attempts });
    }
    let responses = match mode {
        ResponseMode::Top1 => Targets::Labels(labels),
        ResponseMode::TopK => Targets::Distributions(vectors),
    };
    Ok(AdversarialDataset { features: qs.features().to_vec(), responses, mode, k: k.unwrap_or(0), query_log })
}

/// Trains a fresh substitute of architecture `arch` on `da`. The encoder
/// re-blocks the inputs for the clone's own qubit count.
pub fn train_clone<T: Scalar>(
    da: &AdversarialDataset<T>,
    arch: &PqcTemplate,
    cfg: &TrainConfig,
    schedule: &DeviceSchedule,
    test: Option<&LabeledDataset<T>>,
    seed: u64,
) -> Result<(HybridModel<T>, TrainHistory)> {
    if da.is_empty() {
        return Err(Error::EmptyDataset("adversarial dataset".into()));
    }
    if cfg.loss != da.mode().loss() {
        return Err(Error::InvalidArgument(format!("loss {:?} cannot train on {} responses", cfg.loss, da.mode())));
    }
    let init = HybridModel::init(*arch, da.k(), derive_seed(seed, &[Purpose::Init as u64]))?;
    train(&init, &da.to_train_data()?, test, cfg, schedule, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuerySource {
    Mixed,
    Random,
}

/// One point of an attack sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttackCell {
    pub queries: usize,
    pub mode: ResponseMode,
    pub template: PqcId,
    pub n_qubits: usize,
    pub layers: usize,
    pub source: QuerySource,
}

impl AttackCell {
    /// Seed tags derived from the cell's content, so a cell's result does not
    /// depend on what else is in the sweep.
    fn tags(&self) -> [u64; 7] {
        [
            Purpose::Cell as u64,
            self.queries as u64,
            self.mode as u64,
            self.template as u64,
            self.n_qubits as u64,
            self.layers as u64,
            self.source as u64,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub queries: Vec<usize>,
    pub modes: Vec<ResponseMode>,
    pub templates: Vec<PqcId>,
    pub widths: Vec<usize>,
    pub layers: usize,
    pub sources: Vec<QuerySource>,
}

impl SweepSpec {
    pub fn cells(&self) -> Vec<AttackCell> {
        let mut out = Vec::new();
        for &queries in &self.queries {
            for &mode in &self.modes {
                for &template in &self.templates {
                    for &n_qubits in &self.widths {
                        for &source in &self.sources {
                            out.push(AttackCell { queries, mode, template, n_qubits, layers: self.layers, source });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSeeds {
    pub base: u64,
    pub cell: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub cell: AttackCell,
    pub victim_accuracy: f64,
    pub clone_accuracy: f64,
    pub ratio: f64,
    pub adversarial_size: usize,
    pub retries: usize,
    pub clone_device: String,
    pub seeds: AttackSeeds,
}

/// Everything a sweep cell needs besides the cell itself.
pub struct AttackSetup<'a, T> {
    /// Held-out victim-task data, used only to score victim and clone.
    pub test: &'a LabeledDataset<T>,
    /// Non-problem-domain pool for mixed query sets.
    pub npd_sources: &'a [LabeledDataset<T>],
    pub clone_device: &'a DeviceProfile,
    pub train: TrainConfig,
    pub eval_shots: Shots,
    pub max_attempts: usize,
    pub seed: u64,
}

impl<T: Scalar> AttackSetup<'_, T> {
    pub fn cell_seed(&self, cell: &AttackCell) -> u64 {
        derive_seed(self.seed, &cell.tags())
    }

    pub fn query_set(&self, cell: &AttackCell) -> Result<QuerySet<T>> {
        let seed = derive_seed(self.cell_seed(cell), &[Purpose::Query as u64]);
        match cell.source {
            QuerySource::Mixed => build_query_set(QueryKind::MixedNpd(self.npd_sources), cell.queries, seed),
            QuerySource::Random => build_query_set(QueryKind::RandomUniform { d: self.test.dim() }, cell.queries, seed),
        }
    }
}

/// Runs one cell against the victim produced by `victim(cell_seed)`.
pub fn run_attack<T, S, F>(setup: &AttackSetup<'_, T>, cell: &AttackCell, victim: F) -> Result<AttackReport>
where
    T: Scalar,
    S: VictimService<T>,
    F: Fn(u64) -> Result<S>,
{
    let seed = setup.cell_seed(cell);
    let qs = setup.query_set(cell)?;
    let service = victim(seed)?;
    let da = query_victim(&service, &qs, cell.mode, setup.max_attempts)?;
    let victim_accuracy = service_accuracy(&victim(seed)?, setup.test)?;

    let arch = PqcTemplate::new(cell.template, cell.n_qubits, cell.layers)?;
    let cfg = TrainConfig { loss: cell.mode.loss(), ..setup.train.clone() };
    let schedule = DeviceSchedule::single(setup.clone_device.clone(), cfg.epochs)?;
    let (clone, _) = train_clone(&da, &arch, &cfg, &schedule, None, seed)?;
    let eval_seed = derive_seed(seed, &[Purpose::Evaluation as u64]);
    let clone_accuracy = accuracy(&clone, setup.test, setup.clone_device, setup.eval_shots, eval_seed)?;
    Ok(AttackReport {
        cell: *cell,
        victim_accuracy,
        clone_accuracy,
        ratio: clone_ratio(clone_accuracy, victim_accuracy)?,
        adversarial_size: da.len(),
        retries: da.retries(),
        clone_device: setup.clone_device.name.clone(),
        seeds: AttackSeeds { base: setup.seed, cell: seed },
    })
}

/// Runs every cell independently; a failing cell does not stop the others.
pub fn run_attack_suite<T, S, F>(
    setup: &AttackSetup<'_, T>,
    sweep: &SweepSpec,
    victim: F,
) -> Vec<(AttackCell, Result<AttackReport>)>
where
    T: Scalar,
    S: VictimService<T>,
    F: Fn(u64) -> Result<S> + Sync,
{
    sweep.cells().into_par_iter().map(|cell| (cell, run_attack(setup, &cell, &victim))).collect()
}
