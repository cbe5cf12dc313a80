//! Whole experiments described as one TOML document: task, victim, attack
//! sweep and defense. Used by the command-line driver and the acceptance run.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::attack::{run_attack_suite, AttackCell, AttackReport, AttackSetup, QuerySource, ResponseMode, SweepSpec};
use crate::circuit::{PqcId, PqcTemplate, Shots};
use crate::dataset::{
    build_query_set, load_csv, make_blobs, scale_features, split, BlobSpec, LabeledDataset, QueryKind, QuerySet,
    SplitRule,
};
use crate::defense::{
    evaluate_defended_attack, measure_obfuscation, DefendedAttackReport, DefendedVictim, DefenseKind, DefensePolicy,
    Deployment, ObfuscationReport,
};
use crate::device::{DeviceProfile, Registry};
use crate::metrics::accuracy;
use crate::qnn::{train, Checkpoint, DeviceSchedule, HybridModel, TrainConfig, TrainData, TrainHistory};
use crate::rng::{derive_seed, Purpose};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    Blobs {
        k: usize,
        d: usize,
        n_per_class: usize,
        separation: f64,
        #[serde(default)]
        split: SplitRule,
    },
    Csv {
        path: PathBuf,
        d: usize,
        #[serde(default)]
        split: SplitRule,
        /// Non-problem-domain files for mixed query sets.
        #[serde(default)]
        npd_paths: Vec<PathBuf>,
    },
}

impl TaskSpec {
    /// The pinned reference task: 4 classes, d = 8, 400 train / 200 test.
    pub fn reference() -> Self {
        let b = BlobSpec::default();
        TaskSpec::Blobs {
            k: b.k,
            d: b.d,
            n_per_class: b.n_per_class,
            separation: b.separation,
            split: SplitRule::Count(400),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            TaskSpec::Blobs { d, .. } | TaskSpec::Csv { d, .. } => *d,
        }
    }
}

fn default_layers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VictimSpec {
    pub template: String,
    pub qubits: usize,
    #[serde(default = "default_layers")]
    pub layers: usize,
    /// One device, or two for a most-epochs / last-fifth schedule.
    pub devices: Vec<String>,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_npd_sources() -> usize {
    3
}

fn default_attempts() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub queries: Vec<usize>,
    pub modes: Vec<ResponseMode>,
    pub templates: Vec<String>,
    pub widths: Vec<usize>,
    #[serde(default = "default_layers")]
    pub layers: usize,
    pub sources: Vec<QuerySource>,
    pub clone_device: String,
    #[serde(default = "default_npd_sources")]
    pub npd_sources: usize,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
    /// Clone training; defaults to the victim's with the loss set by the
    /// response mode. An explicit block must name the loss matching every mode.
    #[serde(default)]
    pub train: Option<TrainConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub template: String,
    pub device: String,
    #[serde(default)]
    pub qubits: Option<usize>,
}

fn default_defense_queries() -> usize {
    300
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefenseSpec {
    pub policy: DefenseKind,
    /// HVIP devices; the victim model is trained on the first for most epochs.
    #[serde(default)]
    pub devices: Vec<String>,
    /// HAVIP `(template, device)` pairs, each trained on its own device.
    #[serde(default)]
    pub pairs: Vec<PairSpec>,
    /// Selection probabilities; uniform when omitted.
    #[serde(default)]
    pub probs: Vec<f64>,
    #[serde(default = "default_defense_queries")]
    pub queries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub shots: Shots,
    pub task: TaskSpec,
    pub victim: VictimSpec,
    #[serde(default)]
    pub attack: Option<AttackSpec>,
    #[serde(default)]
    pub defense: Option<DefenseSpec>,
    /// Added to, or replacing by name, the built-in device profiles.
    #[serde(default)]
    pub devices: Vec<DeviceProfile>,
}

fn parse_template(name: &str, path: &str) -> Result<PqcId> {
    name.parse().map_err(|_| Error::validation(path, format!("unknown PQC template {name:?}")))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn registry(&self) -> Result<Registry> {
        let mut devices = Registry::builtin().devices().to_vec();
        for d in &self.devices {
            match devices.iter_mut().find(|x| x.name == d.name) {
                Some(slot) => *slot = d.clone(),
                None => devices.push(d.clone()),
            }
        }
        Registry::new(devices)
    }

    fn device(&self, registry: &Registry, name: &str, path: &str) -> Result<DeviceProfile> {
        registry.get(name).cloned().map_err(|_| Error::validation(path, format!("unknown device {name:?}")))
    }

    pub fn validate(&self) -> Result<()> {
        let registry = self.registry()?;
        if self.seeds.is_empty() {
            return Err(Error::validation("seeds", "at least one seed is required"));
        }
        match &self.task {
            TaskSpec::Blobs { k, d, n_per_class, separation, .. } => {
                if *k == 0 || *d == 0 || *n_per_class == 0 || !(*separation >= 0.0) {
                    return Err(Error::validation("task", "blobs need k, d, n_per_class ≥ 1 and separation ≥ 0"));
                }
            }
            TaskSpec::Csv { d, .. } if *d == 0 => return Err(Error::validation("task.d", "must be at least 1")),
            TaskSpec::Csv { .. } => {}
        }

        let v = &self.victim;
        let id = parse_template(&v.template, "victim.template")?;
        PqcTemplate::new(id, v.qubits, v.layers).map_err(|e| Error::validation("victim", e.to_string()))?;
        if !(1..=2).contains(&v.devices.len()) {
            return Err(Error::validation("victim.devices", "list one or two devices"));
        }
        for (i, d) in v.devices.iter().enumerate() {
            self.device(&registry, d, &format!("victim.devices[{i}]"))?;
        }
        v.train.validate("victim.train")?;

        if let Some(a) = &self.attack {
            for (i, t) in a.templates.iter().enumerate() {
                parse_template(t, &format!("attack.templates[{i}]"))?;
            }
            for (field, empty) in [
                ("queries", a.queries.is_empty()),
                ("modes", a.modes.is_empty()),
                ("templates", a.templates.is_empty()),
                ("widths", a.widths.is_empty()),
                ("sources", a.sources.is_empty()),
            ] {
                if empty {
                    return Err(Error::validation(format!("attack.{field}"), "must not be empty"));
                }
            }
            if a.queries.contains(&0) {
                return Err(Error::validation("attack.queries", "query counts must be at least 1"));
            }
            if a.widths.contains(&0) {
                return Err(Error::validation("attack.widths", "widths must be at least 1"));
            }
            self.device(&registry, &a.clone_device, "attack.clone_device")?;
            if let Some(t) = &a.train {
                t.validate("attack.train")?;
                if let Some(m) = a.modes.iter().find(|m| m.loss() != t.loss) {
                    return Err(Error::validation(
                        "attack.train.loss",
                        format!("{} does not fit response mode {m}", t.loss),
                    ));
                }
            }
            if a.sources.contains(&QuerySource::Mixed) {
                match &self.task {
                    TaskSpec::Csv { npd_paths, .. } if npd_paths.is_empty() => {
                        return Err(Error::validation(
                            "task.npd_paths",
                            "mixed queries over a CSV task need source files",
                        ));
                    }
                    TaskSpec::Blobs { .. } if a.npd_sources == 0 => {
                        return Err(Error::validation("attack.npd_sources", "must be at least 1"));
                    }
                    _ => {}
                }
            }
        }

        if let Some(d) = &self.defense {
            let branches = match d.policy {
                DefenseKind::NoDefense => 1,
                DefenseKind::Hvip => {
                    if d.devices.len() < 2 {
                        return Err(Error::validation("defense.devices", "HVIP needs at least two devices"));
                    }
                    for (i, n) in d.devices.iter().enumerate() {
                        self.device(&registry, n, &format!("defense.devices[{i}]"))?;
                    }
                    d.devices.len()
                }
                DefenseKind::Havip => {
                    if d.pairs.len() < 2 {
                        return Err(Error::validation("defense.pairs", "HAVIP needs at least two pairs"));
                    }
                    for (i, p) in d.pairs.iter().enumerate() {
                        let id = parse_template(&p.template, &format!("defense.pairs[{i}].template"))?;
                        self.device(&registry, &p.device, &format!("defense.pairs[{i}].device"))?;
                        PqcTemplate::new(id, p.qubits.unwrap_or(v.qubits), v.layers)
                            .map_err(|e| Error::validation(format!("defense.pairs[{i}]"), e.to_string()))?;
                    }
                    d.pairs.len()
                }
            };
            if !d.probs.is_empty() {
                if d.probs.len() != branches {
                    return Err(Error::validation("defense.probs", format!("expected {branches} probabilities")));
                }
                crate::device::validate_weights(&d.probs)
                    .map_err(|e| Error::validation("defense.probs", e.to_string()))?;
            }
            if d.queries == 0 {
                return Err(Error::validation("defense.queries", "must be at least 1"));
            }
        }
        Ok(())
    }

    /// Replaces the seed list with a single seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seeds = vec![seed];
        self
    }
}

/// Train/test data plus the non-problem-domain pool for one seed.
#[derive(Debug, Clone)]
pub struct Task {
    pub train: LabeledDataset<f64>,
    pub test: LabeledDataset<f64>,
    pub npd: Vec<LabeledDataset<f64>>,
}

/// NPD sources for blob tasks are blob tasks of the same shape drawn from
/// unrelated seeds, each scaled on its own.
pub fn build_task(spec: &TaskSpec, npd_count: usize, seed: u64) -> Result<Task> {
    match spec {
        TaskSpec::Blobs { k, d, n_per_class, separation, split: rule } => {
            let blobs = BlobSpec { k: *k, d: *d, n_per_class: *n_per_class, separation: *separation };
            let ds = make_blobs(&blobs, seed)?;
            let (train, test) = split(&ds, *rule, seed)?;
            let npd = (0..npd_count)
                .map(|j| make_blobs(&blobs, derive_seed(seed, &[Purpose::Query as u64, j as u64])))
                .collect::<Result<_>>()?;
            Ok(Task { train, test, npd })
        }
        TaskSpec::Csv { path, d, split: rule, npd_paths } => {
            let ds = scale_features(&load_csv(path, *d)?)?;
            let (train, test) = split(&ds, *rule, seed)?;
            let npd =
                npd_paths.iter().map(|p| load_csv(p, *d).and_then(|s| scale_features(&s))).collect::<Result<_>>()?;
            Ok(Task { train, test, npd })
        }
    }
}

/// One device trains every epoch; two split epochs most-first / last-fifth.
pub fn schedule_for(devices: &[DeviceProfile], epochs: usize) -> Result<DeviceSchedule> {
    match devices {
        [one] => DeviceSchedule::single(one.clone(), epochs),
        [first, second] => DeviceSchedule::split(first.clone(), second.clone(), epochs),
        _ => Err(Error::InvalidArgument("schedule takes one or two devices".into())),
    }
}

/// Initialises and trains a model on the task's training split.
pub fn train_model(
    template: &PqcTemplate,
    task: &Task,
    cfg: &TrainConfig,
    devices: &[DeviceProfile],
    seed: u64,
) -> Result<(HybridModel<f64>, TrainHistory)> {
    let init = HybridModel::init(*template, task.train.k(), derive_seed(seed, &[Purpose::Init as u64]))?;
    let schedule = schedule_for(devices, cfg.epochs)?;
    train(&init, &TrainData::labeled(&task.train)?, Some(&task.test), cfg, &schedule, seed)
}

#[derive(Debug, Clone)]
pub struct VictimRun {
    pub model: HybridModel<f64>,
    pub history: TrainHistory,
    /// Test accuracy on the primary device.
    pub accuracy: f64,
    pub devices: Vec<DeviceProfile>,
}

pub struct Experiment {
    pub config: ExperimentConfig,
    pub registry: Registry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenseOutcome {
    pub obfuscation: ObfuscationReport,
    pub attacks: Vec<DefendedAttackReport>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let registry = config.registry()?;
        Ok(Self { config, registry })
    }

    fn devices(&self, names: &[String]) -> Result<Vec<DeviceProfile>> {
        names.iter().map(|n| self.registry.get(n).cloned()).collect()
    }

    fn npd_count(&self) -> usize {
        self.config.attack.as_ref().map_or(default_npd_sources(), |a| a.npd_sources)
    }

    pub fn task(&self, seed: u64) -> Result<Task> {
        build_task(&self.config.task, self.npd_count(), seed)
    }

    pub fn victim_template(&self) -> Result<PqcTemplate> {
        let v = &self.config.victim;
        PqcTemplate::new(parse_template(&v.template, "victim.template")?, v.qubits, v.layers)
    }

    pub fn train_victim(&self, task: &Task, seed: u64) -> Result<VictimRun> {
        let devices = self.devices(&self.config.victim.devices)?;
        let (model, history) = train_model(&self.victim_template()?, task, &self.config.victim.train, &devices, seed)?;
        let acc = accuracy(
            &model,
            &task.test,
            &devices[0],
            self.config.shots,
            derive_seed(seed, &[Purpose::Evaluation as u64]),
        )?;
        Ok(VictimRun { model, history, accuracy: acc, devices })
    }

    /// Rebuilds a victim from its checkpoint after checking it matches the
    /// configured architecture and task.
    pub fn victim_from_checkpoint(&self, ck: &Checkpoint, task: &Task) -> Result<HybridModel<f64>> {
        let t = self.victim_template()?;
        if ck.template != t.id() || ck.n_qubits != t.n_qubits() || ck.layers != t.layers() {
            return Err(Error::validation(
                "victim",
                format!(
                    "checkpoint holds {}/{}q/L{} but the config asks for {}/{}q/L{}",
                    ck.template,
                    ck.n_qubits,
                    ck.layers,
                    t.id(),
                    t.n_qubits(),
                    t.layers()
                ),
            ));
        }
        if ck.k != task.train.k() {
            return Err(Error::validation(
                "task",
                format!("checkpoint has {} classes, task has {}", ck.k, task.train.k()),
            ));
        }
        ck.to_model()
    }

    fn attack_spec(&self) -> Result<&AttackSpec> {
        self.config.attack.as_ref().ok_or_else(|| Error::validation("attack", "section is missing"))
    }

    pub fn sweep(&self) -> Result<SweepSpec> {
        let a = self.attack_spec()?;
        Ok(SweepSpec {
            queries: a.queries.clone(),
            modes: a.modes.clone(),
            templates: a.templates.iter().map(|t| parse_template(t, "attack.templates")).collect::<Result<_>>()?,
            widths: a.widths.clone(),
            layers: a.layers,
            sources: a.sources.clone(),
        })
    }

    pub fn attack_setup<'a>(
        &self,
        task: &'a Task,
        clone_device: &'a DeviceProfile,
        seed: u64,
    ) -> Result<AttackSetup<'a, f64>> {
        let a = self.attack_spec()?;
        Ok(AttackSetup {
            test: &task.test,
            npd_sources: &task.npd,
            clone_device,
            train: a.train.clone().unwrap_or_else(|| self.config.victim.train.clone()),
            eval_shots: self.config.shots,
            max_attempts: a.max_attempts,
            seed,
        })
    }

    pub fn clone_device(&self) -> Result<DeviceProfile> {
        Ok(self.registry.get(&self.attack_spec()?.clone_device)?.clone())
    }

    /// Sweep against the victim served undefended on its primary device.
    pub fn attack(
        &self,
        task: &Task,
        victim: &HybridModel<f64>,
        seed: u64,
    ) -> Result<Vec<(AttackCell, Result<AttackReport>)>> {
        let clone_device = self.clone_device()?;
        let setup = self.attack_setup(task, &clone_device, seed)?;
        let primary = self.registry.get(&self.config.victim.devices[0])?.clone();
        let policy = DefensePolicy::NoDefense(Deployment::new(Arc::new(victim.clone()), primary));
        let shots = self.config.shots;
        Ok(run_attack_suite(&setup, &self.sweep()?, |s| DefendedVictim::new(policy.clone(), shots, s)))
    }

    /// Trains whatever models the defense serves. `victim` is reused for the
    /// no-defense and HVIP policies.
    pub fn defense_policy(&self, task: &Task, victim: &HybridModel<f64>, seed: u64) -> Result<DefensePolicy<f64>> {
        let d = self.config.defense.as_ref().ok_or_else(|| Error::validation("defense", "section is missing"))?;
        let uniform = |n: usize| if d.probs.is_empty() { vec![1.0 / n as f64; n] } else { d.probs.clone() };
        match d.policy {
            DefenseKind::NoDefense => {
                let dev = self.registry.get(&self.config.victim.devices[0])?.clone();
                Ok(DefensePolicy::NoDefense(Deployment::new(Arc::new(victim.clone()), dev)))
            }
            DefenseKind::Hvip => {
                DefensePolicy::hvip(Arc::new(victim.clone()), self.devices(&d.devices)?, uniform(d.devices.len()))
            }
            DefenseKind::Havip => {
                let mut deployments = Vec::new();
                for (i, p) in d.pairs.iter().enumerate() {
                    let id = parse_template(&p.template, "defense.pairs")?;
                    let template =
                        PqcTemplate::new(id, p.qubits.unwrap_or(self.config.victim.qubits), self.config.victim.layers)?;
                    let device = self.registry.get(&p.device)?.clone();
                    let pair_seed = derive_seed(seed, &[Purpose::Cell as u64, i as u64]);
                    let (m, _) = train_model(
                        &template,
                        task,
                        &self.config.victim.train,
                        std::slice::from_ref(&device),
                        pair_seed,
                    )?;
                    deployments.push(Deployment::new(Arc::new(m), device));
                }
                DefensePolicy::havip(deployments, uniform(d.pairs.len()))
            }
        }
    }

    /// Query set for obfuscation measurement: the first attack source kind.
    pub fn obfuscation_queries(&self, task: &Task, seed: u64) -> Result<QuerySet<f64>> {
        let m = self.config.defense.as_ref().map_or(default_defense_queries(), |d| d.queries);
        let source = self.config.attack.as_ref().and_then(|a| a.sources.first().copied()).unwrap_or(QuerySource::Mixed);
        let qseed = derive_seed(seed, &[Purpose::Query as u64, u64::MAX]);
        match source {
            QuerySource::Mixed if !task.npd.is_empty() => build_query_set(QueryKind::MixedNpd(&task.npd), m, qseed),
            _ => build_query_set(QueryKind::RandomUniform { d: task.test.dim() }, m, qseed),
        }
    }

    pub fn defend_eval(&self, task: &Task, policy: &DefensePolicy<f64>, seed: u64) -> Result<DefenseOutcome> {
        let obfuscation = measure_obfuscation(policy, &self.obfuscation_queries(task, seed)?, self.config.shots, seed)?;
        let mut attacks = Vec::new();
        if self.config.attack.is_some() {
            let clone_device = self.clone_device()?;
            let setup = self.attack_setup(task, &clone_device, seed)?;
            for cell in self.sweep()?.cells() {
                attacks.push(evaluate_defended_attack(policy, &setup, &cell, self.config.shots)?);
            }
        }
        Ok(DefenseOutcome { obfuscation, attacks })
    }
}

/// The reference experiment: PQC19 victim on 4 qubits trained 20 epochs on
/// devA and 5 on devB, Top-k attack with 700 mixed queries and a devB clone,
/// HVIP over devA/devB.
pub const REFERENCE_CONFIG: &str = r#"
name = "reference"
seeds = [1, 2, 3]
shots = "analytic"

[task]
kind = "blobs"
k = 4
d = 8
n_per_class = 150
separation = 8.0
split = { count = 400 }

[victim]
template = "PQC19"
qubits = 4
layers = 1
devices = ["devA", "devB"]

[victim.train]
epochs = 25
learning_rate = 0.01
batch_size = 32
loss = "nll_top1"
spsa_c = 0.1
shots = "analytic"

[attack]
queries = [700]
modes = ["topk"]
templates = ["PQC19"]
widths = [4]
layers = 1
sources = ["mixed"]
clone_device = "devB"

[defense]
policy = "hvip"
devices = ["devA", "devB"]
probs = [0.5, 0.5]
queries = 300
"#;
