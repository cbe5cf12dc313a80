use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use qnn_theft::attack::AttackReport;
use qnn_theft::defense::{DefendedAttackReport, ObfuscationReport};
use qnn_theft::experiment::{Experiment, ExperimentConfig, Task};
use qnn_theft::fsutil::write_atomic;
use qnn_theft::metrics::{MetricContext, MetricRecord};
use qnn_theft::qnn::{Checkpoint, HybridModel, TrainHistory};

#[derive(Parser)]
#[command(name = "qnn-theft", version, about = "Train QNN victims, steal them, and evaluate device-variation defenses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment description (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed_override: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the victim for every seed; writes checkpoints and histories.
    TrainVictim(Common),
    /// Run the attack sweep against each seed's victim checkpoint.
    Attack(Common),
    /// Measure obfuscation and run the attack sweep with and without the defense.
    DefendEval(Common),
    /// Aggregate everything in an output directory into one summary.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainVictim(c) => train_victim(&c),
        Command::Attack(c) => attack(&c),
        Command::DefendEval(c) => defend_eval(&c),
        Command::Report { out } => report(&out),
    }
}

fn load_experiment(c: &Common) -> Result<Experiment> {
    let text = fs::read_to_string(&c.config).with_context(|| format!("reading {}", c.config.display()))?;
    let mut cfg =
        ExperimentConfig::from_toml(&text).with_context(|| format!("invalid config {}", c.config.display()))?;
    if let Some(seed) = c.seed_override {
        cfg = cfg.with_seed(seed);
    }
    fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    let exp = Experiment::new(cfg)?;
    write_atomic(&c.out.join(EFFECTIVE_CONFIG), exp.config.to_toml().as_bytes())?;
    Ok(exp)
}

/// The config a command actually ran with, seed override applied.
const EFFECTIVE_CONFIG: &str = "config.toml";

fn checkpoint_path(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("victim-seed{seed}.json"))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_atomic(path, text.as_bytes())?;
    println!("{}", path.display());
    Ok(())
}

/// One record per line, the whole document replaced atomically.
fn write_jsonl<S: Serialize>(path: &Path, records: &[S]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct HistoryDoc {
    experiment: String,
    seed: u64,
    test_accuracy: f64,
    history: TrainHistory,
}

fn train_victim(c: &Common) -> Result<()> {
    let exp = load_experiment(c)?;
    for &seed in &exp.config.seeds {
        eprintln!("[train-victim] seed {seed}");
        let task = exp.task(seed)?;
        let run = exp.train_victim(&task, seed)?;
        eprintln!("[train-victim] seed {seed}: test accuracy {:.4}", run.accuracy);
        let ck = Checkpoint::from_model(&run.model, seed);
        ck.save(&checkpoint_path(&c.out, seed))?;
        println!("{}", checkpoint_path(&c.out, seed).display());
        let doc =
            HistoryDoc { experiment: exp.config.name.clone(), seed, test_accuracy: run.accuracy, history: run.history };
        write_json(&c.out.join(format!("history-seed{seed}.json")), &doc)?;
    }
    Ok(())
}

fn victim_for(exp: &Experiment, out: &Path, task: &Task, seed: u64) -> Result<HybridModel<f64>> {
    let path = checkpoint_path(out, seed);
    if !path.exists() {
        bail!("no victim checkpoint at {}; run train-victim first", path.display());
    }
    let ck = Checkpoint::load(&path).with_context(|| format!("loading {}", path.display()))?;
    exp.victim_from_checkpoint(&ck, task)
        .with_context(|| format!("checkpoint {} does not fit the config", path.display()))
}

#[derive(Serialize, Deserialize)]
struct AttackLine {
    experiment: String,
    seed: u64,
    #[serde(flatten)]
    outcome: CellOutcome,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CellOutcome {
    Report(AttackReport),
    Failed { cell: qnn_theft::attack::AttackCell, error: String },
}

fn attack(c: &Common) -> Result<()> {
    let exp = load_experiment(c)?;
    if exp.config.attack.is_none() {
        bail!("attack: config has no [attack] section");
    }
    let mut lines = Vec::new();
    let mut failures = 0;
    for &seed in &exp.config.seeds {
        let task = exp.task(seed)?;
        let victim = victim_for(&exp, &c.out, &task, seed)?;
        eprintln!("[attack] seed {seed}: {} cells", exp.sweep()?.cells().len());
        for (cell, result) in exp.attack(&task, &victim, seed)? {
            let outcome = match result {
                Ok(r) => {
                    eprintln!(
                        "[attack] seed {seed} {} {}q {} |D_A|={} {:?}: clone {:.4} ratio {:.4}",
                        cell.template, cell.n_qubits, cell.mode, cell.queries, cell.source, r.clone_accuracy, r.ratio
                    );
                    CellOutcome::Report(r)
                }
                Err(e) => {
                    failures += 1;
                    eprintln!("[attack] seed {seed} cell {cell:?} failed: {e}");
                    CellOutcome::Failed { cell, error: e.to_string() }
                }
            };
            lines.push(AttackLine { experiment: exp.config.name.clone(), seed, outcome });
        }
    }
    write_jsonl(&c.out.join("attack.jsonl"), &lines)?;
    if failures > 0 {
        bail!("{failures} attack cell(s) failed");
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct DefenseLine {
    experiment: String,
    seed: u64,
    report: DefendedAttackReport,
}

#[derive(Serialize, Deserialize)]
struct ObfuscationDoc {
    experiment: String,
    seed: u64,
    report: ObfuscationReport,
}

fn defend_eval(c: &Common) -> Result<()> {
    let exp = load_experiment(c)?;
    if exp.config.defense.is_none() {
        bail!("defend-eval: config has no [defense] section");
    }
    let mut lines = Vec::new();
    for &seed in &exp.config.seeds {
        let task = exp.task(seed)?;
        let victim = victim_for(&exp, &c.out, &task, seed)?;
        let policy = exp.defense_policy(&task, &victim, seed)?;
        eprintln!("[defend-eval] seed {seed}: {} policy", policy.kind());
        let outcome = exp.defend_eval(&task, &policy, seed)?;
        eprintln!(
            "[defend-eval] seed {seed}: mean TVD {:.4}, top-1 mismatch {:.4}",
            outcome.obfuscation.mean_tvd, outcome.obfuscation.top1_mismatch_rate
        );
        let doc = ObfuscationDoc { experiment: exp.config.name.clone(), seed, report: outcome.obfuscation };
        write_json(&c.out.join(format!("obfuscation-{}-seed{seed}.json", policy.kind())), &doc)?;
        for report in outcome.attacks {
            eprintln!("[defend-eval] seed {seed}: defended-clone gap {:+.4}", report.gap);
            lines.push(DefenseLine { experiment: exp.config.name.clone(), seed, report });
        }
    }
    if !lines.is_empty() {
        let kind = exp.config.defense.as_ref().map(|d| d.policy).expect("checked above");
        write_jsonl(&c.out.join(format!("defense-{kind}.jsonl")), &lines)?;
    }
    Ok(())
}

#[derive(Default)]
struct Accum {
    seeds: Vec<u64>,
    sum: f64,
}

impl Accum {
    fn add(&mut self, seed: u64, v: f64) {
        self.seeds.push(seed);
        self.sum += v;
    }
}

fn read_lines<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<D>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

/// Seed-averaged metrics over every document found in `out`.
fn report(out: &Path) -> Result<()> {
    let cfg_path = out.join(EFFECTIVE_CONFIG);
    let cfg = ExperimentConfig::from_toml(
        &fs::read_to_string(&cfg_path).with_context(|| format!("reading {}", cfg_path.display()))?,
    )?;
    let mut acc: BTreeMap<String, Accum> = BTreeMap::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(out)
        .with_context(|| format!("reading {}", out.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    for path in &entries {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.starts_with("history-seed") {
            let doc: HistoryDoc = serde_json::from_str(&fs::read_to_string(path)?)?;
            acc.entry("victim.test_accuracy".into()).or_default().add(doc.seed, doc.test_accuracy);
        } else if name == "attack.jsonl" {
            for line in read_lines::<AttackLine>(path)? {
                if let CellOutcome::Report(r) = line.outcome {
                    let c = &r.cell;
                    let id = format!("attack.{}.{}q.{}.{:?}.{}", c.template, c.n_qubits, c.mode, c.source, c.queries)
                        .to_lowercase();
                    acc.entry(format!("{id}.clone_accuracy")).or_default().add(line.seed, r.clone_accuracy);
                    acc.entry(format!("{id}.ratio")).or_default().add(line.seed, r.ratio);
                }
            }
        } else if name.starts_with("defense-") && name.ends_with(".jsonl") {
            for line in read_lines::<DefenseLine>(path)? {
                let r = &line.report;
                let c = &r.defended.cell;
                let id = format!(
                    "defense.{}.{}.{}q.{}.{:?}.{}",
                    r.defense, c.template, c.n_qubits, c.mode, c.source, c.queries
                )
                .to_lowercase();
                acc.entry(format!("{id}.defended_clone_accuracy"))
                    .or_default()
                    .add(line.seed, r.defended.clone_accuracy);
                acc.entry(format!("{id}.undefended_clone_accuracy"))
                    .or_default()
                    .add(line.seed, r.undefended.clone_accuracy);
                acc.entry(format!("{id}.gap")).or_default().add(line.seed, r.gap);
            }
        } else if name.starts_with("obfuscation-") {
            let doc: ObfuscationDoc = serde_json::from_str(&fs::read_to_string(path)?)?;
            let id = format!("obfuscation.{}", doc.report.defense);
            acc.entry(format!("{id}.mean_tvd")).or_default().add(doc.seed, doc.report.mean_tvd);
            acc.entry(format!("{id}.top1_mismatch_rate")).or_default().add(doc.seed, doc.report.top1_mismatch_rate);
        }
    }
    if acc.is_empty() {
        bail!("nothing to report in {}", out.display());
    }
    let mut records = Vec::new();
    for (name, a) in acc {
        let mean = a.sum / a.seeds.len() as f64;
        eprintln!("{name:<64} {mean:.4}  (seeds {:?})", a.seeds);
        let context = MetricContext { experiment: cfg.name.clone(), seeds: a.seeds, shots: cfg.shots };
        records.push(MetricRecord::new(name, mean, context)?);
    }
    write_jsonl(&out.join("summary.jsonl"), &records)
}
