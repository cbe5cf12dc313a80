//! Acceptance run on the reference task, one PASS/FAIL line per criterion.
//! Failures are reported but only change the exit code when
//! `ACCEPTANCE_STRICT` is set, so the workspace test run stays usable.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng as _;

use qnn_theft::attack::{run_attack, AttackCell, AttackReport, QuerySource, ResponseMode};
use qnn_theft::circuit::{execute, final_state, CircuitIR, Instruction, PqcId, PqcTemplate, Shots};
use qnn_theft::defense::{
    evaluate_defended_attack, measure_obfuscation, DefendedVictim, DefenseKind, DefensePolicy, Deployment,
};
use qnn_theft::device::DeviceProfile;
use qnn_theft::experiment::{train_model, DefenseSpec, Experiment, ExperimentConfig, PairSpec, Task, REFERENCE_CONFIG};
use qnn_theft::metrics::{accuracy, clone_ratio, tvd, Expectations, Verdict};
use qnn_theft::qnn::{spsa_gradient, Checkpoint, HybridModel};
use qnn_theft::quantum::{DensityMatrix, GateKind, GateOp, KrausChannel};
use qnn_theft::rng::{derive_seed, stream, Purpose};

const SEEDS: [u64; 3] = [1, 2, 3];

struct Outcome {
    pass: bool,
    detail: String,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn fmt3(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/")
}

/// Per-seed task, victim and attack-cell results shared by several criteria.
struct Reference {
    exp: Experiment,
    tasks: Vec<Task>,
    victims: Vec<HybridModel<f64>>,
    cells: HashMap<(u64, AttackCell), AttackReport>,
}

impl Reference {
    fn new() -> Self {
        let exp = Experiment::new(ExperimentConfig::from_toml(REFERENCE_CONFIG).unwrap()).unwrap();
        let tasks: Vec<Task> = SEEDS.iter().map(|&s| exp.task(s).unwrap()).collect();
        let victims = SEEDS.iter().zip(&tasks).map(|(&s, t)| exp.train_victim(t, s).unwrap().model).collect();
        Self { exp, tasks, victims, cells: HashMap::new() }
    }

    fn cell(queries: usize, mode: ResponseMode, n_qubits: usize, source: QuerySource) -> AttackCell {
        AttackCell { queries, mode, template: PqcId::Pqc19, n_qubits, layers: 1, source }
    }

    /// Clone accuracies and ratios of one cell over the seeds.
    fn attack(&mut self, cell: AttackCell) -> (Vec<f64>, Vec<f64>) {
        let mut acc = Vec::new();
        let mut ratio = Vec::new();
        for (i, &seed) in SEEDS.iter().enumerate() {
            if !self.cells.contains_key(&(seed, cell)) {
                let clone_device = self.exp.clone_device().unwrap();
                let setup = self.exp.attack_setup(&self.tasks[i], &clone_device, seed).unwrap();
                let policy = DefensePolicy::NoDefense(Deployment::new(
                    Arc::new(self.victims[i].clone()),
                    DeviceProfile::dev_a(),
                ));
                let report =
                    run_attack(&setup, &cell, |s| DefendedVictim::new(policy.clone(), Shots::Analytic, s)).unwrap();
                self.cells.insert((seed, cell), report);
            }
            let r = &self.cells[&(seed, cell)];
            acc.push(r.clone_accuracy);
            ratio.push(r.ratio);
        }
        (acc, ratio)
    }

    fn with_defense(&self, spec: DefenseSpec) -> Experiment {
        let mut cfg = self.exp.config.clone();
        cfg.defense = Some(spec);
        Experiment::new(cfg).unwrap()
    }
}

fn random_noisy_circuit(n: usize, seed: u64) -> CircuitIR<f64> {
    let mut rng = stream(seed, Purpose::Perturbation, &[]);
    let mut c = CircuitIR::measuring_all(n).unwrap();
    for _ in 0..24 {
        let kind = GateKind::ALL[rng.random_range(0..GateKind::ALL.len())];
        let a = rng.random_range(0..n);
        let qubits = if kind.arity() == 2 { vec![a, (a + rng.random_range(1..n)) % n] } else { vec![a] };
        let angle = kind.is_parameterized().then(|| rng.random_range(-6.3..6.3));
        c.push_gate(GateOp::new(kind, qubits.clone(), angle).unwrap()).unwrap();
        let p: f64 = rng.random_range(0.0..0.3);
        if qubits.len() == 2 {
            c.push_channel(KrausChannel::depolarizing_two_qubit(p).unwrap(), qubits).unwrap();
        } else {
            let ch = match rng.random_range(0..4) {
                0 => KrausChannel::depolarizing(p),
                1 => KrausChannel::amplitude_damping(p),
                2 => KrausChannel::phase_flip(p),
                _ => KrausChannel::bit_flip(p),
            };
            c.push_channel(ch.unwrap(), qubits).unwrap();
        }
    }
    c
}

fn c1_simulator() -> Outcome {
    let mut worst_trace: f64 = 0.0;
    let mut worst_herm: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    let mut steps = 0;
    for i in 0..200 {
        let circuit = random_noisy_circuit(4, 1000 + i);
        let mut rho = DensityMatrix::zero_state(4).unwrap();
        for inst in circuit.instructions() {
            match inst {
                Instruction::Gate(g) => rho.apply_gate_mut(g).unwrap(),
                Instruction::Channel { channel, qubits } => rho.apply_channel_mut(channel, qubits).unwrap(),
                Instruction::LayerEnd => continue,
            }
            steps += 1;
            worst_trace = worst_trace.max((rho.trace().re - 1.0).abs().max(rho.trace().im.abs()));
            worst_herm = worst_herm.max(rho.hermiticity_deviation());
            min_eig = min_eig.min(rho.min_eigenvalue());
        }
        let dense = final_state(&circuit).unwrap();
        assert_eq!(dense.data(), rho.data());
    }
    let mut worst_kraus: f64 = 0.0;
    for i in 0..50 {
        let p = i as f64 / 49.0;
        for ch in [
            KrausChannel::depolarizing(p),
            KrausChannel::amplitude_damping(p),
            KrausChannel::phase_flip(p),
            KrausChannel::bit_flip(p),
            KrausChannel::depolarizing_two_qubit(p),
        ] {
            worst_kraus = worst_kraus.max(ch.unwrap().completeness_deviation());
        }
    }
    Outcome {
        pass: worst_trace <= 1e-10 && worst_herm <= 1e-10 && min_eig >= -1e-9 && worst_kraus <= 1e-10,
        detail: format!(
            "200 circuits, {steps} steps: |tr-1| {worst_trace:.1e}, hermiticity {worst_herm:.1e}, min eigenvalue {min_eig:.1e}; Kraus deviation {worst_kraus:.1e}"
        ),
    }
}

/// Weighted `⟨Z⟩` loss of a noiseless two-qubit circuit built from plain
/// rotations and a CNOT, so the two-term shift rule is exact.
fn shift_loss(theta: &[f64]) -> f64 {
    let mut c = CircuitIR::measuring_all(2).unwrap();
    c.extend_gates([
        GateOp::ry(0, theta[0]),
        GateOp::rx(1, theta[1]),
        GateOp::cnot(0, 1),
        GateOp::ry(0, theta[2]),
        GateOp::rx(1, theta[3]),
        GateOp::cnot(1, 0),
        GateOp::rx(0, theta[4]),
    ])
    .unwrap();
    let z = execute(&c, Shots::Analytic, &mut stream(0, Purpose::Shots, &[])).unwrap();
    z[0] + 0.5 * z[1]
}

fn c2_gradient() -> Outcome {
    let theta = [0.3, -1.1, 2.0, 0.7, -0.4];
    let exact: Vec<f64> = (0..theta.len())
        .map(|i| {
            let mut up = theta;
            let mut down = theta;
            up[i] += std::f64::consts::FRAC_PI_2;
            down[i] -= std::f64::consts::FRAC_PI_2;
            (shift_loss(&up) - shift_loss(&down)) / 2.0
        })
        .collect();
    let draws = 10_000;
    let mut sum = vec![0.0; theta.len()];
    let mut sum_sq = vec![0.0; theta.len()];
    let mut rng = stream(7, Purpose::Perturbation, &[]);
    for _ in 0..draws {
        let g = spsa_gradient(|t: &[f64]| Ok(shift_loss(t)), &theta, 0.1, &mut rng).unwrap();
        for (i, gi) in g.iter().enumerate() {
            sum[i] += gi;
            sum_sq[i] += gi * gi;
        }
    }
    // Exact expectation of the c = 0.1 estimator over all 2^5 sign patterns,
    // to separate finite-difference bias from implementation error.
    let mut expected = vec![0.0; theta.len()];
    for bits in 0..1u32 << theta.len() {
        let delta: Vec<f64> = (0..theta.len()).map(|i| if bits >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
        let plus: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t + 0.1 * d).collect();
        let minus: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t - 0.1 * d).collect();
        let diff = shift_loss(&plus) - shift_loss(&minus);
        for i in 0..theta.len() {
            expected[i] += diff / (0.2 * delta[i]) / f64::from(1u32 << theta.len());
        }
    }
    let n = draws as f64;
    let (mut worst, mut worst_bias, mut worst_impl) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..theta.len() {
        let m = sum[i] / n;
        let se = ((sum_sq[i] / n - m * m) / (n - 1.0)).sqrt();
        worst = worst.max((m - exact[i]).abs() / se);
        worst_bias = worst_bias.max((expected[i] - exact[i]).abs() / se);
        worst_impl = worst_impl.max((m - expected[i]).abs() / se);
    }
    Outcome {
        pass: worst <= 3.0,
        detail: format!(
            "worst |mean - shift| = {worst:.2} SE over 5 coordinates; exact c=0.1 bias alone {worst_bias:.2} SE, mean vs exact estimator expectation {worst_impl:.2} SE"
        ),
    }
}

fn c3_victim(reference: &Reference) -> Outcome {
    let ideal = DeviceProfile::ideal();
    let template = PqcTemplate::new(PqcId::Pqc19, 4, 1).unwrap();
    let accs: Vec<f64> = SEEDS
        .iter()
        .zip(&reference.tasks)
        .map(|(&seed, task)| {
            let (m, _) =
                train_model(&template, task, &reference.exp.config.victim.train, std::slice::from_ref(&ideal), seed)
                    .unwrap();
            accuracy(&m, &task.test, &ideal, Shots::Analytic, derive_seed(seed, &[Purpose::Evaluation as u64])).unwrap()
        })
        .collect();
    let m = mean(&accs);
    Outcome { pass: m >= 0.85, detail: format!("mean test accuracy {m:.3} ({}), need >= 0.85", fmt3(&accs)) }
}

fn c4_modes(r: &mut Reference) -> Outcome {
    let (_, top1) = r.attack(Reference::cell(700, ResponseMode::Top1, 4, QuerySource::Mixed));
    let (_, topk) = r.attack(Reference::cell(700, ResponseMode::TopK, 4, QuerySource::Mixed));
    let (m1, mk) = (mean(&top1), mean(&topk));
    Outcome {
        pass: mk >= m1 && mk >= 0.90,
        detail: format!(
            "ratio Top-k {mk:.3} ({}), Top-1 {m1:.3} ({}); need Top-k >= Top-1 and >= 0.90",
            fmt3(&topk),
            fmt3(&top1)
        ),
    }
}

fn c5_sizes(r: &mut Reference) -> Outcome {
    let means: Vec<f64> = [175, 350, 700]
        .iter()
        .map(|&q| mean(&r.attack(Reference::cell(q, ResponseMode::TopK, 4, QuerySource::Mixed)).0))
        .collect();
    let band = means.iter().cloned().fold(f64::MIN, f64::max) - means.iter().cloned().fold(f64::MAX, f64::min);
    Outcome {
        pass: band <= 0.10,
        detail: format!("clone accuracy at 175/350/700 queries {}, band {band:.3}", fmt3(&means)),
    }
}

fn c6_sources(r: &mut Reference) -> Outcome {
    let mixed = mean(&r.attack(Reference::cell(700, ResponseMode::TopK, 4, QuerySource::Mixed)).0);
    let random = mean(&r.attack(Reference::cell(700, ResponseMode::TopK, 4, QuerySource::Random)).0);
    Outcome { pass: mixed >= random, detail: format!("clone accuracy mixed {mixed:.3}, random {random:.3}") }
}

fn c7_widths(r: &mut Reference) -> Outcome {
    let two = mean(&r.attack(Reference::cell(700, ResponseMode::TopK, 2, QuerySource::Mixed)).0);
    let eight = mean(&r.attack(Reference::cell(700, ResponseMode::TopK, 8, QuerySource::Mixed)).0);
    Outcome { pass: eight >= two, detail: format!("clone accuracy 8 qubits {eight:.3}, 2 qubits {two:.3}") }
}

fn hvip_spec() -> DefenseSpec {
    DefenseSpec {
        policy: DefenseKind::Hvip,
        devices: vec!["devA".into(), "devB".into()],
        pairs: vec![],
        probs: vec![0.5, 0.5],
        queries: 300,
    }
}

fn havip_spec() -> DefenseSpec {
    DefenseSpec {
        policy: DefenseKind::Havip,
        devices: vec![],
        pairs: vec![
            PairSpec { template: "PQC1".into(), device: "devA".into(), qubits: None },
            PairSpec { template: "PQC19".into(), device: "devB".into(), qubits: None },
        ],
        probs: vec![0.5, 0.5],
        queries: 300,
    }
}

/// Mean TVD and defended/undefended clone accuracies per seed.
fn defense_run(r: &Reference, spec: DefenseSpec) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let exp = r.with_defense(spec);
    let (mut tvds, mut defended, mut undefended) = (Vec::new(), Vec::new(), Vec::new());
    for (i, &seed) in SEEDS.iter().enumerate() {
        let policy = exp.defense_policy(&r.tasks[i], &r.victims[i], seed).unwrap();
        let outcome = exp.defend_eval(&r.tasks[i], &policy, seed).unwrap();
        tvds.push(outcome.obfuscation.mean_tvd);
        for a in outcome.attacks {
            defended.push(a.defended.clone_accuracy);
            undefended.push(a.undefended.clone_accuracy);
        }
    }
    (tvds, defended, undefended)
}

fn c8_c9_defenses(r: &Reference) -> (Outcome, Outcome) {
    let (hvip_tvd, hvip_def, hvip_undef) = defense_run(r, hvip_spec());
    let (havip_tvd, havip_def, havip_undef) = defense_run(r, havip_spec());
    let (th, ta) = (mean(&hvip_tvd), mean(&havip_tvd));
    let c8 = Outcome {
        pass: ta >= th && th > 0.0 && ta > 0.0,
        detail: format!("mean TVD HAVIP {ta:.4} ({}), HVIP {th:.4} ({})", fmt3(&havip_tvd), fmt3(&hvip_tvd)),
    };
    let gap_hvip = (mean(&hvip_def) - mean(&hvip_undef)).abs();
    let gap_havip = (mean(&havip_def) - mean(&havip_undef)).abs();
    let c9 = Outcome {
        pass: gap_hvip <= 0.05 && gap_havip <= 0.15,
        detail: format!(
            "clone accuracy gap HVIP {gap_hvip:.3} (defended {:.3}, undefended {:.3}), HAVIP {gap_havip:.3} (defended {:.3}, undefended {:.3})",
            mean(&hvip_def),
            mean(&hvip_undef),
            mean(&havip_def),
            mean(&havip_undef)
        ),
    };
    (c8, c9)
}

fn c10_determinism(r: &Reference) -> Outcome {
    let seed = SEEDS[0];
    let task = r.exp.task(seed).unwrap();
    let ck = |m: &HybridModel<f64>| Checkpoint::from_model(m, seed).to_json().unwrap();
    let v1 = r.exp.train_victim(&task, seed).unwrap();
    let v2 = r.exp.train_victim(&task, seed).unwrap();
    let checkpoints = ck(&v1.model) == ck(&v2.model) && ck(&v1.model) == ck(&r.victims[0]);
    let histories = serde_json::to_string(&v1.history).unwrap() == serde_json::to_string(&v2.history).unwrap();

    let cell = Reference::cell(175, ResponseMode::TopK, 4, QuerySource::Mixed);
    let clone_device = r.exp.clone_device().unwrap();
    let setup = r.exp.attack_setup(&task, &clone_device, seed).unwrap();
    let policy = DefensePolicy::NoDefense(Deployment::new(Arc::new(v1.model.clone()), DeviceProfile::dev_a()));
    let attack = || {
        serde_json::to_string(
            &run_attack(&setup, &cell, |s| DefendedVictim::new(policy.clone(), Shots::Analytic, s)).unwrap(),
        )
        .unwrap()
    };
    let attacks = attack() == attack();

    let hvip = DefensePolicy::hvip(
        Arc::new(v1.model.clone()),
        vec![DeviceProfile::dev_a(), DeviceProfile::dev_b()],
        vec![0.5, 0.5],
    )
    .unwrap();
    let qs = r.exp.obfuscation_queries(&task, seed).unwrap();
    let obf = || serde_json::to_string(&measure_obfuscation(&hvip, &qs, Shots::Analytic, seed).unwrap()).unwrap();
    let obfuscation = obf() == obf();
    let paired =
        || serde_json::to_string(&evaluate_defended_attack(&hvip, &setup, &cell, Shots::Analytic).unwrap()).unwrap();
    let defended = paired() == paired();

    Outcome {
        pass: checkpoints && histories && attacks && obfuscation && defended,
        detail: format!(
            "bitwise equal reruns: checkpoint {checkpoints}, history {histories}, attack report {attacks}, obfuscation {obfuscation}, defended attack {defended}"
        ),
    }
}

fn c11_metrics() -> Outcome {
    let mut rng = stream(11, Purpose::Evaluation, &[]);
    let mut draw = |k: usize| {
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / s).collect::<Vec<_>>()
    };
    let mut violations = 0;
    for _ in 0..1000 {
        let (p, q, w) = (draw(4), draw(4), draw(4));
        let (pq, qp, pw, qw) = (tvd(&p, &q).unwrap(), tvd(&q, &p).unwrap(), tvd(&p, &w).unwrap(), tvd(&q, &w).unwrap());
        let ok = (0.0..=1.0).contains(&pq) && pq == qp && tvd(&p, &p).unwrap() == 0.0 && pq <= pw + qw + 1e-12;
        violations += usize::from(!ok);
    }
    let mnist = format!("{:.3}", clone_ratio(0.880, 0.896).unwrap());
    let kuzushiji = format!("{:.3}", clone_ratio(0.680, 0.796).unwrap());
    Outcome {
        pass: violations == 0 && mnist == "0.982" && kuzushiji == "0.854",
        detail: format!("TVD axiom violations {violations}/1000; clone ratios {mnist}, {kuzushiji}"),
    }
}

fn main() {
    let mut failed = 0;
    let mut report = |id: &str, name: &str, limit: Option<Duration>, run: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let mut o = run();
        let elapsed = t.elapsed();
        if let Some(limit) = limit {
            if elapsed > limit {
                o.pass = false;
                o.detail.push_str(&format!("; over the {limit:?} budget"));
            }
        }
        failed += usize::from(!o.pass);
        println!("{} {id} {name}: {} [{:.1}s]", if o.pass { "PASS" } else { "FAIL" }, o.detail, elapsed.as_secs_f64());
    };

    report("C1", "simulator invariants", Some(Duration::from_secs(30)), &mut c1_simulator);
    report("C2", "SPSA vs parameter shift", Some(Duration::from_secs(120)), &mut c2_gradient);
    report("C11", "metric checks", None, &mut c11_metrics);

    let t = Instant::now();
    let mut reference = Reference::new();
    eprintln!("reference victims trained in {:.1}s", t.elapsed().as_secs_f64());
    report("C3", "victim trainability", Some(Duration::from_secs(180)), &mut || c3_victim(&reference));
    report("C4", "Top-k vs Top-1", Some(Duration::from_secs(600)), &mut || c4_modes(&mut reference));
    report("C5", "|D_A| insensitivity", None, &mut || c5_sizes(&mut reference));
    report("C6", "mixed vs random queries", None, &mut || c6_sources(&mut reference));
    report("C7", "clone width", None, &mut || c7_widths(&mut reference));
    let mut c9 = None;
    report("C8", "obfuscation ordering", Some(Duration::from_secs(300)), &mut || {
        let (c8, rest) = c8_c9_defenses(&reference);
        c9 = Some(rest);
        c8
    });
    report("C9", "defense resilience", None, &mut || c9.take().unwrap());
    report("C10", "determinism", None, &mut || c10_determinism(&reference));

    check_expectations(&reference);

    if failed == 0 {
        println!("all criteria passed");
        return;
    }
    println!("{failed} of 11 criteria failed");
    if std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}

/// Frozen reference-run values, reported but not part of any criterion.
fn check_expectations(r: &Reference) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/reference_expectations.toml");
    let mut exp = Expectations::load(&path).unwrap();
    let record = std::env::var_os("QNN_RECORD_EXPECTATIONS").is_some();
    let mut observed: Vec<(String, f64)> = Vec::new();
    for (&(seed, cell), report) in &r.cells {
        let id =
            format!("seed{seed}.{}.{}q.{}.{:?}.{}", cell.template, cell.n_qubits, cell.mode, cell.source, cell.queries)
                .to_lowercase();
        observed.push((format!("{id}.clone_accuracy"), report.clone_accuracy));
    }
    for (i, &seed) in SEEDS.iter().enumerate() {
        let acc = accuracy(&r.victims[i], &r.tasks[i].test, &DeviceProfile::dev_a(), Shots::Analytic, seed).unwrap();
        observed.push((format!("seed{seed}.victim.dev_a_accuracy"), acc));
    }
    observed.sort_by(|a, b| a.0.cmp(&b.0));
    let mut outside = 0;
    for (id, value) in observed {
        if record {
            exp.entries.remove(&id);
        }
        if matches!(exp.check(&id, value, 1e-9), Verdict::Outside { .. }) {
            outside += 1;
            println!("info: {id} = {value} differs from the frozen reference value");
        }
    }
    if record {
        exp.save(&path).unwrap();
        println!("info: reference values written to {}", path.display());
    } else {
        println!("info: {outside} reference value(s) moved");
    }
}
