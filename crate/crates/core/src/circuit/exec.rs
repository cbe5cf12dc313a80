use std::fmt;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{CircuitIR, Instruction};
use crate::quantum::{sample_z_from_probability, superoperator_of, DensityMatrix, LocalMatrix};
use crate::{Error, Result, Scalar};

/// Measurement mode: exact expectations, or a finite number of shots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Shots {
    #[default]
    Analytic,
    Count(usize),
}

impl fmt::Display for Shots {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shots::Analytic => f.write_str("analytic"),
            Shots::Count(n) => write!(f, "{n}"),
        }
    }
}

impl Serialize for Shots {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Shots::Analytic => s.serialize_str("analytic"),
            Shots::Count(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Shots {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(0) => Err(serde::de::Error::custom("shots must be at least 1")),
            Raw::Count(n) => Ok(Shots::Count(n as usize)),
            Raw::Name(s) if s.eq_ignore_ascii_case("analytic") => Ok(Shots::Analytic),
            Raw::Name(s) => Err(serde::de::Error::custom(format!("expected \"analytic\" or a shot count, got {s:?}"))),
        }
    }
}

fn apply_local<T: Scalar>(state: &mut DensityMatrix<T>, inst: &Instruction<T>) {
    match inst {
        Instruction::Gate(g) => {
            let s = superoperator_of(std::slice::from_ref(&g.base_unitary()));
            state.apply_superop_1q(&s, 0);
        }
        Instruction::Channel { channel, .. } => state.apply_superop_1q(&channel.superoperator(), 0),
        Instruction::LayerEnd => {}
    }
}

fn apply_dense<T: Scalar>(rho: &mut DensityMatrix<T>, inst: &Instruction<T>) -> Result<()> {
    match inst {
        Instruction::Gate(g) => rho.apply_gate_mut(g),
        Instruction::Channel { channel, qubits } => rho.apply_channel_mut(channel, qubits),
        Instruction::LayerEnd => Ok(()),
    }
}

fn to_local<T: Scalar>(single: &DensityMatrix<T>) -> LocalMatrix<T> {
    LocalMatrix::from_rows(2, single.data().to_vec())
}

fn from_local<T: Scalar>(m: LocalMatrix<T>) -> Result<DensityMatrix<T>> {
    DensityMatrix::from_data(1, m.data().to_vec())
}

/// Measured per-qubit `⟨Z⟩` after readout error, in measurement order.
///
/// While no multi-qubit operation has occurred the state is kept as a product
/// of single-qubit states; it is expanded to a dense matrix only across the
/// span between the first and last multi-qubit operation. Operations after
/// that span are local, so they act on the measured qubits' reduced states.
/// The result equals [`execute_reference`] up to round-off.
pub fn execute<T: Scalar, R: Rng + ?Sized>(circuit: &CircuitIR<T>, shots: Shots, rng: &mut R) -> Result<Vec<T>> {
    let inst = circuit.instructions();
    let is_multi = |i: &Instruction<T>| i.qubits().len() > 1;
    let first = inst.iter().position(is_multi);
    let last = inst.iter().rposition(is_multi);
    let measured = circuit.measurement().qubits();

    let mut locals = (0..circuit.n_qubits()).map(|_| DensityMatrix::zero_state(1)).collect::<Result<Vec<_>>>()?;
    for i in &inst[..first.unwrap_or(inst.len())] {
        if let Some(&q) = i.qubits().first() {
            apply_local(&mut locals[q], i);
        }
    }

    let reduced = match (first, last) {
        (Some(f), Some(l)) => {
            let factors: Vec<LocalMatrix<T>> = locals.iter().map(to_local).collect();
            let mut rho = DensityMatrix::from_product(&factors)?;
            for i in &inst[f..=l] {
                apply_dense(&mut rho, i)?;
            }
            let mut reduced =
                measured.iter().map(|&q| from_local(rho.reduced_qubit(q)?)).collect::<Result<Vec<_>>>()?;
            for i in &inst[l + 1..] {
                if let Some(slot) = i.qubits().first().and_then(|q| measured.iter().position(|m| m == q)) {
                    apply_local(&mut reduced[slot], i);
                }
            }
            reduced
        }
        _ => measured.iter().map(|&q| locals[q].clone()).collect(),
    };

    measure(&reduced.iter().map(|r| r.prob_zero(0)).collect::<Result<Vec<_>>>()?, circuit, shots, rng)
}

fn measure<T: Scalar, R: Rng + ?Sized>(p0: &[T], circuit: &CircuitIR<T>, shots: Shots, rng: &mut R) -> Result<Vec<T>> {
    p0.iter()
        .zip(circuit.measurement().readout())
        .map(|(&p, readout)| match shots {
            Shots::Analytic => Ok(readout.expected_z(p)),
            Shots::Count(n) => sample_z_from_probability(p, n, readout, rng),
        })
        .collect()
}

/// Full dense evolution from `|0…0⟩` with no structural shortcuts.
pub fn final_state<T: Scalar>(circuit: &CircuitIR<T>) -> Result<DensityMatrix<T>> {
    let mut rho = DensityMatrix::zero_state(circuit.n_qubits())?;
    for i in circuit.instructions() {
        apply_dense(&mut rho, i)?;
    }
    Ok(rho)
}

/// Reference path for [`execute`]: dense evolution, then readout.
pub fn execute_reference<T: Scalar, R: Rng + ?Sized>(
    circuit: &CircuitIR<T>,
    shots: Shots,
    rng: &mut R,
) -> Result<Vec<T>> {
    let rho = final_state(circuit)?;
    let p0 = circuit.measurement().qubits().iter().map(|&q| rho.prob_zero(q)).collect::<Result<Vec<_>>>()?;
    if p0.is_empty() {
        return Err(Error::InvalidArgument("nothing measured".into()));
    }
    measure(&p0, circuit, shots, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_model_circuit, weave_noise, PqcId, PqcTemplate};
    use crate::device::DeviceProfile;
    use crate::quantum::{GateOp, KrausChannel};
    use crate::rng::{stream, Purpose};

    #[test]
    fn product_fast_path_matches_dense_reference() {
        let mut rng = stream(17, Purpose::Init, &[]);
        for id in PqcId::ALL {
            for n in [2, 3, 4] {
                for dev in [DeviceProfile::ideal(), DeviceProfile::dev_b()] {
                    let t = PqcTemplate::new(id, n, 2).unwrap();
                    let params: Vec<f64> = (0..t.param_count()).map(|_| rng.random::<f64>() * 6.0).collect();
                    let x: Vec<f64> = (0..8).map(|_| rng.random::<f64>() * 6.0).collect();
                    let c = weave_noise(&build_model_circuit(&x, &t, &params).unwrap(), &dev).unwrap();
                    let fast = execute(&c, Shots::Analytic, &mut rng).unwrap();
                    let slow = execute_reference(&c, Shots::Analytic, &mut rng).unwrap();
                    for (a, b) in fast.iter().zip(&slow) {
                        assert!((a - b).abs() < 1e-12, "{id} n={n} {}: {a} vs {b}", dev.name);
                    }
                }
            }
        }
    }

    #[test]
    fn trailing_channel_on_unmeasured_qubit_is_ignored_correctly() {
        let mut c = CircuitIR::<f64>::new(3, vec![0, 2]).unwrap();
        c.push_gate(GateOp::ry(1, 0.9)).unwrap();
        c.push_gate(GateOp::cnot(1, 2)).unwrap();
        c.push_channel(KrausChannel::amplitude_damping(0.3).unwrap(), vec![1]).unwrap();
        c.push_channel(KrausChannel::bit_flip(0.2).unwrap(), vec![2]).unwrap();
        let mut rng = stream(0, Purpose::Shots, &[]);
        let fast = execute(&c, Shots::Analytic, &mut rng).unwrap();
        let slow = execute_reference(&c, Shots::Analytic, &mut rng).unwrap();
        assert_eq!(fast.len(), 2);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn shot_mode_tracks_analytic_mode() {
        let t = PqcTemplate::new(PqcId::Pqc19, 4, 1).unwrap();
        let c = weave_noise(
            &build_model_circuit(&[1.0f64, 2.0, 3.0, 4.0, 5.0, 0.5, 1.5, 2.5], &t, &[0.3; 12]).unwrap(),
            &DeviceProfile::dev_a(),
        )
        .unwrap();
        let mut rng = stream(4, Purpose::Shots, &[]);
        let exact = execute(&c, Shots::Analytic, &mut rng).unwrap();
        let shots = 20_000;
        let sampled = execute(&c, Shots::Count(shots), &mut rng).unwrap();
        for (e, s) in exact.iter().zip(&sampled) {
            assert!((e - s).abs() < 4.0 / (shots as f64).sqrt(), "{e} vs {s}");
        }
    }

    #[test]
    fn shots_serde() {
        #[derive(Serialize, Deserialize, PartialEq, Debug)]
        struct W {
            shots: Shots,
        }
        assert_eq!(toml::from_str::<W>("shots = \"analytic\"").unwrap().shots, Shots::Analytic);
        assert_eq!(toml::from_str::<W>("shots = 1000").unwrap().shots, Shots::Count(1000));
        assert!(toml::from_str::<W>("shots = 0").is_err());
        assert!(toml::from_str::<W>("shots = \"many\"").is_err());
        assert_eq!(toml::to_string(&W { shots: Shots::Count(5) }).unwrap().trim(), "shots = 5");
    }

    #[test]
    fn works_in_single_precision() {
        let t = PqcTemplate::new(PqcId::Pqc19, 3, 1).unwrap();
        let params: Vec<f64> = (0..9).map(|i| 0.4 * i as f64).collect();
        let x = [0.2, 1.4, 2.2, 3.1, 4.0, 5.5];
        let c64 = weave_noise(&build_model_circuit(&x, &t, &params).unwrap(), &DeviceProfile::dev_b()).unwrap();
        let p32: Vec<f32> = params.iter().map(|&v| v as f32).collect();
        let x32: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        let c32 = weave_noise(&build_model_circuit(&x32, &t, &p32).unwrap(), &DeviceProfile::dev_b()).unwrap();
        let mut rng = stream(0, Purpose::Shots, &[]);
        let a = execute(&c64, Shots::Analytic, &mut rng).unwrap();
        let b = execute(&c32, Shots::Analytic, &mut rng).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - *y as f64).abs() < 1e-5);
        }
    }
}
