//! Circuit construction: angle encoding, PQC templates, device-noise weaving
//! and execution.

mod encoding;
mod exec;
mod noise;
mod templates;

pub use encoding::{encode_angles, feature_blocks};
pub use exec::{execute, execute_reference, final_state, Shots};
pub use noise::weave_noise;
pub use templates::{build_pqc, build_pqc_layers, PqcId, PqcTemplate};

use crate::quantum::{GateOp, KrausChannel, ReadoutConfusion};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub enum Instruction<T> {
    Gate(GateOp<T>),
    Channel {
        channel: KrausChannel<T>,
        qubits: Vec<usize>,
    },
    /// Marks the end of an encoding block or template layer.
    LayerEnd,
}

impl<T: Scalar> Instruction<T> {
    pub fn qubits(&self) -> &[usize] {
        match self {
            Instruction::Gate(g) => g.qubits(),
            Instruction::Channel { qubits, .. } => qubits,
            Instruction::LayerEnd => &[],
        }
    }
}

/// Measured qubits plus the readout confusion attached to each of them.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    qubits: Vec<usize>,
    readout: Vec<ReadoutConfusion>,
}

impl Measurement {
    pub fn qubits(&self) -> &[usize] {
        &self.qubits
    }

    pub fn readout(&self) -> &[ReadoutConfusion] {
        &self.readout
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitIR<T> {
    n_qubits: usize,
    instructions: Vec<Instruction<T>>,
    measurement: Measurement,
    noisy: bool,
}

impl<T: Scalar> CircuitIR<T> {
    pub fn new(n_qubits: usize, measured: Vec<usize>) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::InvalidArgument("circuit needs at least one qubit".into()));
        }
        if measured.is_empty() {
            return Err(Error::InvalidArgument("at least one qubit must be measured".into()));
        }
        for (i, &q) in measured.iter().enumerate() {
            if q >= n_qubits {
                return Err(Error::QubitOutOfRange { index: q, n_qubits });
            }
            if measured[..i].contains(&q) {
                return Err(Error::DuplicateQubits { kind: "measurement".into(), qubits: measured });
            }
        }
        let readout = vec![ReadoutConfusion::IDENTITY; measured.len()];
        Ok(Self {
            n_qubits,
            instructions: Vec::new(),
            measurement: Measurement { qubits: measured, readout },
            noisy: false,
        })
    }

    /// Circuit measuring every qubit.
    pub fn measuring_all(n_qubits: usize) -> Result<Self> {
        Self::new(n_qubits, (0..n_qubits).collect())
    }

    pub fn push_gate(&mut self, gate: GateOp<T>) -> Result<()> {
        gate.validate(self.n_qubits)?;
        self.instructions.push(Instruction::Gate(gate));
        Ok(())
    }

    pub fn extend_gates(&mut self, gates: impl IntoIterator<Item = GateOp<T>>) -> Result<()> {
        gates.into_iter().try_for_each(|g| self.push_gate(g))
    }

    pub fn push_channel(&mut self, channel: KrausChannel<T>, qubits: Vec<usize>) -> Result<()> {
        if qubits.len() != channel.n_qubits() {
            return Err(Error::Dimension("channel arity does not match qubit list".into()));
        }
        if let Some(&index) = qubits.iter().find(|&&q| q >= self.n_qubits) {
            return Err(Error::QubitOutOfRange { index, n_qubits: self.n_qubits });
        }
        self.instructions.push(Instruction::Channel { channel, qubits });
        Ok(())
    }

    pub fn end_layer(&mut self) {
        self.instructions.push(Instruction::LayerEnd);
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn instructions(&self) -> &[Instruction<T>] {
        &self.instructions
    }

    pub fn measurement(&self) -> &Measurement {
        &self.measurement
    }

    pub fn is_noisy(&self) -> bool {
        self.noisy
    }

    pub fn gates(&self) -> impl Iterator<Item = &GateOp<T>> {
        self.instructions.iter().filter_map(|i| match i {
            Instruction::Gate(g) => Some(g),
            _ => None,
        })
    }

    pub fn noise_points(&self) -> impl Iterator<Item = (&KrausChannel<T>, &[usize])> {
        self.instructions.iter().filter_map(|i| match i {
            Instruction::Channel { channel, qubits } => Some((channel, qubits.as_slice())),
            _ => None,
        })
    }

    pub fn gate_count(&self) -> usize {
        self.gates().count()
    }

    pub fn channel_count(&self) -> usize {
        self.noise_points().count()
    }

    pub(crate) fn set_readout(&mut self, readout: Vec<ReadoutConfusion>) {
        debug_assert_eq!(readout.len(), self.measurement.qubits.len());
        self.measurement.readout = readout;
    }

    pub(crate) fn into_noisy(mut self, instructions: Vec<Instruction<T>>) -> Self {
        self.instructions = instructions;
        self.noisy = true;
        self
    }
}

/// Encoding block followed by the bound template, with layer markers.
pub fn build_model_circuit<T: Scalar>(features: &[T], template: &PqcTemplate, params: &[T]) -> Result<CircuitIR<T>> {
    let n = template.n_qubits();
    let mut circuit = CircuitIR::measuring_all(n)?;
    circuit.extend_gates(encode_angles(features, n)?)?;
    circuit.end_layer();
    for layer in build_pqc_layers(template, params)? {
        circuit.extend_gates(layer)?;
        circuit.end_layer();
    }
    Ok(circuit)
}
