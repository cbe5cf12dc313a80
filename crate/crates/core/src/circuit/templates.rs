use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::quantum::{GateKind, GateOp};
use crate::{Error, Result, Scalar};

/// Parameterized circuit families from the expressibility benchmark set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PqcId {
    #[serde(rename = "PQC1")]
    Pqc1,
    #[serde(rename = "PQC6")]
    Pqc6,
    #[serde(rename = "PQC17")]
    Pqc17,
    #[serde(rename = "PQC19")]
    Pqc19,
}

impl PqcId {
    pub const ALL: [PqcId; 4] = [PqcId::Pqc1, PqcId::Pqc6, PqcId::Pqc17, PqcId::Pqc19];

    /// Closed-form parameter count of one layer on `n` qubits.
    pub fn params_per_layer(self, n: usize) -> usize {
        match self {
            PqcId::Pqc1 => 2 * n,
            PqcId::Pqc6 => 4 * n + n * (n - 1),
            PqcId::Pqc17 => 2 * n + n / 2 + (n - 1) / 2,
            PqcId::Pqc19 => 3 * n,
        }
    }
}

impl fmt::Display for PqcId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PqcId::Pqc1 => "PQC1",
            PqcId::Pqc6 => "PQC6",
            PqcId::Pqc17 => "PQC17",
            PqcId::Pqc19 => "PQC19",
        };
        f.write_str(s)
    }
}

impl FromStr for PqcId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_uppercase();
        PqcId::ALL
            .into_iter()
            .find(|id| id.to_string() == norm)
            .ok_or_else(|| Error::Parse(format!("unknown PQC template {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PqcTemplate {
    id: PqcId,
    n_qubits: usize,
    layers: usize,
}

impl PqcTemplate {
    pub fn new(id: PqcId, n_qubits: usize, layers: usize) -> Result<Self> {
        if n_qubits == 0 || layers == 0 {
            return Err(Error::InvalidArgument("template needs at least one qubit and one layer".into()));
        }
        if id == PqcId::Pqc19 && n_qubits < 2 {
            return Err(Error::InvalidArgument("PQC19 ring needs at least two qubits".into()));
        }
        Ok(Self { id, n_qubits, layers })
    }

    pub fn id(&self) -> PqcId {
        self.id
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers * self.id.params_per_layer(self.n_qubits)
    }

    /// Gate slots of one layer in emission order. All slots are parameterized.
    fn layer_slots(&self) -> Vec<(GateKind, [usize; 2])> {
        let n = self.n_qubits;
        let rotations = |slots: &mut Vec<(GateKind, [usize; 2])>| {
            for q in 0..n {
                slots.push((GateKind::RX, [q, q]));
                slots.push((GateKind::RZ, [q, q]));
            }
        };
        let mut slots = Vec::new();
        rotations(&mut slots);
        match self.id {
            PqcId::Pqc1 => {}
            PqcId::Pqc6 => {
                for i in 0..n {
                    for j in (0..n).filter(|&j| j != i) {
                        slots.push((GateKind::CRX, [i, j]));
                    }
                }
                rotations(&mut slots);
            }
            PqcId::Pqc17 => {
                for i in 0..n / 2 {
                    slots.push((GateKind::CRX, [2 * i + 1, 2 * i]));
                }
                for i in 0..(n - 1) / 2 {
                    slots.push((GateKind::CRX, [2 * i + 2, 2 * i + 1]));
                }
            }
            PqcId::Pqc19 => {
                for i in (0..n).rev() {
                    slots.push((GateKind::CRX, [i, (i + 1) % n]));
                }
            }
        }
        slots
    }
}

/// Binds `params` (consumed in declaration order) and returns one gate list per layer.
pub fn build_pqc_layers<T: Scalar>(template: &PqcTemplate, params: &[T]) -> Result<Vec<Vec<GateOp<T>>>> {
    if params.len() != template.param_count() {
        return Err(Error::Dimension(format!(
            "{} on {} qubits x {} layers takes {} parameters, got {}",
            template.id,
            template.n_qubits,
            template.layers,
            template.param_count(),
            params.len()
        )));
    }
    let slots = template.layer_slots();
    let mut it = params.iter().copied();
    let mut layers = Vec::with_capacity(template.layers);
    for _ in 0..template.layers {
        let mut gates = Vec::with_capacity(slots.len());
        for &(kind, [a, b]) in &slots {
            let theta = it.next().expect("param count checked above");
            let qubits = if kind.arity() == 1 { vec![a] } else { vec![a, b] };
            gates.push(GateOp::new(kind, qubits, Some(theta))?);
        }
        layers.push(gates);
    }
    Ok(layers)
}

pub fn build_pqc<T: Scalar>(template: &PqcTemplate, params: &[T]) -> Result<Vec<GateOp<T>>> {
    Ok(build_pqc_layers(template, params)?.into_iter().flatten().collect())
}
