//! Named device noise profiles, the registry document, and weighted device
//! selection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::quantum::ReadoutConfusion;
use crate::{Error, Result};

/// Readout confusion as written in the registry document: one matrix for every
/// qubit, or one per qubit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReadoutSpec {
    Single([[f64; 2]; 2]),
    PerQubit(Vec<[[f64; 2]; 2]>),
}

impl ReadoutSpec {
    fn matrices(&self) -> Vec<[[f64; 2]; 2]> {
        match self {
            ReadoutSpec::Single(m) => vec![*m],
            ReadoutSpec::PerQubit(ms) => ms.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    /// Depolarizing probability after each single-qubit gate.
    pub p1: f64,
    /// Depolarizing probability after each two-qubit gate.
    pub p2: f64,
    /// Amplitude damping per layer boundary.
    pub gamma: f64,
    pub p_phase: f64,
    pub p_bit: f64,
    pub readout: ReadoutSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub basis_gates: Vec<String>,
}

impl DeviceProfile {
    pub fn ideal() -> Self {
        Self {
            name: "ideal".into(),
            p1: 0.0,
            p2: 0.0,
            gamma: 0.0,
            p_phase: 0.0,
            p_bit: 0.0,
            readout: ReadoutSpec::Single(ReadoutConfusion::IDENTITY.rows()),
            basis_gates: Vec::new(),
        }
    }

    pub fn dev_a() -> Self {
        Self {
            name: "devA".into(),
            p1: 0.001,
            p2: 0.01,
            gamma: 0.002,
            p_phase: 0.002,
            p_bit: 0.002,
            readout: ReadoutSpec::Single([[0.97, 0.03], [0.05, 0.95]]),
            basis_gates: ibm_basis(),
        }
    }

    pub fn dev_b() -> Self {
        Self {
            name: "devB".into(),
            p1: 0.005,
            p2: 0.05,
            gamma: 0.01,
            p_phase: 0.01,
            p_bit: 0.01,
            readout: ReadoutSpec::Single([[0.93, 0.07], [0.10, 0.90]]),
            basis_gates: ibm_basis(),
        }
    }

    /// Validates ranges; `path` prefixes error locations (e.g. `devices[2]`).
    pub fn validate(&self, path: &str) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::validation(format!("{path}.name"), "must not be empty"));
        }
        for (field, v) in
            [("p1", self.p1), ("p2", self.p2), ("gamma", self.gamma), ("p_phase", self.p_phase), ("p_bit", self.p_bit)]
        {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(format!("{path}.{field}"), format!("{v} is outside [0, 1]")));
            }
        }
        let ms = self.readout.matrices();
        if ms.is_empty() {
            return Err(Error::validation(format!("{path}.readout"), "needs at least one matrix"));
        }
        for (i, m) in ms.into_iter().enumerate() {
            ReadoutConfusion::new(m).map_err(|e| Error::validation(format!("{path}.readout[{i}]"), e.to_string()))?;
        }
        Ok(())
    }

    /// Readout confusion for `qubit`; a single matrix is broadcast.
    pub fn readout_for(&self, qubit: usize) -> Result<ReadoutConfusion> {
        let m = match &self.readout {
            ReadoutSpec::Single(m) => *m,
            ReadoutSpec::PerQubit(ms) => *ms.get(qubit).ok_or_else(|| {
                Error::Dimension(format!("device {} has no readout entry for qubit {qubit}", self.name))
            })?,
        };
        ReadoutConfusion::new(m)
    }

    pub fn is_noiseless(&self) -> bool {
        [self.p1, self.p2, self.gamma, self.p_phase, self.p_bit].iter().all(|&v| v == 0.0)
            && self.readout.matrices().iter().all(|&m| m == ReadoutConfusion::IDENTITY.rows())
    }
}

fn ibm_basis() -> Vec<String> {
    ["id", "rz", "sx", "x", "cx"].into_iter().map(String::from).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RegistryDocument {
    devices: Vec<DeviceProfile>,
}

/// Read-only collection of uniquely named profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct Registry {
    devices: Vec<DeviceProfile>,
}

impl Registry {
    pub fn new(devices: Vec<DeviceProfile>) -> Result<Self> {
        for (i, d) in devices.iter().enumerate() {
            d.validate(&format!("devices[{i}]"))?;
            if devices[..i].iter().any(|o| o.name == d.name) {
                return Err(Error::validation(
                    format!("devices[{i}].name"),
                    format!("duplicate device name {:?}", d.name),
                ));
            }
        }
        Ok(Self { devices })
    }

    /// `ideal`, `devA` and `devB`.
    pub fn builtin() -> Self {
        Self::new(vec![DeviceProfile::ideal(), DeviceProfile::dev_a(), DeviceProfile::dev_b()])
            .expect("built-in profiles are valid")
    }

    pub fn get(&self, name: &str) -> Result<&DeviceProfile> {
        self.devices.iter().find(|d| d.name == name).ok_or_else(|| Error::UnknownDevice(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.devices.iter().map(|d| d.name.as_str())
    }

    pub fn devices(&self) -> &[DeviceProfile] {
        &self.devices
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&RegistryDocument { devices: self.devices.clone() }).expect("registry serializes")
    }
}

/// Parses and validates a registry document (TOML, top-level `devices` array).
pub fn load_registry(document: &str) -> Result<Registry> {
    let doc: RegistryDocument = toml::from_str(document).map_err(|e| Error::Parse(e.to_string()))?;
    Registry::new(doc.devices)
}

/// Weighted choice over registered device names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionPolicy {
    entries: Vec<(String, f64)>,
}

impl SelectionPolicy {
    pub fn new(entries: Vec<(String, f64)>) -> Result<Self> {
        validate_weights(&entries.iter().map(|(_, w)| *w).collect::<Vec<_>>())?;
        Ok(Self { entries })
    }

    pub fn uniform(names: &[&str]) -> Result<Self> {
        let w = 1.0 / names.len().max(1) as f64;
        Self::new(names.iter().map(|n| (n.to_string(), w)).collect())
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    /// Checks every referenced name resolves.
    pub fn resolve<'r>(&self, registry: &'r Registry) -> Result<Vec<&'r DeviceProfile>> {
        self.entries.iter().map(|(n, _)| registry.get(n)).collect()
    }
}

pub(crate) fn validate_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::InvalidArgument("selection policy is empty".into()));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidArgument("selection weights must be finite and non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("selection weights sum to {total}, expected 1")));
    }
    Ok(())
}

/// Index drawn from `weights` with one uniform variate.
pub(crate) fn weighted_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the cumulative sum
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

pub fn pick_device<'r, R: Rng + ?Sized>(
    policy: &SelectionPolicy,
    registry: &'r Registry,
    rng: &mut R,
) -> Result<&'r DeviceProfile> {
    let weights: Vec<f64> = policy.entries.iter().map(|(_, w)| *w).collect();
    let i = weighted_index(&weights, rng);
    registry.get(&policy.entries[i].0)
}
