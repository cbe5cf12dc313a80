//! Dense density-matrix simulation: gates, Kraus channels and Pauli-Z readout.

mod channel;
mod density;
mod gate;
mod linalg;
mod measure;

pub(crate) use channel::superoperator_of;
pub use channel::{ChannelKind, KrausChannel, COMPLETENESS_TOL};
pub use density::{DensityMatrix, MAX_QUBITS};
pub use gate::{GateKind, GateOp};
pub use linalg::{paulis, LocalMatrix};
pub use measure::{sample_expectation_z, sample_z_from_probability, ReadoutConfusion};
