use std::ops::Range;

use crate::quantum::GateOp;
use crate::{Error, Result, Scalar};

/// Contiguous feature block assigned to each qubit; blocks have length
/// `ceil(d / n)` and trailing qubits may receive fewer (or no) features.
pub fn feature_blocks(d: usize, n_qubits: usize) -> Vec<Range<usize>> {
    let block = d.div_ceil(n_qubits);
    (0..n_qubits).map(|q| (q * block).min(d)..((q + 1) * block).min(d)).collect()
}

/// Angle encoding: per qubit `H, RZ(f1), H, RZ(f2), …`, one `RZ` per assigned
/// feature with an `H` before each. Features are expected in `[0, 2π]`.
pub fn encode_angles<T: Scalar>(features: &[T], n_qubits: usize) -> Result<Vec<GateOp<T>>> {
    if features.is_empty() {
        return Err(Error::InvalidArgument("cannot encode an empty feature vector".into()));
    }
    if n_qubits == 0 {
        return Err(Error::InvalidArgument("cannot encode onto zero qubits".into()));
    }
    let mut gates = Vec::with_capacity(2 * features.len() + n_qubits);
    for (q, block) in feature_blocks(features.len(), n_qubits).into_iter().enumerate() {
        if block.is_empty() {
            gates.push(GateOp::h(q));
        }
        for &f in &features[block] {
            gates.push(GateOp::h(q));
            gates.push(GateOp::rz(q, f));
        }
    }
    Ok(gates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{execute, CircuitIR, Shots};
    use crate::quantum::GateKind;

    #[test]
    fn eight_features_on_four_qubits() {
        let f: Vec<f64> = (0..8).map(|i| i as f64 * 0.3).collect();
        let gates = encode_angles(&f, 4).unwrap();
        assert_eq!(gates.len(), 16);
        for q in 0..4 {
            let kinds: Vec<_> = gates[4 * q..4 * q + 4].iter().map(|g| (g.kind(), g.qubits()[0])).collect();
            assert_eq!(kinds, vec![(GateKind::H, q), (GateKind::RZ, q), (GateKind::H, q), (GateKind::RZ, q)]);
            assert_eq!(gates[4 * q + 1].angle(), Some(f[2 * q]));
            assert_eq!(gates[4 * q + 3].angle(), Some(f[2 * q + 1]));
        }
    }

    #[test]
    fn block_assignment_by_enumeration() {
        // d = 8 on 2 qubits: qubit 0 takes features 0..4, qubit 1 takes 4..8
        let f: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let gates = encode_angles(&f, 2).unwrap();
        let mut seen: Vec<Vec<f64>> = vec![vec![]; 2];
        for g in gates.iter().filter(|g| g.kind() == GateKind::RZ) {
            seen[g.qubits()[0]].push(g.angle().unwrap());
        }
        assert_eq!(seen, vec![vec![0.0, 1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0, 7.0]]);
        assert_eq!(feature_blocks(3, 2), vec![0..2, 2..3]);
        assert_eq!(feature_blocks(2, 4), vec![0..1, 1..2, 2..2, 2..2]);
    }

    #[test]
    fn single_zero_feature_lands_on_the_equator() {
        for n in [1, 2, 4] {
            let mut c = CircuitIR::<f64>::measuring_all(n).unwrap();
            c.extend_gates(encode_angles(&vec![0.0; n], n).unwrap()).unwrap();
            let z = execute(&c, Shots::Analytic, &mut crate::rng::stream(0, crate::rng::Purpose::Shots, &[])).unwrap();
            assert!(z.iter().all(|v| v.abs() < 1e-14), "{z:?}");
        }
    }

    #[test]
    fn rejects_empty_inputs() {
        assert!(encode_angles::<f64>(&[], 4).is_err());
        assert!(encode_angles(&[1.0f64], 0).is_err());
    }
}
