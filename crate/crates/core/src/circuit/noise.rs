use super::{CircuitIR, Instruction};
use crate::device::DeviceProfile;
use crate::quantum::KrausChannel;
use crate::{Error, Result, Scalar};

/// Inserts the profile's noise: depolarizing after every gate (`p1` or `p2` by
/// arity) and amplitude damping, phase flip, bit flip on every qubit at each
/// layer end. Zero-rate channels are omitted. The readout confusion goes on
/// the measurement. Weaving an already noisy circuit is an error.
pub fn weave_noise<T: Scalar>(circuit: &CircuitIR<T>, profile: &DeviceProfile) -> Result<CircuitIR<T>> {
    if circuit.is_noisy() {
        return Err(Error::AlreadyNoisy);
    }
    let nonzero = |p: f64| (p > 0.0).then_some(T::lit(p));
    let dep1 = nonzero(profile.p1).map(KrausChannel::depolarizing).transpose()?;
    let dep2 = nonzero(profile.p2).map(KrausChannel::depolarizing_two_qubit).transpose()?;
    let boundary: Vec<KrausChannel<T>> = [
        nonzero(profile.gamma).map(KrausChannel::amplitude_damping),
        nonzero(profile.p_phase).map(KrausChannel::phase_flip),
        nonzero(profile.p_bit).map(KrausChannel::bit_flip),
    ]
    .into_iter()
    .flatten()
    .collect::<Result<_>>()?;

    let mut woven = Vec::with_capacity(circuit.instructions().len() * 2);
    for inst in circuit.instructions() {
        woven.push(inst.clone());
        match inst {
            Instruction::Gate(g) => {
                let ch = if g.qubits().len() == 1 { &dep1 } else { &dep2 };
                if let Some(ch) = ch {
                    woven.push(Instruction::Channel { channel: ch.clone(), qubits: g.qubits().to_vec() });
                }
            }
            Instruction::LayerEnd => {
                for q in 0..circuit.n_qubits() {
                    for ch in &boundary {
                        woven.push(Instruction::Channel { channel: ch.clone(), qubits: vec![q] });
                    }
                }
            }
            Instruction::Channel { .. } => {}
        }
    }
    let readout = circuit.measurement().qubits().iter().map(|&q| profile.readout_for(q)).collect::<Result<Vec<_>>>()?;
    let mut out = circuit.clone().into_noisy(woven);
    out.set_readout(readout);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_model_circuit, execute, PqcId, PqcTemplate, Shots};
    use crate::quantum::ChannelKind;
    use crate::rng::{stream, Purpose};

    fn circuit(id: PqcId) -> CircuitIR<f64> {
        let t = PqcTemplate::new(id, 4, 1).unwrap();
        let params: Vec<f64> = (0..t.param_count()).map(|i| 0.1 * i as f64).collect();
        let x: Vec<f64> = (0..8).map(|i| 0.7 * i as f64).collect();
        build_model_circuit(&x, &t, &params).unwrap()
    }

    #[test]
    fn ideal_profile_leaves_outputs_unchanged() {
        let c = circuit(PqcId::Pqc19);
        let woven = weave_noise(&c, &DeviceProfile::ideal()).unwrap();
        assert_eq!(woven.channel_count(), 0);
        let mut rng = stream(0, Purpose::Shots, &[]);
        assert_eq!(
            execute(&c, Shots::Analytic, &mut rng).unwrap(),
            execute(&woven, Shots::Analytic, &mut rng).unwrap()
        );
    }

    #[test]
    fn channel_placement_counts() {
        let dev = DeviceProfile::dev_b();
        let c1 = weave_noise(&circuit(PqcId::Pqc1), &dev).unwrap();
        assert!(c1.noise_points().all(|(ch, _)| ch.n_qubits() == 1));
        // 16 encoding gates + 8 rotations, plus 2 layer ends × 4 qubits × 3 channels
        assert_eq!(c1.channel_count(), 24 + 24);

        let c19 = weave_noise(&circuit(PqcId::Pqc19), &dev).unwrap();
        let two_q = c19.noise_points().filter(|(ch, _)| ch.n_qubits() == 2).count();
        assert_eq!(two_q, 4);
        let damping = c19.noise_points().filter(|(ch, _)| ch.kind() == ChannelKind::AmplitudeDamping).count();
        assert_eq!(damping, 8);
    }

    #[test]
    fn complex_template_accumulates_more_noise() {
        let dev = DeviceProfile::dev_a();
        let per_layer = |id| {
            let t = PqcTemplate::new(id, 4, 1).unwrap();
            let mut c = CircuitIR::<f64>::measuring_all(4).unwrap();
            c.extend_gates(crate::circuit::build_pqc(&t, &vec![0.2; t.param_count()]).unwrap()).unwrap();
            c.end_layer();
            weave_noise(&c, &dev).unwrap().channel_count()
        };
        let (n1, n17, n6) = (per_layer(PqcId::Pqc1), per_layer(PqcId::Pqc17), per_layer(PqcId::Pqc6));
        assert!(n1 < n17 && n17 < n6, "{n1} {n17} {n6}");
    }

    #[test]
    fn weaving_twice_is_rejected() {
        let woven = weave_noise(&circuit(PqcId::Pqc1), &DeviceProfile::dev_a()).unwrap();
        assert!(matches!(weave_noise(&woven, &DeviceProfile::dev_a()), Err(Error::AlreadyNoisy)));
    }

    #[test]
    fn readout_attached_to_measurement() {
        let woven = weave_noise(&circuit(PqcId::Pqc1), &DeviceProfile::dev_a()).unwrap();
        assert!(woven.measurement().readout().iter().all(|r| r.rows() == [[0.97, 0.03], [0.05, 0.95]]));
    }
}
