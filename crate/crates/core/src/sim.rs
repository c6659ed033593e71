//! Statevector simulation: exact probabilities, shot sampling, and
//! stochastic Pauli-trajectory noise driven by backend calibration.
//!
//! Noise model per shot: after each noisy native gate, a depolarizing
//! trigger with the gate's calibrated error probability applies a uniformly
//! random non-identity Pauli on the gate's qubit(s); thermal relaxation over
//! the gate duration applies per-qubit X/Y/Z with
//! p_X = p_Y = (1 - e^{-t/T1})/4 and
//! p_Z = max(0, (1 - e^{-t/T2})/2 - (1 - e^{-t/T1})/4).
//! Readout flips each measured bit with the calibrated asymmetric
//! probability. RZ is virtual (no error, no duration).

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::backend::BackendModel;
use crate::circuit::{apply_circuit_to_amps, Circuit, Gate, GateKind, MAX_QUBITS};
use crate::error::{Error, Result};
use crate::kernel;
use crate::rng::RngStream;

#[derive(Clone, Debug)]
pub struct Statevector {
    pub n_qubits: usize,
    amps: Vec<Complex64>,
}

impl Statevector {
    /// |00...0> on `n_qubits` wires.
    pub fn zero_state(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::validation(format!(
                "statevector size must be in 1..={MAX_QUBITS}, got {n_qubits}"
            )));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Statevector { n_qubits, amps })
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Apply one bound unitary gate in place.
    pub fn apply_gate(&mut self, gate: &Gate) -> Result<()> {
        if gate.kind == GateKind::MEASURE {
            return Err(Error::validation("MEASURE is not a unitary gate"));
        }
        match gate.kind.arity() {
            1 => kernel::apply_one(&mut self.amps, gate.qubits[0], &gate.matrix_one()?),
            _ => kernel::apply_two(
                &mut self.amps,
                gate.qubits[0],
                gate.qubits[1],
                &gate.matrix_two()?,
            ),
        }
        Ok(())
    }

    fn apply_pauli(&mut self, q: usize, pauli: u8) {
        kernel::apply_pauli(&mut self.amps, q, pauli);
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Draw one basis index from |amps|^2 using a single uniform.
    fn sample_index(&self, u: f64) -> usize {
        let mut acc = 0.0;
        let target = u * self.norm_sq();
        for (i, a) in self.amps.iter().enumerate() {
            acc += a.norm_sqr();
            if target < acc {
                return i;
            }
        }
        self.amps.len() - 1
    }
}

/// Run every unitary gate of `circuit` (measurements skipped) from |0...0>.
pub fn run_circuit(circuit: &Circuit) -> Result<Statevector> {
    if !circuit.is_bound() {
        return Err(Error::validation("cannot simulate an unbound circuit"));
    }
    let mut state = Statevector::zero_state(circuit.n_qubits)?;
    apply_circuit_to_amps(circuit, &mut state.amps)?;
    Ok(state)
}

/// Exact probability of measuring |0...0>, noiseless.
pub fn exact_zero_prob(circuit: &Circuit) -> Result<f64> {
    let state = run_circuit(circuit)?;
    Ok(state.amps[0].norm_sqr())
}

/// Render a basis index as a bitstring with qubit 0 rightmost, so "00...0"
/// is the all-zeros state.
pub fn bitstring(index: usize, n_qubits: usize) -> String {
    (0..n_qubits)
        .rev()
        .map(|q| if index >> q & 1 == 1 { '1' } else { '0' })
        .collect()
}

/// Split a measured circuit into its unitary prefix; requires a trailing
/// layer measuring every qubit.
fn unitary_prefix(circuit: &Circuit) -> Result<Circuit> {
    let n_measured = circuit
        .gates
        .iter()
        .filter(|g| g.kind == GateKind::MEASURE)
        .count();
    if n_measured != circuit.n_qubits {
        return Err(Error::validation(format!(
            "shot sampling requires a full trailing measurement ({} of {} qubits measured)",
            n_measured, circuit.n_qubits
        )));
    }
    let gates: Vec<Gate> = circuit
        .gates
        .iter()
        .filter(|g| g.kind != GateKind::MEASURE)
        .cloned()
        .collect();
    Circuit::new(circuit.n_qubits, circuit.n_params, gates)
}

/// Relaxation Pauli probabilities (p_x = p_y, p_z) for duration `t_ns` on
/// qubit `q`.
fn relaxation_probs(backend: &BackendModel, q: usize, t_ns: f64) -> (f64, f64) {
    if t_ns <= 0.0 {
        return (0.0, 0.0);
    }
    let cal = &backend.qubits[q];
    let t_us = t_ns / 1000.0;
    let p_t1 = 1.0 - (-t_us / cal.t1_us).exp();
    let p_t2 = 1.0 - (-t_us / cal.t2_us).exp();
    let p_xy = p_t1 / 4.0;
    let p_z = (p_t2 / 2.0 - p_t1 / 4.0).max(0.0);
    (p_xy, p_z)
}

/// Depolarizing probability and duration of one native gate on `backend`.
fn gate_noise(backend: &BackendModel, gate: &Gate) -> Result<(f64, f64)> {
    Ok(match gate.kind {
        GateKind::RZ => (0.0, 0.0),
        GateKind::X => (backend.gates.x_error, backend.gates.x_duration_ns),
        GateKind::SX => (backend.gates.sx_error, backend.gates.sx_duration_ns),
        GateKind::CX => {
            let cal = backend
                .cx_calibration(gate.qubits[0], gate.qubits[1])
                .ok_or_else(|| {
                    Error::Profile(format!(
                        "missing cx calibration for edge [{}, {}]",
                        gate.qubits[0], gate.qubits[1]
                    ))
                })?;
            (cal.error, cal.duration_ns)
        }
        other => {
            return Err(Error::validation(format!(
                "noisy sampling requires a native-gate circuit, found {}",
                other.name()
            )))
        }
    })
}

/// One noise event scheduled at a gate position in a trajectory.
#[derive(Clone, Copy, Debug)]
enum NoiseEvent {
    /// Random non-identity Pauli(s) on the gate's qubits; the payload packs
    /// one Pauli index per qubit (0 = I only allowed on one of the two).
    Depolarize([u8; 2]),
    /// Single-qubit relaxation Pauli on an absolute wire.
    Relax { qubit: usize, pauli: u8 },
}

/// Sample noiseless or noisy shot counts for a bound circuit that ends in a
/// full measurement layer. Counts sum to `shots` and merge commutatively.
///
/// Each shot draws from its own child stream of `rng`, so results do not
/// depend on evaluation order. A noisy backend with all error rates zero,
/// infinite T1/T2, and zero readout error consumes the stream identically
/// to the noiseless path.
pub fn sample_counts(
    circuit: &Circuit,
    shots: u64,
    backend: &BackendModel,
    rng: &RngStream,
) -> Result<BTreeMap<String, u64>> {
    if shots == 0 {
        return Err(Error::validation("shots must be >= 1"));
    }
    let prefix = unitary_prefix(circuit)?;
    let clean = run_circuit(&prefix)?;
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();

    if backend.noiseless {
        for shot in 0..shots {
            let mut s = rng.child(shot);
            let idx = clean.sample_index(s.next_f64());
            *counts.entry(bitstring(idx, circuit.n_qubits)).or_insert(0) += 1;
        }
        return Ok(counts);
    }

    // Per-gate noise parameters, resolved once.
    let mut noise: Vec<(f64, f64)> = Vec::with_capacity(prefix.gates.len());
    for g in &prefix.gates {
        noise.push(gate_noise(backend, g)?);
    }

    let mut events: Vec<(usize, NoiseEvent)> = Vec::new();
    for shot in 0..shots {
        let mut s = rng.child(shot);
        events.clear();
        for (gi, g) in prefix.gates.iter().enumerate() {
            let (p_dep, t_ns) = noise[gi];
            if p_dep > 0.0 {
                let u = s.next_f64();
                if u < p_dep {
                    // Reuse the draw: u/p_dep is uniform given the trigger.
                    let r = u / p_dep;
                    let ev = if g.qubits.len() == 1 {
                        let p = 1 + (r * 3.0).min(2.999_999) as u8;
                        NoiseEvent::Depolarize([p, 0])
                    } else {
                        let k = 1 + (r * 15.0).min(14.999_999) as usize;
                        NoiseEvent::Depolarize([(k % 4) as u8, (k / 4) as u8])
                    };
                    events.push((gi, ev));
                }
            }
            for &q in &g.qubits {
                let (p_xy, p_z) = relaxation_probs(backend, q, t_ns);
                if p_xy > 0.0 || p_z > 0.0 {
                    let u = s.next_f64();
                    let pauli = if u < p_xy {
                        1
                    } else if u < 2.0 * p_xy {
                        2
                    } else if u < 2.0 * p_xy + p_z {
                        3
                    } else {
                        0
                    };
                    if pauli != 0 {
                        events.push((gi, NoiseEvent::Relax { qubit: q, pauli }));
                    }
                }
            }
        }

        let idx = if events.is_empty() {
            clean.sample_index(s.next_f64())
        } else {
            let mut state = Statevector::zero_state(prefix.n_qubits)?;
            let mut ev = events.iter().peekable();
            for (gi, g) in prefix.gates.iter().enumerate() {
                state.apply_gate(g)?;
                while let Some(&&(egi, event)) = ev.peek() {
                    if egi != gi {
                        break;
                    }
                    match event {
                        NoiseEvent::Depolarize(paulis) => {
                            for (qi, &p) in paulis.iter().take(g.qubits.len()).enumerate() {
                                state.apply_pauli(g.qubits[qi], p);
                            }
                        }
                        NoiseEvent::Relax { qubit, pauli } => state.apply_pauli(qubit, pauli),
                    }
                    ev.next();
                }
            }
            state.sample_index(s.next_f64())
        };

        // Readout flips.
        let mut readout = idx;
        for q in 0..circuit.n_qubits {
            let cal = &backend.qubits[q];
            let bit = readout >> q & 1;
            let p_flip = if bit == 0 { cal.readout_p01 } else { cal.readout_p10 };
            if p_flip > 0.0 && s.next_f64() < p_flip {
                readout ^= 1 << q;
            }
        }
        *counts.entry(bitstring(readout, circuit.n_qubits)).or_insert(0) += 1;
    }
    Ok(counts)
}
