//! Expressibility toolkit for parameterized quantum circuits.
//!
//! The pipeline: generate PQCs, compute ground-truth expressibility by
//! sampling fidelities of compute-uncompute circuits against the analytic
//! Haar distribution, encode transpiled circuits as feature-annotated
//! graphs, and train a graph-transformer regressor to predict
//! expressibility on noiseless and noisy device models.

pub mod backend;
pub mod circuit;
pub mod cli;
pub mod error;
pub mod expressibility;
pub mod gnn;
pub mod graphenc;
mod kernel;
pub mod pqcgen;
pub mod qasm;
pub mod rng;
pub mod sim;
pub mod transpile;

pub use error::{Error, Result};

#[cfg(test)]
pub(crate) mod testutil {
    use num_complex::Complex64;

    use crate::circuit::{Circuit, Gate, GateKind, Param};
    use crate::rng::RngStream;

    /// Random bound circuit over the invertible abstract gate set (no SX,
    /// no MEASURE); used as fodder for oracle-backed tests.
    pub fn random_bound_circuit(n_qubits: usize, n_gates: usize, seed: u64) -> Circuit {
        const KINDS: [GateKind; 11] = [
            GateKind::RX,
            GateKind::RY,
            GateKind::RZ,
            GateKind::H,
            GateKind::I,
            GateKind::X,
            GateKind::CX,
            GateKind::CRX,
            GateKind::CRY,
            GateKind::CRZ,
            GateKind::SWAP,
        ];
        let mut rng = RngStream::derive(seed, &[0xC1C1]);
        let mut gates = Vec::with_capacity(n_gates);
        for _ in 0..n_gates {
            let kind = loop {
                let k = KINDS[rng.below(KINDS.len())];
                if k.arity() == 1 || n_qubits >= 2 {
                    break k;
                }
            };
            let param = kind
                .is_parameterized()
                .then(|| Param::Val { val: rng.uniform(-std::f64::consts::PI, std::f64::consts::PI) });
            let qubits = if kind.arity() == 1 {
                vec![rng.below(n_qubits)]
            } else {
                let a = rng.below(n_qubits);
                let mut b = rng.below(n_qubits - 1);
                if b >= a {
                    b += 1;
                }
                vec![a, b]
            };
            gates.push(Gate { kind, qubits, param });
        }
        Circuit::new(n_qubits, 0, gates).expect("random circuit is valid")
    }

    pub fn assert_unitary_close(a: &[Vec<Complex64>], b: &[Vec<Complex64>], tol: f64) {
        assert_eq!(a.len(), b.len());
        let mut worst = 0.0f64;
        for (ra, rb) in a.iter().zip(b.iter()) {
            for (&x, &y) in ra.iter().zip(rb.iter()) {
                worst = worst.max((x - y).norm());
            }
        }
        assert!(worst < tol, "max elementwise deviation {worst} >= {tol}");
    }

    /// Compare up to a global phase fitted on the largest element of `a`.
    pub fn assert_unitary_close_up_to_phase(
        a: &[Vec<Complex64>],
        b: &[Vec<Complex64>],
        tol: f64,
    ) {
        let mut best = (0usize, 0usize);
        let mut mag = 0.0;
        for (i, row) in a.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v.norm() > mag {
                    mag = v.norm();
                    best = (i, j);
                }
            }
        }
        assert!(mag > 1e-12, "degenerate matrix");
        let phase = b[best.0][best.1] / a[best.0][best.1];
        let phase = phase / phase.norm();
        let scaled: Vec<Vec<Complex64>> = a
            .iter()
            .map(|row| row.iter().map(|&v| v * phase).collect())
            .collect();
        assert_unitary_close(&scaled, b, tol);
    }

    /// Row permutation of `u` induced by a logical-to-physical layout:
    /// out[pi(i)][j] = u[i][j] with bit `layout[l]` of `pi(i)` equal to bit
    /// `l` of `i`.
    pub fn unitary_with_layout(u: &[Vec<Complex64>], layout: &[usize]) -> Vec<Vec<Complex64>> {
        let dim = u.len();
        let n = dim.trailing_zeros() as usize;
        let pi = |i: usize| -> usize {
            let mut out = 0usize;
            for (l, &p) in layout.iter().enumerate().take(n) {
                out |= ((i >> l) & 1) << p;
            }
            out
        };
        let mut out = vec![vec![Complex64::new(0.0, 0.0); dim]; dim];
        for i in 0..dim {
            let pi_i = pi(i);
            for j in 0..dim {
                out[pi_i][j] = u[i][j];
            }
        }
        out
    }
}
