//! Dense statevector update kernels shared by the simulator and the
//! unitary oracle. Little-endian convention throughout: qubit 0 is the
//! least significant bit of the amplitude index.

use num_complex::Complex64;

/// Apply a 2x2 matrix to qubit `q` of `amps` (length must be a power of two).
pub(crate) fn apply_one(amps: &mut [Complex64], q: usize, m: &[[Complex64; 2]; 2]) {
    let dim = amps.len();
    let stride = 1usize << q;
    let mut base = 0usize;
    while base < dim {
        for i0 in base..base + stride {
            let i1 = i0 | stride;
            let a0 = amps[i0];
            let a1 = amps[i1];
            amps[i0] = m[0][0] * a0 + m[0][1] * a1;
            amps[i1] = m[1][0] * a0 + m[1][1] * a1;
        }
        base += stride << 1;
    }
}

/// Apply a 4x4 matrix to qubits `(q0, q1)` of `amps`. The local basis index
/// is `bit(q0) + 2*bit(q1)`, i.e. the first listed qubit is the local LSB.
pub(crate) fn apply_two(amps: &mut [Complex64], q0: usize, q1: usize, m: &[[Complex64; 4]; 4]) {
    debug_assert_ne!(q0, q1);
    let dim = amps.len();
    let b0 = 1usize << q0;
    let b1 = 1usize << q1;
    // Enumerate all indices with bits q0 and q1 clear.
    for base in 0..dim {
        if base & (b0 | b1) != 0 {
            continue;
        }
        let idx = [base, base | b0, base | b1, base | b0 | b1];
        let a = [amps[idx[0]], amps[idx[1]], amps[idx[2]], amps[idx[3]]];
        for (row, &i) in idx.iter().enumerate() {
            amps[i] =
                m[row][0] * a[0] + m[row][1] * a[1] + m[row][2] * a[2] + m[row][3] * a[3];
        }
    }
}

/// Pauli application helpers used by the trajectory sampler; cheaper than
/// a full 2x2 matrix multiply.
pub(crate) fn apply_pauli(amps: &mut [Complex64], q: usize, pauli: u8) {
    let dim = amps.len();
    let stride = 1usize << q;
    match pauli {
        0 => {}
        1 => {
            // X: swap strata.
            let mut base = 0usize;
            while base < dim {
                for i0 in base..base + stride {
                    amps.swap(i0, i0 | stride);
                }
                base += stride << 1;
            }
        }
        2 => {
            // Y: swap with +/- i factors.
            let mi = Complex64::new(0.0, -1.0);
            let pi = Complex64::new(0.0, 1.0);
            let mut base = 0usize;
            while base < dim {
                for i0 in base..base + stride {
                    let i1 = i0 | stride;
                    let a0 = amps[i0];
                    let a1 = amps[i1];
                    amps[i0] = mi * a1;
                    amps[i1] = pi * a0;
                }
                base += stride << 1;
            }
        }
        3 => {
            // Z: negate the 1-stratum.
            let mut base = 0usize;
            while base < dim {
                for i0 in base..base + stride {
                    let i1 = i0 | stride;
                    amps[i1] = -amps[i1];
                }
                base += stride << 1;
            }
        }
        _ => unreachable!("pauli index"),
    }
}
