//! Circuit generators: layered random PQCs and the hardware-efficient
//! real-amplitudes ansatz family, plus a pluggable named-circuit library.

use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Gate, GateKind, Param, MAX_QUBITS};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::sim;

const SINGLE_KINDS: [GateKind; 5] =
    [GateKind::RX, GateKind::RY, GateKind::RZ, GateKind::H, GateKind::I];
const ENTANGLING_KINDS: [GateKind; 5] =
    [GateKind::CX, GateKind::CRX, GateKind::CRY, GateKind::CRZ, GateKind::SWAP];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n_qubits: usize,
    /// Number of repetition blocks, 1..=3.
    pub reps: usize,
    pub seed: u64,
    /// Chance of a second single-qubit layer after the first.
    pub p_second_single_layer: f64,
    /// Chance of one or two trailing single-qubit layers per block.
    pub p_trailing_layers: f64,
    /// Upper bound of the per-layer entangling-gate count draw; 0 means
    /// "number of qubits".
    pub max_entanglers_per_layer: usize,
    /// Resample circuits whose prepared state is independent of the
    /// parameters (fidelity identically 1, expressibility the degenerate
    /// (2^n - 1) ln 75 value), except single-qubit diagonal/permutation
    /// circuits: those keep an identical graph encoding to nothing else, so
    /// their fixed label is learnable, and they anchor the top of the n=1
    /// label range.
    pub reject_state_independent: bool,
}

impl GenConfig {
    pub fn new(n_qubits: usize, reps: usize, seed: u64) -> Self {
        GenConfig {
            n_qubits,
            reps,
            seed,
            p_second_single_layer: 0.5,
            p_trailing_layers: 0.5,
            max_entanglers_per_layer: 0,
            reject_state_independent: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 || self.n_qubits > MAX_QUBITS {
            return Err(Error::validation(format!(
                "n_qubits must be in 1..={MAX_QUBITS}, got {}",
                self.n_qubits
            )));
        }
        if !(1..=3).contains(&self.reps) {
            return Err(Error::validation(format!("reps must be in 1..=3, got {}", self.reps)));
        }
        for (name, p) in [
            ("p_second_single_layer", self.p_second_single_layer),
            ("p_trailing_layers", self.p_trailing_layers),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::validation(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

struct Builder {
    gates: Vec<Gate>,
    n_params: usize,
}

impl Builder {
    fn push(&mut self, kind: GateKind, qubits: Vec<usize>) {
        let param = kind.is_parameterized().then(|| {
            let sym = self.n_params;
            self.n_params += 1;
            Param::Sym { sym }
        });
        self.gates.push(Gate { kind, qubits, param });
    }
}

fn single_layer(b: &mut Builder, n: usize, rng: &mut RngStream) {
    for q in 0..n {
        b.push(SINGLE_KINDS[rng.below(SINGLE_KINDS.len())], vec![q]);
    }
}

fn draw_candidate(cfg: &GenConfig, rng: &mut RngStream) -> Circuit {
    let n = cfg.n_qubits;
    let max_ent = if cfg.max_entanglers_per_layer == 0 { n } else { cfg.max_entanglers_per_layer };
    let mut b = Builder { gates: Vec::new(), n_params: 0 };
    for _ in 0..cfg.reps {
        single_layer(&mut b, n, rng);
        if rng.next_f64() < cfg.p_second_single_layer {
            single_layer(&mut b, n, rng);
        }
        if n >= 2 {
            let m = 1 + rng.below(max_ent);
            for _ in 0..m {
                let kind = ENTANGLING_KINDS[rng.below(ENTANGLING_KINDS.len())];
                let a = rng.below(n);
                let mut c = rng.below(n - 1);
                if c >= a {
                    c += 1;
                }
                b.push(kind, vec![a, c]);
            }
        }
        if rng.next_f64() < cfg.p_trailing_layers {
            let extra = 1 + rng.below(2);
            for _ in 0..extra {
                single_layer(&mut b, n, rng);
            }
        }
    }
    Circuit { n_qubits: n, n_params: b.n_params, gates: b.gates }
}

/// True for circuits built only from diagonal and basis-permutation gates
/// {RZ, I, X, CX, CRZ, SWAP}: they map |0...0> to a phased basis state for
/// every binding, so their fidelity is identically 1. Unlike other
/// state-independent circuits, these transpile without SX and are uniquely
/// identifiable from the angle-blind graph encoding.
pub fn is_diagonal_class(circuit: &Circuit) -> bool {
    circuit.gates.iter().all(|g| {
        matches!(
            g.kind,
            GateKind::RZ | GateKind::I | GateKind::X | GateKind::CX | GateKind::CRZ | GateKind::SWAP
        )
    })
}

/// True when the prepared state ignores the parameters: three random
/// bindings all overlap with fidelity 1. Parameter-free circuits are
/// trivially state-independent.
pub fn is_state_independent(circuit: &Circuit, rng: &mut RngStream) -> Result<bool> {
    if circuit.n_params == 0 {
        return Ok(true);
    }
    let bind_random = |rng: &mut RngStream| -> Result<_> {
        let values: Vec<f64> = (0..circuit.n_params)
            .map(|_| rng.uniform(0.0, std::f64::consts::TAU))
            .collect();
        sim::run_circuit(&circuit.bind(&values)?)
    };
    let reference = bind_random(rng)?;
    for _ in 0..2 {
        let other = bind_random(rng)?;
        let overlap: num_complex::Complex64 = reference
            .amplitudes()
            .iter()
            .zip(other.amplitudes().iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        if overlap.norm_sqr() < 1.0 - 1e-9 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Layered random PQC: per repetition block, a single-qubit layer drawn
/// uniformly from {RX, RY, RZ, H, I} per qubit, optionally a second such
/// layer, an entangling layer of 1..=max gates drawn uniformly from
/// {CX, CRX, CRY, CRZ, SWAP} on uniformly chosen ordered pairs, and
/// optionally one or two trailing single-qubit layers. Each rotation gets a
/// fresh parameter symbol. Deterministic given the seed.
pub fn random_pqc(cfg: &GenConfig) -> Result<Circuit> {
    cfg.validate()?;
    let root = RngStream::derive(cfg.seed, &[0x9C]);
    for attempt in 0..10_000u64 {
        let mut rng = root.child(attempt);
        let candidate = draw_candidate(cfg, &mut rng);
        debug_assert!(candidate.validate().is_ok());
        if !cfg.reject_state_independent {
            return Ok(candidate);
        }
        if cfg.n_qubits == 1 && is_diagonal_class(&candidate) {
            return Ok(candidate);
        }
        if !is_state_independent(&candidate, &mut rng.child(0xF1DE))? {
            return Ok(candidate);
        }
    }
    Err(Error::validation(
        "generator failed to produce a state-dependent circuit in 10000 attempts",
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Entanglement {
    Full,
    Linear,
    Circular,
    /// Shifted-circular-alternating: the circular edge list starts at an
    /// edge shifted by the block index, and control/target swap on odd
    /// blocks.
    Sca,
}

impl Entanglement {
    pub const ALL: [Entanglement; 4] = [
        Entanglement::Full,
        Entanglement::Linear,
        Entanglement::Circular,
        Entanglement::Sca,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Entanglement::Full => "full",
            Entanglement::Linear => "linear",
            Entanglement::Circular => "circular",
            Entanglement::Sca => "sca",
        }
    }
}

impl std::str::FromStr for Entanglement {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Entanglement::Full),
            "linear" => Ok(Entanglement::Linear),
            "circular" => Ok(Entanglement::Circular),
            "sca" => Ok(Entanglement::Sca),
            other => Err(Error::validation(format!(
                "unknown entanglement pattern `{other}` (expected full, linear, circular, or sca)"
            ))),
        }
    }
}

fn entangler_edges(pattern: Entanglement, n: usize, block: usize) -> Vec<(usize, usize)> {
    if n < 2 {
        return Vec::new();
    }
    let linear: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    match pattern {
        Entanglement::Full => {
            let mut out = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    out.push((i, j));
                }
            }
            out
        }
        Entanglement::Linear => linear,
        Entanglement::Circular => {
            if n <= 2 {
                linear
            } else {
                let mut out = vec![(n - 1, 0)];
                out.extend(linear);
                out
            }
        }
        Entanglement::Sca => {
            let mut out = if n <= 2 {
                linear
            } else {
                // Ring edges e_j = (j, j+1 mod n), listed from the wrap edge
                // shifted back by the block index.
                let start = (2 * n - 1 - block % n) % n;
                (0..n)
                    .map(|k| {
                        let j = (start + k) % n;
                        (j, (j + 1) % n)
                    })
                    .collect()
            };
            if block % 2 == 1 {
                for e in &mut out {
                    *e = (e.1, e.0);
                }
            }
            out
        }
    }
}

/// Hardware-efficient real-amplitudes ansatz: an initial RY layer followed
/// by `reps` blocks of an entangling CX layer and another RY layer.
/// Parameter count is n*(reps+1).
pub fn real_amplitudes(n_qubits: usize, reps: usize, pattern: Entanglement) -> Result<Circuit> {
    if !(1..=4).contains(&n_qubits) {
        return Err(Error::validation(format!(
            "real_amplitudes supports 1..=4 qubits, got {n_qubits}"
        )));
    }
    if !(1..=4).contains(&reps) {
        return Err(Error::validation(format!(
            "real_amplitudes supports 1..=4 repetitions, got {reps}"
        )));
    }
    let mut b = Builder { gates: Vec::new(), n_params: 0 };
    for q in 0..n_qubits {
        b.push(GateKind::RY, vec![q]);
    }
    for block in 0..reps {
        for (c, t) in entangler_edges(pattern, n_qubits, block) {
            b.push(GateKind::CX, vec![c, t]);
        }
        for q in 0..n_qubits {
            b.push(GateKind::RY, vec![q]);
        }
    }
    Circuit::new(n_qubits, b.n_params, b.gates)
}

/// The 64-circuit validation grid {n = 1..4} x {reps = 1..4} x {4 patterns},
/// with stable `(name, circuit)` entries.
pub fn real_amplitudes_grid() -> Vec<(String, Circuit)> {
    let mut out = Vec::with_capacity(64);
    for n in 1..=4 {
        for reps in 1..=4 {
            for pattern in Entanglement::ALL {
                let name = format!("ra_{n}q_l{reps}_{}", pattern.name());
                out.push((name, real_amplitudes(n, reps, pattern).expect("grid in range")));
            }
        }
    }
    out
}

/// Named circuit lookup: built-in `idle_<n>q` and `ra_<n>q_l<reps>_<pattern>`
/// aliases, then JSON circuit files in an optional library directory.
pub struct CircuitLibrary {
    dir: Option<std::path::PathBuf>,
}

impl CircuitLibrary {
    pub fn new(dir: Option<std::path::PathBuf>) -> Self {
        CircuitLibrary { dir }
    }

    pub fn get(&self, name: &str) -> Result<Circuit> {
        if let Some(rest) = name.strip_prefix("idle_") {
            if let Some(n) = rest.strip_suffix('q').and_then(|v| v.parse::<usize>().ok()) {
                return Circuit::empty(n);
            }
        }
        if let Some(rest) = name.strip_prefix("ra_") {
            let parts: Vec<&str> = rest.splitn(3, '_').collect();
            if parts.len() == 3 {
                let n = parts[0].strip_suffix('q').and_then(|v| v.parse::<usize>().ok());
                let reps = parts[1].strip_prefix('l').and_then(|v| v.parse::<usize>().ok());
                let pattern = parts[2].parse::<Entanglement>().ok();
                if let (Some(n), Some(reps), Some(pattern)) = (n, reps, pattern) {
                    return real_amplitudes(n, reps, pattern);
                }
            }
        }
        if let Some(dir) = &self.dir {
            let path = dir.join(format!("{name}.json"));
            if path.is_file() {
                let text = std::fs::read_to_string(&path)?;
                return Circuit::from_json(&text);
            }
        }
        Err(Error::Library(format!("unknown circuit `{name}`")))
    }
}
