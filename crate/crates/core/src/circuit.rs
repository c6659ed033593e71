//! Circuit intermediate representation: gates, parameter binding, inversion,
//! a dense unitary oracle, and JSON I/O.
//!
//! Conventions: little-endian qubit ordering (qubit 0 is the least
//! significant bit of a basis index), controlled gates list the control
//! first, and parameter symbols are dense integer indices.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel;

/// Largest register size the toolkit processes.
pub const MAX_QUBITS: usize = 10;
/// Largest register size the dense unitary oracle accepts.
pub const MAX_UNITARY_QUBITS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GateKind {
    RX,
    RY,
    RZ,
    H,
    I,
    X,
    SX,
    CX,
    CRX,
    CRY,
    CRZ,
    SWAP,
    MEASURE,
}

impl GateKind {
    pub const ALL: [GateKind; 13] = [
        GateKind::RX,
        GateKind::RY,
        GateKind::RZ,
        GateKind::H,
        GateKind::I,
        GateKind::X,
        GateKind::SX,
        GateKind::CX,
        GateKind::CRX,
        GateKind::CRY,
        GateKind::CRZ,
        GateKind::SWAP,
        GateKind::MEASURE,
    ];

    pub fn arity(self) -> usize {
        match self {
            GateKind::CX | GateKind::CRX | GateKind::CRY | GateKind::CRZ | GateKind::SWAP => 2,
            _ => 1,
        }
    }

    pub fn is_parameterized(self) -> bool {
        matches!(
            self,
            GateKind::RX | GateKind::RY | GateKind::RZ | GateKind::CRX | GateKind::CRY | GateKind::CRZ
        )
    }

    /// Member of the hardware-native set {RZ, X, SX, CX}.
    pub fn is_native(self) -> bool {
        matches!(self, GateKind::RZ | GateKind::X | GateKind::SX | GateKind::CX)
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::RX => "RX",
            GateKind::RY => "RY",
            GateKind::RZ => "RZ",
            GateKind::H => "H",
            GateKind::I => "I",
            GateKind::X => "X",
            GateKind::SX => "SX",
            GateKind::CX => "CX",
            GateKind::CRX => "CRX",
            GateKind::CRY => "CRY",
            GateKind::CRZ => "CRZ",
            GateKind::SWAP => "SWAP",
            GateKind::MEASURE => "MEASURE",
        }
    }
}

/// Rotation parameter: either a symbol (index into the circuit's parameter
/// vector) or a bound value in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Sym { sym: usize },
    Val { val: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub qubits: Vec<usize>,
    #[serde(default)]
    pub param: Option<Param>,
}

impl Gate {
    pub fn one(kind: GateKind, q: usize) -> Self {
        Gate { kind, qubits: vec![q], param: None }
    }

    pub fn one_p(kind: GateKind, q: usize, param: Param) -> Self {
        Gate { kind, qubits: vec![q], param: Some(param) }
    }

    pub fn two(kind: GateKind, a: usize, b: usize) -> Self {
        Gate { kind, qubits: vec![a, b], param: None }
    }

    pub fn two_p(kind: GateKind, a: usize, b: usize, param: Param) -> Self {
        Gate { kind, qubits: vec![a, b], param: Some(param) }
    }

    pub fn rz(q: usize, angle: f64) -> Self {
        Gate::one_p(GateKind::RZ, q, Param::Val { val: angle })
    }

    pub fn sx(q: usize) -> Self {
        Gate::one(GateKind::SX, q)
    }

    pub fn cx(control: usize, target: usize) -> Self {
        Gate::two(GateKind::CX, control, target)
    }

    pub fn measure(q: usize) -> Self {
        Gate::one(GateKind::MEASURE, q)
    }

    pub fn is_bound(&self) -> bool {
        !matches!(self.param, Some(Param::Sym { .. }))
    }

    /// Bound rotation angle, if any.
    pub fn angle(&self) -> Option<f64> {
        match self.param {
            Some(Param::Val { val }) => Some(val),
            _ => None,
        }
    }

    fn bound_angle(&self) -> Result<f64> {
        match self.param {
            Some(Param::Val { val }) => Ok(val),
            Some(Param::Sym { sym }) => Err(Error::validation(format!(
                "gate {} has unbound parameter symbol {sym}",
                self.kind.name()
            ))),
            None => Err(Error::validation(format!(
                "gate {} takes no parameter",
                self.kind.name()
            ))),
        }
    }

    /// 2x2 matrix of a bound single-qubit gate.
    pub fn matrix_one(&self) -> Result<[[Complex64; 2]; 2]> {
        let z = Complex64::new(0.0, 0.0);
        let o = Complex64::new(1.0, 0.0);
        Ok(match self.kind {
            GateKind::I => [[o, z], [z, o]],
            GateKind::X => [[z, o], [o, z]],
            GateKind::H => {
                let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                [[s, s], [s, -s]]
            }
            GateKind::SX => {
                let p = Complex64::new(0.5, 0.5);
                let m = Complex64::new(0.5, -0.5);
                [[p, m], [m, p]]
            }
            GateKind::RX => {
                let t = self.bound_angle()? / 2.0;
                let c = Complex64::new(t.cos(), 0.0);
                let s = Complex64::new(0.0, -t.sin());
                [[c, s], [s, c]]
            }
            GateKind::RY => {
                let t = self.bound_angle()? / 2.0;
                let c = Complex64::new(t.cos(), 0.0);
                let s = Complex64::new(t.sin(), 0.0);
                [[c, -s], [s, c]]
            }
            GateKind::RZ => {
                let t = self.bound_angle()? / 2.0;
                [[Complex64::from_polar(1.0, -t), z], [z, Complex64::from_polar(1.0, t)]]
            }
            _ => {
                return Err(Error::Unsupported(format!(
                    "{} is not a single-qubit unitary",
                    self.kind.name()
                )))
            }
        })
    }

    /// 4x4 matrix of a bound two-qubit gate in the local basis
    /// `bit(qubits[0]) + 2*bit(qubits[1])` (control is `qubits[0]`).
    pub fn matrix_two(&self) -> Result<[[Complex64; 4]; 4]> {
        let z = Complex64::new(0.0, 0.0);
        let o = Complex64::new(1.0, 0.0);
        let mut m = [[z; 4]; 4];
        match self.kind {
            GateKind::CX => {
                m[0][0] = o;
                m[2][2] = o;
                m[3][1] = o;
                m[1][3] = o;
            }
            GateKind::SWAP => {
                m[0][0] = o;
                m[3][3] = o;
                m[2][1] = o;
                m[1][2] = o;
            }
            GateKind::CRZ => {
                let t = self.bound_angle()? / 2.0;
                m[0][0] = o;
                m[2][2] = o;
                m[1][1] = Complex64::from_polar(1.0, -t);
                m[3][3] = Complex64::from_polar(1.0, t);
            }
            GateKind::CRX => {
                let t = self.bound_angle()? / 2.0;
                let c = Complex64::new(t.cos(), 0.0);
                let s = Complex64::new(0.0, -t.sin());
                m[0][0] = o;
                m[2][2] = o;
                m[1][1] = c;
                m[1][3] = s;
                m[3][1] = s;
                m[3][3] = c;
            }
            GateKind::CRY => {
                let t = self.bound_angle()? / 2.0;
                let c = Complex64::new(t.cos(), 0.0);
                let s = Complex64::new(t.sin(), 0.0);
                m[0][0] = o;
                m[2][2] = o;
                m[1][1] = c;
                m[1][3] = -s;
                m[3][1] = s;
                m[3][3] = c;
            }
            _ => {
                return Err(Error::Unsupported(format!(
                    "{} is not a two-qubit unitary",
                    self.kind.name()
                )))
            }
        }
        Ok(m)
    }
}

/// Ordered gate list over `n_qubits` wires with `n_params` distinct
/// parameter symbols.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub n_qubits: usize,
    pub n_params: usize,
    pub gates: Vec<Gate>,
}

impl Circuit {
    /// Empty circuit on `n_qubits` wires.
    pub fn empty(n_qubits: usize) -> Result<Self> {
        let c = Circuit { n_qubits, n_params: 0, gates: Vec::new() };
        c.validate()?;
        Ok(c)
    }

    pub fn new(n_qubits: usize, n_params: usize, gates: Vec<Gate>) -> Result<Self> {
        let c = Circuit { n_qubits, n_params, gates };
        c.validate()?;
        Ok(c)
    }

    /// Check all structural invariants; every constructor and parser goes
    /// through here.
    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 || self.n_qubits > MAX_QUBITS {
            return Err(Error::validation(format!(
                "n_qubits must be in 1..={MAX_QUBITS}, got {}",
                self.n_qubits
            )));
        }
        let mut symbol_seen = vec![false; self.n_params];
        let mut measuring = false;
        let mut measured = vec![false; self.n_qubits];
        for (i, g) in self.gates.iter().enumerate() {
            if g.qubits.len() != g.kind.arity() {
                return Err(Error::validation(format!(
                    "gate {i} ({}) expects {} qubits, got {}",
                    g.kind.name(),
                    g.kind.arity(),
                    g.qubits.len()
                )));
            }
            for &q in &g.qubits {
                if q >= self.n_qubits {
                    return Err(Error::validation(format!(
                        "gate {i} ({}) addresses qubit {q} outside register of size {}",
                        g.kind.name(),
                        self.n_qubits
                    )));
                }
            }
            if g.qubits.len() == 2 && g.qubits[0] == g.qubits[1] {
                return Err(Error::validation(format!(
                    "gate {i} ({}) uses the same qubit twice",
                    g.kind.name()
                )));
            }
            match (g.kind.is_parameterized(), &g.param) {
                (true, None) => {
                    return Err(Error::validation(format!(
                        "gate {i} ({}) requires a parameter",
                        g.kind.name()
                    )))
                }
                (false, Some(_)) => {
                    return Err(Error::validation(format!(
                        "gate {i} ({}) takes no parameter",
                        g.kind.name()
                    )))
                }
                (true, Some(Param::Sym { sym })) => {
                    if *sym >= self.n_params {
                        return Err(Error::validation(format!(
                            "gate {i} references symbol {sym} but n_params is {}",
                            self.n_params
                        )));
                    }
                    symbol_seen[*sym] = true;
                }
                _ => {}
            }
            if g.kind == GateKind::MEASURE {
                measuring = true;
                let q = g.qubits[0];
                if measured[q] {
                    return Err(Error::validation(format!("qubit {q} measured twice")));
                }
                measured[q] = true;
            } else if measuring {
                return Err(Error::validation(
                    "measurements must form a trailing layer".to_string(),
                ));
            }
        }
        if let Some(missing) = symbol_seen.iter().position(|s| !s) {
            return Err(Error::validation(format!(
                "parameter symbol {missing} is never used"
            )));
        }
        Ok(())
    }

    pub fn is_bound(&self) -> bool {
        self.gates.iter().all(Gate::is_bound)
    }

    pub fn has_measurement(&self) -> bool {
        self.gates.iter().any(|g| g.kind == GateKind::MEASURE)
    }

    /// Number of gates with a parameter slot (symbolic or bound).
    pub fn parameterized_gate_count(&self) -> usize {
        self.gates.iter().filter(|g| g.kind.is_parameterized()).count()
    }

    /// Replace every symbol `i` with `values[i]`. The result has no free
    /// parameters.
    pub fn bind(&self, values: &[f64]) -> Result<Circuit> {
        if values.len() != self.n_params {
            return Err(Error::ParamArity { expected: self.n_params, got: values.len() });
        }
        let gates = self
            .gates
            .iter()
            .map(|g| {
                let param = match g.param {
                    Some(Param::Sym { sym }) => Some(Param::Val { val: values[sym] }),
                    other => other,
                };
                Gate { kind: g.kind, qubits: g.qubits.clone(), param }
            })
            .collect();
        Ok(Circuit { n_qubits: self.n_qubits, n_params: 0, gates })
    }

    /// Inverse of a fully bound, measurement-free circuit on the abstract
    /// gate set: gates reversed, rotation angles negated. SX is rejected
    /// because inversion always runs before transpilation.
    pub fn inverse(&self) -> Result<Circuit> {
        let mut gates = Vec::with_capacity(self.gates.len());
        for g in self.gates.iter().rev() {
            match g.kind {
                GateKind::MEASURE => {
                    return Err(Error::validation("cannot invert a measured circuit"))
                }
                GateKind::SX => {
                    return Err(Error::Unsupported(
                        "SX inversion is not closed on the abstract gate set; invert before transpiling".into(),
                    ))
                }
                k if k.is_parameterized() => {
                    let val = g.bound_angle()?;
                    gates.push(Gate {
                        kind: k,
                        qubits: g.qubits.clone(),
                        param: Some(Param::Val { val: -val }),
                    });
                }
                // H, X, I, CX, SWAP are self-inverse.
                _ => gates.push(g.clone()),
            }
        }
        Ok(Circuit { n_qubits: self.n_qubits, n_params: 0, gates })
    }

    /// Concatenation `self` then `other` (same register, bound or not;
    /// parameter symbols of `other` are shifted past `self`'s).
    pub fn compose(&self, other: &Circuit) -> Result<Circuit> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::validation(format!(
                "cannot compose circuits on {} and {} qubits",
                self.n_qubits, other.n_qubits
            )));
        }
        if self.has_measurement() {
            return Err(Error::validation(
                "cannot append gates after a measurement layer",
            ));
        }
        let mut gates = self.gates.clone();
        gates.extend(other.gates.iter().map(|g| {
            let param = match g.param {
                Some(Param::Sym { sym }) => Some(Param::Sym { sym: sym + self.n_params }),
                other => other,
            };
            Gate { kind: g.kind, qubits: g.qubits.clone(), param }
        }));
        Ok(Circuit {
            n_qubits: self.n_qubits,
            n_params: self.n_params + other.n_params,
            gates,
        })
    }

    /// Copy with a full trailing measurement layer.
    pub fn with_full_measurement(&self) -> Result<Circuit> {
        if self.has_measurement() {
            return Err(Error::validation("circuit already measured"));
        }
        let mut gates = self.gates.clone();
        gates.extend((0..self.n_qubits).map(Gate::measure));
        Ok(Circuit { n_qubits: self.n_qubits, n_params: self.n_params, gates })
    }

    /// Dense unitary (dimension 2^n), little-endian. Test oracle; guarded
    /// to small registers.
    pub fn unitary(&self) -> Result<Vec<Vec<Complex64>>> {
        if self.n_qubits > MAX_UNITARY_QUBITS {
            return Err(Error::Unsupported(format!(
                "unitary oracle is limited to {MAX_UNITARY_QUBITS} qubits, got {}",
                self.n_qubits
            )));
        }
        if !self.is_bound() {
            return Err(Error::validation("unitary of an unbound circuit"));
        }
        if self.has_measurement() {
            return Err(Error::validation("unitary of a measured circuit"));
        }
        let dim = 1usize << self.n_qubits;
        // Columns are the images of the basis states.
        let mut cols: Vec<Vec<Complex64>> = (0..dim)
            .map(|j| {
                let mut col = vec![Complex64::new(0.0, 0.0); dim];
                col[j] = Complex64::new(1.0, 0.0);
                col
            })
            .collect();
        for col in cols.iter_mut() {
            apply_circuit_to_amps(self, col)?;
        }
        // Transpose columns into row-major U[row][col].
        let mut u = vec![vec![Complex64::new(0.0, 0.0); dim]; dim];
        for (j, col) in cols.iter().enumerate() {
            for (i, &a) in col.iter().enumerate() {
                u[i][j] = a;
            }
        }
        Ok(u)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Circuit> {
        let c: Circuit = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            col: e.column(),
            msg: e.to_string(),
        })?;
        c.validate()?;
        Ok(c)
    }
}

/// Apply every non-measurement gate of `circuit` to an amplitude vector.
pub(crate) fn apply_circuit_to_amps(circuit: &Circuit, amps: &mut [Complex64]) -> Result<()> {
    for g in &circuit.gates {
        if g.kind == GateKind::MEASURE {
            continue;
        }
        match g.kind.arity() {
            1 => kernel::apply_one(amps, g.qubits[0], &g.matrix_one()?),
            _ => kernel::apply_two(amps, g.qubits[0], g.qubits[1], &g.matrix_two()?),
        }
    }
    Ok(())
}
