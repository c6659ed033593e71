//! Lowering to the native gate set {RZ, X, SX, CX} and routing of two-qubit
//! gates onto a device coupling map.
//!
//! The pipeline is route-then-decompose so that inserted SWAPs are lowered
//! too, followed by an RZ merge pass. Routing is a greedy per-gate BFS with
//! an identity initial layout; the implied final qubit permutation is
//! recorded alongside the output circuit.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::backend::BackendModel;
use crate::circuit::{Circuit, Gate, GateKind};
use crate::error::{Error, Result};

/// Angles closer to zero than this (mod 2pi) collapse short forms and drop
/// RZ gates.
pub const ANGLE_EPS: f64 = 1e-12;

/// Undirected device connectivity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CouplingMap {
    pub n_qubits: usize,
    pub edges: Vec<[usize; 2]>,
}

impl CouplingMap {
    pub fn new(n_qubits: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let map = CouplingMap {
            n_qubits,
            edges: edges.iter().map(|&(a, b)| [a.min(b), a.max(b)]).collect(),
        };
        map.validate()?;
        Ok(map)
    }

    /// All-to-all connectivity.
    pub fn full(n_qubits: usize) -> Self {
        let mut edges = Vec::new();
        for a in 0..n_qubits {
            for b in a + 1..n_qubits {
                edges.push([a, b]);
            }
        }
        CouplingMap { n_qubits, edges }
    }

    /// Chain 0-1-...-(n-1).
    pub fn line(n_qubits: usize) -> Self {
        CouplingMap {
            n_qubits,
            edges: (0..n_qubits.saturating_sub(1)).map(|i| [i, i + 1]).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.edges {
            if e[0] == e[1] {
                return Err(Error::validation(format!("self-loop on qubit {}", e[0])));
            }
            if e[0] >= self.n_qubits || e[1] >= self.n_qubits {
                return Err(Error::validation(format!(
                    "edge [{}, {}] outside register of size {}",
                    e[0], e[1], self.n_qubits
                )));
            }
        }
        Ok(())
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let key = [a.min(b), a.max(b)];
        self.edges.iter().any(|e| *e == key)
    }

    fn neighbors(&self, q: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|e| {
                if e[0] == q {
                    Some(e[1])
                } else if e[1] == q {
                    Some(e[0])
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Shortest path from `a` to `b`; deterministic because neighbors are
    /// visited in ascending order.
    pub fn shortest_path(&self, a: usize, b: usize) -> Option<Vec<usize>> {
        if a == b {
            return Some(vec![a]);
        }
        let mut prev = vec![usize::MAX; self.n_qubits];
        let mut queue = std::collections::VecDeque::new();
        prev[a] = a;
        queue.push_back(a);
        while let Some(u) = queue.pop_front() {
            for v in self.neighbors(u) {
                if prev[v] == usize::MAX {
                    prev[v] = u;
                    if v == b {
                        let mut path = vec![b];
                        let mut cur = b;
                        while cur != a {
                            cur = prev[cur];
                            path.push(cur);
                        }
                        path.reverse();
                        return Some(path);
                    }
                    queue.push_back(v);
                }
            }
        }
        None
    }

    /// Induced map on qubits `0..n`, used when a circuit is smaller than
    /// the device.
    pub fn induced_prefix(&self, n: usize) -> Result<CouplingMap> {
        if n > self.n_qubits {
            return Err(Error::Routing(format!(
                "circuit needs {n} qubits but the device has {}",
                self.n_qubits
            )));
        }
        Ok(CouplingMap {
            n_qubits: n,
            edges: self
                .edges
                .iter()
                .filter(|e| e[0] < n && e[1] < n)
                .copied()
                .collect(),
        })
    }
}

/// Normalize an angle to (-pi, pi].
fn norm_angle(a: f64) -> f64 {
    let mut x = a.rem_euclid(std::f64::consts::TAU);
    if x > std::f64::consts::PI {
        x -= std::f64::consts::TAU;
    }
    x
}

/// ZYZ Euler angles of a 2x2 unitary: U = e^{i phase} RZ(phi) RY(theta) RZ(lam),
/// theta in [0, pi]. The matrix is det-normalized to SU(2) first so that
/// V11 = e^{i(phi+lam)/2} cos(theta/2) and V10 = e^{i(phi-lam)/2} sin(theta/2)
/// expose the angle sums directly; either square root of the determinant
/// shifts both arguments by pi, which cancels modulo 2*pi.
fn euler_zyz(u: &[[Complex64; 2]; 2]) -> (f64, f64, f64) {
    let det = u[0][0] * u[1][1] - u[0][1] * u[1][0];
    let scale = det.sqrt();
    let v00 = u[0][0] / scale;
    let v10 = u[1][0] / scale;
    let v11 = u[1][1] / scale;
    let theta = 2.0 * v10.norm().atan2(v00.norm());
    if v10.norm() < 1e-9 {
        (theta, 2.0 * v11.arg(), 0.0)
    } else if v00.norm() < 1e-9 {
        (theta, 2.0 * v10.arg(), 0.0)
    } else {
        let half_sum = v11.arg();
        let half_diff = v10.arg();
        (theta, half_sum + half_diff, half_sum - half_diff)
    }
}

fn push_rz(out: &mut Vec<Gate>, q: usize, angle: f64) {
    let a = norm_angle(angle);
    if a.abs() > ANGLE_EPS {
        out.push(Gate::rz(q, a));
    }
}

/// Lower a bound single-qubit gate to native gates via the ZXZXZ form
/// RZ SX RZ SX RZ, with RZ-only and RZ SX RZ short forms when the middle
/// rotation degenerates.
fn decompose_single(gate: &Gate) -> Result<Vec<Gate>> {
    let q = gate.qubits[0];
    let u = gate.matrix_one()?;
    let (theta, phi, lam) = euler_zyz(&u);
    let mut out = Vec::new();
    if theta.abs() <= ANGLE_EPS {
        push_rz(&mut out, q, phi + lam);
    } else if (theta - std::f64::consts::FRAC_PI_2).abs() <= ANGLE_EPS {
        push_rz(&mut out, q, lam - std::f64::consts::FRAC_PI_2);
        out.push(Gate::sx(q));
        push_rz(&mut out, q, phi + std::f64::consts::FRAC_PI_2);
    } else {
        push_rz(&mut out, q, lam);
        out.push(Gate::sx(q));
        push_rz(&mut out, q, theta + std::f64::consts::PI);
        out.push(Gate::sx(q));
        push_rz(&mut out, q, phi + std::f64::consts::PI);
    }
    Ok(out)
}

/// H on `q` as native gates (used to conjugate controlled rotations).
fn native_h(q: usize) -> Vec<Gate> {
    vec![
        Gate::rz(q, std::f64::consts::FRAC_PI_2),
        Gate::sx(q),
        Gate::rz(q, std::f64::consts::FRAC_PI_2),
    ]
}

fn crz_seq(control: usize, target: usize, lam: f64) -> Vec<Gate> {
    let mut out = Vec::new();
    push_rz(&mut out, target, lam / 2.0);
    out.push(Gate::cx(control, target));
    push_rz(&mut out, target, -lam / 2.0);
    out.push(Gate::cx(control, target));
    out
}

/// Decompose one bound gate into the native set {RZ, X, SX, CX}. MEASURE
/// passes through unchanged; the composed unitary of the output equals the
/// input up to a global phase.
pub fn decompose_gate(gate: &Gate) -> Result<Vec<Gate>> {
    if !gate.is_bound() {
        return Err(Error::validation(format!(
            "cannot decompose unbound gate {}",
            gate.kind.name()
        )));
    }
    match gate.kind {
        GateKind::MEASURE => Ok(vec![gate.clone()]),
        GateKind::RZ | GateKind::X | GateKind::SX | GateKind::CX => Ok(vec![gate.clone()]),
        GateKind::I => Ok(Vec::new()),
        GateKind::RX | GateKind::RY | GateKind::H => decompose_single(gate),
        GateKind::SWAP => {
            let (a, b) = (gate.qubits[0], gate.qubits[1]);
            Ok(vec![Gate::cx(a, b), Gate::cx(b, a), Gate::cx(a, b)])
        }
        GateKind::CRZ => {
            let lam = gate.angle().expect("bound");
            Ok(crz_seq(gate.qubits[0], gate.qubits[1], lam))
        }
        GateKind::CRX => {
            // CRX = (I (x) H) CRZ (I (x) H) on the target.
            let (c, t) = (gate.qubits[0], gate.qubits[1]);
            let lam = gate.angle().expect("bound");
            let mut out = native_h(t);
            out.extend(crz_seq(c, t, lam));
            out.extend(native_h(t));
            Ok(out)
        }
        GateKind::CRY => {
            // Conjugate the target by A = RZ(pi/2) H, so A RZ(lam) A^dag = RY(lam).
            let (c, t) = (gate.qubits[0], gate.qubits[1]);
            let lam = gate.angle().expect("bound");
            let mut out = vec![Gate::rz(t, -std::f64::consts::FRAC_PI_2)];
            out.extend(native_h(t));
            out.extend(crz_seq(c, t, lam));
            out.extend(native_h(t));
            out.push(Gate::rz(t, std::f64::consts::FRAC_PI_2));
            Ok(out)
        }
    }
}

/// Merge adjacent RZ gates on the same wire and drop RZ(0).
fn merge_rz(gates: Vec<Gate>, n_qubits: usize) -> Vec<Gate> {
    let mut pending = vec![0.0f64; n_qubits];
    let mut has_pending = vec![false; n_qubits];
    let mut out: Vec<Gate> = Vec::with_capacity(gates.len());
    let flush = |q: usize, pending: &mut [f64], has: &mut [bool], out: &mut Vec<Gate>| {
        if has[q] {
            push_rz(out, q, pending[q]);
            pending[q] = 0.0;
            has[q] = false;
        }
    };
    for g in gates {
        if g.kind == GateKind::RZ {
            let q = g.qubits[0];
            pending[q] += g.angle().expect("bound rz");
            has_pending[q] = true;
        } else {
            for &q in &g.qubits {
                flush(q, &mut pending, &mut has_pending, &mut out);
            }
            out.push(g);
        }
    }
    for q in 0..n_qubits {
        flush(q, &mut pending, &mut has_pending, &mut out);
    }
    out
}

/// A routed/lowered circuit plus the qubit layout bookkeeping. `final_layout[l]`
/// is the physical wire holding logical qubit `l` after all inserted SWAPs.
#[derive(Clone, Debug)]
pub struct Transpiled {
    pub circuit: Circuit,
    pub initial_layout: Vec<usize>,
    pub final_layout: Vec<usize>,
}

/// Place every two-qubit gate on an edge of `map`, inserting SWAPs along
/// BFS shortest paths. Returns the routed circuit (over `map.n_qubits`
/// wires) and the final logical-to-physical layout.
pub fn route(
    circuit: &Circuit,
    map: &CouplingMap,
    initial_layout: &[usize],
) -> Result<(Circuit, Vec<usize>)> {
    if circuit.n_qubits > map.n_qubits {
        return Err(Error::Routing(format!(
            "circuit needs {} qubits but the map has {}",
            circuit.n_qubits, map.n_qubits
        )));
    }
    if initial_layout.len() != map.n_qubits {
        return Err(Error::Routing(format!(
            "initial layout must cover all {} physical qubits",
            map.n_qubits
        )));
    }
    let mut seen = vec![false; map.n_qubits];
    for &p in initial_layout {
        if p >= map.n_qubits || seen[p] {
            return Err(Error::Routing("initial layout is not a permutation".into()));
        }
        seen[p] = true;
    }

    let mut layout = initial_layout.to_vec();
    let mut wire_of = vec![0usize; map.n_qubits];
    for (l, &p) in layout.iter().enumerate() {
        wire_of[p] = l;
    }
    let mut out: Vec<Gate> = Vec::with_capacity(circuit.gates.len());
    for g in &circuit.gates {
        match g.qubits.len() {
            1 => {
                let mut ng = g.clone();
                ng.qubits = vec![layout[g.qubits[0]]];
                out.push(ng);
            }
            _ => {
                let (mut pa, pb) = (layout[g.qubits[0]], layout[g.qubits[1]]);
                if !map.has_edge(pa, pb) {
                    let path = map.shortest_path(pa, pb).ok_or_else(|| {
                        Error::Routing(format!(
                            "no path between physical qubits {pa} and {pb}"
                        ))
                    })?;
                    // Walk the first endpoint down the path until adjacent.
                    for w in path.windows(2).take(path.len() - 2) {
                        out.push(Gate::two(GateKind::SWAP, w[0], w[1]));
                        let (la, lb) = (wire_of[w[0]], wire_of[w[1]]);
                        layout.swap(la, lb);
                        wire_of.swap(w[0], w[1]);
                    }
                    pa = path[path.len() - 2];
                }
                let mut ng = g.clone();
                ng.qubits = vec![pa, pb];
                out.push(ng);
            }
        }
    }
    let routed = Circuit::new(map.n_qubits, circuit.n_params, out)?;
    Ok((routed, layout))
}

/// Route onto the backend's coupling map (restricted to the circuit's
/// register with an identity initial layout), lower everything to
/// {RZ, X, SX, CX, MEASURE}, and merge/drop redundant RZ gates.
pub fn transpile(circuit: &Circuit, backend: &BackendModel) -> Result<Transpiled> {
    if !circuit.is_bound() {
        return Err(Error::validation("transpile requires a bound circuit"));
    }
    let map = backend.coupling.induced_prefix(circuit.n_qubits)?;
    let initial_layout: Vec<usize> = (0..map.n_qubits).collect();
    let (routed, final_layout) = route(circuit, &map, &initial_layout)?;
    let mut native: Vec<Gate> = Vec::with_capacity(routed.gates.len() * 3);
    for g in &routed.gates {
        native.extend(decompose_gate(g)?);
    }
    let merged = merge_rz(native, map.n_qubits);
    let circuit = Circuit::new(map.n_qubits, 0, merged)?;
    Ok(Transpiled { circuit, initial_layout, final_layout })
}
