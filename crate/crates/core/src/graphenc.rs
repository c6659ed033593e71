//! Graph encoding of transpiled circuits: 23-dimensional node features,
//! directed wire edges, a 7-dimensional global feature vector, JSONL
//! dataset I/O, feature normalization, and stratified splitting.
//!
//! Node layout: the first n nodes are INPUT markers, then native gates in
//! program order, then n MEASURE output nodes. Edges follow each qubit wire
//! from its input through every gate touching it to its output, so the
//! graph is a DAG and a gate node's in-degree equals its arity.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::backend::BackendModel;
use crate::circuit::{Circuit, GateKind};
use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const NODE_FEATURE_LEN: usize = 23;
pub const GLOBAL_FEATURE_LEN: usize = 7;
/// Width of the qubit-indicator slice; circuits are capped at 10 qubits.
pub const QUBIT_SLOTS: usize = 10;
/// One-hot node-type indices within the first six feature slots.
pub const TYPE_INPUT: usize = 0;
pub const TYPE_MEASURE: usize = 1;
pub const TYPE_RZ: usize = 2;
pub const TYPE_X: usize = 3;
pub const TYPE_SX: usize = 4;
pub const TYPE_CX: usize = 5;

pub const GLOBAL_FEATURE_NAMES: [&str; GLOBAL_FEATURE_LEN] = [
    "depth",
    "n_param_gates",
    "n_qubits",
    "count_rz",
    "count_sx",
    "count_x",
    "count_cx",
];

pub const DATASET_SCHEMA: &str = "qexpr.graphs";
pub const DATASET_VERSION: u32 = 1;

/// One training record: a feature-annotated circuit graph with an optional
/// expressibility label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitGraph {
    pub id: String,
    pub backend: String,
    pub n_qubits: usize,
    pub nodes: Vec<Vec<f64>>,
    pub edges: Vec<[usize; 2]>,
    pub global: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<f64>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

fn calibration_features(backend: &BackendModel, qubits: &[usize], kind: Option<GateKind>) -> Vec<f64> {
    if backend.noiseless {
        return vec![0.0; 7];
    }
    let finite = |v: f64| if v.is_finite() { v } else { 0.0 };
    let mut t1 = 0.0;
    let mut t2 = 0.0;
    let mut freq = 0.0;
    let mut readout = 0.0;
    for &q in qubits {
        let cal = &backend.qubits[q];
        t1 += finite(cal.t1_us);
        t2 += finite(cal.t2_us);
        freq += finite(cal.frequency_ghz);
        readout += (cal.readout_p01 + cal.readout_p10) / 2.0;
    }
    let k = qubits.len() as f64;
    let (gate_err, gate_dur) = match kind {
        Some(GateKind::X) => (backend.gates.x_error, backend.gates.x_duration_ns),
        Some(GateKind::SX) => (backend.gates.sx_error, backend.gates.sx_duration_ns),
        Some(GateKind::CX) => backend
            .cx_calibration(qubits[0], qubits[1])
            .map(|c| (c.error, c.duration_ns))
            .unwrap_or((0.0, 0.0)),
        // RZ is virtual; INPUT and MEASURE nodes carry no gate channel.
        _ => (0.0, 0.0),
    };
    vec![
        t1 / k / 100.0,
        t2 / k / 100.0,
        freq / k / 10.0,
        readout / k,
        gate_err,
        gate_dur / 1000.0,
        0.0,
    ]
}

fn node_features(
    type_idx: usize,
    qubits: &[usize],
    backend: &BackendModel,
    kind: Option<GateKind>,
) -> Vec<f64> {
    let mut f = vec![0.0; NODE_FEATURE_LEN];
    f[type_idx] = 1.0;
    for &q in qubits {
        f[6 + q] = 1.0;
    }
    f[16..23].copy_from_slice(&calibration_features(backend, qubits, kind));
    f
}

fn type_index(kind: GateKind) -> Result<usize> {
    Ok(match kind {
        GateKind::RZ => TYPE_RZ,
        GateKind::X => TYPE_X,
        GateKind::SX => TYPE_SX,
        GateKind::CX => TYPE_CX,
        other => {
            return Err(Error::Encoding(format!(
                "graph encoding expects native gates, found {}",
                other.name()
            )))
        }
    })
}

/// Encode a transpiled (native-gate) circuit. `n_param_gates` is the
/// free-parameter count of the source PQC; it cannot be recovered from the
/// bound native circuit, where every surviving rotation is already an RZ.
pub fn to_graph(
    circuit: &Circuit,
    backend: &BackendModel,
    n_param_gates: usize,
    id: impl Into<String>,
    expr: Option<f64>,
    meta: serde_json::Value,
) -> Result<CircuitGraph> {
    if circuit.n_qubits > QUBIT_SLOTS {
        return Err(Error::Encoding(format!(
            "qubit indicator supports up to {QUBIT_SLOTS} qubits, got {}",
            circuit.n_qubits
        )));
    }
    let n = circuit.n_qubits;
    let body: Vec<_> = circuit
        .gates
        .iter()
        .filter(|g| g.kind != GateKind::MEASURE)
        .collect();

    let mut nodes: Vec<Vec<f64>> = Vec::with_capacity(body.len() + 2 * n);
    let mut edges: Vec<[usize; 2]> = Vec::new();
    for q in 0..n {
        nodes.push(node_features(TYPE_INPUT, &[q], backend, None));
    }
    let mut last_on_wire: Vec<usize> = (0..n).collect();
    let mut wire_depth = vec![0usize; n];
    let mut counts = [0usize; 4]; // rz, sx, x, cx
    for g in body {
        let idx = nodes.len();
        nodes.push(node_features(type_index(g.kind)?, &g.qubits, backend, Some(g.kind)));
        let level = 1 + g.qubits.iter().map(|&q| wire_depth[q]).max().unwrap_or(0);
        for &q in &g.qubits {
            edges.push([last_on_wire[q], idx]);
            last_on_wire[q] = idx;
            wire_depth[q] = level;
        }
        match g.kind {
            GateKind::RZ => counts[0] += 1,
            GateKind::SX => counts[1] += 1,
            GateKind::X => counts[2] += 1,
            GateKind::CX => counts[3] += 1,
            _ => unreachable!(),
        }
    }
    for q in 0..n {
        let idx = nodes.len();
        nodes.push(node_features(TYPE_MEASURE, &[q], backend, None));
        edges.push([last_on_wire[q], idx]);
    }
    let depth = wire_depth.iter().copied().max().unwrap_or(0);
    let global = vec![
        depth as f64,
        n_param_gates as f64,
        n as f64,
        counts[0] as f64,
        counts[1] as f64,
        counts[2] as f64,
        counts[3] as f64,
    ];
    Ok(CircuitGraph {
        id: id.into(),
        backend: backend.id.clone(),
        n_qubits: n,
        nodes,
        edges,
        global,
        expr,
        meta,
    })
}

/// Per-column z-score statistics computed on the training split only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub node_mean: Vec<f64>,
    pub node_std: Vec<f64>,
    pub global_mean: Vec<f64>,
    pub global_std: Vec<f64>,
}

const STD_FLOOR: f64 = 1e-12;

fn column_stats(rows: impl Iterator<Item = Vec<f64>> + Clone, width: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; width];
    let mut count = 0usize;
    for row in rows.clone() {
        for (m, v) in mean.iter_mut().zip(row.iter()) {
            *m += v;
        }
        count += 1;
    }
    for m in &mut mean {
        *m /= count as f64;
    }
    let mut var = vec![0.0; width];
    for row in rows {
        for ((s, v), m) in var.iter_mut().zip(row.iter()).zip(mean.iter()) {
            let d = v - m;
            *s += d * d;
        }
    }
    let std = var.iter().map(|s| (s / count as f64).sqrt()).collect();
    (mean, std)
}

/// Compute z-score statistics over the nodes and global vectors of the
/// training records.
pub fn compute_feature_stats(records: &[CircuitGraph], train_idx: &[usize]) -> Result<FeatureStats> {
    if train_idx.is_empty() {
        return Err(Error::validation("cannot normalize an empty training split"));
    }
    let node_rows = train_idx
        .iter()
        .flat_map(|&i| records[i].nodes.iter().cloned());
    let (node_mean, node_std) = column_stats(node_rows, NODE_FEATURE_LEN);
    let global_rows = train_idx.iter().map(|&i| records[i].global.clone());
    let (global_mean, global_std) = column_stats(global_rows, GLOBAL_FEATURE_LEN);
    Ok(FeatureStats { node_mean, node_std, global_mean, global_std })
}

fn scale(row: &mut [f64], mean: &[f64], std: &[f64]) {
    for ((v, m), s) in row.iter_mut().zip(mean.iter()).zip(std.iter()) {
        // Constant columns are centered but left unscaled.
        *v = if *s < STD_FLOOR { *v - m } else { (*v - m) / s };
    }
}

/// Apply z-score normalization in place using the provided statistics.
pub fn normalize_records(records: &mut [CircuitGraph], stats: &FeatureStats) {
    for rec in records {
        for row in &mut rec.nodes {
            scale(row, &stats.node_mean, &stats.node_std);
        }
        scale(&mut rec.global, &stats.global_mean, &stats.global_std);
    }
}

/// Compute training statistics and transform the whole dataset with them.
pub fn normalize_dataset(records: &mut [CircuitGraph], train_idx: &[usize]) -> Result<FeatureStats> {
    let stats = compute_feature_stats(records, train_idx)?;
    normalize_records(records, &stats);
    Ok(stats)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub schema: String,
    pub version: u32,
    pub node_feature_len: usize,
    pub global_feature_len: usize,
    pub global_features: Vec<String>,
}

impl Default for DatasetHeader {
    fn default() -> Self {
        DatasetHeader {
            schema: DATASET_SCHEMA.into(),
            version: DATASET_VERSION,
            node_feature_len: NODE_FEATURE_LEN,
            global_feature_len: GLOBAL_FEATURE_LEN,
            global_features: GLOBAL_FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

fn check_record(rec: &CircuitGraph, line: usize) -> Result<()> {
    let n_nodes = rec.nodes.len();
    for row in &rec.nodes {
        if row.len() != NODE_FEATURE_LEN {
            return Err(Error::Dataset {
                line,
                msg: format!("node vector has length {}, expected {NODE_FEATURE_LEN}", row.len()),
            });
        }
    }
    if rec.global.len() != GLOBAL_FEATURE_LEN {
        return Err(Error::Dataset {
            line,
            msg: format!("global vector has length {}, expected {GLOBAL_FEATURE_LEN}", rec.global.len()),
        });
    }
    for e in &rec.edges {
        if e[0] >= n_nodes || e[1] >= n_nodes {
            return Err(Error::Dataset {
                line,
                msg: format!("edge [{}, {}] outside {n_nodes} nodes", e[0], e[1]),
            });
        }
    }
    Ok(())
}

/// Write records as JSONL with a schema-version metadata first line.
pub fn write_dataset(path: impl AsRef<std::path::Path>, records: &[CircuitGraph]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut out, &DatasetHeader::default())?;
    out.write_all(b"\n")?;
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Read a JSONL dataset; malformed lines report their line number.
pub fn read_dataset(path: impl AsRef<std::path::Path>) -> Result<(DatasetHeader, Vec<CircuitGraph>)> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut lines = file.lines();
    let header_line = lines
        .next()
        .ok_or(Error::Dataset { line: 1, msg: "empty file".into() })??;
    let header: DatasetHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::Dataset { line: 1, msg: format!("bad header: {e}") })?;
    if header.schema != DATASET_SCHEMA || header.version != DATASET_VERSION {
        return Err(Error::Dataset {
            line: 1,
            msg: format!(
                "unsupported schema {}@{} (expected {DATASET_SCHEMA}@{DATASET_VERSION})",
                header.schema, header.version
            ),
        });
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let rec: CircuitGraph = serde_json::from_str(&text)
            .map_err(|e| Error::Dataset { line: line_no, msg: e.to_string() })?;
        check_record(&rec, line_no)?;
        records.push(rec);
    }
    Ok((header, records))
}

/// Export the global features and labels as CSV for correlation studies.
pub fn export_globals_csv(path: impl AsRef<std::path::Path>, records: &[CircuitGraph]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "id,{},expr", GLOBAL_FEATURE_NAMES.join(","))?;
    for rec in records {
        let cells: Vec<String> = rec.global.iter().map(|v| v.to_string()).collect();
        writeln!(
            out,
            "{},{},{}",
            rec.id,
            cells.join(","),
            rec.expr.map(|v| v.to_string()).unwrap_or_default()
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Index sets of a stratified split.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified split by qubit count: within each stratum, shuffle by seed
/// and cut validation/test by rounding, with the remainder going to
/// training. Strata smaller than 10 records are allowed but warned about.
pub fn split_dataset(
    records: &[CircuitGraph],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<Split> {
    let (f_train, f_val, f_test) = fractions;
    if (f_train + f_val + f_test - 1.0).abs() > 1e-9 {
        return Err(Error::validation(format!(
            "split fractions must sum to 1, got {f_train}/{f_val}/{f_test}"
        )));
    }
    let mut strata: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, rec) in records.iter().enumerate() {
        strata.entry(rec.n_qubits).or_default().push(i);
    }
    let mut split = Split { train: Vec::new(), val: Vec::new(), test: Vec::new() };
    for (n_qubits, mut idx) in strata {
        if idx.len() < 10 {
            eprintln!(
                "warning: stratum n_qubits={n_qubits} has only {} records; split is degenerate",
                idx.len()
            );
        }
        let mut rng = RngStream::derive(seed, &[0x5B, n_qubits as u64]);
        rng.shuffle(&mut idx);
        let n_val = (f_val * idx.len() as f64).round() as usize;
        let n_test = (f_test * idx.len() as f64).round() as usize;
        let n_train = idx.len().saturating_sub(n_val + n_test);
        split.train.extend(&idx[..n_train]);
        split.val.extend(&idx[n_train..n_train + n_val]);
        split.test.extend(&idx[n_train + n_val..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Gate;
    use crate::pqcgen::{random_pqc, GenConfig};
    use crate::transpile::{transpile, CouplingMap};

    fn noiseless(n: usize) -> BackendModel {
        BackendModel::ideal(n, CouplingMap::full(n))
    }

    fn graph_of(circuit: &Circuit, backend: &BackendModel) -> CircuitGraph {
        to_graph(circuit, backend, 0, "t", None, serde_json::Value::Null).unwrap()
    }

    #[test]
    fn single_wire_chain() {
        let c = Circuit::new(1, 0, vec![Gate::rz(0, 0.3)]).unwrap();
        let g = graph_of(&c, &noiseless(1));
        assert_eq!(g.nodes.len(), 3);
        assert_eq!(g.edges, vec![[0, 1], [1, 2]]);
        assert_eq!(g.global[0], 1.0, "depth");
        assert_eq!(g.global[3], 1.0, "count_rz");
    }

    #[test]
    fn cx_node_has_two_wires_and_two_in_edges() {
        let c = Circuit::new(2, 0, vec![Gate::cx(0, 1)]).unwrap();
        let g = graph_of(&c, &noiseless(2));
        // nodes: in0, in1, cx, out0, out1
        assert_eq!(g.nodes.len(), 5);
        let cx = &g.nodes[2];
        assert_eq!(cx[TYPE_CX], 1.0);
        assert_eq!(cx[6], 1.0);
        assert_eq!(cx[7], 1.0);
        assert_eq!(cx[6..16].iter().sum::<f64>(), 2.0);
        let in_degree = g.edges.iter().filter(|e| e[1] == 2).count();
        assert_eq!(in_degree, 2);
    }

    #[test]
    fn node_count_is_gates_plus_twice_qubits() {
        let backend = noiseless(2);
        for seed in 0..5 {
            let c = random_pqc(&GenConfig::new(2, 2, seed)).unwrap();
            let bound = c.bind(&vec![0.7; c.n_params]).unwrap();
            let t = transpile(&bound, &backend).unwrap();
            let g = graph_of(&t.circuit, &backend);
            assert_eq!(g.nodes.len(), t.circuit.gates.len() + 4);
        }
    }

    #[test]
    fn graphs_are_dags_with_wire_paths() {
        let backend = noiseless(4);
        for seed in 0..5 {
            let c = random_pqc(&GenConfig::new(4, 2, seed)).unwrap();
            let bound = c.bind(&vec![0.7; c.n_params]).unwrap();
            let t = transpile(&bound, &backend).unwrap();
            let g = graph_of(&t.circuit, &backend);
            // Edges always point forward in the canonical ordering, so the
            // graph is a DAG.
            assert!(g.edges.iter().all(|e| e[0] < e[1]));
            // Every qubit wire: input has out-degree exactly 1.
            for q in 0..4 {
                assert_eq!(g.edges.iter().filter(|e| e[0] == q).count(), 1);
            }
            // Gate nodes: in-degree equals arity (popcount of indicator).
            for (i, node) in g.nodes.iter().enumerate() {
                if node[TYPE_INPUT] == 1.0 {
                    continue;
                }
                let arity = node[6..16].iter().sum::<f64>() as usize;
                let in_deg = g.edges.iter().filter(|e| e[1] == i).count();
                assert_eq!(in_deg, arity, "node {i}");
            }
        }
    }

    #[test]
    fn one_hot_and_binary_feature_ranges() {
        let backend = noiseless(3);
        let c = random_pqc(&GenConfig::new(3, 1, 8)).unwrap();
        let bound = c.bind(&vec![0.3; c.n_params]).unwrap();
        let t = transpile(&bound, &backend).unwrap();
        let g = graph_of(&t.circuit, &backend);
        for node in &g.nodes {
            assert_eq!(node.len(), NODE_FEATURE_LEN);
            assert_eq!(node[..6].iter().sum::<f64>(), 1.0, "exactly one type bit");
            assert!(node[6..16].iter().all(|&v| v == 0.0 || v == 1.0));
            assert!(node[16..].iter().all(|&v| v == 0.0), "noiseless calib is zero");
        }
    }

    #[test]
    fn noisy_backend_populates_calibration() {
        let backend = BackendModel::preset("synth_mid").unwrap();
        let c = Circuit::new(2, 0, vec![Gate::sx(0), Gate::cx(0, 1)]).unwrap();
        let g = graph_of(&c, &backend);
        let sx_node = &g.nodes[2];
        assert!(sx_node[16] > 0.0, "t1");
        assert!((sx_node[20] - backend.gates.sx_error).abs() < 1e-15);
        let cx_node = &g.nodes[3];
        let cal = backend.cx_calibration(0, 1).unwrap();
        assert!((cx_node[20] - cal.error).abs() < 1e-15);
        assert!((cx_node[21] - cal.duration_ns / 1000.0).abs() < 1e-15);
        // Input and measure nodes carry qubit calibration but no gate channel.
        assert!(g.nodes[0][16] > 0.0);
        assert_eq!(g.nodes[0][20], 0.0);
        assert_eq!(g.nodes[0][21], 0.0);
        assert_eq!(g.nodes.last().unwrap()[20], 0.0);
    }

    #[test]
    fn non_native_gate_is_an_encoding_error() {
        let c = Circuit::new(1, 0, vec![Gate::one(GateKind::H, 0)]).unwrap();
        let err = to_graph(&c, &noiseless(1), 0, "t", None, serde_json::Value::Null).unwrap_err();
        assert!(matches!(err, Error::Encoding(_)));
    }

    #[test]
    fn depth_counts_parallel_layers_once() {
        let c = Circuit::new(
            2,
            0,
            vec![Gate::sx(0), Gate::sx(1), Gate::cx(0, 1), Gate::sx(1)],
        )
        .unwrap();
        let g = graph_of(&c, &noiseless(2));
        assert_eq!(g.global[0], 3.0);
    }

    #[test]
    fn constant_columns_center_to_zero() {
        let backend = noiseless(2);
        let mut records: Vec<CircuitGraph> = (0..6)
            .map(|seed| {
                let c = random_pqc(&GenConfig::new(2, 1, seed)).unwrap();
                let bound = c.bind(&vec![0.4; c.n_params]).unwrap();
                let t = transpile(&bound, &backend).unwrap();
                let mut g = graph_of(&t.circuit, &backend);
                g.expr = Some(0.5);
                g
            })
            .collect();
        let train: Vec<usize> = (0..records.len()).collect();
        let stats = normalize_dataset(&mut records, &train).unwrap();
        // n_qubits is constant (2.0): centered but unscaled.
        assert!(stats.global_std[2] < STD_FLOOR);
        for rec in &records {
            assert_eq!(rec.global[2], 0.0);
        }
        // Calibration columns are all-zero on a noiseless backend.
        for rec in &records {
            for node in &rec.nodes {
                for &v in &node[16..] {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn training_columns_standardize_and_validation_does_not() {
        let backend = noiseless(3);
        let mut records: Vec<CircuitGraph> = (0..40)
            .map(|seed| {
                let n = 2 + (seed as usize % 2);
                let c = random_pqc(&GenConfig::new(n, 1 + seed as usize % 2, seed)).unwrap();
                let bound = c.bind(&vec![0.4; c.n_params]).unwrap();
                let t = transpile(&bound, &backend).unwrap();
                graph_of(&t.circuit, &backend)
            })
            .collect();
        let train: Vec<usize> = (0..30).collect();
        let stats = normalize_dataset(&mut records, &train).unwrap();
        // Recompute stats of the transformed training columns: mean ~ 0, std ~ 1.
        let check = compute_feature_stats(&records, &train).unwrap();
        for (col, baseline_std) in check.global_std.iter().enumerate().take(GLOBAL_FEATURE_LEN) {
            if stats.global_std[col] >= STD_FLOOR {
                assert!(check.global_mean[col].abs() < 1e-9, "col {col}");
                assert!((baseline_std - 1.0).abs() < 1e-9, "col {col}");
            }
        }
        // Validation columns generally keep a nonzero mean.
        let val: Vec<usize> = (30..40).collect();
        let vstats = compute_feature_stats(&records, &val).unwrap();
        assert!(vstats.global_mean.iter().any(|m| m.abs() > 1e-6));
    }

    #[test]
    fn dataset_round_trips() {
        let backend = noiseless(3);
        let records: Vec<CircuitGraph> = (0..100)
            .map(|seed| {
                let n = 1 + (seed as usize % 3);
                let c = random_pqc(&GenConfig::new(n, 1, seed)).unwrap();
                let bound = c.bind(&vec![0.9; c.n_params]).unwrap();
                let t = transpile(&bound, &backend).unwrap();
                let mut g = to_graph(
                    &t.circuit,
                    &backend,
                    c.n_params,
                    format!("r{seed}"),
                    Some(seed as f64 * 0.01),
                    serde_json::json!({"seed": seed}),
                )
                .unwrap();
                if seed % 7 == 0 {
                    g.expr = None; // predict-time records carry no label
                }
                g
            })
            .collect();
        let path = std::env::temp_dir().join(format!("qexpr_ds_{}.jsonl", std::process::id()));
        write_dataset(&path, &records).unwrap();
        let (header, back) = read_dataset(&path).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(header, DatasetHeader::default());
        assert_eq!(records, back);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let path = std::env::temp_dir().join(format!("qexpr_bad_{}.jsonl", std::process::id()));
        let header = serde_json::to_string(&DatasetHeader::default()).unwrap();
        std::fs::write(&path, format!("{header}\n{{not json}}\n")).unwrap();
        let err = read_dataset(&path).unwrap_err();
        std::fs::remove_file(&path).ok();
        match err {
            Error::Dataset { line, .. } => assert_eq!(line, 2),
            other => panic!("expected dataset error, got {other}"),
        }
    }

    #[test]
    fn wrong_node_length_is_rejected() {
        let rec = CircuitGraph {
            id: "x".into(),
            backend: "b".into(),
            n_qubits: 1,
            nodes: vec![vec![0.0; 5]],
            edges: vec![],
            global: vec![0.0; GLOBAL_FEATURE_LEN],
            expr: None,
            meta: serde_json::Value::Null,
        };
        assert!(check_record(&rec, 3).is_err());
    }

    #[test]
    fn stratified_split_proportions() {
        let mut records = Vec::new();
        for n in 1..=4 {
            for i in 0..100 {
                records.push(CircuitGraph {
                    id: format!("{n}-{i}"),
                    backend: "b".into(),
                    n_qubits: n,
                    nodes: vec![],
                    edges: vec![],
                    global: vec![0.0; GLOBAL_FEATURE_LEN],
                    expr: Some(0.0),
                    meta: serde_json::Value::Null,
                });
            }
        }
        let split = split_dataset(&records, (0.7, 0.1, 0.2), 5).unwrap();
        assert_eq!(split.train.len(), 280);
        assert_eq!(split.val.len(), 40);
        assert_eq!(split.test.len(), 80);
        // Disjoint and covering.
        let mut all: Vec<usize> = split
            .train
            .iter()
            .chain(&split.val)
            .chain(&split.test)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..400).collect::<Vec<_>>());
        // Per-stratum balance.
        for n in 1..=4usize {
            let in_train = split.train.iter().filter(|&&i| records[i].n_qubits == n).count();
            assert_eq!(in_train, 70, "stratum {n}");
        }
        // Same seed, same split.
        let again = split_dataset(&records, (0.7, 0.1, 0.2), 5).unwrap();
        assert_eq!(split, again);
    }

    #[test]
    fn split_rejects_bad_fractions() {
        assert!(split_dataset(&[], (0.5, 0.2, 0.2), 0).is_err());
    }
}
