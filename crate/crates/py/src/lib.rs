//! Python bindings for the expressibility toolkit: circuit construction and
//! I/O, backend profiles, transpilation, expressibility estimation, graph
//! encoding, and checkpoint inference.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qexpr::backend::BackendModel;
use qexpr::expressibility::{expressibility, ExprConfig};
use qexpr::gnn::{load_checkpoint, predict, Checkpoint, ModelParams};
use qexpr::graphenc::{normalize_records, to_graph};
use qexpr::pqcgen::{self, GenConfig};
use qexpr::qasm;
use qexpr::transpile::transpile;

fn err(e: qexpr::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Gate-list circuit over a fixed register.
#[pyclass(name = "Circuit", from_py_object)]
#[derive(Clone)]
struct PyCircuit {
    inner: qexpr::circuit::Circuit,
}

#[pymethods]
impl PyCircuit {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyCircuit { inner: qexpr::circuit::Circuit::from_json(text).map_err(err)? })
    }

    #[staticmethod]
    fn from_qasm(text: &str) -> PyResult<Self> {
        Ok(PyCircuit { inner: qasm::parse(text).map_err(err)? })
    }

    #[staticmethod]
    fn empty(n_qubits: usize) -> PyResult<Self> {
        Ok(PyCircuit { inner: qexpr::circuit::Circuit::empty(n_qubits).map_err(err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    fn to_qasm(&self) -> PyResult<String> {
        qasm::serialize(&self.inner).map_err(err)
    }

    #[getter]
    fn n_qubits(&self) -> usize {
        self.inner.n_qubits
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.n_params
    }

    fn __len__(&self) -> usize {
        self.inner.gates.len()
    }

    fn bind(&self, values: Vec<f64>) -> PyResult<Self> {
        Ok(PyCircuit { inner: self.inner.bind(&values).map_err(err)? })
    }

    fn inverse(&self) -> PyResult<Self> {
        Ok(PyCircuit { inner: self.inner.inverse().map_err(err)? })
    }

    fn compose(&self, other: &PyCircuit) -> PyResult<Self> {
        Ok(PyCircuit { inner: self.inner.compose(&other.inner).map_err(err)? })
    }

    fn __repr__(&self) -> String {
        format!(
            "Circuit(n_qubits={}, n_params={}, gates={})",
            self.inner.n_qubits,
            self.inner.n_params,
            self.inner.gates.len()
        )
    }
}

/// Device model: coupling map plus calibration.
#[pyclass(name = "Backend", from_py_object)]
#[derive(Clone)]
struct PyBackend {
    inner: BackendModel,
}

#[pymethods]
impl PyBackend {
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        Ok(PyBackend { inner: BackendModel::preset(name).map_err(err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyBackend { inner: BackendModel::load(path).map_err(err)? })
    }

    #[staticmethod]
    fn presets() -> Vec<String> {
        qexpr::backend::PRESETS.iter().map(|s| s.to_string()).collect()
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id.clone()
    }

    #[getter]
    fn n_qubits(&self) -> usize {
        self.inner.n_qubits
    }

    #[getter]
    fn noiseless(&self) -> bool {
        self.inner.noiseless
    }

    fn __repr__(&self) -> String {
        format!("Backend(id={:?}, n_qubits={})", self.inner.id, self.inner.n_qubits)
    }
}

#[pyfunction]
#[pyo3(signature = (n_qubits, reps, seed, p_second_single_layer=0.5, p_trailing_layers=0.5, max_entanglers_per_layer=0, reject_state_independent=true))]
#[allow(clippy::too_many_arguments)]
fn random_pqc(
    n_qubits: usize,
    reps: usize,
    seed: u64,
    p_second_single_layer: f64,
    p_trailing_layers: f64,
    max_entanglers_per_layer: usize,
    reject_state_independent: bool,
) -> PyResult<PyCircuit> {
    let cfg = GenConfig {
        n_qubits,
        reps,
        seed,
        p_second_single_layer,
        p_trailing_layers,
        max_entanglers_per_layer,
        reject_state_independent,
    };
    Ok(PyCircuit { inner: pqcgen::random_pqc(&cfg).map_err(err)? })
}

#[pyfunction]
fn real_amplitudes(n_qubits: usize, reps: usize, entanglement: &str) -> PyResult<PyCircuit> {
    let pattern = entanglement.parse().map_err(err)?;
    Ok(PyCircuit { inner: pqcgen::real_amplitudes(n_qubits, reps, pattern).map_err(err)? })
}

/// Lower to the native gate set and route onto the backend's coupling map.
/// Returns (circuit, final_layout).
#[pyfunction(name = "transpile")]
fn py_transpile(circuit: &PyCircuit, backend: &PyBackend) -> PyResult<(PyCircuit, Vec<usize>)> {
    let t = transpile(&circuit.inner, &backend.inner).map_err(err)?;
    Ok((PyCircuit { inner: t.circuit }, t.final_layout))
}

#[pyfunction]
fn haar_bin_probs(n_qubits: usize, n_bins: usize) -> Vec<f64> {
    qexpr::expressibility::haar_bin_probs(n_qubits, n_bins)
}

#[pyfunction(name = "expressibility")]
#[pyo3(signature = (circuit, backend, pairs=5000, bins=75, mode="exact", shots=1024, seed=0))]
fn py_expressibility<'py>(
    py: Python<'py>,
    circuit: &PyCircuit,
    backend: &PyBackend,
    pairs: usize,
    bins: usize,
    mode: &str,
    shots: u64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = ExprConfig {
        num_pairs: pairs,
        n_bins: bins,
        mode: mode.parse().map_err(err)?,
        shots,
        seed,
    };
    let r = expressibility(&circuit.inner, &backend.inner, &cfg).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("expr", r.expr)?;
    out.set_item("num_pairs", r.num_pairs)?;
    out.set_item("mode", mode)?;
    out.set_item("shots", r.shots_per_pair)?;
    out.set_item("n_bins", r.histogram.n_bins)?;
    out.set_item("histogram_counts", r.histogram.counts)?;
    Ok(out)
}

/// Encode a circuit as its graph record (node features, edges, globals).
/// The circuit is bound at pi/4 if symbolic, then transpiled for `backend`.
#[pyfunction]
fn circuit_graph<'py>(
    py: Python<'py>,
    circuit: &PyCircuit,
    backend: &PyBackend,
) -> PyResult<Bound<'py, PyDict>> {
    let bound = circuit
        .inner
        .bind(&vec![std::f64::consts::FRAC_PI_4; circuit.inner.n_params])
        .map_err(err)?;
    let t = transpile(&bound, &backend.inner).map_err(err)?;
    let graph = to_graph(
        &t.circuit,
        &backend.inner,
        circuit.inner.parameterized_gate_count(),
        "py",
        None,
        serde_json::Value::Null,
    )
    .map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("nodes", graph.nodes)?;
    out.set_item("edges", graph.edges.iter().map(|e| (e[0], e[1])).collect::<Vec<_>>())?;
    out.set_item("global", graph.global)?;
    out.set_item("n_qubits", graph.n_qubits)?;
    Ok(out)
}

/// Trained regressor loaded from a checkpoint file.
#[pyclass(name = "Model")]
struct PyModel {
    params: ModelParams,
    ckpt: Checkpoint,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let (params, ckpt) = load_checkpoint(path).map_err(err)?;
        Ok(PyModel { params, ckpt })
    }

    #[getter]
    fn best_epoch(&self) -> usize {
        self.ckpt.best_epoch
    }

    #[getter]
    fn best_val_loss(&self) -> f64 {
        self.ckpt.best_val_loss
    }

    /// Predicted expressibility of an abstract circuit on a backend.
    fn predict(&self, circuit: &PyCircuit, backend: &PyBackend) -> PyResult<f64> {
        let bound = circuit
            .inner
            .bind(&vec![std::f64::consts::FRAC_PI_4; circuit.inner.n_params])
            .map_err(err)?;
        let t = transpile(&bound, &backend.inner).map_err(err)?;
        let graph = to_graph(
            &t.circuit,
            &backend.inner,
            circuit.inner.parameterized_gate_count(),
            "predict",
            None,
            serde_json::Value::Null,
        )
        .map_err(err)?;
        let mut records = vec![graph];
        normalize_records(&mut records, &self.ckpt.stats);
        let refs: Vec<&qexpr::graphenc::CircuitGraph> = records.iter().collect();
        Ok(predict(&self.params, &refs).map_err(err)?[0])
    }
}

#[pymodule]
fn qexpr_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCircuit>()?;
    m.add_class::<PyBackend>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(random_pqc, m)?)?;
    m.add_function(wrap_pyfunction!(real_amplitudes, m)?)?;
    m.add_function(wrap_pyfunction!(py_transpile, m)?)?;
    m.add_function(wrap_pyfunction!(haar_bin_probs, m)?)?;
    m.add_function(wrap_pyfunction!(py_expressibility, m)?)?;
    m.add_function(wrap_pyfunction!(circuit_graph, m)?)?;
    Ok(())
}
