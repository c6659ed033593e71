//! Device models: coupling map plus per-qubit and per-gate calibration.
//! Calibration drives both the stochastic noise simulation and the
//! calibration slice of graph node features.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transpile::CouplingMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QubitCalibration {
    /// Energy-relaxation time, microseconds.
    pub t1_us: f64,
    /// Dephasing time, microseconds. Must satisfy T2 <= 2*T1.
    pub t2_us: f64,
    /// P(read 1 | prepared 0).
    pub readout_p01: f64,
    /// P(read 0 | prepared 1).
    pub readout_p10: f64,
    pub frequency_ghz: f64,
}

impl QubitCalibration {
    pub fn ideal() -> Self {
        QubitCalibration {
            t1_us: f64::INFINITY,
            t2_us: f64::INFINITY,
            readout_p01: 0.0,
            readout_p10: 0.0,
            frequency_ghz: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CxCalibration {
    pub edge: [usize; 2],
    pub error: f64,
    pub duration_ns: f64,
}

/// Per-gate calibration. RZ is virtual: zero duration, zero error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateCalibration {
    pub sx_error: f64,
    pub x_error: f64,
    pub sx_duration_ns: f64,
    pub x_duration_ns: f64,
    pub cx: Vec<CxCalibration>,
}

impl GateCalibration {
    pub fn ideal() -> Self {
        GateCalibration {
            sx_error: 0.0,
            x_error: 0.0,
            sx_duration_ns: 0.0,
            x_duration_ns: 0.0,
            cx: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackendModel {
    pub id: String,
    pub n_qubits: usize,
    pub noiseless: bool,
    pub coupling: CouplingMap,
    pub qubits: Vec<QubitCalibration>,
    pub gates: GateCalibration,
}

/// Preset profile names shipped with the toolkit.
pub const PRESETS: [&str; 4] = ["noiseless", "synth_low", "synth_mid", "synth_high"];

const NOISELESS_JSON: &str = include_str!("../profiles/noiseless.json");
const SYNTH_LOW_JSON: &str = include_str!("../profiles/synth_low.json");
const SYNTH_MID_JSON: &str = include_str!("../profiles/synth_mid.json");
const SYNTH_HIGH_JSON: &str = include_str!("../profiles/synth_high.json");

impl BackendModel {
    /// Noiseless model over an explicit coupling map; used by tests and as
    /// the basis of the `noiseless` preset.
    pub fn ideal(n_qubits: usize, coupling: CouplingMap) -> Self {
        BackendModel {
            id: format!("ideal_{n_qubits}q"),
            n_qubits,
            noiseless: true,
            coupling,
            qubits: (0..n_qubits).map(|_| QubitCalibration::ideal()).collect(),
            gates: GateCalibration::ideal(),
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = match name {
            "noiseless" => NOISELESS_JSON,
            "synth_low" => SYNTH_LOW_JSON,
            "synth_mid" => SYNTH_MID_JSON,
            "synth_high" => SYNTH_HIGH_JSON,
            _ => {
                return Err(Error::Profile(format!(
                    "unknown preset `{name}` (available: {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Self::from_json(text)
    }

    /// Resolve a CLI backend argument: a preset name or a JSON file path.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if PRESETS.contains(&name_or_path) {
            Self::preset(name_or_path)
        } else {
            Self::load(name_or_path)
        }
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: BackendModel = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        self.coupling.validate()?;
        if self.coupling.n_qubits != self.n_qubits {
            return Err(Error::Profile(format!(
                "coupling map covers {} qubits but the profile declares {}",
                self.coupling.n_qubits, self.n_qubits
            )));
        }
        if self.qubits.len() != self.n_qubits {
            return Err(Error::Profile(format!(
                "expected {} qubit calibration entries, got {}",
                self.n_qubits,
                self.qubits.len()
            )));
        }
        if self.noiseless {
            return Ok(());
        }
        for (q, cal) in self.qubits.iter().enumerate() {
            let ok_prob = |p: f64| (0.0..=1.0).contains(&p);
            if !ok_prob(cal.readout_p01) || !ok_prob(cal.readout_p10) {
                return Err(Error::Profile(format!(
                    "qubit {q}: readout probabilities must be in [0, 1]"
                )));
            }
            if cal.t1_us <= 0.0 || cal.t2_us <= 0.0 {
                return Err(Error::Profile(format!("qubit {q}: T1/T2 must be positive")));
            }
            if cal.t2_us > 2.0 * cal.t1_us {
                return Err(Error::Profile(format!(
                    "qubit {q}: T2 ({}) exceeds 2*T1 ({})",
                    cal.t2_us,
                    2.0 * cal.t1_us
                )));
            }
        }
        let g = &self.gates;
        for (name, p) in [("sx_error", g.sx_error), ("x_error", g.x_error)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Profile(format!("{name} must be in [0, 1]")));
            }
        }
        if g.sx_duration_ns < 0.0 || g.x_duration_ns < 0.0 {
            return Err(Error::Profile("gate durations must be >= 0".into()));
        }
        for cx in &g.cx {
            if !(0.0..=1.0).contains(&cx.error) || cx.duration_ns < 0.0 {
                return Err(Error::Profile(format!(
                    "cx calibration on edge {:?} out of range",
                    cx.edge
                )));
            }
        }
        // Noisy profiles must calibrate every coupling edge.
        for e in &self.coupling.edges {
            if self.cx_calibration(e[0], e[1]).is_none() {
                return Err(Error::Profile(format!(
                    "missing cx calibration for edge [{}, {}]",
                    e[0], e[1]
                )));
            }
        }
        Ok(())
    }

    pub fn cx_calibration(&self, a: usize, b: usize) -> Option<&CxCalibration> {
        let key = [a.min(b), a.max(b)];
        self.gates
            .cx
            .iter()
            .find(|c| [c.edge[0].min(c.edge[1]), c.edge[0].max(c.edge[1])] == key)
    }
}
