#!/usr/bin/env python3
"""Smoke test of the qexpr_py extension module.

Builds the cdylib if needed, loads it from target/, and exercises the main
types and operations end to end. Run from the repository root:

    python3 python/smoke_test.py
"""
import json
import math
import shutil
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def ensure_module():
    lib = ROOT / "target" / "release" / "libqexpr_py.so"
    if not lib.exists():
        print("building qexpr-py (release)...")
        subprocess.run(
            ["cargo", "build", "--release", "-p", "qexpr-py"], cwd=ROOT, check=True
        )
    staged = Path(__file__).resolve().parent / "qexpr_py.so"
    if not staged.exists() or lib.stat().st_mtime > staged.stat().st_mtime:
        shutil.copyfile(lib, staged)
    sys.path.insert(0, str(staged.parent))


def main():
    ensure_module()
    import qexpr_py as qx

    backend = qx.Backend.preset("noiseless")
    assert backend.noiseless and backend.n_qubits == 10
    assert "synth_mid" in qx.Backend.presets()

    # Circuit construction, JSON/QASM round trips, bind/inverse/compose.
    ra = qx.real_amplitudes(2, 1, "linear")
    assert ra.n_qubits == 2 and ra.n_params == 4 and len(ra) == 5
    back = qx.Circuit.from_json(ra.to_json())
    assert back.n_params == 4
    bound = ra.bind([0.1, 0.2, 0.3, 0.4])
    assert bound.n_params == 0
    reparsed = qx.Circuit.from_qasm(bound.to_qasm())
    assert len(reparsed) == len(bound)
    roundtrip = bound.compose(bound.inverse())
    assert len(roundtrip) == 2 * len(bound)

    # Haar bins: n=1 is uniform.
    q = qx.haar_bin_probs(1, 75)
    assert all(abs(v - 1 / 75) < 1e-12 for v in q)

    # Transpilation produces a routed native circuit.
    native, layout = qx.transpile(bound, backend)
    assert sorted(layout) == list(range(2))

    # Expressibility: idle circuit hits the closed form (N-1) ln 75.
    idle = qx.Circuit.empty(1)
    r = qx.expressibility(idle, backend, pairs=200, seed=3)
    assert abs(r["expr"] - math.log(75)) < 1e-9, r["expr"]
    assert sum(r["histogram_counts"]) == 200

    # A real ansatz lands strictly below the idle value.
    r2 = qx.expressibility(ra, backend, pairs=500, seed=3)
    assert 0.0 <= r2["expr"] < 1.0, r2["expr"]

    # Graph encoding shape contract.
    g = qx.circuit_graph(ra, backend)
    assert all(len(row) == 23 for row in g["nodes"])
    assert len(g["global"]) == 7
    n_nodes = len(g["nodes"])
    assert all(0 <= s < n_nodes and 0 <= t < n_nodes for s, t in g["edges"])

    # Model loading and prediction, when a checkpoint is available.
    ckpt = ROOT / "target" / "smoke_ckpt.json"
    if ckpt.exists():
        model = qx.Model.load(str(ckpt))
        pred = model.predict(ra, backend)
        assert math.isfinite(pred)
        print(f"checkpoint prediction for ra(2,1,linear): {pred:.4f}")

    print(json.dumps({"idle_expr": r["expr"], "ra_expr": r2["expr"]}, indent=2))
    print("smoke test passed")


if __name__ == "__main__":
    main()
