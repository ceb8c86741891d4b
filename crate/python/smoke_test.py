#!/usr/bin/env python3
"""Smoke test for the sclpy extension module.

Builds the cdylib with cargo if needed, loads it, and checks a small
end-to-end circuit learning round trip plus two distance identities.

    python3 python/smoke_test.py
"""

import math
import shutil
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load_sclpy():
    lib = ROOT / "target" / "debug" / "libsclpy.so"
    if not lib.exists():
        subprocess.run(["cargo", "build", "-p", "scl-py"], cwd=ROOT, check=True)
    staged = Path(__file__).resolve().parent / "sclpy.so"
    if not staged.exists() or staged.stat().st_mtime < lib.stat().st_mtime:
        shutil.copy2(lib, staged)
    sys.path.insert(0, str(staged.parent))
    import sclpy

    return sclpy


def main():
    sclpy = load_sclpy()
    print(f"sclpy {sclpy.__version__}")

    n = 6
    circuit = sclpy.random_line_circuit(n, 2, "cz-swap", seed=7)
    assert sclpy.circuit_depth(circuit) == 2

    zero = [0j] * (1 << n)
    zero[0] = 1 + 0j
    state = sclpy.apply_circuit(circuit, zero)
    norm = sum(abs(a) ** 2 for a in state)
    assert abs(norm - 1.0) < 1e-10, norm

    prep, fid = sclpy.learn_state_1d(state, 2, "cz-swap")
    assert fid >= 1.0 - 1e-9, fid
    rebuilt = sclpy.apply_circuit(prep, zero)
    overlap = abs(sum(a.conjugate() * b for a, b in zip(state, rebuilt))) ** 2
    assert overlap >= 1.0 - 1e-9, overlap
    print(f"learned 1d preparation, fidelity {fid:.12f}")

    eye = [[1 + 0j, 0j], [0j, 1 + 0j]]
    x = [[0j, 1 + 0j], [1 + 0j, 0j]]
    assert sclpy.average_gate_distance(eye, eye) < 1e-12
    d = sclpy.average_gate_distance(eye, x)
    # d_ave(I, X) = (d/(d+1)) (1 - |tr(X)|^2 / d^2) = 2/3 for qubits.
    assert abs(d - 2.0 / 3.0) < 1e-12, d
    lower, upper = sclpy.diamond_proxy(eye, x)
    assert 0.0 <= lower <= upper + 1e-12, (lower, upper)
    print(f"distance identities hold (d_ave(I, X) = {d:.12f})")

    phase = [[math.e ** 0j, 0j], [0j, complex(math.cos(0.3), math.sin(0.3))]]
    assert sclpy.average_gate_distance(eye, phase) > 0

    print("smoke test passed")


if __name__ == "__main__":
    main()
