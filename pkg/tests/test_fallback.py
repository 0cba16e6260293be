"""The numba kernels and the pure-numpy fallback must agree bit for bit.

The path is chosen at import time from ``SCBANK_JIT``, so each runs in its
own interpreter."""

import json
import os
import subprocess
import sys

import pytest

CHILD = r"""
import hashlib, json
from dataclasses import replace
from scbank import default_scenario, run
from scbank._accel import JIT_ENABLED
from scbank.cell import simulate_cell
from scbank.scenario import DEFAULT_CELL
a = run(default_scenario(**{"sim.t_end": 1.5}))
b = run(default_scenario(**{"sim.t_end": 0.3, "grid.disturbances.0.kind": "voltage-dip",
                            "grid.disturbances.0.t_start": 0.1, "grid.disturbances.0.magnitude": 0.5,
                            "grid.disturbances.0.duration": 0.1}))
cell = replace(DEFAULT_CELL, n_groups=5)
t, u, x = simulate_cell(cell, lambda t: 30.0 if t < 0.5 else -30.0, 1e-3, 1.0, u0=1.35)
print(json.dumps({"jit": JIT_ENABLED, "a": a.digest(), "b": b.digest(),
                  "cell": hashlib.sha256(u.tobytes() + x.tobytes()).hexdigest()}))
"""


def child(flag):
    env = dict(os.environ, SCBANK_JIT=flag)
    out = subprocess.run([sys.executable, "-c", CHILD], env=env, capture_output=True,
                         text=True, timeout=600)
    assert out.returncode == 0, out.stderr
    return json.loads(out.stdout.strip().splitlines()[-1])


def test_jit_and_fallback_identical():
    fast, slow = child("1"), child("0")
    assert slow["jit"] is False
    pytest.importorskip("numba")
    assert fast["jit"] is True
    assert fast["a"] == slow["a"]
    assert fast["b"] == slow["b"]
    assert fast["cell"] == slow["cell"]
