"""Compare the numba kernels with the pure-numpy fallback.

Each path runs in its own interpreter because the choice is made at import
time from ``SCBANK_JIT``.  Reported per path: time of the first call
(includes loading or compiling the kernels), best-of-N steady-state time for
a 30 s coupled simulation at 1 ms, a 30 s cell-only run, and the result
digest so the two paths can be checked for identical output.

    python benchmarks/bench_engine.py [--repeat N] [--t-end S]
"""

import argparse
import json
import os
import subprocess
import sys

CHILD = r"""
import json, sys, time
from dataclasses import replace
from scbank import default_scenario, run
from scbank._accel import JIT_ENABLED
from scbank.cell import simulate_cell
from scbank.scenario import DEFAULT_CELL

t_end, repeat = float(sys.argv[1]), int(sys.argv[2])
sc = default_scenario(**{"sim.t_end": t_end})
t0 = time.perf_counter()
res = run(sc)
first = time.perf_counter() - t0
best = float("inf")
for _ in range(repeat):
    t0 = time.perf_counter()
    run(sc)
    best = min(best, time.perf_counter() - t0)
cell = replace(DEFAULT_CELL, n_groups=5)
prof = lambda t: 30.0 if t < 10 else (-30.0 if 15 <= t < 25 else 0.0)
simulate_cell(cell, prof, 1e-3, 1.0, u0=1.35)
t0 = time.perf_counter()
simulate_cell(cell, prof, 1e-3, 30.0, u0=1.35)
cell_t = time.perf_counter() - t0
print(json.dumps({"jit": JIT_ENABLED, "first_s": first, "run_s": best, "cell_s": cell_t,
                  "steps": sc.sim.n_steps, "digest": res.digest()}))
"""


def measure(jit, t_end, repeat):
    env = dict(os.environ, SCBANK_JIT="1" if jit else "0")
    out = subprocess.run([sys.executable, "-c", CHILD, str(t_end), str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--t-end", type=float, default=30.0)
    args = ap.parse_args(argv)

    rows = [measure(True, args.t_end, args.repeat), measure(False, args.t_end, args.repeat)]
    print(f"{'path':8s} {'first call s':>13s} {'run s':>9s} {'us/step':>9s} {'cell 30 s':>10s}")
    for r in rows:
        name = "numba" if r["jit"] else "numpy"
        print(f"{name:8s} {r['first_s']:13.3f} {r['run_s']:9.3f} "
              f"{1e6 * r['run_s'] / r['steps']:9.2f} {r['cell_s']:10.3f}")
    jit, py = rows
    if jit["jit"]:
        print(f"speed-up {py['run_s'] / jit['run_s']:.1f}x (engine), "
              f"{py['cell_s'] / jit['cell_s']:.1f}x (cell)")
    else:
        print("numba unavailable: both rows used the fallback")
    print("outputs identical" if jit["digest"] == py["digest"] else "OUTPUTS DIFFER")
    return 0 if jit["digest"] == py["digest"] else 1


if __name__ == "__main__":
    sys.exit(main())
