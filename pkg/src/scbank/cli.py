"""Command-line front end.

Exit codes: 0 success, 2 invalid input (scenario, sweep or profile), 3 the
simulation produced a non-finite state.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np
import yaml

from . import __version__
from .cell import CellParams, SlowBranch
from .engine import run
from .errors import ConfigError, SimulationAbort
from .grid import metrics, sanitize
from .scenario import _Collector, default_scenario, load
from .studies import (
    CurrentProfile, LVRT_DEPTHS, LVRT_DURATIONS, default_workers, energy_curve, lvrt_study,
    parse_sweep, reduce_study, run_sweep, summarize, sweep_points,
)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_ABORT = 3


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(sanitize(obj), f, indent=2, allow_nan=False)
        f.write("\n")


def _write_rows(path, rows, columns=None):
    if columns is None:
        columns = []
        for r in rows:
            columns.extend(k for k in r if k not in columns)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow(["" if r.get(c) is None else _fmt(r.get(c)) for c in columns])
    return columns


def _write_columns(path, data):
    names = list(data)
    np.savetxt(path, np.column_stack([data[n] for n in names]), delimiter=",",
               header=",".join(names), comments="", fmt="%.10g")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _outdir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _read_yaml(path):
    try:
        with open(path, encoding="utf-8") as f:
            return yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: not valid YAML: {e}") from None


def _load_scenario(path):
    try:
        return load(path)
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}") from None


def _run_metrics(result, window, seed):
    m = metrics(result, window=window)
    return {
        "metrics": m,
        "events": result.events,
        "engine": result.meta,
        "validation": {"status": "ok", "scenario": result.scenario},
        "seed_echo": seed,
    }


# --------------------------------------------------------------------------
# commands

def cmd_run(args):
    sc = _load_scenario(args.scenario)
    window = sc.window if args.window is None else args.window
    out = _outdir(args.out)
    try:
        res = run(sc)
    except SimulationAbort as e:
        if e.result is not None:
            e.result.to_csv(os.path.join(out, "timeseries.csv"))
            payload = _run_metrics(e.result, window, args.seed_echo)
            payload["error"] = str(e)
            _write_json(os.path.join(out, "metrics.json"), payload)
        raise
    res.to_csv(os.path.join(out, "timeseries.csv"))
    payload = _run_metrics(res, window, args.seed_echo)
    _write_json(os.path.join(out, "metrics.json"), payload)
    m = payload["metrics"]
    ttd = m["time_to_discharge_s"]
    print(f"nadir {m['nadir_hz']:.4f} Hz at {m['nadir_time_s']:.3f} s, "
          f"avg RoCoF {m['avg_rocof_hz_per_s']:.4f} Hz/s, "
          f"time to discharge {'-' if ttd is None else f'{ttd:.3f} s'}, "
          f"final SoC {m['final_soc']:.3f}")
    return EXIT_OK


def cmd_sweep(args):
    sc = _load_scenario(args.scenario)
    axes = parse_sweep(_read_yaml(args.sweep))
    # resolve every point up front so a bad value is a validation error
    for p in sweep_points(axes):
        sc.with_updates(p)
    out = _outdir(args.out)
    workers = args.workers or 1
    rows = run_sweep(sc, axes, workers=workers, window=args.window)
    _write_rows(os.path.join(out, "sweep.csv"), rows)
    summary = {
        "points": len(rows),
        "axes": {p: v for p, v in axes},
        "criterion": "|nadir_ideal - nadir_nonlinear| / |f_nom - nadir_nonlinear| > 0.05",
        "groups": summarize(rows, f_nom=sc.sfr.f_nom),
        "seed_echo": args.seed_echo,
    }
    _write_json(os.path.join(out, "summary.json"), summary)
    print(f"{len(rows)} points -> {os.path.join(out, 'sweep.csv')}")
    for g in summary["groups"]:
        if g["group"]:
            print("  " + ", ".join(f"{k}={v}" for k, v in g["group"].items()))
        for model, v in g["variants"].items():
            mare = v["discharge_time_mare"]
            print(f"  {model:22s} inaccurate SoC width {v['inaccurate_soc_width']:.3f}"
                  f" ({v['inaccurate_points']} pts), discharge-time MARE "
                  f"{'-' if mare is None else f'{100 * mare:.1f}%'}")
    return EXIT_OK


def load_cell_file(path):
    """Cell file: ``cell`` mapping plus optional ``initial_voltage``, ``dt``
    and ``profile`` (list of ``[current, duration]``)."""
    data = _read_yaml(path)
    c = _Collector()
    top = c.section(data, "cell file", ("cell", "initial_voltage", "dt", "method", "profile"),
                    ("cell",))
    cell_d = top.get("cell")
    slow = []
    if isinstance(cell_d, dict):
        for j, b in enumerate(cell_d.get("slow_branches") or []):
            sb = c.build(SlowBranch, b, f"cell.slow_branches.{j}", ("r", "c"))
            if sb is not None:
                slow.append(sb)
    cell = c.build(CellParams, cell_d, "cell", ("c0", "kv", "rs", "rdc"),
                   slow_branches=tuple(slow))
    profile = None
    if top.get("profile") is not None:
        try:
            profile = CurrentProfile(tuple(tuple(s) for s in top["profile"]))
        except (ConfigError, TypeError, ValueError) as e:
            c.problems.append(f"profile: {e}")
    if c.problems:
        raise ConfigError(c.problems)
    return cell, top.get("initial_voltage"), top.get("dt", 1e-3), top.get("method", "rk4"), profile


def cmd_reduce_study(args):
    cell, u0, dt, method, profile = load_cell_file(args.cell)
    if args.profile:
        if os.path.exists(args.profile):
            segs = _read_yaml(args.profile)
            if isinstance(segs, dict):
                segs = segs.get("profile")
            try:
                profile = CurrentProfile(tuple(tuple(s) for s in segs))
            except (TypeError, ValueError) as e:
                raise ConfigError(f"profile: {e}") from None
        else:
            profile = CurrentProfile.parse(args.profile)
    if not 0 < dt <= 0.01:
        raise ConfigError(f"dt must be within (0, 0.01] s (got {dt})")
    out = _outdir(args.out)
    table, series = reduce_study(cell, profile, u0=u0, dt=dt, method=method)
    _write_rows(os.path.join(out, "reduce_mape.csv"), table,
                ["comparison", "voltage_mape_pct", "energy_mape_pct"])
    _write_columns(os.path.join(out, "reduce_timeseries.csv"), series)
    _write_columns(os.path.join(out, "energy_curve.csv"), energy_curve(cell))
    _write_json(os.path.join(out, "reduce_summary.json"),
                {"table": table, "profile": [list(s) for s in (profile or CurrentProfile()).segments],
                 "initial_voltage": u0 if u0 is not None else 0.5 * cell.u_rated, "dt": dt})
    print(f"{'comparison':36s} {'voltage %':>10s} {'energy %':>10s}")
    for r in table:
        print(f"{r['comparison']:36s} {r['voltage_mape_pct']:10.3f} {r['energy_mape_pct']:10.3f}")
    return EXIT_OK


def cmd_lvrt_study(args):
    sc = _load_scenario(args.scenario)
    depths = [float(v) for v in args.depths.split(",")] if args.depths else LVRT_DEPTHS
    durs = [float(v) for v in args.durations.split(",")] if args.durations else LVRT_DURATIONS
    out = _outdir(args.out)
    rows = lvrt_study(sc, depths, durs, workers=args.workers or 1)
    _write_rows(os.path.join(out, "lvrt.csv"), rows)
    print(f"{'depth':>6s} {'dur s':>6s} {'max |dU| V':>11s} {'spike NL V':>11s} {'spike ID V':>11s}")
    for r in rows:
        print(f"{r['depth']:6.2f} {r['duration_s']:6.2f} {r['max_dc_difference_v']:11.2f} "
              f"{r['spike_nonlinear_v'] or 0.0:11.2f} {r['spike_ideal_v'] or 0.0:11.2f}")
    return EXIT_OK


def cmd_validate(args):
    sc = _load_scenario(args.scenario)
    print(f"{args.scenario}: ok (model {sc.model}, {len(sc.disturbances)} disturbance(s), "
          f"dt {sc.sim.dt} s, t_end {sc.sim.t_end} s)")
    return EXIT_OK


TEMPLATES = {
    "scenario": lambda: default_scenario().dumps(),
    "sweep": lambda: yaml.safe_dump({"parameters": {
        "model": ["nonlinear", "ideal:at-zero-volts", "ideal:at-half-rated", "ideal:at-rated"],
        "bank.initial_voltage": {"start": 1.1, "stop": 2.7, "step": 0.1}}}, sort_keys=False),
    "cell": lambda: yaml.safe_dump({
        "cell": {"c0": 600.0, "kv": 150.0, "rs": 0.25e-3, "rdc": 0.5e-3, "n_groups": 5,
                 "u_rated": 2.7, "slow_branches": [{"r": 1.0, "c": 60.0}, {"r": 5.0, "c": 60.0}],
                 "leak_resistance": 1.0e4},
        "initial_voltage": 1.35, "dt": 0.001,
        "profile": [[30.0, 10.0], [0.0, 5.0], [-30.0, 10.0], [0.0, 5.0]]}, sort_keys=False),
}


def cmd_template(args):
    sys.stdout.write(TEMPLATES[args.kind]())
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="scbank", description="Supercapacitor bank simulations.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, workers=False):
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--window", type=float, default=None,
                        help="average-RoCoF window [s] (default: scenario value)")
        sp.add_argument("--seed-echo", default=None,
                        help="echoed into the metadata only; runs are deterministic")
        if workers:
            sp.add_argument("--workers", type=int, default=default_workers(),
                            help="parallel processes")

    sp = sub.add_parser("run", help="simulate one scenario")
    sp.add_argument("scenario")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="Cartesian parameter sweep")
    sp.add_argument("scenario")
    sp.add_argument("sweep", help="YAML sweep spec: parameters: {dotted.path: grid}")
    common(sp, workers=True)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("reduce-study", help="cell model-reduction study")
    sp.add_argument("cell", help="YAML cell file")
    sp.add_argument("--profile", default=None,
                    help="test current as 'I:T,I:T,...' or a YAML file (default +-30 A)")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_reduce_study)

    sp = sub.add_parser("lvrt-study", help="voltage-dip depth x duration study")
    sp.add_argument("scenario")
    sp.add_argument("--depths", default=None, help="comma-separated dip depths [p.u.]")
    sp.add_argument("--durations", default=None, help="comma-separated durations [s]")
    common(sp, workers=True)
    sp.set_defaults(func=cmd_lvrt_study)

    sp = sub.add_parser("validate", help="check a scenario file")
    sp.add_argument("scenario")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("template", help="print a starter file")
    sp.add_argument("kind", choices=sorted(TEMPLATES))
    sp.set_defaults(func=cmd_template)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print("invalid input:", file=sys.stderr)
        for prob in e.problems:
            print(f"  - {prob}", file=sys.stderr)
        return EXIT_INVALID
    except SimulationAbort as e:
        print(f"simulation aborted: {e}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
