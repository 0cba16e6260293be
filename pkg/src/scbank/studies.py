"""Study drivers built on the engine: parameter sweeps with the ideal-vs-
nonlinear accuracy summary, the cell model-reduction study and the LVRT
study."""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .cell import (
    IDEAL_VARIANTS, ideal_from, simulate_cell, soc, stored_energy,
)
from .engine import run
from .errors import ConfigError, SimulationAbort
from .grid import Disturbance, metrics

MODEL_VARIANTS = ("nonlinear",) + tuple(f"ideal:{v}" for v in IDEAL_VARIANTS)

# relative nadir error above which an ideal model counts as inaccurate
NADIR_TOLERANCE = 0.05

METRIC_COLUMNS = ("initial_voltage", "initial_soc", "nadir_hz", "nadir_time_s",
                  "avg_rocof_hz_per_s", "time_to_discharge_s", "final_soc", "final_frequency_hz",
                  "ufls_crossed", "status")


# --------------------------------------------------------------------------
# sweeps

def expand_values(spec, where="value grid"):
    """A list is taken as is; ``{start, stop, step}`` is an inclusive range."""
    if isinstance(spec, dict):
        unknown = set(spec) - {"start", "stop", "step"}
        if unknown or not {"start", "stop", "step"} <= set(spec):
            raise ConfigError(f"{where}: a range needs exactly start, stop and step")
        start, stop, step = (float(spec[k]) for k in ("start", "stop", "step"))
        if step <= 0 or stop < start:
            raise ConfigError(f"{where}: need step > 0 and stop >= start")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + k * step, 12) for k in range(n)]
    if isinstance(spec, (list, tuple)):
        return list(spec)
    return [spec]


def parse_sweep(spec):
    """Sweep specification ``{"parameters": {dotted.path: grid, ...}}`` into an
    ordered list of ``(path, values)``.  Paths are swept in the given order,
    the last one varying fastest."""
    if not isinstance(spec, dict) or set(spec) - {"parameters"}:
        raise ConfigError("sweep spec must be a mapping with a single 'parameters' key")
    params = spec.get("parameters") or {}
    if not isinstance(params, dict):
        raise ConfigError("sweep spec: 'parameters' must map dotted paths to value grids")
    axes = [(path, expand_values(grid, path)) for path, grid in params.items()]
    if not axes or any(len(v) == 0 for _, v in axes):
        raise ConfigError("sweep grid is empty")
    return axes


def sweep_points(axes):
    paths = [p for p, _ in axes]
    return [dict(zip(paths, combo)) for combo in itertools.product(*(v for _, v in axes))]


def run_point(scenario, updates, window=None):
    """Metrics row for one sweep point; a failed point is reported, not raised."""
    sc = scenario.with_updates(updates) if updates else scenario
    u0 = sc.initial_cell_voltage()
    row = dict(updates)
    row["initial_voltage"] = u0
    row["initial_soc"] = soc(sc.bank.cell, min(u0, sc.bank.cell.u_rated))
    try:
        m = metrics(run(sc), window=sc.window if window is None else window)
        row["status"] = "ok"
    except SimulationAbort as e:
        m = metrics(e.result, window=sc.window if window is None else window) if e.result else {}
        row["status"] = "aborted"
    # the initial SoC stays on the nonlinear-bank scale so models share an axis
    for k in METRIC_COLUMNS:
        if k in m and k not in row:
            row[k] = m[k]
    row.setdefault("time_to_discharge_s", None)
    return row


def _run_point_args(args):
    return run_point(*args)


def run_sweep(scenario, axes, workers=1, window=None):
    """Rows in grid order; points run in ``workers`` processes."""
    pts = sweep_points(axes)
    jobs = [(scenario, p, window) for p in pts]
    if workers <= 1 or len(jobs) == 1:
        return [run_point(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
        return list(ex.map(_run_point_args, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def _interval_width(x, flags):
    """Contiguous flagged ranges of the sorted grid ``x``.  Each flagged point
    covers the span between the midpoints to its neighbours."""
    n = len(x)
    if n == 0:
        return [], 0.0
    edges = np.empty(n + 1)
    edges[0] = x[0]
    edges[-1] = x[-1]
    edges[1:-1] = 0.5 * (x[1:] + x[:-1])
    ranges = []
    j = 0
    while j < n:
        if flags[j]:
            k = j
            while k + 1 < n and flags[k + 1]:
                k += 1
            ranges.append((float(edges[j]), float(edges[k + 1]), float(x[j]), float(x[k])))
            j = k + 1
        else:
            j += 1
    return ranges, float(sum(r[1] - r[0] for r in ranges))


def summarize(rows, f_nom=60.0, tolerance=NADIR_TOLERANCE):
    """Inaccurate initial-SoC ranges and discharge-time errors of each ideal
    variant against the nonlinear model.

    Rows are grouped by every swept parameter except the model selector and
    the initial state.  A point is inaccurate when
    ``|nadir_ideal - nadir_nl| / |f_nom - nadir_nl| > tolerance``.
    """
    skip = {"model", "bank.initial_voltage", "bank.initial_soc"} | set(METRIC_COLUMNS)
    groups = {}
    for r in rows:
        key = tuple(sorted((k, repr(v)) for k, v in r.items() if k not in skip))
        groups.setdefault(key, []).append(r)

    out = []
    for key, grp in groups.items():
        by_model = {}
        for r in grp:
            by_model.setdefault(r.get("model", "nonlinear"), {})[r["initial_voltage"]] = r
        ref = by_model.get("nonlinear")
        entry = {"group": {k: v for k, v in grp[0].items() if k not in skip}, "variants": {}}
        if ref is None:
            entry["note"] = "no nonlinear rows to compare against"
            out.append(entry)
            continue
        volts = sorted(ref)
        for model, pts in sorted(by_model.items()):
            if model == "nonlinear":
                continue
            common = [u for u in volts if u in pts]
            x = np.array([ref[u]["initial_soc"] for u in common])
            errs, flags, ttd = [], [], []
            for u in common:
                a, b = ref[u], pts[u]
                if a["status"] != "ok" or b["status"] != "ok":
                    errs.append(None)
                    flags.append(False)
                    continue
                dev = abs(f_nom - a["nadir_hz"])
                e = abs(b["nadir_hz"] - a["nadir_hz"]) / dev if dev > 0 else 0.0
                errs.append(e)
                flags.append(e > tolerance)
                ta, tb = a["time_to_discharge_s"], b["time_to_discharge_s"]
                if ta is not None and tb is not None and ta > 0:
                    ttd.append(abs(tb - ta) / ta)
            order = np.argsort(x)
            ranges, width = _interval_width(x[order], np.array(flags, dtype=bool)[order])
            entry["variants"][model] = {
                "inaccurate_soc_ranges": [{"soc_from": r[0], "soc_to": r[1],
                                           "first_point": r[2], "last_point": r[3]}
                                          for r in ranges],
                "inaccurate_soc_width": width,
                "inaccurate_points": int(sum(flags)),
                "max_relative_nadir_error": max((e for e in errs if e is not None), default=None),
                "discharge_time_mare": float(np.mean(ttd)) if ttd else None,
                "discharge_time_max_re": float(np.max(ttd)) if ttd else None,
                "discharge_time_points": len(ttd),
            }
        out.append(entry)
    return out


# --------------------------------------------------------------------------
# model-reduction study

@dataclass(frozen=True)
class CurrentProfile:
    """Piecewise-constant test current as ``(current [A], duration [s])``
    segments."""

    segments: tuple = ((30.0, 10.0), (0.0, 5.0), (-30.0, 10.0), (0.0, 5.0))

    def __post_init__(self):
        segs = tuple((float(i), float(d)) for i, d in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs or any(d <= 0 for _, d in segs):
            raise ConfigError("current profile needs segments with positive durations")

    @property
    def duration(self):
        return sum(d for _, d in self.segments)

    def __call__(self, t):
        acc = 0.0
        for i, d in self.segments:
            acc += d
            if t < acc:
                return i
        return 0.0

    @classmethod
    def parse(cls, text):
        """``"30:10,0:5,-30:10,0:5"``, i.e. ``current:duration`` pairs."""
        try:
            segs = [tuple(float(v) for v in part.split(":")) for part in text.split(",")]
        except ValueError:
            raise ConfigError(f"cannot parse current profile {text!r}") from None
        if any(len(s) != 2 for s in segs):
            raise ConfigError(f"current profile segments must be current:duration ({text!r})")
        return cls(tuple(segs))


def mape(test, ref, guard=1e-3):
    """Mean absolute percentage error, skipping points where the reference is
    below ``guard`` times its peak magnitude."""
    test = np.asarray(test, dtype=float)
    ref = np.asarray(ref, dtype=float)
    keep = np.abs(ref) >= guard * np.max(np.abs(ref))
    return float(100.0 * np.mean(np.abs(test[keep] - ref[keep]) / np.abs(ref[keep])))


REDUCE_VARIANTS = ("full", "groups-5", "groups-1", "groups-0") + tuple(
    f"ideal:{v}" for v in IDEAL_VARIANTS)

# (label, test variant, reference variant)
REDUCE_COMPARISONS = (
    ("full model vs M1 only (5 groups)", "groups-5", "full"),
    ("1 group vs 5 groups", "groups-1", "groups-5"),
    ("0 groups vs 5 groups", "groups-0", "groups-5"),
    ("0 groups vs 1 group", "groups-0", "groups-1"),
) + tuple((f"ideal {v} vs 1 group", f"ideal:{v}", "groups-1") for v in IDEAL_VARIANTS)


def reduce_variants(cell):
    m1 = cell.m1_only()
    out = {"full": replace(cell, n_groups=5)}
    for n in (5, 1, 0):
        out[f"groups-{n}"] = replace(m1, n_groups=n)
    for v in IDEAL_VARIANTS:
        out[f"ideal:{v}"] = ideal_from(cell, v).as_cell_params()
    return out


def reduce_study(cell, profile=None, u0=None, dt=1e-3, method="rk4"):
    """Drive every model variant with the same test current.

    Returns ``(table, series)``: the MAPE table (voltage and state-of-voltage
    energy estimate ``stored_energy(u_terminal)``) and the time series of
    terminal voltage and energy per variant.
    """
    profile = profile or CurrentProfile()
    u0 = 0.5 * cell.u_rated if u0 is None else u0
    series = {}
    for name, cp in reduce_variants(cell).items():
        t, u, _ = simulate_cell(cp, profile, dt, profile.duration, u0=u0, method=method)
        series["time"] = t
        series[f"{name}_v"] = u
        series[f"{name}_energy_j"] = np.array([stored_energy(cp, max(v, 0.0)) for v in u])
    series["current_a"] = np.array([profile(tk + 0.5 * dt) for tk in series["time"]])
    table = []
    for label, test, ref in REDUCE_COMPARISONS:
        table.append({
            "comparison": label,
            "voltage_mape_pct": mape(series[f"{test}_v"], series[f"{ref}_v"]),
            "energy_mape_pct": mape(series[f"{test}_energy_j"], series[f"{ref}_energy_j"]),
        })
    return table, series


def energy_curve(cell, n=271):
    """Stored energy versus voltage for the nonlinear cell and each ideal
    variant."""
    u = np.linspace(0.0, cell.u_rated, n)
    out = {"voltage_v": u, "nonlinear_j": stored_energy(cell, u)}
    for v in IDEAL_VARIANTS:
        c = ideal_from(cell, v).c
        out[f"ideal_{v}_j"] = 0.5 * c * u * u
    return out


# --------------------------------------------------------------------------
# LVRT study

LVRT_DEPTHS = (0.2, 0.37, 0.5, 0.8)
LVRT_DURATIONS = (0.1, 0.2, 0.3)
LVRT_COMPARE = "ideal:at-zero-volts"
# comparison window after the dip clears
LVRT_POST_WINDOW = 1.0


def lvrt_scenario(base, depth, duration, t_fault=1.0, t_end=None):
    d = Disturbance("voltage-dip", t_fault, depth, duration)
    sim = base.sim if t_end is None else replace(base.sim, t_end=t_end)
    return replace(base, disturbances=(d,), sim=sim)


def lvrt_point(base, depth, duration, compare=LVRT_COMPARE, t_fault=1.0):
    """Nonlinear vs ideal string voltage for one dip."""
    t_end = t_fault + duration + LVRT_POST_WINDOW + 0.5
    nl_sc = lvrt_scenario(replace(base, model="nonlinear"), depth, duration, t_fault, t_end)
    id_sc = lvrt_scenario(replace(base, model=compare), depth, duration, t_fault, t_end)
    nl, ideal = run(nl_sc), run(id_sc)
    t = nl["time"]
    win = (t >= t_fault) & (t <= t_fault + duration + LVRT_POST_WINDOW)
    diff = np.abs(nl["string_voltage_v"] - ideal["string_voltage_v"])
    m_nl = metrics(nl)
    m_id = metrics(ideal)
    return {
        "depth": depth, "duration_s": duration,
        "max_dc_difference_v": float(np.max(diff[win])),
        "spike_nonlinear_v": m_nl.get("post_clear_spike_v"),
        "spike_ideal_v": m_id.get("post_clear_spike_v"),
        "max_frequency_hz": float(np.max(nl["frequency_hz"])),
    }, nl, ideal


def lvrt_study(base, depths=LVRT_DEPTHS, durations=LVRT_DURATIONS, compare=LVRT_COMPARE,
               workers=1):
    jobs = [(base, d, tau, compare) for d in depths for tau in durations]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
            res = list(ex.map(_lvrt_row, jobs))
    else:
        res = [_lvrt_row(j) for j in jobs]
    return res


def _lvrt_row(args):
    return lvrt_point(*args)[0]


def default_workers():
    return max(1, min(8, (os.cpu_count() or 1)))

