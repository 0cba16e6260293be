"""Reduced grid: one aggregate system-frequency-response bus (swing equation
plus reheat governor) and exogenous AC voltage dips.

A voltage-dependent share of the load, ``p_load * v**load_v_exp``, couples
voltage dips into the power balance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._accel import jit
from .errors import ConfigError, DomainError

DISTURBANCE_KINDS = ("loss-of-generation", "load-step", "voltage-dip")
KIND_CODES = {k: i for i, k in enumerate(DISTURBANCE_KINDS)}
VOLTAGE_DIP = KIND_CODES["voltage-dip"]

# first under-frequency load-shedding stage, as a fraction of nominal
UFLS_FRACTION = 59.2 / 60.0


@dataclass(frozen=True)
class SfrParams:
    f_nom: float = 60.0
    h: float = 4.0
    d: float = 1.0
    r: float = 0.05
    tau_g: float = 0.2
    tau_r: float = 7.0
    k_r: float = 0.3
    s_base: float = 400e6
    # voltage-sensitive load electrically close to the bank's bus (about
    # 34 MW on 400 MVA), constant-impedance by default
    p_load: float = 0.0858
    load_v_exp: float = 2.0

    def __post_init__(self):
        p = []
        for name in ("f_nom", "h", "r", "tau_g", "tau_r", "s_base"):
            if not getattr(self, name) > 0:
                p.append(f"{name} must be > 0 (got {getattr(self, name)})")
        if not self.d >= 0:
            p.append(f"d must be >= 0 (got {self.d})")
        if not 0 <= self.k_r <= 1:
            p.append(f"k_r must be within [0, 1] (got {self.k_r})")
        if not self.p_load >= 0:
            p.append(f"p_load must be >= 0 (got {self.p_load})")
        if p:
            raise ConfigError(p, "sfr")

    def pack(self):
        return np.array([self.f_nom, self.h, self.d, self.r, self.tau_g, self.tau_r, self.k_r,
                         self.s_base, self.p_load, self.load_v_exp])


@dataclass(frozen=True)
class Disturbance:
    kind: str
    t_start: float
    magnitude: float
    duration: float = 0.0

    def __post_init__(self):
        p = []
        if self.kind not in DISTURBANCE_KINDS:
            p.append(f"kind must be one of {DISTURBANCE_KINDS} (got {self.kind!r})")
        if not self.t_start >= 0:
            p.append(f"t_start must be >= 0 (got {self.t_start})")
        if self.kind == "voltage-dip":
            if not 0 < self.magnitude < 1:
                p.append(f"dip depth must be within (0, 1) (got {self.magnitude})")
            if not self.duration > 0:
                p.append(f"voltage dip duration must be > 0 (got {self.duration})")
        if p:
            raise ConfigError(p, "disturbance")

    @property
    def t_clear(self):
        return self.t_start + self.duration


@dataclass(frozen=True)
class GridState:
    delta_f: float = 0.0
    x_gov: float = 0.0
    x_reheat: float = 0.0
    v_ac: float = 1.0

    def p_m(self, p):
        """Mechanical power deviation [p.u.]."""
        return self.x_reheat + p.k_r * (self.x_gov - self.x_reheat)


def pack_disturbances(disturbances):
    out = np.zeros((len(disturbances), 4))
    for j, d in enumerate(disturbances):
        out[j] = (KIND_CODES[d.kind], d.t_start, d.magnitude, d.duration)
    return out


# --------------------------------------------------------------------------
# kernels; ``gp`` is the packed SfrParams vector

@jit
def sfr_deriv_k(gp, delta_f, x_gov, x_reheat, p_sc, p_dist):
    p_m = x_reheat + gp[6] * (x_gov - x_reheat)
    d_df = (p_m + p_sc - p_dist - gp[2] * delta_f) / (2.0 * gp[1])
    d_gov = (-delta_f / gp[3] - x_gov) / gp[4]
    d_reheat = (x_gov - x_reheat) / gp[5]
    return d_df, d_gov, d_reheat


@jit
def inputs_k(dist, gp, t):
    """Power imbalance [p.u. on s_base] and bus voltage [p.u.] at time ``t``."""
    v = 1.0
    p = 0.0
    for j in range(dist.shape[0]):
        t0 = dist[j, 1]
        if int(dist[j, 0]) == VOLTAGE_DIP:
            if t0 <= t < t0 + dist[j, 3]:
                v = min(v, 1.0 - dist[j, 2])
        elif t >= t0:
            p += dist[j, 2]
    if gp[8] > 0.0:
        p += gp[8] * (v ** gp[9] - 1.0)
    return p, v


# --------------------------------------------------------------------------
# public functions

def sfr_derivatives(p, s, p_sc, p_dist):
    """Time derivative of ``s``; ``p_sc`` is storage injection and
    ``p_dist`` the generation deficit, both p.u. on ``s_base``."""
    d = sfr_deriv_k(p.pack(), s.delta_f, s.x_gov, s.x_reheat, float(p_sc), float(p_dist))
    return GridState(d[0], d[1], d[2], 0.0)


def steady_state_delta_f(p, p_dist):
    return -p_dist / (p.d + 1.0 / p.r)


def voltage_profile(d, t):
    if d.kind != "voltage-dip":
        raise DomainError(f"voltage_profile needs a voltage-dip disturbance (got {d.kind!r})")
    return 1.0 - d.magnitude if d.t_start <= t < d.t_clear else 1.0


def _first_onset(disturbances):
    starts = [d["t_start"] if isinstance(d, dict) else d.t_start for d in disturbances]
    return min(starts) if starts else 0.0


def metrics(result, window=0.5, t_onset=None):
    """Frequency-response and discharge metrics of a simulation result.

    ``avg_rocof`` is the finite-difference slope of frequency over ``window``
    seconds from disturbance onset; ``time_to_discharge_s`` runs from onset
    until the discharge gate first disables (``None`` if it never does).
    """
    t = result["time"]
    if t.size == 0:
        raise ValueError("empty result")
    f = result["frequency_hz"]
    f_nom = result.meta.get("f_nom", 60.0)
    dists = result.meta.get("disturbances", [])
    t0 = _first_onset(dists) if t_onset is None else t_onset
    t0 = min(max(t0, t[0]), t[-1])
    t1 = min(t0 + window, t[-1])
    f0 = np.interp(t0, t, f)
    rocof = (np.interp(t1, t, f) - f0) / (t1 - t0) if t1 > t0 else 0.0
    i_nadir = int(np.argmin(f))

    out = {
        "nadir_hz": float(f[i_nadir]),
        "nadir_time_s": float(t[i_nadir]),
        "max_delta_f_hz": float(np.max(np.abs(f - f_nom))),
        "avg_rocof_hz_per_s": float(rocof),
        "rocof_window_s": float(window),
        "final_frequency_hz": float(f[-1]),
        "ufls_crossed": bool(f[i_nadir] < f_nom * UFLS_FRACTION),
        "time_to_discharge_s": None,
    }
    if "discharge_enabled" in result.channels:
        dch = result["discharge_enabled"]
        after = t >= t0
        ev = result.events.get("discharge_disabled_t")
        if after.any() and dch[after][0] < 0.5:
            out["time_to_discharge_s"] = 0.0
        elif ev is not None and ev >= t0:
            out["time_to_discharge_s"] = float(ev - t0)
        else:
            off = np.nonzero(after & (dch < 0.5))[0]
            if off.size:
                out["time_to_discharge_s"] = float(t[off[0]] - t0)
    if "soc" in result.channels:
        out["initial_soc"] = float(result["soc"][0])
        out["final_soc"] = float(result["soc"][-1])
    if "string_voltage_v" in result.channels:
        u = result["string_voltage_v"]
        out["max_string_voltage_v"] = float(np.max(u))
        out["min_string_voltage_v"] = float(np.min(u))
        dips = [d for d in dists if (d["kind"] if isinstance(d, dict) else d.kind) == "voltage-dip"]
        if dips:
            d0 = dips[0]
            tc = (d0["t_start"] + d0["duration"]) if isinstance(d0, dict) else d0.t_clear
            before = np.nonzero(t < tc)[0]
            post = (t >= tc) & (t <= tc + 2.0)
            if before.size and post.any():
                out["post_clear_spike_v"] = float(np.max(u[post]) - u[before[-1]])
    return out


def sanitize(obj):
    """Replace non-finite floats by ``None`` so JSON never carries NaN."""
    if isinstance(obj, dict):
        return {k: sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj
