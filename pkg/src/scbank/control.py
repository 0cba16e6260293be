"""Bank control chain: charge/discharge gate, DC current calculation, PQ
inverter control with LVRT current priority, and the frequency controller
(virtual inertia plus quasi-droop, each behind a washout).

Grid-side quantities are per unit of the bank rating; positive active power
is injection into the grid, i.e. discharge.  The DC side works in SI units
with positive cell current meaning charge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ._accel import jit
from .errors import ConfigError
from .integrators import RK4, make_stepper

Q_MODES = ("reactive-power", "terminal-voltage")

# below this string voltage the DC current is not computed
U_STRING_MIN = 1.0
DP_MAX = 1.0


def _raise(problems, where):
    if problems:
        raise ConfigError(problems, where)


@dataclass(frozen=True)
class GateParams:
    u_ch_max: float = 2.71
    u_ch_start: float = 2.4
    u_dch_min: float = 1.1
    u_dch_start: float = 1.4
    i_ch_max: float = 615.0
    i_dch_max: float = 615.0

    def __post_init__(self):
        p = []
        if not self.u_dch_min < self.u_dch_start < self.u_ch_start < self.u_ch_max:
            p.append("thresholds must satisfy u_dch_min < u_dch_start < u_ch_start < u_ch_max "
                     f"(got {self.u_dch_min}, {self.u_dch_start}, {self.u_ch_start}, {self.u_ch_max})")
        if not self.i_ch_max > 0:
            p.append(f"i_ch_max must be > 0 (got {self.i_ch_max})")
        if not self.i_dch_max > 0:
            p.append(f"i_dch_max must be > 0 (got {self.i_dch_max})")
        _raise(p, "gate")

    def pack(self):
        return np.array([self.u_ch_max, self.u_ch_start, self.u_dch_min, self.u_dch_start,
                         self.i_ch_max, self.i_dch_max])


@dataclass(frozen=True)
class GateState:
    charge_enabled: bool = True
    discharge_enabled: bool = True

    @classmethod
    def initial(cls, p, u_cell):
        """Both directions enabled except beyond the hard cut-offs."""
        return cls(u_cell < p.u_ch_max, u_cell > p.u_dch_min)


@dataclass(frozen=True)
class PQParams:
    kp_d: float = 1.0
    ki_d: float = 100.0
    kp_q: float = 1.0
    ki_q: float = 100.0
    tau_c: float = 0.05
    i_max: float = 1.1
    q_mode: str = "reactive-power"
    p_set: float = 0.0
    q_set: float | None = None

    def __post_init__(self):
        p = []
        for name in ("kp_d", "ki_d", "kp_q", "ki_q"):
            if not getattr(self, name) >= 0:
                p.append(f"{name} must be >= 0 (got {getattr(self, name)})")
        if not self.tau_c > 0:
            p.append(f"tau_c must be > 0 (got {self.tau_c})")
        if not self.i_max > 0:
            p.append(f"i_max must be > 0 (got {self.i_max})")
        if self.q_mode not in Q_MODES:
            p.append(f"q_mode must be one of {Q_MODES} (got {self.q_mode!r})")
        _raise(p, "pq")

    @property
    def q_target(self):
        """Reactive-power setpoint, or the voltage setpoint in
        terminal-voltage mode."""
        if self.q_set is not None:
            return self.q_set
        return 1.0 if self.q_mode == "terminal-voltage" else 0.0


@dataclass(frozen=True)
class PQState:
    integ_d: float = 0.0
    integ_q: float = 0.0
    p_meas: float = 0.0
    q_meas: float = 0.0


@dataclass(frozen=True)
class LvrtParams:
    v_enter: float = 0.9
    v_exit: float = 0.95
    k_q: float = 2.0
    v_ref: float = 0.9

    def __post_init__(self):
        p = []
        if not self.v_enter < self.v_exit:
            p.append(f"v_enter must be < v_exit (got {self.v_enter}, {self.v_exit})")
        # entering LVRT must call for non-negative reactive current
        if not self.v_enter <= self.v_ref:
            p.append(f"v_enter must be <= v_ref (got {self.v_enter}, {self.v_ref})")
        if not self.k_q >= 0:
            p.append(f"k_q must be >= 0 (got {self.k_q})")
        _raise(p, "lvrt")


@dataclass(frozen=True)
class FreqCtrlParams:
    k_vir: float = 100.0
    tau_w_i: float = 1.0
    k_qd: float = 150.0
    tau_w_d: float = 30.0
    tau_pll: float = 0.02
    deadband: float = 0.0

    def __post_init__(self):
        p = []
        for name in ("tau_w_i", "tau_w_d", "tau_pll"):
            if not getattr(self, name) > 0:
                p.append(f"{name} must be > 0 (got {getattr(self, name)})")
        for name in ("k_vir", "k_qd", "deadband"):
            if not getattr(self, name) >= 0:
                p.append(f"{name} must be >= 0 (got {getattr(self, name)})")
        if self.k_vir > 0 and self.k_qd > 0 and not self.tau_w_d >= 10 * self.tau_w_i:
            p.append("tau_w_d must be >= 10*tau_w_i when both loops are active "
                     f"(got tau_w_d={self.tau_w_d}, tau_w_i={self.tau_w_i})")
        _raise(p, "freq")

    def pack(self):
        return np.array([self.k_vir, self.tau_w_i, self.k_qd, self.tau_w_d, self.tau_pll,
                         self.deadband])


@dataclass(frozen=True)
class FreqCtrlState:
    f_meas: float = 1.0
    washout_vir: float = 0.0
    washout_qd: float = 0.0


# --------------------------------------------------------------------------
# kernels

@jit
def gate_step_k(u, ch, dch, u_ch_max, u_ch_start, u_dch_min, u_dch_start):
    if ch and u >= u_ch_max:
        ch = False
    elif not ch and u <= u_ch_start:
        ch = True
    if dch and u <= u_dch_min:
        dch = False
    elif not dch and u >= u_dch_start:
        dch = True
    return ch, dch


@jit
def apply_gate_k(i, ch, dch, i_ch_max, i_dch_max):
    if i > 0.0:
        return min(i, i_ch_max) if ch else 0.0
    if i < 0.0:
        return max(i, -i_dch_max) if dch else 0.0
    return 0.0


@jit
def lvrt_update_k(in_lvrt, v_ac, v_enter, v_exit):
    if not in_lvrt and v_ac < v_enter:
        return True
    if in_lvrt and v_ac > v_exit:
        return False
    return in_lvrt


@jit
def current_limit_k(i_d0, i_q0, v_ac, in_lvrt, i_max, k_q, v_ref):
    if in_lvrt:
        i_q = min(max(k_q * (v_ref - v_ac), 0.0), i_max)
        i_d_lim = math.sqrt(max(i_max * i_max - i_q * i_q, 0.0))
        return min(max(i_d0, -i_d_lim), i_d_lim), i_q
    m = math.hypot(i_d0, i_q0)
    if m > i_max:
        s = i_max / m
        return i_d0 * s, i_q0 * s
    return i_d0, i_q0


@jit
def deadband_k(x, band):
    if x > band:
        return x - band
    if x < -band:
        return x + band
    return 0.0


@jit
def freq_output_k(fp, f_meas, z_i, z_d):
    """Power request and the two branch outputs for the filter states."""
    df = deadband_k(f_meas - 1.0, fp[5])
    vir = fp[0] * (df - z_i) / fp[1]
    qd = fp[2] * (df - z_d)
    dp = min(max(-(vir + qd), -DP_MAX), DP_MAX)
    return dp, vir, qd


@jit
def freq_deriv_k(fp, f_grid, f_meas, z_i, z_d):
    df = deadband_k(f_meas - 1.0, fp[5])
    return (f_grid - f_meas) / fp[4], (df - z_i) / fp[1], (df - z_d) / fp[3]


@jit
def pq_deriv_k(kp_d, ki_d, kp_q, ki_q, tau_c, p_ref, q_ref, p_act, q_act, freeze_d, freeze_q,
               p_meas, q_meas):
    dp_meas = (p_act - p_meas) / tau_c
    dq_meas = (q_act - q_meas) / tau_c
    di_d = 0.0 if freeze_d else ki_d * (p_ref - p_meas)
    di_q = 0.0 if freeze_q else ki_q * (q_ref - q_meas)
    return dp_meas, dq_meas, di_d, di_q


@jit
def _freq_rhs(t, x, args):
    fp, f_grid = args
    d = freq_deriv_k(fp, f_grid, x[0], x[1], x[2])
    return np.array([d[0], d[1], d[2]])


@jit
def _pq_rhs(t, x, args):
    pk, p_ref, q_ref, p_act, q_act, freeze_d, freeze_q = args
    d = pq_deriv_k(pk[0], pk[1], pk[2], pk[3], pk[4], p_ref, q_ref, p_act, q_act,
                   freeze_d, freeze_q, x[0], x[1])
    return np.array([d[0], d[1], d[2], d[3]])


_freq_advance = make_stepper(_freq_rhs)
_pq_advance = make_stepper(_pq_rhs)


# --------------------------------------------------------------------------
# public step functions

def gate_step(p, s, u_cell):
    ch, dch = gate_step_k(float(u_cell), bool(s.charge_enabled), bool(s.discharge_enabled),
                          p.u_ch_max, p.u_ch_start, p.u_dch_min, p.u_dch_start)
    return GateState(bool(ch), bool(dch))


def apply_gate(p, s, i_cell_request):
    return apply_gate_k(float(i_cell_request), bool(s.charge_enabled),
                        bool(s.discharge_enabled), p.i_ch_max, p.i_dch_max)


@dataclass(frozen=True)
class DcCurrent:
    current: float
    raw: float
    low_voltage: bool = False


def dc_current(cfg, p_inverter, u_string_meas, gate_params, gate_state):
    """Cell current for a DC-side power ``p_inverter`` [W] (positive charges).

    A string voltage at or below 1 V yields zero current with ``low_voltage``
    set instead of dividing by a vanishing voltage.
    """
    if u_string_meas <= U_STRING_MIN:
        return DcCurrent(0.0, 0.0, True)
    raw = p_inverter / (cfg.n_p * u_string_meas)
    return DcCurrent(apply_gate(gate_params, gate_state, raw), raw)


def pq_step(p, s, p_ref, q_ref, p_act, q_act, dt, freeze_d=False, freeze_q=False):
    """Advance the PQ controller by ``dt`` with inputs held; returns
    ``(i_d0, i_q0, new_state)``.

    ``freeze_d``/``freeze_q`` stop the integrators while downstream limiting
    clips the corresponding current (conditional-integration anti-windup).
    In terminal-voltage mode pass the voltage setpoint as ``q_ref`` and the
    measured voltage as ``q_act``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0 (got {dt})")
    pk = np.array([p.kp_d, p.ki_d, p.kp_q, p.ki_q, p.tau_c])
    x = np.array([s.p_meas, s.q_meas, s.integ_d, s.integ_q])
    x = _pq_advance(RK4, 0.0, x, float(dt), (pk, float(p_ref), float(q_ref), float(p_act),
                                                float(q_act), bool(freeze_d), bool(freeze_q)))
    lim = p.i_max
    new = PQState(integ_d=float(np.clip(x[2], -lim, lim)), integ_q=float(np.clip(x[3], -lim, lim)),
                  p_meas=float(x[0]), q_meas=float(x[1]))
    i_d0 = p.kp_d * (p_ref - new.p_meas) + new.integ_d
    i_q0 = p.kp_q * (q_ref - new.q_meas) + new.integ_q
    return i_d0, i_q0, new


def lvrt_limit(p, i_max, i_d0, i_q0, v_ac, in_lvrt):
    """Current set-points after LVRT priority and magnitude limiting;
    returns ``(i_d, i_q, in_lvrt)``."""
    if not i_max > 0:
        raise ValueError(f"i_max must be > 0 (got {i_max})")
    flag = lvrt_update_k(bool(in_lvrt), float(v_ac), p.v_enter, p.v_exit)
    i_d, i_q = current_limit_k(float(i_d0), float(i_q0), float(v_ac), flag, i_max, p.k_q, p.v_ref)
    return i_d, i_q, bool(flag)


def freq_ctrl_step(p, s, f_grid, dt):
    """Advance the frequency controller by ``dt`` with ``f_grid`` [p.u.] held;
    returns ``(dp_ref, new_state)`` with ``dp_ref`` in p.u. of bank rating."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0 (got {dt})")
    fp = p.pack()
    x = np.array([s.f_meas, s.washout_vir, s.washout_qd])
    x = _freq_advance(RK4, 0.0, x, float(dt), (fp, float(f_grid)))
    new = FreqCtrlState(float(x[0]), float(x[1]), float(x[2]))
    return freq_output_k(fp, x[0], x[1], x[2])[0], new


def freq_branches(p, s):
    """Instantaneous ``(vir, quasi_droop)`` branch outputs."""
    _, vir, qd = freq_output_k(p.pack(), s.f_meas, s.washout_vir, s.washout_qd)
    return vir, qd
