"""Fixed-step simulation of the coupled bank + control + grid system.

Continuous states (cell capacitor voltages, grid, controller filters and
integrators) are advanced by the selected method.  Discrete logic is held
over a step and updated at step boundaries: LVRT hysteresis before the step
(its input is exogenous), the charge/discharge gate after it, on the
post-step terminal voltage.  The DC current uses the string voltage measured
at the end of the previous step, which breaks the algebraic loop through the
ESR.

State vector: ``[cell (1 + n_groups + n_slow) | delta_f, x_gov, x_reheat |
p_meas, q_meas, integ_d, integ_q | f_meas, z_vir, z_qd]``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from ._accel import JIT_ENABLED, jit
from .cell import CellState, P_NG, P_NSLOW, cell_deriv_k, soc_k, terminal_k
from .control import (
    DP_MAX, U_STRING_MIN, GateState, apply_gate_k, current_limit_k, freq_deriv_k,
    freq_output_k, gate_step_k, lvrt_update_k, pq_deriv_k,
)
from .errors import ConfigError, SimulationAbort
from .grid import inputs_k, pack_disturbances, sfr_deriv_k
from .integrators import METHODS, make_stepper

DT_MAX = 0.01

# system parameter vector
S_NS, S_NP, S_PRATED = 0, 1, 2
S_GATE = 3            # u_ch_max, u_ch_start, u_dch_min, u_dch_start, i_ch_max, i_dch_max
S_KPD, S_KID, S_KPQ, S_KIQ, S_TAUC, S_IMAX, S_QMODE, S_PSET, S_QSET = range(9, 18)
S_VENTER, S_VEXIT, S_KQ, S_VREF = range(18, 22)
S_FREQ = 22           # 6 entries, FreqCtrlParams.pack()
S_GRID = 28           # 10 entries, SfrParams.pack()
S_LEN = 38

# discrete state
D_CH, D_DCH, D_LVRT, D_UMEAS = range(4)

# algebraic outputs
(A_I_CELL, A_U_TERM, A_P_GRID, A_ID, A_IQ, A_DP_REF, A_P_REF, A_LOWV, A_Q_ACT,
 A_PDIST, A_VAC) = range(11)
N_AUX = 11

# events
EV_DCH_OFF, EV_CH_OFF, EV_TOGGLES, EV_LOWV, EV_ABORT = range(5)
N_EV = 5

CHANNELS = (
    "time", "frequency_hz", "frequency_pu", "delta_f_pu", "p_sc_mw", "p_sc_pu", "p_ref_pu",
    "q_sc_pu", "cell_current_a", "cell_voltage_v", "u_c_v", "string_voltage_v", "soc",
    "charge_enabled", "discharge_enabled", "in_lvrt", "i_d_pu", "i_q_pu", "v_ac_pu",
    "p_dist_pu", "p_mech_pu",
)
N_CH = len(CHANNELS)


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    t_end: float = 30.0
    method: str = "rk4"
    record_decimation: int = 1

    def __post_init__(self):
        p = []
        if not 0 < self.dt <= DT_MAX:
            p.append(f"dt must be within (0, {DT_MAX}] s, the 1-10 ms electromechanical "
                     f"step range (got {self.dt})")
        if not self.t_end > 0:
            p.append(f"t_end must be > 0 (got {self.t_end})")
        if self.method not in METHODS:
            p.append(f"method must be one of {tuple(METHODS)} (got {self.method!r})")
        if int(self.record_decimation) != self.record_decimation or self.record_decimation < 1:
            p.append(f"record_decimation must be an integer >= 1 (got {self.record_decimation})")
        if p:
            raise ConfigError(p, "sim")

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))


@dataclass
class SimResult:
    channels: dict
    meta: dict = field(default_factory=dict)
    events: dict = field(default_factory=dict)
    scenario: dict | None = None

    def __getitem__(self, name):
        return self.channels[name]

    def __len__(self):
        return len(self.channels["time"])

    def as_array(self):
        return np.column_stack([self.channels[c] for c in CHANNELS])

    def digest(self):
        return hashlib.sha256(np.ascontiguousarray(self.as_array()).tobytes()).hexdigest()

    def to_csv(self, path):
        header = ",".join(CHANNELS)
        np.savetxt(path, self.as_array(), delimiter=",", header=header, comments="",
                   fmt="%.10g")


@dataclass
class SimState:
    t: float
    x: np.ndarray
    disc: np.ndarray
    k: int = 0

    def cell(self, system):
        return CellState.from_vector(system.cell, self.x)


# --------------------------------------------------------------------------
# kernels

@jit
def _core(x, cp, sp, nc, u_meas, ch, dch, lvrt, p_dist, v_ac, dx, aux):
    """Evaluate all algebraic outputs and, when ``dx`` has entries, the
    state derivative."""
    fp = sp[S_FREQ:S_FREQ + 6]
    gp = sp[S_GRID:S_GRID + 10]
    g = nc
    q = nc + 3
    fq = nc + 7

    dp_ref, _, _ = freq_output_k(fp, x[fq], x[fq + 1], x[fq + 2])
    p_ref = sp[S_PSET] + dp_ref
    p_meas = x[q]
    q_meas = x[q + 1]
    e_d = p_ref - p_meas
    e_q = sp[S_QSET] - q_meas
    i_d0 = sp[S_KPD] * e_d + x[q + 2]
    i_q0 = sp[S_KPQ] * e_q + x[q + 3]
    i_max = sp[S_IMAX]
    i_d, i_q = current_limit_k(i_d0, i_q0, v_ac, lvrt, i_max, sp[S_KQ], sp[S_VREF])

    # DC side: injection into the grid discharges the cells
    p_ac = v_ac * i_d * sp[S_PRATED]
    low_v = u_meas <= U_STRING_MIN
    i_raw = 0.0 if low_v else -p_ac / (sp[S_NP] * u_meas)
    i_cell = apply_gate_k(i_raw, ch, dch, sp[S_GATE + 4], sp[S_GATE + 5])
    p_grid = -i_cell * sp[S_NP] * u_meas
    p_act = p_grid / sp[S_PRATED]
    i_d_eff = p_act / v_ac if v_ac > 0.0 else 0.0
    q_act = v_ac * i_q
    q_in = v_ac if sp[S_QMODE] > 0.5 else q_act

    u_term = terminal_k(cp, x, i_cell)[0]
    aux[A_I_CELL] = i_cell
    aux[A_U_TERM] = u_term
    aux[A_P_GRID] = p_grid
    aux[A_ID] = i_d_eff
    aux[A_IQ] = i_q
    aux[A_DP_REF] = dp_ref
    aux[A_P_REF] = p_ref
    aux[A_LOWV] = 1.0 if low_v else 0.0
    aux[A_Q_ACT] = q_act
    aux[A_PDIST] = p_dist
    aux[A_VAC] = v_ac
    if dx.shape[0] == 0:
        return

    # conditional integration: hold an integrator while its output is clipped
    # in the direction the error would push it
    ex_d = i_d0 - i_d_eff
    ex_q = i_q0 - i_q
    freeze_d = abs(ex_d) > 1e-9 and ex_d * e_d > 0.0
    freeze_q = abs(ex_q) > 1e-9 and ex_q * e_q > 0.0
    d = pq_deriv_k(sp[S_KPD], sp[S_KID], sp[S_KPQ], sp[S_KIQ], sp[S_TAUC], p_ref, sp[S_QSET],
                   p_act, q_in, freeze_d, freeze_q, p_meas, q_meas)
    dx[q] = d[0]
    dx[q + 1] = d[1]
    dx[q + 2] = d[2]
    dx[q + 3] = d[3]

    cell_deriv_k(cp, x, i_cell, dx)

    p_sc = p_grid / gp[7]
    dg = sfr_deriv_k(gp, x[g], x[g + 1], x[g + 2], p_sc, p_dist)
    dx[g] = dg[0]
    dx[g + 1] = dg[1]
    dx[g + 2] = dg[2]

    df = freq_deriv_k(fp, 1.0 + x[g], x[fq], x[fq + 1], x[fq + 2])
    dx[fq] = df[0]
    dx[fq + 1] = df[1]
    dx[fq + 2] = df[2]


@jit
def system_rhs(t, x, args):
    cp, sp, nc, u_meas, ch, dch, lvrt, p_dist, v_ac, aux = args
    dx = np.empty(x.shape[0])
    _core(x, cp, sp, nc, u_meas, ch, dch, lvrt, p_dist, v_ac, dx, aux)
    return dx


_advance = make_stepper(system_rhs)


@jit
def _outputs(x, cp, sp, nc, disc, p_dist, v_ac, aux):
    _core(x, cp, sp, nc, disc[D_UMEAS], disc[D_CH] > 0.5, disc[D_DCH] > 0.5,
          disc[D_LVRT] > 0.5, p_dist, v_ac, np.empty(0), aux)


@jit
def _prepare(dist, sp, disc, t, dt):
    p_dist, v_ac = inputs_k(dist, sp[S_GRID:S_GRID + 10], t + 0.5 * dt)
    lv = lvrt_update_k(disc[D_LVRT] > 0.5, v_ac, sp[S_VENTER], sp[S_VEXIT])
    disc[D_LVRT] = 1.0 if lv else 0.0
    return p_dist, v_ac


@jit
def _step(cp, sp, nc, x, disc, t, dt, method, p_dist, v_ac, aux, events):
    """Integrate one step with held discrete state, then update the gate.
    Returns the new state and False if it is not finite."""
    args = (cp, sp, nc, disc[D_UMEAS], disc[D_CH] > 0.5, disc[D_DCH] > 0.5,
            disc[D_LVRT] > 0.5, p_dist, v_ac, aux)
    x = _advance(method, t, x, dt, args)
    i_lim = sp[S_IMAX]
    q = nc + 3
    x[q + 2] = min(max(x[q + 2], -i_lim), i_lim)
    x[q + 3] = min(max(x[q + 3], -i_lim), i_lim)
    for j in range(x.shape[0]):
        if not math.isfinite(x[j]):
            return x, False

    _outputs(x, cp, sp, nc, disc, p_dist, v_ac, aux)
    u_term = aux[A_U_TERM]
    t1 = t + dt
    if aux[A_LOWV] > 0.5 and math.isnan(events[EV_LOWV]):
        events[EV_LOWV] = t1
    disc[D_UMEAS] = sp[S_NS] * u_term
    ch0 = disc[D_CH] > 0.5
    dch0 = disc[D_DCH] > 0.5
    ch, dch = gate_step_k(u_term, ch0, dch0, sp[S_GATE], sp[S_GATE + 1], sp[S_GATE + 2],
                          sp[S_GATE + 3])
    if ch != ch0:
        events[EV_TOGGLES] += 1.0
        if not ch and math.isnan(events[EV_CH_OFF]):
            events[EV_CH_OFF] = t1
    if dch != dch0:
        events[EV_TOGGLES] += 1.0
        if not dch and math.isnan(events[EV_DCH_OFF]):
            events[EV_DCH_OFF] = t1
    disc[D_CH] = 1.0 if ch else 0.0
    disc[D_DCH] = 1.0 if dch else 0.0
    return x, True


@jit
def _record(rec, r, t, x, cp, sp, nc, disc, aux):
    gp = sp[S_GRID:S_GRID + 10]
    u_term = aux[A_U_TERM]
    rec[r, 0] = t
    rec[r, 1] = gp[0] * (1.0 + x[nc])
    rec[r, 2] = 1.0 + x[nc]
    rec[r, 3] = x[nc]
    rec[r, 4] = aux[A_P_GRID] * 1e-6
    rec[r, 5] = aux[A_P_GRID] / sp[S_PRATED]
    rec[r, 6] = aux[A_P_REF]
    rec[r, 7] = aux[A_Q_ACT]
    rec[r, 8] = aux[A_I_CELL]
    rec[r, 9] = u_term
    rec[r, 10] = x[0]
    rec[r, 11] = sp[S_NS] * u_term
    rec[r, 12] = soc_k(cp, x[0])
    rec[r, 13] = disc[D_CH]
    rec[r, 14] = disc[D_DCH]
    rec[r, 15] = disc[D_LVRT]
    rec[r, 16] = aux[A_ID]
    rec[r, 17] = aux[A_IQ]
    rec[r, 18] = aux[A_VAC]
    rec[r, 19] = aux[A_PDIST]
    rec[r, 20] = x[nc + 2] + gp[6] * (x[nc + 1] - x[nc + 2])


@jit
def run_kernel(cp, sp, dist, x0, disc0, dt, n_steps, dec, method):
    nc = 1 + int(cp[P_NG]) + int(cp[P_NSLOW])
    rec = np.full((n_steps // dec + 1, N_CH), np.nan)
    events = np.full(N_EV, np.nan)
    events[EV_TOGGLES] = 0.0
    aux = np.zeros(N_AUX)
    x = x0.copy()
    disc = disc0.copy()
    r = 0
    ok = True
    for k in range(n_steps + 1):
        t = k * dt
        p_dist, v_ac = _prepare(dist, sp, disc, t, dt)
        if k % dec == 0:
            _outputs(x, cp, sp, nc, disc, p_dist, v_ac, aux)
            _record(rec, r, t, x, cp, sp, nc, disc, aux)
            r += 1
        if k == n_steps:
            break
        x, ok = _step(cp, sp, nc, x, disc, t, dt, method, p_dist, v_ac, aux, events)
        if not ok:
            events[EV_ABORT] = t + dt
            break
    return rec[:r], events, x, disc


@jit
def step_kernel(cp, sp, dist, x, disc, t, dt, method, events):
    nc = 1 + int(cp[P_NG]) + int(cp[P_NSLOW])
    aux = np.zeros(N_AUX)
    p_dist, v_ac = _prepare(dist, sp, disc, t, dt)
    return _step(cp, sp, nc, x.copy(), disc, t, dt, method, p_dist, v_ac, aux, events)


@jit
def outputs_kernel(cp, sp, dist, x, disc, t, dt):
    nc = 1 + int(cp[P_NG]) + int(cp[P_NSLOW])
    aux = np.zeros(N_AUX)
    d = disc.copy()
    p_dist, v_ac = _prepare(dist, sp, d, t, dt)
    _outputs(x, cp, sp, nc, d, p_dist, v_ac, aux)
    return aux


# --------------------------------------------------------------------------
# Python side

def pack_system(bank, gate, pq, lvrt, freq, sfr):
    sp = np.zeros(S_LEN)
    sp[S_NS] = bank.n_s
    sp[S_NP] = bank.n_p
    sp[S_PRATED] = bank.p_rated
    sp[S_GATE:S_GATE + 6] = gate.pack()
    sp[S_KPD:S_IMAX + 1] = (pq.kp_d, pq.ki_d, pq.kp_q, pq.ki_q, pq.tau_c, pq.i_max)
    sp[S_QMODE] = 1.0 if pq.q_mode == "terminal-voltage" else 0.0
    sp[S_PSET] = pq.p_set
    sp[S_QSET] = pq.q_target
    sp[S_VENTER:S_VREF + 1] = (lvrt.v_enter, lvrt.v_exit, lvrt.k_q, lvrt.v_ref)
    sp[S_FREQ:S_FREQ + 6] = freq.pack()
    sp[S_GRID:S_GRID + 10] = sfr.pack()
    return sp


@dataclass
class System:
    """Coupled system ready to integrate.  ``cell`` is the cell model actually
    simulated (nonlinear or an ideal stand-in)."""

    cell: object
    bank: object
    gate: object
    pq: object
    lvrt: object
    freq: object
    sfr: object
    disturbances: tuple
    sim: SimConfig
    u0: float

    def __post_init__(self):
        self.cp = self.cell.pack()
        self.sp = pack_system(self.bank, self.gate, self.pq, self.lvrt, self.freq, self.sfr)
        self.dist = pack_disturbances(self.disturbances).reshape(-1, 4)
        self.method = METHODS[self.sim.method]

    @classmethod
    def from_scenario(cls, scenario):
        return cls(scenario.model_cell(), scenario.bank, scenario.gate, scenario.pq,
                   scenario.lvrt, scenario.freq, scenario.sfr, tuple(scenario.disturbances),
                   scenario.sim, scenario.initial_cell_voltage())

    @property
    def n_cell_states(self):
        return self.cell.n_states

    def initial_state(self):
        cell = CellState.rest(self.cell, self.u0).as_vector()
        x = np.concatenate((cell, np.zeros(3), np.zeros(4), [1.0, 0.0, 0.0]))
        g = GateState.initial(self.gate, self.u0)
        disc = np.array([float(g.charge_enabled), float(g.discharge_enabled), 0.0,
                         self.bank.n_s * self.u0])
        return SimState(0.0, x, disc)

    def step(self, state, dt=None):
        """Advance ``state`` by one step; raises :class:`SimulationAbort` on a
        non-finite state."""
        dt = self.sim.dt if dt is None else dt
        if not 0 < dt <= DT_MAX:
            raise ConfigError(f"dt must be within (0, {DT_MAX}] (got {dt})", "step")
        disc = state.disc.copy()
        events = np.full(N_EV, np.nan)
        x, ok = step_kernel(self.cp, self.sp, self.dist, state.x, disc, state.t, dt,
                            self.method, events)
        if not ok:
            raise SimulationAbort(f"non-finite state after t={state.t + dt:.6g} s: "
                                  f"{_describe_bad(self, x)}")
        return SimState(state.t + dt, x, disc, state.k + 1)

    def outputs(self, state):
        """Algebraic outputs (cell current, terminal voltage, ...) at ``state``."""
        aux = outputs_kernel(self.cp, self.sp, self.dist, state.x, state.disc.copy(), state.t,
                             self.sim.dt)
        return {"cell_current_a": aux[A_I_CELL], "cell_voltage_v": aux[A_U_TERM],
                "p_sc_w": aux[A_P_GRID], "i_d_pu": aux[A_ID], "i_q_pu": aux[A_IQ],
                "dp_ref_pu": aux[A_DP_REF], "v_ac_pu": aux[A_VAC]}

    def run(self, echo=None):
        s0 = self.initial_state()
        cfg = self.sim
        rec, ev, x, disc = run_kernel(self.cp, self.sp, self.dist, s0.x, s0.disc, cfg.dt,
                                      cfg.n_steps, int(cfg.record_decimation), self.method)
        result = SimResult(
            channels={name: np.ascontiguousarray(rec[:, j]) for j, name in enumerate(CHANNELS)},
            meta={
                "engine": "numba" if JIT_ENABLED else "python",
                "method": cfg.method, "dt": cfg.dt, "t_end": cfg.t_end,
                "record_decimation": cfg.record_decimation,
                "f_nom": self.sfr.f_nom,
                "p_rated_w": self.bank.p_rated,
                "disturbances": [vars(d).copy() for d in self.disturbances],
                "status": "ok",
            },
            events={
                "discharge_disabled_t": _nan_none(ev[EV_DCH_OFF]),
                "charge_disabled_t": _nan_none(ev[EV_CH_OFF]),
                "gate_toggles": int(ev[EV_TOGGLES]),
                "low_string_voltage_t": _nan_none(ev[EV_LOWV]),
            },
            scenario=echo,
        )
        if not math.isnan(ev[EV_ABORT]):
            result.meta["status"] = "aborted"
            raise SimulationAbort(
                f"non-finite state after t={ev[EV_ABORT]:.6g} s: {_describe_bad(self, x)}",
                result)
        return result


def _nan_none(v):
    return None if math.isnan(v) else float(v)


def _describe_bad(system, x):
    nc = system.n_cell_states
    names = (["u_c"] + [f"u_group{k + 1}" for k in range(system.cell.n_groups)]
             + [f"u_slow{j + 1}" for j in range(system.cell.n_slow)]
             + ["delta_f", "x_gov", "x_reheat", "p_meas", "q_meas", "integ_d", "integ_q",
                "f_meas", "z_vir", "z_qd"])
    bad = [n for n, v in zip(names, x) if not math.isfinite(v)]
    return "non-finite " + ", ".join(bad) if bad else f"state of size {len(x)} (nc={nc})"


def run(scenario):
    """Simulate a validated scenario."""
    return System.from_scenario(scenario).run(echo=scenario.to_dict())
