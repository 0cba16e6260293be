"""Supercapacitor cell model.

The fast branch is a voltage-dependent main capacitor ``C(u) = c0 + kv*u``
in series with the ESR ``rs`` and ``n_groups`` parallel RC groups whose
parameters follow the main capacitor voltage::

    C_k = C(u) / 2
    R_k = 2 tau(u) / (k^2 pi^2 C(u))
    tau(u) = 3 C(u) (rdc - rs)          (or tau0 + ktau*u when given)

Optional slow RC branches and a leakage resistor sit in parallel with the
fast branch.  Positive current charges the cell.  Charge and energy use the
``dQ = C(u) du`` convention.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from ._accel import jit
from .errors import ConfigError, DomainError
from .integrators import METHODS, make_stepper

MAX_GROUPS = 5

# packed parameter vector layout used by the kernels
P_C0 = 0
P_KV = 1
P_RS = 2
P_RDC = 3
P_NG = 4
P_URATED = 5
P_LEAK = 6
P_TAU0 = 7
P_KTAU = 8
P_TAULIN = 9
P_NSLOW = 10
P_SLOW = 11

IDEAL_VARIANTS = ("at-zero-volts", "at-half-rated", "at-rated")


class OverVoltageWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class SlowBranch:
    r: float
    c: float

    def __post_init__(self):
        problems = []
        if not self.r > 0:
            problems.append(f"r must be > 0 (got {self.r})")
        if not self.c > 0:
            problems.append(f"c must be > 0 (got {self.c})")
        if problems:
            raise ConfigError(problems, "slow branch")

    @property
    def time_constant(self):
        return self.r * self.c


@dataclass(frozen=True)
class CellParams:
    c0: float
    kv: float
    rs: float
    rdc: float
    n_groups: int = 1
    u_rated: float = 2.7
    slow_branches: tuple = ()
    leak_resistance: float | None = None
    tau0: float | None = None
    ktau: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "slow_branches", tuple(
            b if isinstance(b, SlowBranch) else SlowBranch(**b) for b in self.slow_branches))
        problems = self.problems()
        if problems:
            raise ConfigError(problems, "cell")

    def problems(self):
        out = []
        if not self.c0 > 0:
            out.append(f"c0 must be > 0 (got {self.c0})")
        if not self.kv >= 0:
            out.append(f"kv must be >= 0 (got {self.kv})")
        if not self.u_rated > 0:
            out.append(f"u_rated must be > 0 (got {self.u_rated})")
        if not self.rs >= 0:
            out.append(f"rs must be >= 0 (got {self.rs})")
        if not self.rdc >= self.rs:
            out.append(f"rdc must be >= rs (got rdc={self.rdc}, rs={self.rs})")
        if int(self.n_groups) != self.n_groups or not 0 <= self.n_groups <= MAX_GROUPS:
            out.append(f"n_groups must be an integer in [0, {MAX_GROUPS}] (got {self.n_groups})")
        if self.leak_resistance is not None and not self.leak_resistance > 0:
            out.append(f"leak_resistance must be > 0 when given (got {self.leak_resistance})")
        if (self.tau0 is None) != (self.ktau is None):
            out.append("tau0 and ktau must be given together")
        return out

    @property
    def n_slow(self):
        return len(self.slow_branches)

    @property
    def n_states(self):
        return 1 + self.n_groups + self.n_slow

    def m1_only(self):
        """Same cell with the slow and leakage branches removed."""
        return replace(self, slow_branches=(), leak_resistance=None)

    def pack(self):
        v = np.zeros(P_SLOW + 2 * self.n_slow)
        v[P_C0] = self.c0
        v[P_KV] = self.kv
        v[P_RS] = self.rs
        v[P_RDC] = self.rdc
        v[P_NG] = self.n_groups
        v[P_URATED] = self.u_rated
        v[P_LEAK] = self.leak_resistance or 0.0
        if self.tau0 is not None:
            v[P_TAU0] = self.tau0
            v[P_KTAU] = self.ktau
            v[P_TAULIN] = 1.0
        v[P_NSLOW] = self.n_slow
        for j, b in enumerate(self.slow_branches):
            v[P_SLOW + 2 * j] = b.r
            v[P_SLOW + 2 * j + 1] = b.c
        return v


@dataclass(frozen=True)
class IdealCellParams:
    c: float
    u_rated: float
    variant: str

    def __post_init__(self):
        problems = []
        if not self.c > 0:
            problems.append(f"c must be > 0 (got {self.c})")
        if self.variant not in IDEAL_VARIANTS:
            problems.append(f"variant must be one of {IDEAL_VARIANTS} (got {self.variant!r})")
        if problems:
            raise ConfigError(problems, "ideal cell")

    def as_cell_params(self):
        """Constant capacitance, no ESR, no RC groups."""
        return CellParams(c0=self.c, kv=0.0, rs=0.0, rdc=0.0, n_groups=0, u_rated=self.u_rated)


@dataclass
class CellState:
    u_c: float
    u_groups: np.ndarray = field(default_factory=lambda: np.zeros(0))
    u_slow: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.u_groups = np.asarray(self.u_groups, dtype=np.float64)
        self.u_slow = np.asarray(self.u_slow, dtype=np.float64)

    @classmethod
    def rest(cls, params, u):
        """Relaxed state at main-capacitor voltage ``u``."""
        return cls(u, np.zeros(params.n_groups), np.full(params.n_slow, float(u)))

    @classmethod
    def from_vector(cls, params, x):
        ng = params.n_groups
        return cls(float(x[0]), np.array(x[1:1 + ng]), np.array(x[1 + ng:1 + ng + params.n_slow]))

    def as_vector(self):
        return np.concatenate(([self.u_c], self.u_groups, self.u_slow))

    def check(self, params):
        if self.u_groups.shape != (params.n_groups,) or self.u_slow.shape != (params.n_slow,):
            raise ConfigError(
                f"state shape ({self.u_groups.size} groups, {self.u_slow.size} slow) does not "
                f"match params ({params.n_groups}, {params.n_slow})", "cell state")


# --------------------------------------------------------------------------
# kernels (operate on the packed parameter vector)

@jit
def cap_k(cp, u):
    return cp[P_C0] + cp[P_KV] * u


@jit
def tau_k(cp, u):
    if cp[P_TAULIN] > 0.5:
        return cp[P_TAU0] + cp[P_KTAU] * u
    return 3.0 * cap_k(cp, u) * (cp[P_RDC] - cp[P_RS])


@jit
def energy_k(cp, u):
    return 0.5 * cp[P_C0] * u * u + cp[P_KV] * u * u * u / 3.0


@jit
def charge_k(cp, u):
    return cp[P_C0] * u + 0.5 * cp[P_KV] * u * u


@jit
def soc_k(cp, u):
    if u <= 0.0:
        return 0.0
    s = energy_k(cp, u) / energy_k(cp, cp[P_URATED])
    return min(s, 1.0)


@jit
def terminal_k(cp, x, i):
    """Terminal voltage and fast-branch current for terminal current ``i``."""
    ng = int(cp[P_NG])
    ns = int(cp[P_NSLOW])
    rs = cp[P_RS]
    leak = cp[P_LEAK]
    e1 = x[0]
    for k in range(ng):
        e1 += x[1 + k]
    if ns == 0 and leak <= 0.0:
        return e1 + i * rs, i
    # Norton combination of the fast branch with the parallel branches
    g = 0.0
    src = i
    for j in range(ns):
        r = cp[P_SLOW + 2 * j]
        g += 1.0 / r
        src += x[1 + ng + j] / r
    if leak > 0.0:
        g += 1.0 / leak
    if rs > 0.0:
        u = (src + e1 / rs) / (g + 1.0 / rs)
        return u, (u - e1) / rs
    return e1, src - e1 * g


@jit
def cell_deriv_k(cp, x, i, dx):
    ng = int(cp[P_NG])
    ns = int(cp[P_NSLOW])
    u_sc, i1 = terminal_k(cp, x, i)
    c = cap_k(cp, x[0])
    dx[0] = i1 / c
    if ng > 0:
        tau = tau_k(cp, x[0])
        ck = 0.5 * c
        for k in range(ng):
            kk = k + 1.0
            tk = tau / (kk * kk * math.pi * math.pi)
            if tk > 0.0:
                dx[1 + k] = -x[1 + k] / tk + i1 / ck
            else:
                dx[1 + k] = 0.0
    for j in range(ns):
        r = cp[P_SLOW + 2 * j]
        cs = cp[P_SLOW + 2 * j + 1]
        dx[1 + ng + j] = (u_sc - x[1 + ng + j]) / (r * cs)
    return u_sc


@jit
def cell_rhs(t, x, args):
    cp, i = args
    dx = np.empty(x.shape[0])
    cell_deriv_k(cp, x, i, dx)
    return dx


# --------------------------------------------------------------------------
# public functions

def _nonneg(u, what="u"):
    if np.any(np.asarray(u) < 0):
        raise DomainError(f"{what} must be >= 0 (got {u})")


def capacitance(params, u):
    _nonneg(u)
    return params.c0 + params.kv * u


def tau_of_voltage(params, u):
    _nonneg(u)
    if params.tau0 is not None:
        return params.tau0 + params.ktau * u
    return 3.0 * capacitance(params, u) * (params.rdc - params.rs)


def group_params(params, u, k):
    """Resistance and capacitance of RC group ``k`` (1-based) at voltage ``u``."""
    if not 1 <= k <= params.n_groups:
        raise IndexError(f"group index {k} outside 1..{params.n_groups}")
    c = capacitance(params, u)
    return 2.0 * tau_of_voltage(params, u) / (k * k * math.pi ** 2 * c), 0.5 * c


def cell_derivatives(params, state, i):
    state.check(params)
    dx = np.empty(params.n_states)
    cell_deriv_k(params.pack(), state.as_vector(), float(i), dx)
    return CellState.from_vector(params, dx)


def terminal_voltage(params, state, i):
    state.check(params)
    return terminal_k(params.pack(), state.as_vector(), float(i))[0]


def stored_energy(params, u):
    _nonneg(u)
    return 0.5 * params.c0 * u * u + params.kv * u ** 3 / 3.0


def stored_charge(params, u):
    _nonneg(u)
    return params.c0 * u + 0.5 * params.kv * u * u


def soc(params, u):
    """Energy-based state of charge.  Voltages above rating clamp to 1 and
    emit :class:`OverVoltageWarning`."""
    _nonneg(u)
    if u > params.u_rated:
        warnings.warn(f"cell voltage {u} V above rated {params.u_rated} V; SoC clamped",
                      OverVoltageWarning, stacklevel=2)
        return 1.0
    return stored_energy(params, u) / stored_energy(params, params.u_rated)


def voltage_at_soc(params, s):
    """Inverse of :func:`soc` on [0, u_rated]."""
    if not 0 <= s <= 1:
        raise DomainError(f"SoC must be within [0, 1] (got {s})")
    target = s * stored_energy(params, params.u_rated)
    roots = np.roots([params.kv / 3.0, 0.5 * params.c0, 0.0, -target])
    real = [r.real for r in roots if abs(r.imag) < 1e-9 and r.real >= -1e-12]
    return min(max(min(real), 0.0), params.u_rated)


def ideal_from(params, variant):
    u = {"at-zero-volts": 0.0, "at-half-rated": 0.5 * params.u_rated,
         "at-rated": params.u_rated}.get(variant)
    if u is None:
        raise ConfigError(f"unknown ideal variant {variant!r}")
    return IdealCellParams(capacitance(params, u), params.u_rated, variant)


def apply_model(params, model):
    """Resolve a model selector (``nonlinear``, ``nonlinear:<n>``,
    ``ideal:<variant>``) against nonlinear cell parameters."""
    kind, _, arg = model.partition(":")
    if kind == "nonlinear":
        return params if not arg else replace(params, n_groups=int(arg))
    if kind == "ideal":
        return ideal_from(params, arg).as_cell_params()
    raise ConfigError(f"unknown model selector {model!r}")


def simulate_cell(params, current, dt, t_end, u0=None, state=None, method="rk4"):
    """Drive a cell with a current profile and record every step.

    ``current`` is a callable ``i(t)`` evaluated at each step midpoint and held
    over the step.  Returns ``(t, u_terminal, x)`` with ``x`` the state history
    (columns follow :meth:`CellState.as_vector`).
    """
    if state is None:
        state = CellState.rest(params, params.u_rated / 2 if u0 is None else u0)
    n = int(round(t_end / dt))
    t = np.arange(n + 1) * dt
    i_mid = np.array([current(tk + 0.5 * dt) for tk in t], dtype=np.float64)
    xs, ut = _simulate_cell_k(params.pack(), state.as_vector(), i_mid, dt, METHODS[method])
    return t, ut, xs


_cell_advance = make_stepper(cell_rhs)


@jit
def _simulate_cell_k(cp, x0, i_mid, dt, method):
    n = i_mid.shape[0]
    xs = np.empty((n, x0.shape[0]))
    ut = np.empty(n)
    x = x0.copy()
    for k in range(n):
        xs[k] = x
        ut[k] = terminal_k(cp, x, i_mid[k])[0]
        if k + 1 < n:
            x = _cell_advance(method, k * dt, x, dt, (cp, i_mid[k]))
    return xs, ut
