"""Declarative experiment description and its YAML file format.

A scenario file carries ``schema_version: 1`` and the sections ``model``,
``bank``, ``control``, ``grid``, ``sim`` and ``metrics``.  Every key is
checked: unknown keys, wrong types and violated parameter invariants are all
collected and reported together in one :class:`ConfigError`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import yaml

from .bank import BankConfig
from .cell import CellParams, SlowBranch, apply_model, voltage_at_soc
from .control import FreqCtrlParams, GateParams, LvrtParams, PQParams
from .engine import SimConfig
from .errors import ConfigError
from .grid import Disturbance, SfrParams

SCHEMA_VERSION = 1
TOP_KEYS = ("schema_version", "model", "bank", "control", "grid", "sim", "metrics")

# reference cell: C = 600 + 150u F, 2.7 V, R_s = 0.25 mOhm, R_dc = 0.5 mOhm
DEFAULT_CELL = CellParams(c0=600.0, kv=150.0, rs=0.25e-3, rdc=0.5e-3, n_groups=1, u_rated=2.7)


@dataclass(frozen=True)
class Scenario:
    bank: BankConfig
    initial_voltage: float | None = None
    initial_soc: float | None = None
    model: str = "nonlinear"
    gate: GateParams = field(default_factory=GateParams)
    pq: PQParams = field(default_factory=PQParams)
    lvrt: LvrtParams = field(default_factory=LvrtParams)
    freq: FreqCtrlParams = field(default_factory=FreqCtrlParams)
    sfr: SfrParams = field(default_factory=SfrParams)
    disturbances: tuple = ()
    sim: SimConfig = field(default_factory=SimConfig)
    window: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "disturbances", tuple(self.disturbances))
        p = []
        if (self.initial_voltage is None) == (self.initial_soc is None):
            p.append("bank: give exactly one of initial_voltage and initial_soc")
        elif self.initial_voltage is not None:
            if not 0 <= self.initial_voltage <= self.gate.u_ch_max:
                p.append(f"bank.initial_voltage must be within [0, u_ch_max={self.gate.u_ch_max}]"
                         f" (got {self.initial_voltage})")
        elif not 0 <= self.initial_soc <= 1:
            p.append(f"bank.initial_soc must be within [0, 1] (got {self.initial_soc})")
        try:
            self.model_cell()
        except (ConfigError, ValueError) as e:
            p.append(f"model: {e}")
        if not self.window > 0:
            p.append(f"metrics.window must be > 0 (got {self.window})")
        if p:
            raise ConfigError(p)

    def model_cell(self):
        """Cell parameters actually simulated under the model selector."""
        return apply_model(self.bank.cell, self.model)

    def initial_cell_voltage(self):
        if self.initial_voltage is not None:
            return float(self.initial_voltage)
        return float(voltage_at_soc(self.bank.cell, self.initial_soc))

    def with_updates(self, updates):
        """Copy with dotted-path overrides applied, e.g.
        ``{"bank.initial_voltage": 2.0, "model": "ideal:at-rated"}``."""
        d = self.to_dict()
        for path, value in updates.items():
            set_path(d, path, value)
        return from_dict(d)

    def to_dict(self):
        cell = _plain(self.bank.cell)
        cell["slow_branches"] = [_plain(b) for b in self.bank.cell.slow_branches]
        bank = {"cell": cell, "n_s": self.bank.n_s, "n_p": self.bank.n_p,
                "p_rated": self.bank.p_rated}
        if self.initial_voltage is not None:
            bank["initial_voltage"] = self.initial_voltage
        else:
            bank["initial_soc"] = self.initial_soc
        return {
            "schema_version": SCHEMA_VERSION,
            "model": self.model,
            "bank": bank,
            "control": {"gate": _plain(self.gate), "pq": _plain(self.pq),
                        "lvrt": _plain(self.lvrt), "freq": _plain(self.freq)},
            "grid": {"sfr": _plain(self.sfr),
                     "disturbances": [_plain(d) for d in self.disturbances]},
            "sim": _plain(self.sim),
            "metrics": {"window": self.window},
        }

    def dumps(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.dumps())


def _plain(obj):
    return {f.name: getattr(obj, f.name) for f in fields(obj)}


def set_path(d, path, value):
    keys = path.split(".")
    node = d
    for k in keys[:-1]:
        if k.isdigit() and isinstance(node, list):
            node = node[int(k)]
        else:
            node = node.setdefault(k, {})
    last = keys[-1]
    if last.isdigit() and isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value
    # the two initial-state keys are alternatives
    if path == "bank.initial_voltage":
        d["bank"].pop("initial_soc", None)
    elif path == "bank.initial_soc":
        d["bank"].pop("initial_voltage", None)


# --------------------------------------------------------------------------
# loading

class _Collector:
    def __init__(self):
        self.problems = []

    def section(self, data, where, allowed, required=()):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            self.problems.append(f"{where}: expected a mapping (got {type(data).__name__})")
            return {}
        for k in data:
            if k not in allowed:
                self.problems.append(f"{where}: unknown key {k!r} (allowed: {', '.join(allowed)})")
        for k in required:
            if k not in data:
                self.problems.append(f"{where}: missing required key {k!r}")
        return {k: v for k, v in data.items() if k in allowed}

    def build(self, cls, data, where, required=(), **extra):
        names = tuple(f.name for f in fields(cls))
        kw = self.section(data, where, names, required)
        kw = {k: v for k, v in kw.items() if k not in extra}
        bad = False
        for f in fields(cls):
            if f.name in kw and not _type_ok(f, kw[f.name]):
                self.problems.append(f"{where}.{f.name}: wrong type {type(kw[f.name]).__name__}")
                bad = True
        if bad or any(k not in kw for k in required):
            return None
        try:
            return cls(**kw, **extra)
        except ConfigError as e:
            self.problems.extend(f"{where}: {p}" for p in e.problems)
        except (TypeError, ValueError) as e:
            self.problems.append(f"{where}: {e}")
        return None


def _type_ok(f, value):
    t = str(f.type)
    if value is None:
        return "None" in t
    if isinstance(value, bool):
        return "bool" in t
    if t.startswith("float"):
        return isinstance(value, (int, float))
    if t.startswith("int"):
        return isinstance(value, int) or (isinstance(value, float) and value.is_integer())
    if t.startswith("str"):
        return isinstance(value, str)
    return True


def from_dict(data):
    c = _Collector()
    top = c.section(data, "scenario", TOP_KEYS, ("schema_version", "bank"))
    if "schema_version" in top and top["schema_version"] != SCHEMA_VERSION:
        c.problems.append(f"schema_version must be {SCHEMA_VERSION} "
                          f"(got {top['schema_version']!r})")

    bank_d = c.section(top.get("bank"), "bank",
                       ("cell", "n_s", "n_p", "p_rated", "initial_voltage", "initial_soc"),
                       ("cell", "n_s", "n_p", "p_rated"))
    cell = None
    if "cell" in bank_d:
        cell_d = bank_d["cell"]
        slow = []
        if isinstance(cell_d, dict) and cell_d.get("slow_branches"):
            for j, b in enumerate(cell_d["slow_branches"]):
                sb = c.build(SlowBranch, b, f"bank.cell.slow_branches.{j}", ("r", "c"))
                if sb is not None:
                    slow.append(sb)
        cell = c.build(CellParams, cell_d, "bank.cell", ("c0", "kv", "rs", "rdc"),
                       slow_branches=tuple(slow))
    bank = None
    if cell is not None:
        b = {k: bank_d[k] for k in ("n_s", "n_p", "p_rated") if k in bank_d}
        bank = c.build(BankConfig, b, "bank", ("n_s", "n_p", "p_rated"), cell=cell)

    ctl = c.section(top.get("control"), "control", ("gate", "pq", "lvrt", "freq"))
    gate = c.build(GateParams, ctl.get("gate"), "control.gate")
    pq = c.build(PQParams, ctl.get("pq"), "control.pq")
    lvrt = c.build(LvrtParams, ctl.get("lvrt"), "control.lvrt")
    freq = c.build(FreqCtrlParams, ctl.get("freq"), "control.freq")

    grid = c.section(top.get("grid"), "grid", ("sfr", "disturbances"))
    sfr = c.build(SfrParams, grid.get("sfr"), "grid.sfr")
    dists = []
    raw = grid.get("disturbances") or []
    if not isinstance(raw, list):
        c.problems.append("grid.disturbances: expected a list")
        raw = []
    for j, d in enumerate(raw):
        dist = c.build(Disturbance, d, f"grid.disturbances.{j}", ("kind", "t_start", "magnitude"))
        if dist is not None:
            dists.append(dist)

    sim = c.build(SimConfig, top.get("sim"), "sim")
    met = c.section(top.get("metrics"), "metrics", ("window",))
    window = met.get("window", 0.5)
    if not isinstance(window, (int, float)) or isinstance(window, bool):
        c.problems.append("metrics.window: wrong type")
        window = 0.5

    model = top.get("model", "nonlinear")
    if not isinstance(model, str):
        c.problems.append(f"model: expected a string (got {model!r})")
        model = "nonlinear"

    if c.problems or None in (bank, gate, pq, lvrt, freq, sfr, sim):
        raise ConfigError(c.problems or ["invalid scenario"])
    try:
        return Scenario(bank=bank, initial_voltage=bank_d.get("initial_voltage"),
                        initial_soc=bank_d.get("initial_soc"), model=model, gate=gate, pq=pq,
                        lvrt=lvrt, freq=freq, sfr=sfr, disturbances=tuple(dists), sim=sim,
                        window=float(window))
    except ConfigError as e:
        raise ConfigError(e.problems) from None


def loads(text):
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"not valid YAML: {e}") from None
    return from_dict(data)


def load(path):
    with open(path, encoding="utf-8") as f:
        return loads(f.read())


# Generation losses on the 400 MVA grid equivalent to 95 MW and 190 MW trips
# in a 14-bus system: sized so that a fully charged 900 + 40u bank under
# quasi-droop control discharges in about 14.4 s.
LOSS_95MW = 0.111
LOSS_190MW = 0.222


def default_scenario(**updates):
    """Reference bank (370 x 400 cells, 100 MW) facing the 95 MW-equivalent
    generation loss at t = 1 s."""
    sc = Scenario(
        bank=BankConfig(n_s=370, n_p=400, p_rated=100e6, cell=DEFAULT_CELL),
        initial_voltage=2.7,
        disturbances=(Disturbance("loss-of-generation", 1.0, LOSS_95MW),),
    )
    return sc.with_updates(updates) if updates else sc

