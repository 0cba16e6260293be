"""Grid-scale bank built from ``n_s`` series cells times ``n_p`` parallel
strings of identical, balanced cells."""

from __future__ import annotations

from dataclasses import dataclass

from .cell import CellParams, stored_energy
from .errors import ConfigError


@dataclass(frozen=True)
class BankConfig:
    n_s: int
    n_p: int
    p_rated: float
    cell: CellParams

    def __post_init__(self):
        problems = []
        if int(self.n_s) != self.n_s or self.n_s < 1:
            problems.append(f"n_s must be an integer >= 1 (got {self.n_s})")
        if int(self.n_p) != self.n_p or self.n_p < 1:
            problems.append(f"n_p must be an integer >= 1 (got {self.n_p})")
        if not self.p_rated > 0:
            problems.append(f"p_rated must be > 0 (got {self.p_rated})")
        if problems:
            raise ConfigError(problems, "bank")

    @property
    def n_cells(self):
        return self.n_s * self.n_p


def string_voltage(cfg, u_cell):
    if u_cell < 0:
        raise ValueError(f"cell voltage must be >= 0 (got {u_cell})")
    return cfg.n_s * u_cell


def module_current(cfg, i_cell):
    return cfg.n_p * i_cell


def bank_power(cfg, u_cell, i_cell):
    """Power at the bank DC terminals; positive while charging."""
    return cfg.n_s * cfg.n_p * u_cell * i_cell


def bank_energy(cfg, u_cell):
    """Energy held by all main capacitors at cell voltage ``u_cell``."""
    return cfg.n_cells * stored_energy(cfg.cell, u_cell)
