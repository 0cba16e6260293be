import math

import numpy as np
import pytest

from scbank import ConfigError, DomainError, Disturbance, SfrParams, SimResult, default_scenario, run
from scbank.grid import GridState, metrics, sanitize, sfr_derivatives, steady_state_delta_f, voltage_profile

SFR = SfrParams()


def no_sc(**updates):
    base = {"control.freq.k_vir": 0.0, "control.freq.k_qd": 0.0}
    base.update(updates)
    return default_scenario(**base)


def test_sfr_defaults():
    assert (SFR.f_nom, SFR.h, SFR.d, SFR.r, SFR.tau_g, SFR.tau_r, SFR.k_r, SFR.s_base) == (
        60.0, 4.0, 1.0, 0.05, 0.2, 7.0, 0.3, 400e6)


def test_sfr_validation():
    with pytest.raises(ConfigError) as e:
        SfrParams(h=0.0, r=-1.0, k_r=1.5)
    assert len(e.value.problems) == 3


def test_sfr_equilibrium():
    d = sfr_derivatives(SFR, GridState(), 0.0, 0.0)
    assert (d.delta_f, d.x_gov, d.x_reheat) == (0.0, 0.0, 0.0)


def test_sfr_initial_rocof():
    d = sfr_derivatives(SFR, GridState(), 0.0, 0.1)
    assert d.delta_f == pytest.approx(-0.0125)
    assert d.delta_f * SFR.f_nom == pytest.approx(-0.75)


def test_sfr_storage_injection_offsets_deficit():
    d = sfr_derivatives(SFR, GridState(), 0.1, 0.1)
    assert d.delta_f == 0.0


def test_steady_state_formula():
    assert steady_state_delta_f(SFR, 0.1) == pytest.approx(-0.1 / 21.0)


def test_voltage_profile_examples():
    d = Disturbance("voltage-dip", 1.0, 0.37, 0.2)
    assert voltage_profile(d, 1.1) == pytest.approx(0.63)
    assert voltage_profile(d, 0.5) == 1.0
    assert voltage_profile(d, 1.2) == 1.0
    assert voltage_profile(Disturbance("voltage-dip", 1.0, 0.8, 0.2), 1.0) == pytest.approx(0.2)
    with pytest.raises(DomainError):
        voltage_profile(Disturbance("loss-of-generation", 1.0, 0.1), 1.1)


def test_disturbance_validation():
    with pytest.raises(ConfigError):
        Disturbance("voltage-dip", 1.0, 1.2, 0.1)
    with pytest.raises(ConfigError):
        Disturbance("voltage-dip", 1.0, 0.5, 0.0)
    with pytest.raises(ConfigError):
        Disturbance("earthquake", -1.0, 0.1)


def synthetic(t, f, **meta):
    return SimResult(channels={"time": np.asarray(t), "frequency_hz": np.asarray(f)},
                     meta={"f_nom": 60.0, "disturbances": [], **meta})


def test_metrics_constant_series():
    t = np.linspace(0, 5, 501)
    m = metrics(synthetic(t, np.full_like(t, 60.0)))
    assert m["nadir_hz"] == 60.0 and m["avg_rocof_hz_per_s"] == 0.0
    assert m["time_to_discharge_s"] is None


def test_metrics_linear_ramp():
    t = np.linspace(0, 1, 1001)
    m = metrics(synthetic(t, 60 - 0.2 * t), t_onset=0.0)
    assert m["avg_rocof_hz_per_s"] == pytest.approx(-0.2)
    assert m["nadir_hz"] == pytest.approx(59.8)


def test_metrics_empty_series():
    with pytest.raises(ValueError):
        metrics(synthetic([], []))


def test_sanitize_replaces_nan():
    assert sanitize({"a": float("nan"), "b": [1.0, float("inf")], "c": np.int64(3)}) == {
        "a": None, "b": [1.0, None], "c": 3}


def test_simulated_rocof_matches_swing_equation():
    sc = no_sc(**{"grid.disturbances.0.magnitude": 0.1, "sim.t_end": 3.0})
    m = metrics(run(sc), window=0.1)
    assert m["avg_rocof_hz_per_s"] == pytest.approx(-0.75, rel=0.1)


def test_converges_to_analytic_steady_state():
    tmax = max(SFR.tau_g, SFR.tau_r)
    sc = no_sc(**{"grid.disturbances.0.magnitude": 0.1, "sim.t_end": 1.0 + 20 * tmax,
                  "sim.dt": 0.01})
    res = run(sc)
    expected = steady_state_delta_f(SFR, 0.1)
    assert res["delta_f_pu"][-1] == pytest.approx(expected, rel=1e-3)
    # monotone non-increasing until the governor turns the frequency around
    f = res["frequency_hz"]
    i_min = int(np.argmin(f))
    assert np.all(np.diff(f[:i_min + 1]) <= 1e-12)


def test_no_disturbance_frequency_constant():
    res = run(default_scenario(**{"grid.disturbances": [], "sim.t_end": 5.0}))
    assert np.all(res["frequency_hz"] == 60.0)


def test_metrics_from_run_have_units():
    res = run(default_scenario(**{"sim.t_end": 5.0}))
    m = metrics(res)
    assert 59.0 < m["nadir_hz"] < 60.0
    assert m["avg_rocof_hz_per_s"] < 0
    assert m["rocof_window_s"] == 0.5
    assert m["initial_soc"] == pytest.approx(1.0)
    assert math.isfinite(m["max_string_voltage_v"])
