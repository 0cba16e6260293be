import numpy as np
import pytest

from scbank import CellParams, ConfigError
from scbank.studies import (
    CurrentProfile, _interval_width, energy_curve, expand_values, mape, parse_sweep,
    reduce_study, summarize, sweep_points,
)


def test_expand_values():
    assert expand_values({"start": 1.1, "stop": 2.7, "step": 0.1}) == [
        round(1.1 + 0.1 * k, 12) for k in range(17)]
    assert expand_values([1, 2]) == [1, 2]
    assert expand_values(3) == [3]
    with pytest.raises(ConfigError):
        expand_values({"start": 1, "stop": 0, "step": 0.1})
    with pytest.raises(ConfigError):
        expand_values({"start": 1, "stop": 2})


def test_parse_sweep_order():
    axes = parse_sweep({"parameters": {"a": [1, 2], "b": [3, 4, 5]}})
    pts = sweep_points(axes)
    assert len(pts) == 6
    assert pts[:3] == [{"a": 1, "b": 3}, {"a": 1, "b": 4}, {"a": 1, "b": 5}]
    with pytest.raises(ConfigError, match="empty"):
        parse_sweep({"parameters": {"a": []}})
    with pytest.raises(ConfigError):
        parse_sweep({"params": {}})


def test_interval_width():
    x = np.array([0.1, 0.2, 0.3, 0.4, 0.5])
    ranges, w = _interval_width(x, [False, True, True, False, True])
    assert len(ranges) == 2
    assert ranges[0][:2] == pytest.approx((0.15, 0.35))
    assert w == pytest.approx(0.2 + 0.05)
    assert _interval_width(x, [False] * 5) == ([], 0.0)


def synthetic_rows():
    rows = []
    for k, s in enumerate(np.linspace(0.2, 1.0, 9)):
        nl = 59.6 + 0.1 * s
        dev = 60.0 - nl
        rows.append({"model": "nonlinear", "initial_voltage": 2.7 * s, "initial_soc": s,
                     "nadir_hz": nl, "time_to_discharge_s": 10.0 * s, "status": "ok"})
        rows.append({"model": "ideal:at-rated", "initial_voltage": 2.7 * s, "initial_soc": s,
                     "nadir_hz": nl + (0.1 * dev if s < 0.5 else 0.0),
                     "time_to_discharge_s": 12.0 * s, "status": "ok"})
        rows.append({"model": "ideal:at-zero-volts", "initial_voltage": 2.7 * s,
                     "initial_soc": s, "nadir_hz": nl,
                     "time_to_discharge_s": None, "status": "ok"})
    return rows


def test_summarize_synthetic():
    g = summarize(synthetic_rows())
    assert len(g) == 1
    v = g[0]["variants"]
    rated = v["ideal:at-rated"]
    assert rated["inaccurate_points"] == 3
    # flagged 0.2, 0.3, 0.4: from the grid edge to the midpoint 0.45
    assert rated["inaccurate_soc_width"] == pytest.approx(0.25)
    assert rated["max_relative_nadir_error"] == pytest.approx(0.1)
    assert rated["discharge_time_mare"] == pytest.approx(0.2)
    zero = v["ideal:at-zero-volts"]
    assert zero["inaccurate_points"] == 0
    assert zero["discharge_time_mare"] is None


def test_current_profile():
    p = CurrentProfile()
    assert p.duration == 30.0
    assert (p(0.0), p(10.5), p(16.0), p(29.0), p(31.0)) == (30.0, 0.0, -30.0, 0.0, 0.0)
    q = CurrentProfile.parse("30:10,0:5,-30:10,0:5")
    assert q == p
    with pytest.raises(ConfigError):
        CurrentProfile.parse("30:10:1")
    with pytest.raises(ConfigError):
        CurrentProfile(((30.0, 0.0),))


def test_mape_guard():
    ref = np.array([0.0, 1e-5, 1.0, 2.0])
    test = np.array([5.0, 5.0, 1.1, 2.2])
    assert mape(test, ref) == pytest.approx(10.0)
    assert mape(ref, ref) == 0.0


def test_reduce_study_zero_gap_identical():
    cell = CellParams(600.0, 150.0, 0.25e-3, 0.25e-3, n_groups=5)
    _, series = reduce_study(cell, CurrentProfile(((30.0, 3.0), (-30.0, 3.0))), u0=1.35)
    assert np.max(np.abs(series["groups-0_v"] - series["groups-5_v"])) < 1e-9


def test_energy_curve():
    c = energy_curve(CellParams(600.0, 150.0, 0.25e-3, 0.5e-3))
    assert c["nonlinear_j"][-1] == pytest.approx(3171.15)
    assert np.all(c["ideal_at-rated_j"][1:] > c["nonlinear_j"][1:])
    assert c["ideal_at-half-rated_j"][-1] == pytest.approx(0.5 * 802.5 * 2.7 ** 2)
