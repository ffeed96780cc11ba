import json

import numpy as np
import pytest

from switchmc.analytics import Ball
from switchmc.engine import SimControls
from switchmc.harness import (
    ConstantData,
    HalfSpaceIndicator,
    LinearBoundaryData,
    analytics_report,
    combinatorics_report,
    exit_moment_report,
    exit_time_report,
    harnack_probes,
    holder_report,
    levy_exit_report,
    operator_norm_report,
    representation_report,
    resolve_controls,
    scaling_report,
)
from switchmc.presets import build_preset

BALL2 = Ball((0.0, 0.0), 0.25)


def test_boundary_data_binding():
    phi = LinearBoundaryData().bind(BALL2)
    x = np.array([[0.25, 0.0], [-0.25, 0.0]])
    v = phi(x, np.zeros(2, dtype=int))
    np.testing.assert_allclose(v, [2.0, 0.0])
    half = HalfSpaceIndicator(axis=0).bind(BALL2)
    np.testing.assert_array_equal(half(x, np.zeros(2, dtype=int)), [1.0, 0.0])
    np.testing.assert_array_equal(ConstantData(2.0)(x, np.zeros(2, dtype=int)), [2.0, 2.0])


def test_harnack_probes_layout():
    p = harnack_probes(np.zeros(3), 1.0, 0.125)
    assert p.shape == (7, 3)
    np.testing.assert_array_equal(p[0], 0.0)
    np.testing.assert_allclose(np.linalg.norm(p[1:], axis=1), 0.125)


def test_resolve_controls_completes_dicts():
    ctl = resolve_controls(BALL2, {"dt": 1e-3})
    assert isinstance(ctl, SimControls) and ctl.dt == 1e-3
    same = SimControls(dt=2e-4)
    assert resolve_controls(BALL2, same) is same


def test_representation_residual_vanishes_without_switching():
    coeffs, _ = build_preset("brownian", 2)
    rep = representation_report(coeffs, BALL2, LinearBoundaryData(), n=2000, seed=1)
    for row in rep.rows:
        assert row["value"] == 0.0 and row["pass"]
    assert rep.passed


def test_levy_exit_without_jumps_is_zero():
    coeffs, _ = build_preset("switch2_markov", 2)
    rep = levy_exit_report(coeffs, BALL2, ConstantData(1.0), n=100, seed=2)
    assert rep.passed and all(r["value"] == 0.0 for r in rep.rows)


def test_exit_time_report_oracle_rows():
    coeffs, _ = build_preset("brownian", 2)
    rep = exit_time_report(coeffs, BALL2, oracle="brownian", n=4000, controls={"dt": 1e-4}, seed=3,
                           tolerances={"z": 4.0})
    stats = {r["statistic"]: r for r in rep.rows}
    assert stats["oracle"]["value"] == pytest.approx(0.25**2 / 2)
    assert rep.passed
    with pytest.raises(ValueError):
        exit_time_report(coeffs, BALL2, mode="killed", n=10)
    with pytest.raises(ValueError):
        exit_time_report(coeffs, BALL2, oracle="heat", n=10)


def test_exit_moment_pure_brownian_scaling():
    coeffs, _ = build_preset("brownian", 2)
    rep = exit_moment_report(coeffs, (0.1, 0.2), n=4000, controls={"dt": 1e-5}, seed=4, oracle_c=0.5)
    stats = {(r["statistic"], r["radius"]): r for r in rep.rows}
    assert stats[("r_squared", None)]["value"] > 0.99
    assert ("halving_ratio", 0.2) in stats
    assert stats[("halving_ratio", 0.2)]["value"] == pytest.approx(0.25, abs=0.03)


def test_holder_rejects_degenerate_pairs():
    coeffs, _ = build_preset("brownian", 2)
    with pytest.raises(ValueError):
        holder_report(coeffs, BALL2, LinearBoundaryData(), separations=[0.0, 0.1], n=10)
    with pytest.raises(ValueError):
        holder_report(coeffs, BALL2, LinearBoundaryData(), separations=[0.3], n=10)


def test_scaling_unit_factor_is_identical_law():
    coeffs, _ = build_preset("switch2_markov", 2)
    rep = scaling_report(coeffs, 1.0, BALL2, np.zeros(2), n=3000, seed=5)
    stats = {r["statistic"]: r for r in rep.rows}
    assert stats["exit_time_scaled_small_ball"]["stderr"] > 0
    assert rep.passed


def test_operator_norm_without_admissible_radius_fails():
    coeffs, _ = build_preset("switch2_markov", 2, rate=50.0)
    rep = operator_norm_report(coeffs, (0.5,), LinearBoundaryData(), n=500, controls={"dt": 1e-3}, seed=6,
                               tolerances={"gq_max": 1e-6})
    assert not rep.passed
    assert any(r["statistic"] == "admissible_radius" and r["pass"] is False for r in rep.rows)


def test_analytics_report_passes_on_unit_ball():
    rep = analytics_report(3, n=20_000, seed=7)
    assert rep.passed
    json.dumps(rep.to_dict())


def test_combinatorics_report_flags_divergence():
    coeffs, _ = build_preset("switch3_strict", 2)
    rep = combinatorics_report(coeffs, 0.1)
    assert rep.passed
    assert combinatorics_report(coeffs, 10.0).passed is False


def test_report_dicts_are_json_ready():
    coeffs, _ = build_preset("brownian", 2)
    rep = exit_time_report(coeffs, BALL2, n=500, seed=8)
    text = json.dumps(rep.to_dict(), sort_keys=True)
    assert json.loads(text)["name"] == "exit_time"
    assert rep.csv_rows()[0][1] == "exit_time"
