import math

import numpy as np
import pytest

from switchmc.analytics import Ball
from switchmc.engine import SimControls
from switchmc.estimators import (
    Lattice,
    MCEstimate,
    batch_means,
    estimate_boundary_functional,
    estimate_gq_norm,
    estimate_occupation_green,
    estimate_preswitch_functional,
    estimate_resolvent,
    KillingRate,
    neumann_partial_sum,
)
from switchmc.harness import ConstantData, HalfSpaceIndicator, LinearBoundaryData
from switchmc.presets import build_preset

FREE = SimControls(dt=1e-2, max_time=200.0)


class Smooth:
    """Positive smooth test function of (x, level)."""

    def __call__(self, x, lev):
        return 1.0 + 0.5 * np.sin(x[:, 0]) + 0.1 * np.asarray(lev)


class Zero:
    def __call__(self, x, lev):
        return np.zeros(len(x))


# ---------------------------------------------------------------------------
# MCEstimate


def test_mc_estimate_invariants():
    rng = np.random.default_rng(0)
    v = rng.normal(size=1000)
    est = MCEstimate.from_samples(v)
    assert est.stderr == pytest.approx(np.std(v, ddof=1) / math.sqrt(1000))
    lo, hi = est.ci95
    assert lo == pytest.approx(est.mean - 1.96 * est.stderr) and hi == pytest.approx(est.mean + 1.96 * est.stderr)
    assert est.reliable
    flagged = MCEstimate.from_samples(v, n_censored=11)
    assert not flagged.reliable and "horizon" in flagged.flags[0]
    assert MCEstimate.from_samples(v, n_censored=10).reliable
    d = est.to_dict()
    assert set(d) == {"mean", "stderr", "n", "ci95", "n_censored", "flags"}


def test_batch_means():
    mean, se = batch_means([[1.0], [3.0]])
    assert mean[0] == 2.0 and se[0] == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# boundary functionals


def test_constant_payoff_markov_exit_probability_one():
    coeffs, _ = build_preset("switch2_markov", 2, rate=3.0)
    ball = Ball((0.0, 0.0), 0.3)
    est = estimate_boundary_functional(coeffs, ball, (np.zeros(2), 0), ConstantData(1.0), n=5000, seed=1)
    assert abs(est.mean - 1.0) <= 3 * est.stderr or est.mean == 1.0


def test_hemisphere_payoff_by_symmetry():
    coeffs, _ = build_preset("brownian", 3)
    ball = Ball((0.0, 0.0, 0.0), 0.3)
    phi = HalfSpaceIndicator(axis=0).bind(ball)
    est = estimate_boundary_functional(coeffs, ball, (np.zeros(3), 0), phi, n=20_000, seed=2)
    assert abs(est.mean - 0.5) <= 3 * est.stderr


def test_full_and_preswitch_agree_without_switching():
    coeffs, _ = build_preset("stable_trunc", 2)
    ball = Ball((0.0, 0.0), 0.25)
    phi = LinearBoundaryData().bind(ball)
    a = estimate_boundary_functional(coeffs, ball, (np.zeros(2), 0), phi, "full", n=3000, seed=3)
    b = estimate_boundary_functional(coeffs, ball, (np.zeros(2), 0), phi, "pre-switch", n=3000, seed=3)
    assert a == b


def test_preswitch_below_full_for_nonnegative_payoff():
    coeffs, _ = build_preset("switch2_markov", 2, rate=5.0)
    ball = Ball((0.0, 0.0), 0.3)
    phi = LinearBoundaryData().bind(ball)
    full = estimate_boundary_functional(coeffs, ball, (np.zeros(2), 0), phi, "full", n=10_000, seed=4)
    pre = estimate_boundary_functional(coeffs, ball, (np.zeros(2), 0), phi, "pre-switch", n=10_000, seed=5)
    assert pre.mean <= full.mean + 3 * math.hypot(pre.stderr, full.stderr)


def test_stderr_halves_when_n_quadruples():
    coeffs, _ = build_preset("switch2_markov", 2, rate=5.0)
    ball = Ball((0.0, 0.0), 0.25)
    phi = LinearBoundaryData().bind(ball)
    small = estimate_boundary_functional(coeffs, ball, (np.zeros(2), 0), phi, n=5000, seed=6)
    big = estimate_boundary_functional(coeffs, ball, (np.zeros(2), 0), phi, n=20_000, seed=7)
    assert big.stderr / small.stderr == pytest.approx(0.5, rel=0.2)


def test_estimates_do_not_depend_on_workers():
    coeffs, _ = build_preset("switch2_stable", 2)
    ball = Ball((0.0, 0.0), 0.25)
    phi = LinearBoundaryData().bind(ball)
    ctl = SimControls.for_ball(ball, block_size=1000)
    a = estimate_boundary_functional(coeffs, ball, (np.zeros(2), 0), phi, n=3000, controls=ctl, seed=8)
    b = estimate_boundary_functional(coeffs, ball, (np.zeros(2), 0), phi, n=3000, controls=ctl, seed=8, workers=3)
    assert a == b


# ---------------------------------------------------------------------------
# resolvent and pre-switch law


@pytest.mark.parametrize("alpha", [0.0, 1.0, 1e3])
def test_resolvent_constant_rate_closed_form(alpha):
    lam = 1.0
    coeffs, _ = build_preset("switch2_markov", 2, rate=lam)
    est = estimate_resolvent(coeffs, 0, alpha, ConstantData(1.0), np.zeros(2), n=20_000, controls=FREE, seed=9)
    assert abs(est.mean - 1 / (alpha + lam)) <= 3 * est.stderr
    if alpha == 1e3:
        assert est.mean == pytest.approx(1 / alpha, rel=0.01)


def test_resolvent_of_zero_is_zero():
    coeffs, _ = build_preset("switch2_markov", 2)
    est = estimate_resolvent(coeffs, 0, 0.0, Zero(), np.zeros(2), n=1000, controls=FREE, seed=10)
    assert est.mean == 0.0 and est.stderr == 0.0


@pytest.mark.parametrize("alpha", [0.0, 1.0])
def test_preswitch_law_constant_rate(alpha):
    lam = 1.0
    coeffs, _ = build_preset("switch2_markov", 2, rate=lam)
    est = estimate_preswitch_functional(coeffs, 0, alpha, ConstantData(1.0), np.zeros(2), n=20_000, controls=FREE,
                                        seed=11)
    target = lam / (alpha + lam)
    if alpha == 0:
        assert est.mean == 1.0
    else:
        assert abs(est.mean - target) <= 3 * est.stderr


@pytest.mark.parametrize("pid", ["switch2_markov", "switch2_submarkov", "switch2_varying"])
def test_preswitch_identity_two_estimators(pid):
    coeffs, _ = build_preset(pid, 2)
    ctl = SimControls(dt=1e-3, max_time=200.0)
    phi = Smooth()
    x0 = np.array([0.3, -0.2])
    left = estimate_preswitch_functional(coeffs, 0, 0.5, phi, x0, n=20_000, controls=ctl, seed=12)
    right = estimate_resolvent(coeffs, 0, 0.5, KillingRate(coeffs, phi), x0, n=20_000, controls=ctl, seed=13)
    assert abs(left.mean - right.mean) <= 3 * math.hypot(left.stderr, right.stderr)


# ---------------------------------------------------------------------------
# occupation density


def test_occupation_grid_total_mass_identity():
    coeffs, _ = build_preset("switch2_stable", 2)
    ball = Ball((0.1, -0.1), 0.25)
    grid = estimate_occupation_green(coeffs, 0, ball, ball.c, bins_per_radius=4, n=3000, seed=14)
    assert grid.total_mass == pytest.approx(grid.mean_exit, rel=1e-12)


def test_occupation_grid_needs_four_bins_per_radius():
    coeffs, _ = build_preset("brownian", 2)
    with pytest.raises(ValueError):
        estimate_occupation_green(coeffs, 0, Ball.unit(2), np.zeros(2), bins_per_radius=3, n=10)


def test_killing_shrinks_occupation():
    ball = Ball((0.0, 0.0), 0.3)
    plain, _ = build_preset("brownian", 2)
    killed, _ = build_preset("switch2_markov", 2, rate=20.0)
    g0 = estimate_occupation_green(plain, 0, ball, np.zeros(2), bins_per_radius=4, n=20_000, seed=15)
    g1 = estimate_occupation_green(killed, 0, ball, np.zeros(2), bins_per_radius=4, n=20_000, seed=16)
    slack = 3 * np.hypot(g0.stderr, g1.stderr)
    assert np.all(g1.values <= g0.values + slack)
    assert g1.total_mass < g0.total_mass


# ---------------------------------------------------------------------------
# coupling norm and Neumann series


def test_gq_norm_without_switching_is_zero():
    coeffs, _ = build_preset("brownian", 2)
    ball = Ball((0.0, 0.0), 0.3)
    est = estimate_gq_norm(coeffs, ball, [np.zeros(2)], n=500, seed=17)
    assert est.value == 0.0


def test_gq_norm_bounded_by_exit_time():
    coeffs, _ = build_preset("switch2_markov", 3, rate=1.0)
    ball = Ball((0.0, 0.0, 0.0), 0.3)
    est = estimate_gq_norm(coeffs, ball, [np.zeros(3)], n=20_000, seed=18)
    for e in est.estimates.values():
        assert e.mean <= 0.03 + 3 * e.stderr
    assert est.value < 0.25


def test_gq_norm_rejects_outside_probe():
    coeffs, _ = build_preset("switch2_markov", 2)
    with pytest.raises(ValueError):
        estimate_gq_norm(coeffs, Ball((0.0, 0.0), 0.1), [np.array([0.2, 0.0])], n=10)


def test_lattice_interpolates_linear_fields_exactly():
    lat = Lattice(Ball((0.0, 0.0), 0.5), 4)
    field = 1 + lat.nodes[:, 0] - 2 * lat.nodes[:, 1]
    rng = np.random.default_rng(0)
    pts = rng.uniform(-0.5, 0.5, (100, 2))
    np.testing.assert_allclose(lat.interpolate(field, pts), 1 + pts[:, 0] - 2 * pts[:, 1], atol=1e-12)
    with pytest.raises(ValueError):
        lat.interpolate(field, np.array([[0.6, 0.0]]))


def test_neumann_without_switching_is_h():
    coeffs, _ = build_preset("brownian", 2)
    ball = Ball((0.0, 0.0), 0.25)
    res = neumann_partial_sum(coeffs, ball, 2, LinearBoundaryData().bind(ball), 3, n=1000, seed=19)
    np.testing.assert_array_equal(res.partial_sum, res.terms[0])
    assert res.remainder_bound == 0.0
    assert np.all(res.terms[1:] == 0)


def test_neumann_terms_contract_at_measured_rate():
    coeffs, _ = build_preset("switch2_markov", 2, rate=2.0)
    ball = Ball((0.0, 0.0), 0.25)
    ctl = SimControls(dt=1e-4)
    rho = estimate_gq_norm(coeffs, ball, [np.zeros(2), np.array([0.125, 0.0])], n=5000, controls=ctl, seed=20).value
    res = neumann_partial_sum(coeffs, ball, 2, LinearBoundaryData().bind(ball), 3, n=5000, controls=ctl, seed=21)
    for k in range(3):
        sup_next = np.max(np.abs(res.terms[k + 1]))
        se_next = np.max(res.term_stderr[k + 1])
        assert sup_next <= rho * np.max(np.abs(res.terms[k])) + 3 * se_next
    assert res.rho < 1 and res.remainder_bound < 1


def test_neumann_refuses_non_contracting_operator():
    coeffs, _ = build_preset("switch2_markov", 2)
    ball = Ball((0.0, 0.0), 0.25)
    with pytest.raises(ValueError, match=">= 1"):
        neumann_partial_sum(coeffs, ball, 2, ConstantData(1.0), 2, n=200, seed=22, rho=1.5)
