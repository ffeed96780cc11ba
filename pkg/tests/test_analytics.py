import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from switchmc.analytics import (
    Ball,
    bin_average,
    brownian_exit_time_mean,
    brownian_green,
    g_fn,
    gauge_bound_integral,
    green_ball,
    green_bounds_envelope,
    martin_kernel_ball,
    poisson_kernel,
    three_g_ratio,
    three_g_sweep,
    uniform_in_ball,
)
from switchmc.quadrature import ball_volume, sphere_area, sphere_rule


def test_ball_invariants():
    with pytest.raises(ValueError):
        Ball((0.0, 0.0), 0.0)
    b = Ball((1.0, 2.0), 0.5)
    assert b.d == 2
    assert b.contains(np.array([1.2, 2.1]))
    assert not b.contains(np.array([1.5, 2.0]))
    assert b.scaled(2.0) == Ball((2.0, 4.0), 1.0)
    assert b.volume == pytest.approx(math.pi * 0.25)


# ---------------------------------------------------------------------------
# g


def test_g_examples():
    assert g_fn(2, [1.0, 0.0]) == 0.0
    assert g_fn(3, [2.0, 0.0, 0.0]) == pytest.approx(0.5)
    assert g_fn(4, [0.5, 0.0, 0.0, 0.0]) == pytest.approx(4.0)


def test_g_singular_at_origin():
    with pytest.raises(ValueError):
        g_fn(3, [0.0, 0.0, 0.0])


# ---------------------------------------------------------------------------
# Green function


def test_green_d3_center_value():
    got = green_ball(3, Ball.unit(3), [0.0, 0.0, 0.0], [0.5, 0.0, 0.0])
    assert got == pytest.approx(1 / (4 * math.pi) * (1 / 0.5 - 1), rel=1e-14)
    assert got == pytest.approx(0.07958, abs=1e-5)


def test_green_d2_center_value():
    # -ln(|y|)/(2 pi) from the centre of the unit disc
    assert green_ball(2, Ball.unit(2), [0.0, 0.0], [0.5, 0.0]) == pytest.approx(math.log(2) / (2 * math.pi))


@pytest.mark.parametrize("d", [2, 3, 4])
def test_green_symmetric_positive_and_zero_on_boundary(d):
    rng = np.random.default_rng(d)
    ball = Ball(tuple(rng.normal(size=d)), 1.7)
    x = uniform_in_ball(ball, 1000, rng)
    y = uniform_in_ball(ball, 1000, rng)
    gxy = green_ball(d, ball, x, y)
    np.testing.assert_allclose(gxy, green_ball(d, ball, y, x), rtol=1e-12)
    assert np.all(gxy > 0)
    u = rng.normal(size=(1000, d))
    z = ball.c + ball.radius * u / np.linalg.norm(u, axis=1, keepdims=True)
    assert np.max(np.abs(green_ball(d, ball, x, z))) < 1e-12


def test_green_domain_errors():
    ball = Ball.unit(3)
    with pytest.raises(ValueError):
        green_ball(3, ball, [0.1, 0, 0], [0.1, 0, 0])
    with pytest.raises(ValueError):
        green_ball(3, ball, [1.5, 0, 0], [0.1, 0, 0])


@settings(max_examples=50, deadline=None)
@given(st.sampled_from([2, 3, 5]), st.floats(0.05, 3.0), st.integers(0, 2**32 - 1))
def test_green_scaling_identity(d, lam, seed):
    rng = np.random.default_rng(seed)
    ball = Ball(tuple(rng.normal(size=d)), 1.3)
    x = uniform_in_ball(ball, 50, rng)
    y = uniform_in_ball(ball, 50, rng)
    big = green_ball(d, ball.scaled(lam), lam * x, lam * y)
    want = lam ** (2 - d) * green_ball(d, ball, x, y)
    # rounding of lam*x and lam*c is amplified by r^2 - |x-c|^2 near the sphere
    c = np.asarray(ball.c)

    def cond(z):
        p = z - c
        pp = np.sum(p * p, axis=-1)
        return np.linalg.norm(z, axis=-1) * np.sqrt(pp) / (ball.radius**2 - pp)

    tol = 1e-12 * (1.0 + cond(x) + cond(y))
    assert np.all(np.abs(big - want) <= tol * np.abs(want))


def test_brownian_oracles_use_half_laplacian_time_scale():
    ball = Ball.unit(3)
    assert brownian_exit_time_mean(ball, [0.0, 0.0, 0.0]) == pytest.approx(1 / 3)
    assert brownian_exit_time_mean(Ball.unit(2), [0.5, 0.0]) == pytest.approx(0.75 / 2)
    x, y = np.zeros(3), np.array([0.3, 0.1, 0.0])
    assert brownian_green(3, ball, x, y) == pytest.approx(2 * green_ball(3, ball, x, y))


@pytest.mark.parametrize("d", [2, 3])
def test_occupation_density_integrates_to_exit_time(d):
    # int_B G_{1/2 Delta}(x, y) dy = E^x[tau]: ball quadrature in polar
    # coordinates about x, where the Jacobian removes the singularity
    ball = Ball.unit(d)
    x = np.array([0.3] + [0.0] * (d - 1))
    dirs, wa = sphere_rule(d, 64)
    from switchmc.quadrature import gauss_interval, ray_exit_distance

    s, ws = gauss_interval(64)
    rmax = ray_exit_distance(x, dirs, 1.0)
    rho = rmax[:, None] * s[None, :]
    w = (wa * rmax)[:, None] * ws[None, :] * rho ** (d - 1)
    y = x + (rho[:, :, None] * dirs[:, None, :]).reshape(-1, d)
    vals = brownian_green(d, ball, np.broadcast_to(x, y.shape), y)
    assert float(np.sum(w.ravel() * vals)) == pytest.approx(float(brownian_exit_time_mean(ball, x)), rel=1e-6)


def test_green_envelope_d2_brackets_exact():
    ball = Ball.unit(2)
    rng = np.random.default_rng(11)
    x = uniform_in_ball(ball, 100_000, rng)
    y = uniform_in_ball(ball, 100_000, rng)
    lo, hi = green_bounds_envelope(2, ball, x, y)
    exact = brownian_green(2, ball, x, y)
    assert np.all(lo <= exact * (1 + 1e-12))
    assert np.all(exact <= hi * (1 + 1e-12))


def test_green_envelope_d3_ratio_interval_is_finite():
    ball = Ball.unit(3)
    rng = np.random.default_rng(12)
    x = uniform_in_ball(ball, 100_000, rng)
    y = uniform_in_ball(ball, 100_000, rng)
    shape, _ = green_bounds_envelope(3, ball, x, y)
    ratio = green_ball(3, ball, x, y) / shape
    k_hat = max(ratio.max(), 1 / ratio.min())
    assert np.isfinite(k_hat) and k_hat < 100


# ---------------------------------------------------------------------------
# Poisson and Martin kernels


def test_martin_kernel_examples():
    ball = Ball.unit(3)
    z = np.array([1.0, 0.0, 0.0])
    assert martin_kernel_ball(3, ball, [0.5, 0, 0], z, [0.0, 0, 0]) == pytest.approx(6.0)
    x = np.array([0.2, -0.3, 0.1])
    assert martin_kernel_ball(3, ball, x, z, x) == pytest.approx(1.0)


def test_poisson_kernel_rejects_interior_z():
    with pytest.raises(ValueError):
        poisson_kernel(3, Ball.unit(3), [0, 0, 0], [0.5, 0, 0])


@pytest.mark.parametrize("d", [2, 3])
def test_poisson_kernel_integrates_to_one(d):
    ball = Ball((0.5,) * d, 2.0)
    rng = np.random.default_rng(d)
    x = uniform_in_ball(Ball(ball.center, 0.8 * ball.radius), 100, rng)
    dirs, w = sphere_rule(d, 400 if d == 2 else 160)
    z = ball.c + ball.radius * dirs
    for xi in x:
        total = np.sum(w * poisson_kernel(d, ball, np.broadcast_to(xi, z.shape), z)) * ball.radius ** (d - 1)
        assert total == pytest.approx(1.0, abs=1e-6)


# ---------------------------------------------------------------------------
# 3G


def test_three_g_midpoint_is_finite_and_below_sweep_max():
    ball = Ball.unit(3)
    x, y, z = np.array([-0.5, 0, 0]), np.zeros(3), np.array([0.5, 0, 0])
    lhs, shape = three_g_ratio(3, ball, x, y, z)
    assert np.isfinite(lhs) and shape == pytest.approx(4.0)
    sweep = three_g_sweep(3, ball, 100_000, np.random.default_rng(0))
    assert lhs / shape <= sweep["sup_ratio"]


def test_three_g_boundary_approach_stays_bounded():
    ball = Ball.unit(3)
    x, y = np.array([-0.3, 0.1, 0]), np.array([0.2, 0.0, 0.1])
    ratios = []
    for eps in 10.0 ** -np.arange(1, 8):
        z = np.array([1 - eps, 0, 0])
        lhs, shape = three_g_ratio(3, ball, x, y, z)
        ratios.append(float(lhs / shape))
    assert np.all(np.isfinite(ratios))
    assert ratios[-1] == pytest.approx(ratios[-2], rel=1e-3)


def test_three_g_swap_is_consistent():
    ball = Ball.unit(2)
    x, y, z = np.array([0.1, 0.2]), np.array([-0.3, 0.0]), np.array([0.4, -0.4])
    l1, s1 = three_g_ratio(2, ball, x, y, z)
    l2, s2 = three_g_ratio(2, ball, z, y, x)
    assert l1 == pytest.approx(green_ball(2, ball, x, y) * green_ball(2, ball, y, z) / green_ball(2, ball, x, z))
    assert l2 == pytest.approx(green_ball(2, ball, z, y) * green_ball(2, ball, y, x) / green_ball(2, ball, z, x))
    assert s2 == pytest.approx(g_fn(2, z - y) + g_fn(2, y - x))
    assert s1 == pytest.approx(s2)


def test_three_g_rejects_coincident_points():
    with pytest.raises(ValueError):
        three_g_ratio(3, Ball.unit(3), np.zeros(3), np.zeros(3), np.ones(3) * 0.1)


# ---------------------------------------------------------------------------
# gauge integral


def test_gauge_zero_potential():
    ball = Ball.unit(3)
    assert gauge_bound_integral(3, ball, lambda y: np.zeros(len(y)), [-0.5, 0, 0], [0.5, 0, 0]) == 0.0


def test_gauge_constant_potential_matches_monte_carlo():
    ball = Ball.unit(3)
    x, v = np.array([-0.5, 0.0, 0.0]), np.array([0.5, 0.0, 0.0])
    got = gauge_bound_integral(3, ball, lambda y: -np.ones(len(y)), x, v)
    rng = np.random.default_rng(2024)
    y = uniform_in_ball(ball, 2_000_000, rng)
    vals = green_ball(3, ball, np.broadcast_to(x, y.shape), y) * green_ball(3, ball, y, np.broadcast_to(v, y.shape))
    mc = vals.mean() * ball_volume(3) / green_ball(3, ball, x, v)
    assert float(f"{got:.2g}") == float(f"{mc:.2g}")
    assert got == pytest.approx(mc, rel=0.01)


def test_gauge_integral_scales_with_radius_squared():
    q = lambda y: -np.ones(len(y))  # noqa: E731
    big = gauge_bound_integral(3, Ball.unit(3), q, [-0.5, 0, 0], [0.5, 0, 0])
    small = gauge_bound_integral(3, Ball((0.0,) * 3, 0.5), q, [-0.25, 0, 0], [0.25, 0, 0])
    assert small < big
    assert small / big == pytest.approx(0.25, rel=1e-3)


def test_bin_average_of_linear_function_is_centre_value():
    lo = np.array([[0.0, 0.0], [1.0, -1.0]])
    got = bin_average(lambda p: 2 * p[:, 0] + p[:, 1], lo, 0.5)
    np.testing.assert_allclose(got, [0.75, 1.75])


def test_sphere_and_ball_measures():
    assert sphere_area(3) == pytest.approx(4 * math.pi)
    assert ball_volume(2) == pytest.approx(math.pi)
    for d in (2, 3, 4):
        _, w = sphere_rule(d, 8)
        assert w.sum() == pytest.approx(sphere_area(d))
