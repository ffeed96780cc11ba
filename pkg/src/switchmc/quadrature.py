"""Product quadrature rules on spheres and balls.

All rules are deterministic node/weight pairs so that integrals over many
evaluation points can be vectorized.  Sphere weights sum to the surface area
of the unit sphere.
"""
from __future__ import annotations

from functools import lru_cache
from math import gamma, pi

import numpy as np
from scipy.special import roots_jacobi


class QuadratureError(RuntimeError):
    """Raised when a quadrature fails to reach its tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual estimate {residual:.3e})")
        self.residual = residual


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere S^{d-1} in R^d."""
    return 2.0 * pi ** (d / 2) / gamma(d / 2)


def ball_volume(d: int) -> float:
    """Volume of the unit ball in R^d."""
    return pi ** (d / 2) / gamma(d / 2 + 1)


@lru_cache(maxsize=64)
def sphere_rule(d: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Product rule on S^{d-1} with roughly ``n`` nodes per angular coordinate.

    d = 2 uses the periodic trapezoid rule; higher dimensions peel off the
    last coordinate ``t = u_d`` with Gauss-Jacobi nodes for the weight
    ``(1 - t^2)^{(d-3)/2}`` and recurse on S^{d-2}.
    """
    if d < 2:
        raise ValueError("sphere rule needs d >= 2")
    if d == 2:
        theta = 2.0 * pi * (np.arange(2 * n) + 0.5) / (2 * n)
        dirs = np.column_stack([np.cos(theta), np.sin(theta)])
        w = np.full(2 * n, 2.0 * pi / (2 * n))
        return dirs, w
    a = (d - 3) / 2.0
    t, wt = roots_jacobi(n, a, a)
    sub_dirs, sub_w = sphere_rule(d - 1, n)
    s = np.sqrt(1.0 - t**2)
    dirs = np.concatenate(
        [np.column_stack([si * sub_dirs, np.full(len(sub_w), ti)]) for si, ti in zip(s, t)]
    )
    w = np.concatenate([wi * sub_w for wi in wt])
    dirs.setflags(write=False)
    w.setflags(write=False)
    return dirs, w


@lru_cache(maxsize=64)
def gauss_interval(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def ball_rule(d: int, radius: float, n_radial: int, n_angular: int) -> tuple[np.ndarray, np.ndarray]:
    """Polar product rule on the centred ball B(0, radius).

    Returns offsets (N, d) and weights (N,) including the Jacobian.
    """
    dirs, wa = sphere_rule(d, n_angular)
    s, ws = gauss_interval(n_radial)
    rho = radius * s
    wr = radius * ws * rho ** (d - 1)
    pts = (rho[:, None, None] * dirs[None, :, :]).reshape(-1, d)
    w = (wr[:, None] * wa[None, :]).reshape(-1)
    return pts, w


def annulus_rule(
    d: int, r_in: float, r_out: float, n_radial: int, n_angular: int, log_radial: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    """Polar product rule on the annulus r_in < |z| <= r_out.

    With ``log_radial`` the radial nodes are placed in log-radius, which
    resolves power-law kernels concentrated near the inner radius.
    """
    dirs, wa = sphere_rule(d, n_angular)
    s, ws = gauss_interval(n_radial)
    if log_radial:
        lo, hi = np.log(r_in), np.log(r_out)
        rho = np.exp(lo + (hi - lo) * s)
        wr = (hi - lo) * ws * rho**d
    else:
        rho = r_in + (r_out - r_in) * s
        wr = (r_out - r_in) * ws * rho ** (d - 1)
    pts = (rho[:, None, None] * dirs[None, :, :]).reshape(-1, d)
    w = (wr[:, None] * wa[None, :]).reshape(-1)
    return pts, w


def ray_exit_distance(p: np.ndarray, u: np.ndarray, radius: float) -> np.ndarray:
    """Distance along unit directions ``u`` from interior offset ``p`` to the sphere.

    ``p`` is the offset of the start point from the ball centre.
    """
    pu = u @ p
    return -pu + np.sqrt(np.maximum(pu**2 - p @ p + radius**2, 0.0))
