"""Closed-form kernels of the Laplacian in balls and derived comparison functionals.

Normalization: ``green_ball`` is the Green function of ``-Delta`` with zero
Dirichlet data, i.e. ``-Delta_y G(x, .) = delta_x``.  Brownian motion with
generator ``Delta/2`` has occupation density ``2 * green_ball``.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import pi
from typing import Callable

import numpy as np

from .quadrature import (
    QuadratureError,
    ball_volume,
    gauss_interval,
    ray_exit_distance,
    sphere_area,
    sphere_rule,
)

_BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class Ball:
    """Open ball B(center, radius)."""

    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @classmethod
    def unit(cls, d: int) -> "Ball":
        return cls((0.0,) * d, 1.0)

    @property
    def d(self) -> int:
        return len(self.center)

    @property
    def c(self) -> np.ndarray:
        return np.asarray(self.center)

    @property
    def volume(self) -> float:
        return ball_volume(self.d) * self.radius**self.d

    def dist_to_complement(self, x) -> np.ndarray:
        """delta_B(x) = distance from x to the complement of the ball (0 outside)."""
        x = np.asarray(x, dtype=float)
        return np.maximum(self.radius - np.linalg.norm(x - self.c, axis=-1), 0.0)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - self.c, axis=-1) < self.radius

    def scaled(self, lam: float) -> "Ball":
        """The ball lam * B (centre and radius scaled about the origin)."""
        return Ball(tuple(lam * c for c in self.center), lam * self.radius)

    def to_dict(self) -> dict:
        return {"center": list(self.center), "radius": self.radius}


def _check_dim(d: int, *arrays):
    if d < 2:
        raise ValueError("dimension must be >= 2")
    for a in arrays:
        if a.shape[-1] != d:
            raise ValueError(f"point dimension {a.shape[-1]} does not match d={d}")


def g_fn(d: int, x) -> np.ndarray:
    """The comparison function g: -ln|x| for d = 2 and |x|^{2-d} for d >= 3."""
    x = np.asarray(x, dtype=float)
    _check_dim(d, x)
    nrm = np.linalg.norm(x, axis=-1)
    if np.any(nrm == 0):
        raise ValueError("g is singular at x = 0")
    if d == 2:
        return -np.log(nrm)
    return nrm ** (2.0 - d)


def _relative(ball: Ball, x, y, allow_boundary_y: bool = True):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_dim(ball.d, x, y)
    r = ball.radius
    p = x - ball.c
    q = y - ball.c
    pp = np.einsum("...i,...i->...", p, p)
    qq = np.einsum("...i,...i->...", q, q)
    tol = (1.0 + _BOUNDARY_TOL) ** 2 * r * r
    if np.any(pp >= r * r):
        raise ValueError("green_ball: x must lie in the open ball")
    if np.any(qq > tol) or (not allow_boundary_y and np.any(qq >= r * r)):
        raise ValueError("green_ball: y must lie in the ball")
    diff = x - y
    dd = np.einsum("...i,...i->...", diff, diff)
    if np.any(dd == 0):
        raise ValueError("green_ball is singular at x = y")
    # (r^2 - |p|^2)(r^2 - |q|^2)/r^2; the image distance squared is dd + prod.
    prod = np.maximum(r * r - pp, 0.0) * np.maximum(r * r - qq, 0.0) / (r * r)
    return dd, prod


def green_ball(d: int, ball: Ball, x, y) -> np.ndarray:
    """Exact Dirichlet Green function of -Delta in ``ball`` (image construction).

    Vectorized over leading axes of ``x`` and ``y``.  Symmetric in (x, y) and
    zero when y lies on the boundary sphere.
    """
    dd, prod = _relative(ball, x, y)
    if d == 2:
        return np.log1p(prod / dd) / (4.0 * pi)
    cd = 1.0 / ((d - 2) * sphere_area(d))
    e = (2.0 - d) / 2.0
    # dd^e - (dd + prod)^e without cancellation near the boundary
    return -cd * dd**e * np.expm1(e * np.log1p(prod / dd))


def brownian_green(d: int, ball: Ball, x, y) -> np.ndarray:
    """Occupation density of Brownian motion (generator Delta/2) killed on exiting ``ball``."""
    return 2.0 * green_ball(d, ball, x, y)


def brownian_exit_time_mean(ball: Ball, x) -> np.ndarray:
    """E^x[tau_B] = (r^2 - |x - x0|^2)/d for generator Delta/2."""
    x = np.asarray(x, dtype=float)
    return (ball.radius**2 - np.sum((x - ball.c) ** 2, axis=-1)) / ball.d


def green_bounds_envelope(d: int, ball: Ball, x, y) -> tuple[np.ndarray, np.ndarray]:
    """Comparison shapes of the two-sided Green estimates with unit constants.

    d >= 3: both entries are ``|x-y|^{2-d} (1 ^ dx/|x-y|)(1 ^ dy/|x-y|)``; the
    ratio green_ball/shape is the empirical K_1.
    d = 2: ``(ln(1 + dx dy/|x-y|^2), ln(1 + 4 dx dy/|x-y|^2)) / (2 pi)``, which
    bracket the Brownian (Delta/2) Green function ``2 * green_ball``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _relative(ball, x, y)
    dist = np.linalg.norm(x - y, axis=-1)
    dx = ball.dist_to_complement(x)
    dy = ball.dist_to_complement(y)
    if d == 2:
        t = dx * dy / dist**2
        return np.log1p(t) / (2 * pi), np.log1p(4 * t) / (2 * pi)
    shape = dist ** (2.0 - d) * np.minimum(1.0, dx / dist) * np.minimum(1.0, dy / dist)
    return shape, shape


def poisson_kernel(d: int, ball: Ball, x, z) -> np.ndarray:
    """Classical Poisson kernel of the ball: harmonic measure density at z seen from x."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    _check_dim(d, x, z)
    r = ball.radius
    pz = np.linalg.norm(z - ball.c, axis=-1)
    if np.any(np.abs(pz - r) > _BOUNDARY_TOL * r):
        raise ValueError("poisson_kernel: z must lie on the boundary sphere")
    px2 = np.sum((x - ball.c) ** 2, axis=-1)
    if np.any(px2 >= r * r):
        raise ValueError("poisson_kernel: x must lie in the open ball")
    dist = np.linalg.norm(x - z, axis=-1)
    return (r * r - px2) / (sphere_area(d) * r * dist**d)


def martin_kernel_ball(d: int, ball: Ball, x, z, reference) -> np.ndarray:
    """Martin kernel of Delta in the ball: P(x, z) / P(reference, z)."""
    return poisson_kernel(d, ball, x, z) / poisson_kernel(d, ball, reference, z)


def three_g_ratio(d: int, ball: Ball, x, y, z) -> tuple[np.ndarray, np.ndarray]:
    """Left side G(x,y)G(y,z)/G(x,z) and shape g(x-y) + g(y-z) of the 3G inequality."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    for a, b in ((x, y), (y, z), (x, z)):
        if np.any(np.all(a == b, axis=-1)):
            raise ValueError("three_g_ratio needs distinct points")
    lhs = green_ball(d, ball, x, y) * green_ball(d, ball, y, z) / green_ball(d, ball, x, z)
    shape = g_fn(d, x - y) + g_fn(d, y - z)
    return lhs, shape


def three_g_sweep(d: int, ball: Ball, n: int, rng: np.random.Generator, batch: int = 100_000) -> dict:
    """Sample ``n`` uniform triples in ``ball`` and report sup lhs/shape.

    Triples whose shape is not positive (possible for d = 2 when points are
    more than unit distance apart) are excluded and counted.
    """
    best = 0.0
    excluded = 0
    done = 0
    while done < n:
        k = min(batch, n - done)
        pts = uniform_in_ball(ball, 3 * k, rng).reshape(3, k, d)
        lhs, shape = three_g_ratio(d, ball, pts[0], pts[1], pts[2])
        ok = shape > 0
        excluded += int(np.sum(~ok))
        if np.any(ok):
            best = max(best, float(np.max(lhs[ok] / shape[ok])))
        done += k
    return {"sup_ratio": best, "n": n, "excluded": excluded}


def uniform_in_ball(ball: Ball, n: int, rng: np.random.Generator) -> np.ndarray:
    """n points uniformly distributed in the ball."""
    d = ball.d
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = ball.radius * rng.random(n) ** (1.0 / d)
    return ball.c + g * rad[:, None]


def gauge_bound_integral(
    d: int,
    ball: Ball,
    q: Callable[[np.ndarray], np.ndarray],
    x,
    v,
    n_radial: int = 48,
    n_angular: int = 48,
    rtol: float = 1e-4,
) -> float:
    """Integral of G(x,y) G(y,v) / G(x,v) |q(y)| over the ball.

    The two point singularities are separated with the smooth partition of
    unity ``w_x = |y-v|^2 / (|y-x|^2 + |y-v|^2)``, ``w_v = 1 - w_x``; each
    piece is integrated in polar coordinates about its own singular point,
    where the Jacobian cancels the singularity.  The rule is run at two
    resolutions and the difference is the residual estimate.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.array_equal(x, v):
        raise ValueError("gauge_bound_integral needs x != v")
    gxv = float(green_ball(d, ball, x, v))

    def integrand(y):
        gy_x = green_ball(d, ball, np.broadcast_to(x, y.shape), y)
        dv = np.sum((y - v) ** 2, axis=1)
        safe = dv > 1e-28
        gy_v = np.zeros(len(y))
        gy_v[safe] = green_ball(d, ball, y[safe], np.broadcast_to(v, y[safe].shape))
        return gy_x * gy_v / gxv * np.abs(q(y))

    def polar_piece(src, other, nr, na):
        dirs, wa = sphere_rule(d, na)
        s, ws = gauss_interval(nr)
        rho_max = ray_exit_distance(src - ball.c, dirs, ball.radius)
        rho = rho_max[:, None] * s[None, :]
        w = (wa * rho_max)[:, None] * ws[None, :] * rho ** (d - 1)
        y = src + (rho[:, :, None] * dirs[:, None, :]).reshape(-1, d)
        dx = np.sum((y - src) ** 2, axis=1)
        do = np.sum((y - other) ** 2, axis=1)
        part = do / (dx + do)
        return float(np.sum(w.reshape(-1) * integrand(y) * part))

    def total(nr, na):
        return polar_piece(x, v, nr, na) + polar_piece(v, x, nr, na)

    coarse = total(n_radial, n_angular)
    fine = total(2 * n_radial, 2 * n_angular)
    resid = abs(fine - coarse)
    if resid > rtol * max(abs(fine), 1e-300) and resid > 1e-14:
        raise QuadratureError("gauge_bound_integral did not converge", resid)
    return fine


def bin_average(func: Callable[[np.ndarray], np.ndarray], lo: np.ndarray, width: float, n_sub: int = 4) -> np.ndarray:
    """Average of ``func`` over axis-aligned cubes [lo, lo + width]^d by midpoint sub-cells.

    ``lo`` has shape (k, d); returns (k,).
    """
    lo = np.atleast_2d(lo)
    k, d = lo.shape
    offs = (np.arange(n_sub) + 0.5) / n_sub * width
    grid = np.stack(np.meshgrid(*([offs] * d), indexing="ij"), axis=-1).reshape(-1, d)
    pts = lo[:, None, :] + grid[None, :, :]
    vals = func(pts.reshape(-1, d)).reshape(k, -1)
    return vals.mean(axis=1)
