"""Coefficient data of a weakly coupled nonlocal operator and its class checks.

Coefficient callables are vectorized: points have shape (n, d) and levels
are integer arrays of shape (n,).  Fields:

* ``a(x, i)``     -> (n, d, d) diffusion matrices
* ``b1(x, i)``    -> (n, d) drift vectors
* ``b2(x, z, i)`` -> (n,) jump multipliers
* ``jumps[i]``    -> jump kernel of level i (or None)
* ``Q(x)``        -> (n, m, m) switching matrices
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .analytics import Ball, g_fn
from .quadrature import (
    QuadratureError,
    ball_rule,
    ball_volume,
    sphere_area,
    sphere_rule,
)


class ClassParamsError(ValueError):
    """Raised when class constants violate their admissible ranges."""


class CoefficientError(RuntimeError):
    """A coefficient field failed to evaluate (or returned garbage) at a point."""

    def __init__(self, field_name: str, point, cause: str):
        self.field_name = field_name
        self.point = np.asarray(point).tolist()
        super().__init__(f"coefficient '{field_name}' failed at {self.point}: {cause}")


@dataclass(frozen=True)
class ClassParams:
    """Constants of the operator class.

    ``holder_c`` is the declared Hoelder constant of the diffusion matrix;
    when omitted the Hoelder check only reports the empirical constant.
    """

    d: int
    m: int
    theta1: float = 1.0
    theta2: float = 1.0
    theta3: float = 1.0
    theta4: float = 1.0
    theta5: float = 1.0
    gamma: float = 0.5
    beta: float = 1.5
    c1: float = 1.0
    c0: float = 0.5
    vartheta: float = 1.0
    holder_c: Optional[float] = None

    def __post_init__(self):
        problems = []
        if int(self.d) != self.d or self.d < 2:
            problems.append(f"d must be an integer >= 2 (got {self.d})")
        if int(self.m) != self.m or self.m < 2:
            problems.append(f"m must be an integer >= 2 (got {self.m})")
        for name in ("theta1", "theta2", "theta3", "theta4", "theta5", "c1", "vartheta"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be > 0 (got {getattr(self, name)})")
        if not 0 < self.gamma < 1:
            problems.append(f"gamma ∉ (0,1): got {self.gamma}")
        if not 1 < self.beta < 2:
            problems.append(f"beta ∉ (1,2): got {self.beta}")
        if not 0 < self.c0 < 1:
            problems.append(f"c0 ∉ (0,1): got {self.c0}")
        if self.holder_c is not None and not self.holder_c > 0:
            problems.append(f"holder_c must be > 0 (got {self.holder_c})")
        if problems:
            raise ClassParamsError("; ".join(problems))

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# jump kernels


class JumpKernel:
    """Levy density j(z) of one level.

    Subclasses must implement ``__call__`` and ``sample``.  The integral
    helpers fall back to polar quadrature.
    """

    even: bool = False
    support_radius: float = math.inf

    def __call__(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, n: int, d: int, delta: float) -> np.ndarray:
        """Draw ``n`` jumps from j restricted to |z| > delta, normalized."""
        raise NotImplementedError

    def _radial_quad(self, d, f_of_rho, lo, hi, n_angular=24):
        dirs, w = sphere_rule(d, n_angular)

        def shell(rho):
            return f_of_rho(rho, np.sum(w * self(rho * dirs))) * rho ** (d - 1)

        val, err = integrate.quad(shell, lo, hi, limit=200)
        return val

    def tail_mass(self, d: int, delta: float) -> float:
        """Integral of j over |z| > delta."""
        hi = self.support_radius
        return self._radial_quad(d, lambda rho, s: s, delta, hi)

    def second_moment_mass(self, d: int) -> float:
        """Integral of (1 ^ |z|^2) j(z)."""
        hi = self.support_radius
        inner = self._radial_quad(d, lambda rho, s: rho * rho * s, 0.0, min(1.0, hi))
        outer = self._radial_quad(d, lambda rho, s: s, 1.0, hi) if hi > 1 else 0.0
        return inner + outer

    def compensator(self, d: int, delta: float) -> np.ndarray:
        """Integral of z j(z) over delta < |z| <= 1."""
        if self.even:
            return np.zeros(d)
        dirs, w = sphere_rule(d, 48)

        def shell(rho):
            return (w * self(rho * dirs)) @ dirs * rho**d

        hi = min(1.0, self.support_radius)
        if hi <= delta:
            return np.zeros(d)
        val, _ = integrate.quad_vec(shell, delta, hi)
        return val

    def describe(self) -> dict:
        return {"type": type(self).__name__}


@dataclass(frozen=True)
class RadialPowerKernel(JumpKernel):
    """j(z) = c1 |z|^{-d-beta} on |z| <= rmax, optionally only where z_1 > 0."""

    c1: float
    beta: float
    rmax: float = 1.0
    half_space: bool = False

    @property
    def even(self) -> bool:  # type: ignore[override]
        return not self.half_space

    @property
    def support_radius(self) -> float:  # type: ignore[override]
        return self.rmax

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        d = z.shape[-1]
        rho = np.linalg.norm(z, axis=-1)
        with np.errstate(divide="ignore"):
            val = self.c1 * rho ** (-d - self.beta)
        ok = (rho > 0) & (rho <= self.rmax)
        if self.half_space:
            ok &= z[..., 0] > 0
        return np.where(ok, val, 0.0)

    def _frac(self):
        return 0.5 if self.half_space else 1.0

    def tail_mass(self, d, delta):
        if delta >= self.rmax:
            return 0.0
        b = self.beta
        return self.c1 * sphere_area(d) * self._frac() * (delta ** (-b) - self.rmax ** (-b)) / b

    def second_moment_mass(self, d):
        b = self.beta
        r1 = min(1.0, self.rmax)
        inner = r1 ** (2 - b) / (2 - b)
        outer = (1.0 - self.rmax ** (-b)) / b if self.rmax > 1 else 0.0
        return self.c1 * sphere_area(d) * self._frac() * (inner + outer)

    def compensator(self, d, delta):
        out = np.zeros(d)
        hi = min(1.0, self.rmax)
        if not self.half_space or hi <= delta:
            return out
        # integral over the half sphere of u_1 is the volume of the unit (d-1)-ball
        out[0] = self.c1 * ball_volume(d - 1) * (delta ** (1 - self.beta) - hi ** (1 - self.beta)) / (self.beta - 1)
        return out

    def sample(self, rng, n, d, delta):
        b = self.beta
        lo = delta ** (-b)
        hi = self.rmax ** (-b) if math.isfinite(self.rmax) else 0.0
        u = rng.random(n)
        rho = (lo - u * (lo - hi)) ** (-1.0 / b)
        g = rng.standard_normal((n, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        if self.half_space:
            g[:, 0] = np.abs(g[:, 0])
        return g * rho[:, None]

    def describe(self):
        return {"type": "radial_power", "c1": self.c1, "beta": self.beta, "rmax": self.rmax,
                "half_space": self.half_space}


# ---------------------------------------------------------------------------
# coefficient sets


@dataclass
class CoefficientSet:
    """Coefficient fields of one operator plus optional constant fast paths.

    The ``*_const`` arrays, when set, must agree with the callables; the path
    engine uses them to skip per-point evaluation.  ``b2_even`` declares
    b2(x, z, i) = b2(x, -z, i), which together with even kernels makes the
    compensator drift vanish.
    """

    d: int
    m: int
    a: Callable
    b1: Callable
    b2: Callable
    jumps: tuple
    Q: Callable
    Q0: np.ndarray
    preset_id: str = "custom"
    params: dict = field(default_factory=dict)
    a_const: Optional[np.ndarray] = None
    b1_const: Optional[np.ndarray] = None
    b2_const: Optional[np.ndarray] = None
    Q_const: Optional[np.ndarray] = None
    b2_even: bool = False

    def __post_init__(self):
        self.Q0 = np.asarray(self.Q0, dtype=float)
        if self.Q0.shape != (self.m, self.m):
            raise ValueError(f"Q0 must be {self.m}x{self.m}")
        if len(self.jumps) != self.m:
            raise ValueError("need one jump kernel (or None) per level")

    @property
    def has_jumps(self) -> bool:
        if all(k is None for k in self.jumps):
            return False
        if self.b2_const is not None and np.all(np.asarray(self.b2_const) == 0):
            return False
        return True

    def j(self, z, i) -> np.ndarray:
        """Levy density j_i(z), vectorized over points and levels."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        i = np.broadcast_to(np.asarray(i), z.shape[:1])
        out = np.zeros(len(z))
        for lev in np.unique(i):
            kern = self.jumps[int(lev)]
            if kern is not None:
                sel = i == lev
                out[sel] = kern(z[sel])
        return out

    def jump_kernel_value(self, x, y, i) -> np.ndarray:
        """J^{b2}(x, y, i) = b2(x, y - x, i) j_i(y - x)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        x, y = np.broadcast_arrays(x, y)
        i = np.broadcast_to(np.asarray(i), x.shape[:1])
        z = y - x
        jv = self.j(z, i)
        out = np.zeros(len(z))
        nz = jv != 0
        if np.any(nz):
            out[nz] = self.b2(x[nz], z[nz], i[nz]) * jv[nz]
        return out

    def q_rows(self, x: np.ndarray, levels: np.ndarray) -> np.ndarray:
        """Rows Q(x)[level, :] for each point, shape (n, m)."""
        if self.Q_const is not None:
            return self.Q_const[levels]
        qm = self.Q(x)
        return qm[np.arange(len(levels)), levels]

    def describe(self) -> dict:
        return {
            "preset_id": self.preset_id,
            "d": self.d,
            "m": self.m,
            "params": self.params,
            "Q0": self.Q0.tolist(),
            "jumps": [None if k is None else k.describe() for k in self.jumps],
        }


def _safe_eval(name, func, points, *args):
    try:
        val = np.asarray(func(points, *args), dtype=float)
    except Exception as exc:  # noqa: BLE001 - user callables can raise anything
        raise CoefficientError(name, points[0], repr(exc)) from exc
    bad = ~np.isfinite(val)
    if np.any(bad):
        idx = np.argwhere(bad)[0][0]
        raise CoefficientError(name, points[idx], "non-finite value")
    return val


# ---------------------------------------------------------------------------
# class validation


@dataclass
class SamplingSpec:
    """Where and how densely conditions are sampled.

    The default region is the scenario domain inflated by radius 2.
    """

    n_points: int = 10_000
    center: Sequence[float] | None = None
    radius: float = 3.0
    n_holder_pairs: int = 2_000

    @classmethod
    def for_domain(cls, ball: Ball, n_points: int = 10_000) -> "SamplingSpec":
        return cls(n_points=n_points, center=list(ball.center), radius=ball.radius + 2.0)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ConditionResult:
    name: str
    passed: bool
    margin: float
    worst_point: list | None = None
    detail: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ValidationReport:
    conditions: dict
    sampling: dict
    seed: int

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions.values())

    def failures(self) -> list[str]:
        return [n for n, c in self.conditions.items() if not c.passed]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "conditions": {k: v.to_dict() for k, v in self.conditions.items()},
            "sampling": self.sampling,
            "seed": self.seed,
        }


def _sample_region(rng, n, d, center, radius):
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return np.asarray(center) + g * (radius * rng.random(n) ** (1.0 / d))[:, None]


def _worst(values, points, larger_is_worse=True):
    idx = int(np.argmax(values) if larger_is_worse else np.argmin(values))
    return idx, points[idx].tolist()


def validate_class(
    coeffs: CoefficientSet,
    params: ClassParams,
    sampling: SamplingSpec | None = None,
    seed: int = 0,
) -> ValidationReport:
    """Sampled check of every class condition; deterministic given ``seed``.

    Margins are positive when a condition holds with room to spare and
    negative at the worst violating sample.
    """
    sampling = sampling or SamplingSpec()
    d, m = coeffs.d, coeffs.m
    if (d, m) != (params.d, params.m):
        raise ClassParamsError(f"coefficients are (d={d}, m={m}) but params are (d={params.d}, m={params.m})")
    center = sampling.center if sampling.center is not None else [0.0] * d
    rng = np.random.default_rng(seed)
    n = sampling.n_points
    pts = _sample_region(rng, n, d, center, sampling.radius)
    levels = rng.integers(0, m, n)
    res: dict[str, ConditionResult] = {}

    a = _safe_eval("a", coeffs.a, pts, levels)
    asym = np.max(np.abs(a - np.swapaxes(a, 1, 2)), axis=(1, 2))
    k, wp = _worst(asym, pts)
    res["symmetry"] = ConditionResult("symmetry", bool(asym[k] == 0), -float(asym[k]), wp)

    eig = np.linalg.eigvalsh(0.5 * (a + np.swapaxes(a, 1, 2)))
    margin = np.minimum(eig[:, 0] - params.theta1, 1.0 / params.theta1 - eig[:, -1])
    k, wp = _worst(margin, pts, larger_is_worse=False)
    res["ellipticity"] = ConditionResult(
        "ellipticity", bool(margin[k] >= 0), float(margin[k]), wp,
        f"eigenvalues must lie in [{params.theta1}, {1 / params.theta1}]",
    )

    npair = min(sampling.n_holder_pairs, len(pts))
    sep = 10 ** rng.uniform(-3, 0, npair)
    dirs = rng.standard_normal((npair, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    x1 = pts[:npair]
    x2 = x1 + dirs * sep[:, None]
    lv = levels[:npair]
    da = np.max(np.abs(_safe_eval("a", coeffs.a, x1, lv) - _safe_eval("a", coeffs.a, x2, lv)), axis=(1, 2))
    quot = da / sep**params.gamma
    k, wp = _worst(quot, x1)
    emp = float(quot[k])
    if params.holder_c is None:
        res["holder"] = ConditionResult("holder", True, math.nan, wp, f"empirical constant {emp:.4g} (no declared bound)")
    else:
        res["holder"] = ConditionResult("holder", emp <= params.holder_c, params.holder_c - emp, wp,
                                        f"empirical constant {emp:.4g}")

    b1 = _safe_eval("b1", coeffs.b1, pts, levels)
    nb = np.linalg.norm(b1, axis=1)
    k, wp = _worst(nb, pts)
    res["drift_bound"] = ConditionResult("drift_bound", bool(nb[k] <= params.theta2), params.theta2 - float(nb[k]), wp)

    # jump multiplier range and small-jump kernel bound
    zr = 10 ** rng.uniform(-4, 0.5, n)
    zd = rng.standard_normal((n, d))
    zd /= np.linalg.norm(zd, axis=1, keepdims=True)
    z = zd * zr[:, None]
    b2 = _safe_eval("b2", coeffs.b2, pts, z, levels)
    lo_m = b2
    hi_m = params.theta3 - b2
    mar = np.minimum(lo_m, hi_m)
    k, wp = _worst(mar, pts, larger_is_worse=False)
    res["b2_range"] = ConditionResult("b2_range", bool(mar[k] >= 0), float(mar[k]), wp,
                                      f"b2 must lie in [0, {params.theta3}]")
    jv = coeffs.j(z, levels)
    small = zr <= 1.0
    bound = params.c1 * zr ** (-d - params.beta)
    rel = np.where(small, (bound - jv) / bound, np.inf)
    k, _ = _worst(rel, z, larger_is_worse=False)
    res["jump_small_bound"] = ConditionResult(
        "jump_small_bound", bool(rel[k] >= -1e-12), float(rel[k]) if np.isfinite(rel[k]) else math.inf,
        z[k].tolist(), "j(z) <= c1 |z|^{-d-beta} on |z| <= 1 (relative margin)",
    )
    masses = [0.0 if kern is None else kern.second_moment_mass(d) for kern in coeffs.jumps]
    worst_mass = max(masses)
    res["jump_mass"] = ConditionResult("jump_mass", worst_mass < params.theta4, params.theta4 - worst_mass, None,
                                       f"per-level integrals of (1^|z|^2) j: {masses}")

    qm = _safe_eval("Q", coeffs.Q, pts)
    q0 = coeffs.Q0
    off = ~np.eye(m, dtype=bool)
    offv = qm[:, off]
    k = int(np.argmin(offv.min(axis=1)))
    res["q_offdiag_nonneg"] = ConditionResult("q_offdiag_nonneg", bool(offv[k].min() >= 0), float(offv[k].min()),
                                              pts[k].tolist())
    rows = qm.sum(axis=2).max(axis=1)
    k, wp = _worst(rows, pts)
    res["q_row_sums"] = ConditionResult("q_row_sums", bool(rows[k] <= 1e-12), -float(rows[k]), wp)
    lower = (qm - params.c0 * q0[None])[:, off].min(axis=1)
    upper = (q0[None] - qm)[:, off].min(axis=1)
    both = np.minimum(lower, upper)
    k, wp = _worst(both, pts, larger_is_worse=False)
    q0_ok = bool(np.all(q0[off] <= params.theta5)) and bool(np.all(-np.diag(q0) <= params.theta5))
    diag_m = (np.diagonal(qm, axis1=1, axis2=2) - np.diag(q0)[None]).min(axis=1)
    kd = int(np.argmin(diag_m))
    res["q_bounds"] = ConditionResult(
        "q_bounds", bool(both[k] >= -1e-12) and q0_ok, float(both[k]), wp,
        f"c0*q0_ij <= q_ij(x) <= q0_ij <= theta5 (Q0 within theta5: {q0_ok})",
    )
    res["q_diag"] = ConditionResult(
        "q_diag", bool(diag_m[kd] >= -1e-12) and q0_ok, float(diag_m[kd]), pts[kd].tolist(),
        "-q_ii(x) <= -q0_ii <= theta5",
    )
    return ValidationReport(res, {**sampling.to_dict(), "center": list(center)}, seed)


# ---------------------------------------------------------------------------
# drift correction


def _nested_sphere_integral(d, func, rtol):
    """Adaptive integral of a vector function over S^{d-1} in spherical angles (d = 2, 3)."""
    if d == 2:
        def f2(th):
            return func(np.array([[math.cos(th), math.sin(th)]]))[0]

        val, err = integrate.quad_vec(f2, 0.0, 2 * math.pi, epsrel=rtol, points=(0.5 * math.pi, 1.5 * math.pi))
        return val, err
    if d == 3:
        # polar axis along x_1; the azimuthal integrand is periodic, so the
        # trapezoid rule converges spectrally
        phi = 2 * math.pi * np.arange(64) / 64

        def outer(th):
            st, ct = math.sin(th), math.cos(th)
            u = np.column_stack([np.full(64, ct), st * np.cos(phi), st * np.sin(phi)])
            return func(u).mean(axis=0) * (2 * math.pi * st)

        val, err = integrate.quad_vec(outer, 0.0, math.pi, epsrel=rtol, points=(0.5 * math.pi,))
        return val, err
    raise NotImplementedError


def effective_drift(coeffs: CoefficientSet, x, i: int, delta: float, rtol: float = 1e-6) -> np.ndarray:
    """b1(x, i) minus the compensator of the jumps with delta < |z| <= 1.

    Adaptive nested quadrature in radius and angle (d = 2, 3); higher
    dimensions use a product rule checked by resolution doubling.
    """
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    x = np.asarray(x, dtype=float).reshape(1, -1)
    d = coeffs.d
    lev = np.array([i])
    b1 = coeffs.b1(x, lev)[0]
    kern = coeffs.jumps[i]
    if kern is None or delta >= min(1.0, kern.support_radius):
        return b1.copy()
    if coeffs.b2_even and kern.even:
        return b1.copy()
    hi = min(1.0, kern.support_radius)

    def weighted(z):
        return z * (coeffs.b2(np.repeat(x, len(z), 0), z, np.repeat(lev, len(z))) * kern(z))[:, None]

    if d in (2, 3):
        def shell(rho):
            val, _ = _nested_sphere_integral(d, lambda u: weighted(rho * u), rtol)
            return val * rho ** (d - 1)

        # integrate in log-radius to resolve the power-law concentration at delta
        def log_shell(s):
            rho = math.exp(s)
            return shell(rho) * rho

        corr, err = integrate.quad_vec(log_shell, math.log(delta), math.log(hi), epsrel=rtol)
        scale = max(float(np.max(np.abs(corr))), 1e-300)
        if err > 10 * rtol * scale and err > 1e-12:
            raise QuadratureError("effective_drift quadrature did not converge", err)
    else:
        from .quadrature import annulus_rule

        def rule(nr, na):
            z, w = annulus_rule(d, delta, hi, nr, na)
            return w @ weighted(z)

        c1, c2 = rule(32, 12), rule(64, 24)
        err = float(np.max(np.abs(c2 - c1)))
        corr = c2
        if err > 1e3 * rtol * max(float(np.max(np.abs(c2))), 1e-300):
            raise QuadratureError("effective_drift product rule did not converge", err)
    return b1 - corr


# ---------------------------------------------------------------------------
# UJS condition


@dataclass
class UJSReport:
    ratios: np.ndarray
    worst_ratio: float
    worst_triple: tuple | None
    vartheta: float
    passed: bool
    rejected: list

    def to_dict(self) -> dict:
        return {
            "worst_ratio": self.worst_ratio,
            "vartheta": self.vartheta,
            "passed": self.passed,
            "n_triples": int(len(self.ratios)),
            "n_rejected": len(self.rejected),
        }


def sample_ujs_triples(d: int, n: int, seed: int, region: Ball | None = None, zmax: float = 1.0):
    """Random (x, z, r) triples with 0 < r < |z|/2."""
    rng = np.random.default_rng(seed)
    region = region or Ball.unit(d)
    x = _sample_region(rng, n, d, region.c, region.radius)
    zr = 10 ** rng.uniform(-2, math.log10(zmax), n)
    zd = rng.standard_normal((n, d))
    zd /= np.linalg.norm(zd, axis=1, keepdims=True)
    z = zd * zr[:, None]
    r = 0.5 * zr * rng.uniform(0.05, 0.99, n)
    return x, z, r


def check_ujs(
    coeffs: CoefficientSet,
    i: int,
    sampling=1000,
    seed: int = 0,
    vartheta: float = 1.0,
    n_radial: int = 12,
    n_angular: int = 12,
) -> UJSReport:
    """Empirical UJS constant: worst ratio of J(x, x+z) to its ball average.

    The ball average of u -> J^{b2}(u, x+z, i) over B(x, r) uses a polar
    product rule.  Triples violating r < |z|/2 are rejected and listed.
    ``sampling`` is either a triple count (drawn by :func:`sample_ujs_triples`
    with ``seed``) or explicit arrays ``(x, z, r)``.
    """
    if np.isscalar(sampling):
        x, z, r = sample_ujs_triples(coeffs.d, int(sampling), seed)
    else:
        x, z, r = sampling
    x = np.atleast_2d(np.asarray(x, dtype=float))
    z = np.atleast_2d(np.asarray(z, dtype=float))
    r = np.atleast_1d(np.asarray(r, dtype=float))
    d = coeffs.d
    zn = np.linalg.norm(z, axis=1)
    valid = (r > 0) & (r < zn / 2)
    rejected = [(x[k].tolist(), z[k].tolist(), float(r[k])) for k in np.flatnonzero(~valid)]
    offs, w = ball_rule(d, 1.0, n_radial, n_angular)
    w = w / w.sum()
    ratios = np.full(len(x), np.nan)
    for k in np.flatnonzero(valid):
        target = x[k] + z[k]
        u = x[k] + r[k] * offs
        avg = w @ coeffs.jump_kernel_value(u, target[None, :], i)
        point = coeffs.jump_kernel_value(x[k][None], target[None], i)[0]
        if point == 0:
            ratios[k] = 0.0
        elif avg == 0:
            ratios[k] = math.inf
        else:
            ratios[k] = point / avg
    ok = np.isfinite(ratios) | np.isinf(ratios)
    if np.any(valid & ok):
        kk = int(np.nanargmax(np.where(valid, ratios, -np.inf)))
        worst = float(ratios[kk])
        wt = (x[kk].tolist(), z[kk].tolist(), float(r[kk]))
    else:
        worst, wt = math.nan, None
    return UJSReport(ratios, worst, wt, vartheta, bool(worst <= vartheta), rejected)


# ---------------------------------------------------------------------------
# Kato modulus


def kato_modulus(
    q: Callable[[np.ndarray], np.ndarray],
    ball: Ball,
    radii: Sequence[float],
    n_probe: int = 5,
    n_angular: int = 16,
    rtol: float = 1e-8,
) -> list[float]:
    """eta(r) = sup over a probe grid of the g-weighted local integral of |q|.

    Probes form a regular lattice with ``n_probe`` points per axis clipped to
    the ball (the centre is always included).  Radial integrals use adaptive
    quadrature; angular integrals a product rule.
    """
    radii = [float(r) for r in radii]
    if any(r <= 0 for r in radii) or any(b >= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be positive and strictly decreasing")
    d = ball.d
    if d == 2 and radii[0] > 1:
        raise ValueError("for d = 2 the radii must not exceed 1 (g changes sign at |x| = 1)")
    axis = np.linspace(-1, 1, n_probe) * ball.radius * (1 - 1e-9)
    grid = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), -1).reshape(-1, d)
    probes = ball.c + grid[np.linalg.norm(grid, axis=1) < ball.radius]
    probes = np.vstack([ball.c[None], probes])
    dirs, w = sphere_rule(d, n_angular)

    def g_radial(rho):
        return -math.log(rho) if d == 2 else rho ** (2.0 - d)

    out = []
    for rad in radii:
        best = 0.0
        for p in probes:
            def shell(rho, p=p):
                if rho == 0:
                    return 0.0
                vals = np.abs(np.asarray(q(p + rho * dirs), dtype=float))
                if not np.all(np.isfinite(vals)):
                    raise CoefficientError("q", p, f"non-finite value at radius {rho:.3g}")
                return float(w @ vals) * g_radial(rho) * rho ** (d - 1)

            with warnings.catch_warnings():
                # convergence is judged from err below
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                val, err = integrate.quad(shell, 0.0, rad, limit=200, epsrel=rtol, epsabs=0.0)
            if not math.isfinite(val) or err > 1e-3 * max(abs(val), 1e-12):
                raise CoefficientError("q", p, f"local integral not convergent (error {err:.3g})")
            best = max(best, val)
        out.append(best)
    # sup over nested balls is monotone; enforce against quadrature jitter
    for k in range(1, len(out)):
        out[k] = min(out[k], out[k - 1])
    return out
