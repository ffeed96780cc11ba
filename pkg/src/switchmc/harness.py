"""Executable checks: representation identities, Green sandwiches, exit laws,
scaling, Hoelder slopes and Harnack ratio reports.

Every report carries a provenance block (seed, n, controls) from which it can
be replayed, and its pass/fail flags are computed only from the declared
tolerances.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .analytics import Ball, bin_average, brownian_exit_time_mean, brownian_green, green_ball, three_g_sweep, uniform_in_ball
from .combinatorics import DivergenceError, SwitchGraph, h_series, reachability
from .engine import BOUNDARY, HORIZON, SWITCH, Integrand, JumpSampler, SimControls, run_paths
from .estimators import (
    DEFAULT_SUB_BATCHES,
    Lattice,
    MCEstimate,
    _batch_counts,
    _boundary_values,
    KillingRate,
    batch_means,
    estimate_coupling_operator,
    estimate_gq_norm,
    estimate_occupation_green,
    estimate_preswitch_functional,
    estimate_resolvent,
    neumann_partial_sum,
)
from .operator_model import CoefficientSet
from .presets import scaled_preset
from .quadrature import gauss_interval, ray_exit_distance, sphere_rule
from .rng import derive_seed


# ---------------------------------------------------------------------------
# report container and boundary data


@dataclass
class ProbeReport:
    """Outcome of one harness experiment.

    ``rows`` hold dicts with keys radius, statistic, value, stderr, pass;
    ``details`` holds experiment-specific numbers that carry no verdict;
    ``grids`` hold tables written as CSV and kept out of the JSON body.
    """

    scenario_id: str
    name: str
    radii: list
    rows: list
    passed: bool
    tolerances: dict
    provenance: dict
    details: dict = field(default_factory=dict)
    grids: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "name": self.name,
            "radii": list(self.radii),
            "rows": [dict(r) for r in self.rows],
            "passed": self.passed,
            "tolerances": dict(self.tolerances),
            "provenance": self.provenance,
            "details": self.details,
        }

    def csv_rows(self) -> list[tuple]:
        return [(r["radius"], r["statistic"], r["value"], r["stderr"], r["pass"]) for r in self.rows]


def _row(radius, statistic, value, stderr=None, passed=None) -> dict:
    return {
        "radius": None if radius is None else float(radius),
        "statistic": statistic,
        "value": _num(value),
        "stderr": _num(stderr),
        "pass": passed,
    }


def _num(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def _provenance(seed, n, controls, coeffs, **extra) -> dict:
    out = {
        "seed": int(seed),
        "n": int(n),
        "controls": controls.to_dict() if isinstance(controls, SimControls) else controls,
        "coefficients": coeffs.describe(),
    }
    out.update(extra)
    return out


@dataclass(frozen=True)
class LinearBoundaryData:
    """phi(x, k) = offset + slope (x_axis - c_axis) / r on the listed levels, zero elsewhere.

    ``bind(ball)`` fixes the centre and radius; unbound data use the unit ball.
    """

    offset: float = 1.0
    slope: float = 1.0
    axis: int = 0
    levels: Optional[tuple] = None
    center: Optional[tuple] = None
    radius: float = 1.0

    def bind(self, ball: Ball) -> "LinearBoundaryData":
        return dataclasses.replace(self, center=tuple(float(v) for v in ball.c), radius=float(ball.radius))

    def __call__(self, x, lev):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        c = 0.0 if self.center is None else self.center[self.axis]
        val = self.offset + self.slope * (x[:, self.axis] - c) / self.radius
        if self.levels is not None:
            val = np.where(np.isin(np.asarray(lev), self.levels), val, 0.0)
        return val


@dataclass(frozen=True)
class HalfSpaceIndicator:
    """phi(x, k) = 1 where x_axis > c_axis (bounded, discontinuous data)."""

    axis: int = 0
    center: Optional[tuple] = None

    def bind(self, ball: Ball) -> "HalfSpaceIndicator":
        return dataclasses.replace(self, center=tuple(float(v) for v in ball.c))

    def __call__(self, x, lev):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        c = 0.0 if self.center is None else self.center[self.axis]
        return (x[:, self.axis] > c).astype(float)


@dataclass(frozen=True)
class ConstantData:
    value: float = 1.0

    def __call__(self, x, lev):
        return np.full(len(np.atleast_2d(x)), float(self.value))


def _bind(phi, ball: Ball):
    return phi.bind(ball) if hasattr(phi, "bind") else phi


def _group_stats(values, groups, n_groups):
    """Per-group sample mean and variance of the mean."""
    cnt = np.bincount(groups, minlength=n_groups).astype(float)
    s1 = np.bincount(groups, values, minlength=n_groups)
    s2 = np.bincount(groups, values * values, minlength=n_groups)
    mean = s1 / cnt
    var = np.maximum(s2 / cnt - mean * mean, 0.0) * cnt / np.maximum(cnt - 1, 1)
    return mean, var / cnt


# ---------------------------------------------------------------------------
# representation identity


def representation_residual(
    coeffs: CoefficientSet,
    ball: Ball,
    start,
    phi: Callable,
    levels: Optional[Sequence[int]] = None,
    n: int = 100_000,
    controls: Optional[SimControls] = None,
    seed: int = 0,
    nodes_per_radius: int = 2,
    n_lattice: Optional[int] = None,
    n_sub: int = DEFAULT_SUB_BATCHES,
    workers: int = 1,
) -> dict:
    """Residual u(x, i) - h(x, i) - sum_j E int_0^{tau ^ tau_1} q_ij(X_s) u(X_s, j) ds per level.

    u is estimated by the switched pipeline at ``start`` and on the interior
    lattice nodes (multilinear interpolation, phi on exterior nodes); h and
    the coupling integral come from the killed pipeline.  Both start
    pipelines share one seed, so without switching they coincide path by
    path; once a block sees a switch its streams drift apart, so the two
    batch-means errors are combined as for independent estimates, plus the
    propagated lattice error.  ``n_lattice`` defaults to n / 10 since the
    lattice error enters only through the coupling mass.

    Returns ``{level: MCEstimate}``.
    """
    m = coeffs.m
    levels = list(range(m)) if levels is None else [int(k) for k in levels]
    controls = resolve_controls(ball, controls)
    phi = _bind(phi, ball)
    start = np.asarray(start, dtype=float)
    lattice = Lattice(ball, nodes_per_radius)
    inner = lattice.nodes[lattice.interior]
    node_starts = [(p, k) for p in inner for k in range(m)]
    nl = n_lattice or max(n // 10, 1000)
    lb = run_paths(coeffs, ball, node_starts, nl, controls, derive_seed(seed, "lattice"), mode="switched",
                   workers=workers)
    u_nodes, u_var = _group_stats(_boundary_values(lb, phi, m), lb.groups, len(node_starts))
    u_full = np.zeros((lattice.size, m))
    var_full = np.zeros((lattice.size, m))
    ext = np.flatnonzero(~lattice.interior)
    for k in range(m):
        u_full[ext, k] = phi(lattice.nodes[ext], np.full(ext.size, k))
    u_full[lattice.interior] = u_nodes.reshape(-1, m)
    var_full[lattice.interior] = u_var.reshape(-1, m)
    u_vec = u_full.reshape(-1)
    var_vec = var_full.reshape(-1)

    out = {}
    counts = _batch_counts(n, n_sub)
    sub = np.arange(n) % n_sub
    for i in levels:
        s = derive_seed(seed, "start", i)
        op = estimate_coupling_operator(coeffs, lattice, [(start, i)], phi, n, controls, s, n_sub, workers)
        sb = run_paths(coeffs, ball, [(start, i)], n, controls, s, mode="switched", workers=workers)
        u_b = np.bincount(sub, _boundary_values(sb, phi, m), minlength=n_sub) / counts
        killed_b = op.h_batches[:, 0] + op.batches[:, 0, :] @ u_vec
        mean = float(u_b @ counts / n - op.h[0] - op.matrix[0] @ u_vec)
        if np.array_equal(u_b, killed_b):
            se_u = se_k = 0.0
        else:
            se_u = float(batch_means(u_b)[1])
            se_k = float(batch_means(killed_b)[1])
        prop = float(np.sum(op.matrix[0] ** 2 * var_vec))
        est = MCEstimate(mean, math.sqrt(se_u**2 + se_k**2 + prop), n, sb.n_censored + op.n_censored)
        est._check_censoring()
        if lb.n_censored / max(lb.n, 1) > 0.01:
            est.flags.append("lattice pipeline censored above 1%")
        out[i] = est
    return out


# ---------------------------------------------------------------------------
# Levy-system exit identity


class _LatticeField:
    """Picklable integrand: multilinear interpolation of node values."""

    def __init__(self, lattice: Lattice, values):
        self.lattice = lattice
        self.values = np.asarray(values, dtype=float)

    def __call__(self, x, lev):
        return self.lattice.interpolate(self.values, x)


def exterior_jump_intensity(
    coeffs: CoefficientSet,
    i: int,
    ball: Ball,
    points,
    h: Callable,
    delta: float,
    n_dirs: int = 256,
    n_radial: int = 32,
) -> np.ndarray:
    """I(x) = int_{|z| > delta, x + z outside B} J(x, x + z, i) h(x + z) dz by ray quadrature.

    Each ray starts at max(exit distance, delta) and runs to the kernel
    support radius, with Gauss-Legendre nodes in log-radius.
    """
    kern = coeffs.jumps[i]
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if kern is None:
        return np.zeros(len(pts))
    hi = kern.support_radius
    if not math.isfinite(hi):
        raise ValueError("exterior intensity needs a kernel with bounded support")
    d = coeffs.d
    dirs, wd = sphere_rule(d, n_dirs)
    s, ws = gauss_interval(n_radial)
    out = np.zeros(len(pts))
    for a, x in enumerate(pts):
        rho0 = np.maximum(ray_exit_distance(x - ball.c, dirs, ball.radius), delta)
        ok = rho0 < hi
        if not np.any(ok):
            continue
        u = dirs[ok]
        llo = np.log(rho0[ok])
        span = math.log(hi) - llo
        rho = np.exp(llo[:, None] + span[:, None] * s[None, :])  # (dirs, radial)
        y = x + rho[..., None] * u[:, None, :]
        yy = y.reshape(-1, d)
        kv = coeffs.jump_kernel_value(np.broadcast_to(x, yy.shape), yy, np.full(len(yy), i))
        hv = np.asarray(h(yy, np.full(len(yy), i)), dtype=float)
        f = (kv * hv).reshape(rho.shape) * rho**d
        out[a] = float(np.sum(wd[ok] * span * (f @ ws)))
    return out


@dataclass
class LevyExitCheck:
    """Paired per-path comparison of jump exits against the occupation integral."""

    discrepancy: MCEstimate
    lhs: MCEstimate
    rhs: MCEstimate
    step_factor: float
    warnings: list

    def to_dict(self) -> dict:
        return {"discrepancy": self.discrepancy.to_dict(), "lhs": self.lhs.to_dict(), "rhs": self.rhs.to_dict(),
                "step_factor": self.step_factor, "warnings": list(self.warnings)}


def levy_exit_check(
    coeffs: CoefficientSet,
    i: int,
    ball: Ball,
    start,
    h: Callable,
    n: int = 100_000,
    controls: Optional[SimControls] = None,
    seed: int = 0,
    nodes_per_radius: int = 24,
    n_dirs: int = 256,
    n_radial: int = 32,
    workers: int = 1,
) -> LevyExitCheck:
    """E[h(X_tau); exit by a jump before the first switch] against
    E int_0^{tau ^ tau_1} I(X_s) ds, I the exterior jump intensity weighted by h.

    The simulated law only contains jumps above ``controls.delta`` and fires
    at most one jump per step with probability 1 - exp(-Lambda dt); the
    occupation side is restricted and rescaled accordingly, which makes the
    identity exact for the discrete scheme.
    """
    controls = resolve_controls(ball, controls)
    h = _bind(h, ball)
    start = np.asarray(start, dtype=float)
    warnings = []
    if not coeffs.has_jumps or coeffs.jumps[i] is None:
        zero = MCEstimate(0.0, 0.0, n)
        return LevyExitCheck(zero, zero, MCEstimate(0.0, 0.0, n), 1.0, ["no jumps: both sides vanish"])
    lattice = Lattice(ball, nodes_per_radius)
    # exterior nodes take the value at their projection just inside the sphere
    off = lattice.nodes - ball.c
    rr = np.linalg.norm(off, axis=1)
    lim = ball.radius * (1 - 1e-9)
    proj = ball.c + off * np.minimum(1.0, lim / np.maximum(rr, 1e-300))[:, None]
    vals = exterior_jump_intensity(coeffs, i, ball, proj, h, controls.delta, n_dirs, n_radial)
    sampler = JumpSampler(coeffs, controls.delta, controls.theta3)
    lam = float(sampler.rates[i])
    dt = controls.dt
    factor = -math.expm1(-lam * dt) / (lam * dt) if lam * dt > 0 else 1.0
    batch = run_paths(coeffs, ball, [(start, i)], n, controls, seed, mode="killed",
                      integrands=[Integrand(_LatticeField(lattice, vals))], workers=workers)
    lhs_v = np.zeros(n)
    hit = np.flatnonzero((batch.reason == BOUNDARY) & batch.jump_exit)
    if hit.size:
        lhs_v[hit] = np.asarray(h(batch.exit_x[hit], np.full(hit.size, i)), dtype=float)
    rhs_v = factor * batch.integrals[:, 0]
    if batch.n_censored / n > 0.01:
        warnings.append("coverage: more than 1% of paths censored at the horizon")
    return LevyExitCheck(
        MCEstimate.from_samples(lhs_v - rhs_v, batch.n_censored),
        MCEstimate.from_samples(lhs_v, batch.n_censored),
        MCEstimate.from_samples(rhs_v, batch.n_censored),
        factor,
        warnings,
    )


# ---------------------------------------------------------------------------
# exit moments


def resolve_controls(ball: Ball, controls=None) -> SimControls:
    """Controls for one ball: a SimControls is used as is, a dict of fields
    (or None) is completed with the per-ball default step."""
    if isinstance(controls, SimControls):
        return controls
    return SimControls.for_ball(ball, **(controls or {}))


_controls_for = resolve_controls


def exit_moment_report(
    coeffs: CoefficientSet,
    radii: Sequence[float],
    level: int = 0,
    center=None,
    start_fractions: Sequence[float] = (0.0,),
    n: int = 100_000,
    controls: Optional[SimControls] = None,
    seed: int = 0,
    tolerances: Optional[dict] = None,
    oracle_c: Optional[float] = None,
    scenario_id: str = "",
    workers: int = 1,
) -> ProbeReport:
    """Fit E[tau_B ^ tau_1] = c r^2 through the origin over a radius sweep.

    Starts sit at ``center + f r e_1`` for each fraction f; the fit uses the
    first fraction.  Reports the empirical c2 = min E/r^2, c1 = max E/r^2,
    R^2 of the fit and E(r/2)/E(r) for radius pairs present in the sweep.
    With ``oracle_c`` the fitted constant is compared against it.

    Tolerances: ``r2_min`` (0.99), ``c_rel`` (0.05, oracle only),
    ``oracle_z`` (3.0, oracle only: per-radius z-score against oracle_c r^2).
    """
    tol = {"r2_min": 0.99, "c_rel": 0.05, "oracle_z": 3.0, **(tolerances or {})}
    radii = [float(r) for r in radii]
    d = coeffs.d
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    rows = []
    means = {}
    ctl_used = {}
    for a, r in enumerate(radii):
        ball = Ball(tuple(center), r)
        ctl = _controls_for(ball, controls)
        ctl_used[str(r)] = ctl.to_dict()
        for b, f in enumerate(start_fractions):
            x0 = center.copy()
            x0[0] += f * r
            batch = run_paths(coeffs, ball, [(x0, level)], n, ctl, derive_seed(seed, a, b), mode="killed",
                              workers=workers)
            est = MCEstimate.from_samples(batch.exit_time, batch.n_censored)
            means[(r, f)] = est
            rows.append(_row(r, f"exit_time[f={f:g}]", est.mean, est.stderr, None if not est.flags else False))
            if oracle_c is not None and f == 0:
                z = est.z_score(oracle_c * r * r)
                rows.append(_row(r, "oracle_z", z, None, bool(abs(z) <= tol["oracle_z"])))
    f0 = start_fractions[0]
    r = np.array(radii)
    e = np.array([means[(x, f0)].mean for x in radii])
    se = np.array([means[(x, f0)].stderr for x in radii])
    c_hat = float(np.sum(e * r**2) / np.sum(r**4))
    c_se = float(np.sqrt(np.sum((se * r**2) ** 2)) / np.sum(r**4))
    ss_res = float(np.sum((e - c_hat * r**2) ** 2))
    ss_tot = float(np.sum((e - e.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    rows.append(_row(None, "fit_c", c_hat, c_se, None))
    rows.append(_row(None, "r_squared", r2, None, bool(r2 >= tol["r2_min"])))
    rows.append(_row(None, "c2_hat", float(np.min(e / r**2)), None, None))
    rows.append(_row(None, "c1_hat", float(np.max(e / r**2)), None, None))
    if oracle_c is not None:
        rel = abs(c_hat / oracle_c - 1)
        rows.append(_row(None, "fit_c_rel_error", rel, c_se / oracle_c, bool(rel <= tol["c_rel"])))
    for x in radii:
        for y in radii:
            if abs(y - 2 * x) < 1e-12 * y:
                a, b = means[(x, f0)], means[(y, f0)]
                ratio = a.mean / b.mean
                rse = ratio * math.hypot(a.stderr / a.mean, b.stderr / b.mean)
                rows.append(_row(y, "halving_ratio", ratio, rse, None))
    passed = all(row["pass"] is not False for row in rows)
    return ProbeReport(scenario_id, "exit_moment", radii, rows, passed, tol,
                       _provenance(seed, n, controls or "per-radius default", coeffs, controls_used=ctl_used,
                                   level=level, start_fractions=list(start_fractions)))


# ---------------------------------------------------------------------------
# Green sandwich


class _BrownianGreenFrom:
    """y -> Green function of (1/2) Laplacian on the ball with pole x."""

    def __init__(self, ball: Ball, x):
        self.ball = ball
        self.x = np.asarray(x, dtype=float)

    def __call__(self, y):
        return brownian_green(self.ball.d, self.ball, np.broadcast_to(self.x, y.shape), y)


def grid_table(grid) -> list[tuple]:
    """Rows (bin_index, x..., value, stderr) of an occupancy grid, bins in C order."""
    centers = grid.bin_centers()
    vals = grid.values.reshape(-1)
    ses = grid.stderr.reshape(-1)
    return [(k, *centers[k].tolist(), float(vals[k]), float(ses[k])) for k in range(len(vals))]


def sandwich_bins(bins_per_radius: int, d: int, start_offset, max_pairs: int) -> list[tuple]:
    """Bins (as index tuples) at least two bins away from the start bin and one
    full bin inside the sphere, in a fixed order (nearest to the start first)."""
    nb = 2 * bins_per_radius
    w = 1.0 / bins_per_radius
    grids = np.meshgrid(*([np.arange(nb)] * d), indexing="ij")
    idx = np.stack(grids, -1).reshape(-1, d)
    lo = -1.0 + idx * w
    corners = lo[:, None, :] + w * np.array(np.meshgrid(*([[0, 1]] * d), indexing="ij")).reshape(d, -1).T[None]
    far = np.linalg.norm(corners, axis=2).max(axis=1) <= 1.0 - w
    s = np.asarray(start_offset, dtype=float)
    sbin = np.floor((s + 1.0) / w).astype(int)
    cheb = np.max(np.abs(idx - sbin), axis=1)
    ok = far & (cheb >= 2)
    centers = lo + 0.5 * w
    dist = np.linalg.norm(centers - s, axis=1)
    order = np.lexsort((np.arange(len(idx)), np.round(dist, 12)))
    chosen = [tuple(int(v) for v in idx[k]) for k in order if ok[k]]
    return chosen[:max_pairs]


def green_sandwich_report(
    coeffs: CoefficientSet,
    i: int,
    radii: Sequence[float],
    center=None,
    start_fraction: float = 0.0,
    bins_per_radius: int = 8,
    max_pairs: int = 14,
    n: int = 1_000_000,
    controls: Optional[SimControls] = None,
    seed: int = 0,
    tolerances: Optional[dict] = None,
    expect_unity: bool = False,
    scenario_id: str = "",
    n_sub: int = DEFAULT_SUB_BATCHES,
    workers: int = 1,
) -> ProbeReport:
    """Occupation density of the level-i subprocess over the (1/2)-Laplacian Green function.

    Pairs are (start, bin) with bins from :func:`sandwich_bins`, placed at
    the same relative positions for every radius.  Reports the min/max
    ratio per radius and the relative drift of both across radii.

    Tolerances: ``unity_z`` (3.0, with ``expect_unity``: every ratio within
    that many stderr of 1), ``stability`` (0.25: relative change of the
    interval endpoints across radii).
    """
    tol = {"unity_z": 3.0, "stability": 0.25, **(tolerances or {})}
    radii = [float(r) for r in radii]
    d = coeffs.d
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    rel_start = np.zeros(d)
    rel_start[0] = start_fraction
    bins = sandwich_bins(bins_per_radius, d, rel_start, max_pairs)
    rows = []
    intervals = []
    pair_details = {}
    grids = {}
    ctl_used = {}
    for a, r in enumerate(radii):
        ball = Ball(tuple(center), r)
        ctl = _controls_for(ball, controls)
        ctl_used[str(r)] = ctl.to_dict()
        x0 = center + r * rel_start
        grid = estimate_occupation_green(coeffs, i, ball, x0, bins_per_radius, n, ctl, derive_seed(seed, a),
                                         n_sub, workers)
        grids[str(r)] = grid_table(grid)
        lo = np.array([grid.bin_lower(np.array(b))[0] for b in bins])
        oracle = bin_average(_BrownianGreenFrom(ball, x0), lo, grid.width)
        vals = np.array([grid.values[b] for b in bins])
        ses = np.array([grid.stderr[b] for b in bins])
        keep = vals > 0
        excluded = int(np.sum(~keep))
        ratio = vals[keep] / oracle[keep]
        rse = ses[keep] / oracle[keep]
        if ratio.size == 0:
            rows.append(_row(r, "pairs_used", 0, None, False))
            intervals.append((math.nan, math.nan))
            continue
        k_lo, k_hi = int(np.argmin(ratio)), int(np.argmax(ratio))
        rows.append(_row(r, "ratio_min", ratio[k_lo], rse[k_lo], None))
        rows.append(_row(r, "ratio_max", ratio[k_hi], rse[k_hi], None))
        rows.append(_row(r, "pairs_used", ratio.size, None, None))
        rows.append(_row(r, "pairs_excluded_empty", excluded, None, None))
        if expect_unity:
            z = (ratio - 1) / rse
            rows.append(_row(r, "max_abs_z_vs_1", float(np.max(np.abs(z))), None,
                             bool(np.max(np.abs(z)) <= tol["unity_z"])))
        intervals.append((float(ratio[k_lo]), float(ratio[k_hi])))
        pair_details[str(r)] = {
            "bins": [list(b) for b, k in zip(bins, keep) if k],
            "ratio": ratio.tolist(),
            "stderr": rse.tolist(),
            "grid_warnings": list(grid.warnings),
            "n_censored": grid.n_censored,
        }
    if len(intervals) >= 2:
        lows = [p[0] for p in intervals]
        highs = [p[1] for p in intervals]
        drift_lo = (max(lows) - min(lows)) / max(lows)
        drift_hi = (max(highs) - min(highs)) / max(highs)
        rows.append(_row(None, "interval_drift_low", drift_lo, None, bool(drift_lo <= tol["stability"])))
        rows.append(_row(None, "interval_drift_high", drift_hi, None, bool(drift_hi <= tol["stability"])))
    passed = all(row["pass"] is not False for row in rows)
    return ProbeReport(scenario_id, "green_sandwich", radii, rows, passed, tol,
                       _provenance(seed, n, controls or "per-radius default", coeffs, controls_used=ctl_used,
                                   level=i, bins_per_radius=bins_per_radius, n_sub=n_sub),
                       {"pairs": pair_details}, grids)


# ---------------------------------------------------------------------------
# Harnack ratios


def harnack_probes(center, radius: float, rho: float = 0.125) -> np.ndarray:
    """Centre plus the 2d points at distance rho r along the coordinate axes."""
    center = np.asarray(center, dtype=float)
    d = len(center)
    pts = [center]
    for k in range(d):
        for s in (1.0, -1.0):
            p = center.copy()
            p[k] += s * rho * radius
            pts.append(p)
    return np.array(pts)


def _ratio_se(a, sa, b, sb):
    q = a / b
    return q, abs(q) * math.hypot(sa / a, sb / b)


def harnack_report(
    coeffs: CoefficientSet,
    radii: Sequence[float],
    phi: Callable,
    center=None,
    rho: float = 0.125,
    n: int = 100_000,
    controls: Optional[SimControls] = None,
    seed: int = 0,
    tolerances: Optional[dict] = None,
    scenario_id: str = "",
    workers: int = 1,
) -> ProbeReport:
    """Harnack ratios of u(x, k) = E[phi(X_tau, Lambda_tau)] on probes in B(c, rho r).

    One switched pipeline per (probe, level) gives u and, through the
    inner-ball flag, h(y, k) = E[u(X_sigma, k); sigma < tau_1] with sigma the
    exit time of B(c, r/2).

    Statistics per radius: per-level R_k = max/min of u over the probes, the
    centre-normalized ratio max u / u(c), the weighted cross-level ratios
    u(x, k) / (h(y, k) + sum_{l in E(k)} r^{m_kl} h(y, l)) in same-point and
    cross-point form (max and min), and for strictly irreducible Q the
    full-rank statistic r^2 max_{k != l} u(x, k) / u(y, l).  Probes with u
    below ``noise_z`` stderr are excluded and counted.

    Tolerances: ``bound`` (None: if set, R_k <= bound + slack_z stderr),
    ``slack_z`` (3.0), ``stability_factor`` (2.0: max/min of R_k and of the
    full-rank statistic across radii), ``noise_z`` (5.0).
    """
    tol = {"bound": None, "slack_z": 3.0, "stability_factor": 2.0, "noise_z": 5.0, **(tolerances or {})}
    radii = [float(r) for r in radii]
    d, m = coeffs.d, coeffs.m
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    graph = SwitchGraph.from_q0(coeffs.Q0)
    reach = reachability(graph)
    strict = m > 1 and graph.is_strictly_irreducible()
    rows = []
    per_radius = {}
    track = {}
    for a, r in enumerate(radii):
        ball = Ball(tuple(center), r)
        ctl = _controls_for(ball, controls)
        ph = _bind(phi, ball)
        probes = harnack_probes(center, r, rho)
        starts = [(p, k) for p in probes for k in range(m)]
        batch = run_paths(coeffs, ball, starts, n, ctl, derive_seed(seed, a), mode="switched",
                          inner_radius=0.5 * r, workers=workers)
        bv = _boundary_values(batch, ph, m)
        u, uv = _group_stats(bv, batch.groups, len(starts))
        hh, hv = _group_stats(bv * batch.inner_exit_first, batch.groups, len(starts))
        u, use = u.reshape(len(probes), m), np.sqrt(uv).reshape(len(probes), m)
        hh, hse = hh.reshape(len(probes), m), np.sqrt(hv).reshape(len(probes), m)
        valid = u > tol["noise_z"] * np.maximum(use, 1e-300)
        rows.append(_row(r, "probes_excluded", int(np.sum(~valid)), None, None))
        info = {"u": u.tolist(), "u_stderr": use.tolist(), "h": hh.tolist(), "h_stderr": hse.tolist(),
                "probes": probes.tolist(), "censored": batch.n_censored, "controls": ctl.to_dict()}
        for k in range(m):
            ok = np.flatnonzero(valid[:, k])
            if ok.size < 2:
                continue
            jmax, jmin = ok[np.argmax(u[ok, k])], ok[np.argmin(u[ok, k])]
            R, Rse = _ratio_se(u[jmax, k], use[jmax, k], u[jmin, k], use[jmin, k])
            verdict = None
            if tol["bound"] is not None:
                verdict = bool(R <= tol["bound"] + tol["slack_z"] * Rse)
            if not math.isfinite(R):
                verdict = False
            rows.append(_row(r, f"R_{k}", R, Rse, verdict))
            track.setdefault(f"R_{k}", []).append(R)
            if valid[0, k]:
                C, Cse = _ratio_se(u[jmax, k], use[jmax, k], u[0, k], use[0, k])
                rows.append(_row(r, f"center_ratio_{k}", C, Cse, None))
            # weighted cross-level statistics
            W = hh[:, k].copy()
            for l in reach.E[k]:
                W = W + r ** reach.steps[k, l] * hh[:, l]
            good = ok[W[ok] > 0]
            if good.size:
                same = u[good, k] / W[good]
                rows.append(_row(r, f"weighted_same_point_max_{k}", float(np.max(same)), None, None))
                rows.append(_row(r, f"weighted_same_point_min_{k}", float(np.min(same)), None, None))
                rows.append(_row(r, f"weighted_cross_point_max_{k}", float(np.max(u[good, k]) / np.min(W[good])),
                                 None, None))
                rows.append(_row(r, f"weighted_cross_point_min_{k}", float(np.min(u[good, k]) / np.max(W[good])),
                                 None, None))
        if strict:
            best = None
            for k in range(m):
                for l in range(m):
                    if k == l:
                        continue
                    ik = np.flatnonzero(valid[:, k])
                    il = np.flatnonzero(valid[:, l])
                    if ik.size == 0 or il.size == 0:
                        continue
                    jx, jy = ik[np.argmax(u[ik, k])], il[np.argmin(u[il, l])]
                    F, Fse = _ratio_se(u[jx, k], use[jx, k], u[jy, l], use[jy, l])
                    if best is None or F > best[0]:
                        best = (F, Fse)
            if best is not None:
                rows.append(_row(r, "full_rank", r * r * best[0], r * r * best[1], None))
                track.setdefault("full_rank", []).append(r * r * best[0])
        per_radius[str(r)] = info
    if len(radii) >= 2:
        for key, vals in sorted(track.items()):
            if len(vals) == len(radii):
                fac = max(vals) / min(vals)
                rows.append(_row(None, f"stability_{key}", fac, None,
                                 bool(math.isfinite(fac) and fac <= tol["stability_factor"])))
    passed = all(row["pass"] is not False for row in rows)
    return ProbeReport(scenario_id, "harnack", radii, rows, passed, tol,
                       _provenance(seed, n, controls or "per-radius default", coeffs, rho=rho,
                                   strictly_irreducible=bool(strict),
                                   reach_steps=[[None if not math.isfinite(v) else int(v) for v in row]
                                                for row in reach.steps]),
                       {"per_radius": per_radius})


# ---------------------------------------------------------------------------
# Hoelder slope


def holder_report(
    coeffs: CoefficientSet,
    ball: Ball,
    phi: Callable,
    separations: Optional[Sequence[float]] = None,
    n: int = 100_000,
    controls: Optional[SimControls] = None,
    seed: int = 0,
    tolerances: Optional[dict] = None,
    scenario_id: str = "",
    workers: int = 1,
) -> ProbeReport:
    """Regress log |u(x) - u(y)| on log |x - y| over symmetric pairs inside B(c, r/2).

    Pair s is x = c - (s/2) e_1, y = c + (s/2) e_1; every point uses an
    independent stream.  |.| is the Euclidean norm over levels.  Pairs whose
    difference exceeds ``signif_z`` combined stderr enter the fit.

    Tolerances: ``slope_min`` (0.0, strict), ``slope_max`` (None),
    ``min_pairs`` (3), ``signif_z`` (5.0).
    """
    tol = {"slope_min": 0.0, "slope_max": None, "min_pairs": 3, "signif_z": 5.0, **(tolerances or {})}
    r = ball.radius
    if separations is None:
        separations = np.geomspace(r / 32, r / 2 * 0.999, 8)
    seps = np.asarray(separations, dtype=float)
    if np.any(seps <= 0):
        raise ValueError("pairs with x = y are excluded: separations must be positive")
    if np.any(seps >= r):
        raise ValueError("pairs must lie inside B(c, r/2)")
    ctl = _controls_for(ball, controls)
    ph = _bind(phi, ball)
    m = coeffs.m
    e1 = np.zeros(ball.d)
    e1[0] = 1.0
    pts = []
    for s in seps:
        pts.append(ball.c - 0.5 * s * e1)
        pts.append(ball.c + 0.5 * s * e1)
    starts = [(p, k) for p in pts for k in range(m)]
    batch = run_paths(coeffs, ball, starts, n, ctl, seed, mode="switched", workers=workers)
    u, uv = _group_stats(_boundary_values(batch, ph, m), batch.groups, len(starts))
    u = u.reshape(len(pts), m)
    uv = uv.reshape(len(pts), m)
    rows = []
    xs, ys = [], []
    for a, s in enumerate(seps):
        diff = u[2 * a] - u[2 * a + 1]
        var = uv[2 * a] + uv[2 * a + 1]
        norm = float(np.linalg.norm(diff))
        se = float(math.sqrt(np.sum(diff**2 * var)) / norm) if norm > 0 else float(math.sqrt(np.sum(var)))
        sig = norm > tol["signif_z"] * se
        rows.append(_row(r, f"diff[s={s:.6g}]", norm, se, None))
        if sig:
            xs.append(math.log(s))
            ys.append(math.log(norm))
    if len(xs) < tol["min_pairs"]:
        rows.append(_row(r, "significant_pairs", len(xs), None, False))
        return ProbeReport(scenario_id, "holder", [r], rows, False, tol,
                           _provenance(seed, n, ctl, coeffs), {"inconclusive": True})
    A = np.vstack([np.array(xs), np.ones(len(xs))]).T
    coef, res, _, _ = np.linalg.lstsq(A, np.array(ys), rcond=None)
    slope, icpt = float(coef[0]), float(coef[1])
    resid = np.array(ys) - A @ coef
    dof = max(len(xs) - 2, 1)
    s2 = float(resid @ resid) / dof
    slope_se = math.sqrt(s2 / float(np.sum((np.array(xs) - np.mean(xs)) ** 2)))
    ok = slope > tol["slope_min"]
    if tol["slope_max"] is not None:
        ok = ok and slope <= tol["slope_max"]
    rows.append(_row(r, "significant_pairs", len(xs), None, None))
    rows.append(_row(r, "slope", slope, slope_se, bool(ok)))
    rows.append(_row(r, "intercept", icpt, None, None))
    return ProbeReport(scenario_id, "holder", [r], rows, bool(ok), tol, _provenance(seed, n, ctl, coeffs),
                       {"inconclusive": False})


# ---------------------------------------------------------------------------
# scaling


def _pipeline_stats(batch, scale_t: float, scale_x: float):
    t = batch.exit_time / scale_t
    sw = (batch.reason == SWITCH).astype(float)
    hit = batch.reason == BOUNDARY
    xs = batch.exit_x[hit] / scale_x
    out = {"exit_time": MCEstimate.from_samples(t, batch.n_censored),
           "switch_before_exit": MCEstimate.from_samples(sw)}
    for k in range(xs.shape[1]):
        out[f"exit_x{k}"] = MCEstimate.from_samples(xs[:, k]) if len(xs) > 1 else MCEstimate(0.0, 0.0, 0)
    return out


def scaling_report(
    coeffs: CoefficientSet,
    lam: float,
    ball: Ball,
    start,
    level: int = 0,
    n: int = 100_000,
    controls: Optional[SimControls] = None,
    seed: int = 0,
    tolerances: Optional[dict] = None,
    scenario_id: str = "",
    workers: int = 1,
) -> ProbeReport:
    """Process from lam B against the rescaled generator from B.

    Pipeline A runs the original coefficients in lam B from lam x with step
    lam^2 dt and jump cutoff lam delta; pipeline B runs the scaled catalog
    coefficients in B from x.  Exit time (A divided by lam^2), switch-before-
    exit probability and mean exit position (A divided by lam) are compared
    by z-score on independent streams.

    Tolerances: ``z_max`` (3.0).
    """
    tol = {"z_max": 3.0, **(tolerances or {})}
    scaled = scaled_preset(coeffs, lam)  # refuses presets without a scaled form
    ctl_b = _controls_for(ball, controls)
    ctl_a = dataclasses.replace(ctl_b, dt=lam * lam * ctl_b.dt, delta=lam * ctl_b.delta,
                                max_time=None if ctl_b.max_time is None else lam * lam * ctl_b.max_time)
    ball_a = ball.scaled(lam)
    x = np.asarray(start, dtype=float)
    ba = run_paths(coeffs, ball_a, [(lam * x, level)], n, ctl_a, derive_seed(seed, "A"), mode="killed",
                   workers=workers)
    bb = run_paths(scaled, ball, [(x, level)], n, ctl_b, derive_seed(seed, "B"), mode="killed", workers=workers)
    sa = _pipeline_stats(ba, lam * lam, lam)
    sb = _pipeline_stats(bb, 1.0, 1.0)
    rows = []
    zmax = 0.0
    for key in sa:
        a, b = sa[key], sb[key]
        se = math.hypot(a.stderr, b.stderr)
        diff = a.mean - b.mean
        z = diff / se if se > 0 else (0.0 if diff == 0 else math.inf)
        zmax = max(zmax, abs(z))
        rows.append(_row(ball.radius, f"{key}_scaled_small_ball", a.mean, a.stderr, None))
        rows.append(_row(ball.radius, f"{key}_scaled_generator", b.mean, b.stderr, None))
        rows.append(_row(ball.radius, f"{key}_z", z, None, bool(abs(z) <= tol["z_max"])))
    rows.append(_row(ball.radius, "max_abs_z", zmax, None, bool(zmax <= tol["z_max"])))
    passed = all(row["pass"] is not False for row in rows)
    return ProbeReport(scenario_id, "scaling", [ball.radius], rows, passed, tol,
                       _provenance(seed, n, ctl_b, coeffs, lam=lam, controls_small_ball=ctl_a.to_dict(),
                                   scaled_coefficients=scaled.describe()))


# ---------------------------------------------------------------------------
# report wrappers for the scalar identities


def _verdict_rows(est: MCEstimate, target: float, z_tol: float, radius=None, label="value"):
    z = est.z_score(target)
    return [_row(radius, label, est.mean, est.stderr, None),
            _row(radius, f"{label}_z_vs_{target:g}", z, None, bool(abs(z) <= z_tol))]


def exit_time_report(
    coeffs: CoefficientSet,
    ball: Ball,
    start=None,
    level: int = 0,
    mode: str = "full",
    oracle: Optional[str] = None,
    n: int = 100_000,
    controls=None,
    seed: int = 0,
    tolerances: Optional[dict] = None,
    scenario_id: str = "",
    workers: int = 1,
) -> ProbeReport:
    """Mean exit time E[tau] (mode ``full``) or E[tau ^ tau_1] (mode ``pre-switch``).

    With ``oracle="brownian"`` the estimate is compared with (r^2 - |x - c|^2) / d.
    Tolerances: ``z`` (3.0), ``stderr_max`` (None).
    """
    tol = {"z": 3.0, "stderr_max": None, **(tolerances or {})}
    if mode not in ("full", "pre-switch"):
        raise ValueError("mode must be 'full' or 'pre-switch'")
    ctl = resolve_controls(ball, controls)
    x0 = ball.c.copy() if start is None else np.asarray(start, dtype=float)
    batch = run_paths(coeffs, ball, [(x0, level)], n, ctl, seed,
                      mode="switched" if mode == "full" else "killed", workers=workers)
    est = MCEstimate.from_samples(batch.exit_time, batch.n_censored)
    rows = [_row(ball.radius, "exit_time", est.mean, est.stderr, None if not est.flags else False)]
    if oracle is not None:
        if oracle != "brownian":
            raise ValueError(f"unknown exit-time oracle '{oracle}'")
        target = float(brownian_exit_time_mean(ball, x0[None, :])[0])
        z = est.z_score(target)
        rows.append(_row(ball.radius, "oracle", target, None, None))
        rows.append(_row(ball.radius, "z_vs_oracle", z, None, bool(abs(z) <= tol["z"])))
    if tol["stderr_max"] is not None:
        rows.append(_row(ball.radius, "stderr_bound", est.stderr, None, bool(est.stderr < tol["stderr_max"])))
    passed = all(r["pass"] is not False for r in rows)
    return ProbeReport(scenario_id, "exit_time", [ball.radius], rows, passed, tol,
                       _provenance(seed, n, ctl, coeffs, start=x0.tolist(), level=level, mode=mode),
                       {"estimate": est.to_dict(), "reasons": batch.reason_counts(),
                        "max_overshoot": batch.max_overshoot})


def preswitch_report(
    coeffs: CoefficientSet,
    level: int = 0,
    start=None,
    alphas: Sequence[float] = (0.0, 1.0),
    phi: Callable = None,
    rate: Optional[float] = None,
    domain: Optional[Ball] = None,
    n: int = 100_000,
    controls=None,
    seed: int = 0,
    tolerances: Optional[dict] = None,
    scenario_id: str = "",
    workers: int = 1,
) -> ProbeReport:
    """Law of the pre-switch position: E[e^{-alpha tau_1} phi(X_{tau_1-})] against
    E int_0^{tau_1} e^{-alpha s} (-q_ii phi)(X_s) ds, on independent streams.

    With a constant ``rate`` and phi = 1 both are compared with rate / (alpha + rate).
    Tolerances: ``z`` (3.0).
    """
    tol = {"z": 3.0, **(tolerances or {})}
    phi = phi or ConstantData(1.0)
    if domain is not None:
        phi = _bind(phi, domain)
    ctl = resolve_controls(domain, controls) if domain is not None else (
        controls if isinstance(controls, SimControls) else SimControls(**(controls or {})))
    x0 = np.zeros(coeffs.d) if start is None else np.asarray(start, dtype=float)
    rows = []
    for a, alpha in enumerate(alphas):
        left = estimate_preswitch_functional(coeffs, level, alpha, phi, x0, n, ctl, derive_seed(seed, a, "law"),
                                             domain, workers)
        right = estimate_resolvent(coeffs, level, alpha, KillingRate(coeffs, phi), x0, n, ctl,
                                   derive_seed(seed, a, "resolvent"), domain, workers)
        diff = left.mean - right.mean
        se = math.hypot(left.stderr, right.stderr)
        z = diff / se if se > 0 else 0.0
        rows.append(_row(None, f"law[alpha={alpha:g}]", left.mean, left.stderr, None if not left.flags else False))
        rows.append(_row(None, f"resolvent[alpha={alpha:g}]", right.mean, right.stderr,
                         None if not right.flags else False))
        rows.append(_row(None, f"pair_z[alpha={alpha:g}]", z, None, bool(abs(z) <= tol["z"])))
        if rate is not None:
            target = rate / (alpha + rate)
            for name, est in (("law", left), ("resolvent", right)):
                zz = est.z_score(target)
                rows.append(_row(None, f"{name}_z_vs_closed_form[alpha={alpha:g}]", zz, None,
                                 bool(abs(zz) <= tol["z"])))
    passed = all(r["pass"] is not False for r in rows)
    return ProbeReport(scenario_id, "preswitch_identity", [], rows, passed, tol,
                       _provenance(seed, n, ctl, coeffs, start=x0.tolist(), level=level, alphas=list(alphas),
                                   rate=rate, domain=None if domain is None else domain.to_dict()))


def representation_report(
    coeffs: CoefficientSet,
    ball: Ball,
    phi: Callable,
    start=None,
    levels: Optional[Sequence[int]] = None,
    n: int = 100_000,
    controls=None,
    seed: int = 0,
    nodes_per_radius: int = 2,
    n_lattice: Optional[int] = None,
    tolerances: Optional[dict] = None,
    scenario_id: str = "",
    workers: int = 1,
) -> ProbeReport:
    """Report form of :func:`representation_residual`.  Tolerances: ``z`` (3.0)."""
    tol = {"z": 3.0, **(tolerances or {})}
    ctl = resolve_controls(ball, controls)
    x0 = ball.c.copy() if start is None else np.asarray(start, dtype=float)
    res = representation_residual(coeffs, ball, x0, phi, levels, n, ctl, seed, nodes_per_radius, n_lattice,
                                  workers=workers)
    rows = []
    for k, est in res.items():
        if est.stderr > 0:
            ok = abs(est.mean) <= tol["z"] * est.stderr
        else:
            ok = abs(est.mean) <= 1e-12
        rows.append(_row(ball.radius, f"residual_{k}", est.mean, est.stderr, bool(ok and not est.flags)))
    passed = all(r["pass"] is not False for r in rows)
    return ProbeReport(scenario_id, "representation", [ball.radius], rows, passed, tol,
                       _provenance(seed, n, ctl, coeffs, start=x0.tolist(), nodes_per_radius=nodes_per_radius,
                                   n_lattice=n_lattice or max(n // 10, 1000)),
                       {str(k): v.to_dict() for k, v in res.items()})


def levy_exit_report(
    coeffs: CoefficientSet,
    ball: Ball,
    h: Callable,
    level: int = 0,
    start=None,
    n: int = 100_000,
    controls=None,
    seed: int = 0,
    nodes_per_radius: int = 24,
    tolerances: Optional[dict] = None,
    scenario_id: str = "",
    workers: int = 1,
) -> ProbeReport:
    """Report form of :func:`levy_exit_check`.  Tolerances: ``z`` (3.0)."""
    tol = {"z": 3.0, **(tolerances or {})}
    ctl = resolve_controls(ball, controls)
    x0 = ball.c.copy() if start is None else np.asarray(start, dtype=float)
    res = levy_exit_check(coeffs, level, ball, x0, h, n, ctl, seed, nodes_per_radius, workers=workers)
    disc = res.discrepancy
    ok = abs(disc.mean) <= tol["z"] * disc.stderr if disc.stderr > 0 else abs(disc.mean) <= 1e-12
    rows = [_row(ball.radius, "jump_exit_side", res.lhs.mean, res.lhs.stderr, None),
            _row(ball.radius, "occupation_side", res.rhs.mean, res.rhs.stderr, None),
            _row(ball.radius, "discrepancy", disc.mean, disc.stderr, bool(ok))]
    return ProbeReport(scenario_id, "levy_exit", [ball.radius], rows, bool(ok), tol,
                       _provenance(seed, n, ctl, coeffs, start=x0.tolist(), level=level,
                                   nodes_per_radius=nodes_per_radius),
                       res.to_dict())


def operator_norm_report(
    coeffs: CoefficientSet,
    radii: Sequence[float],
    phi: Callable,
    center=None,
    probe_fraction: float = 0.5,
    terms: int = 4,
    n: int = 20_000,
    controls=None,
    seed: int = 0,
    nodes_per_radius: int = 2,
    tolerances: Optional[dict] = None,
    scenario_id: str = "",
    workers: int = 1,
) -> ProbeReport:
    """Sweep the coupling-norm probe over radii and run the Neumann series at
    the largest radius where it falls below ``gq_max``.

    Probes are the centre and the points at ``probe_fraction`` r along the
    axes.  Tolerances: ``gq_max`` (0.25), ``rho_hat_max`` (0.30).
    """
    tol = {"gq_max": 0.25, "rho_hat_max": 0.30, **(tolerances or {})}
    radii = [float(r) for r in radii]
    d = coeffs.d
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    rows = []
    gq = {}
    for a, r in enumerate(radii):
        ball = Ball(tuple(center), r)
        ctl = resolve_controls(ball, controls)
        est = estimate_gq_norm(coeffs, ball, harnack_probes(center, r, probe_fraction), n, ctl,
                               derive_seed(seed, "gq", a), workers)
        gq[r] = est
        rows.append(_row(r, "gq_norm", est.value, None, None))
    admissible = [r for r in radii if gq[r].value < tol["gq_max"]]
    details = {"gq": {str(r): gq[r].to_dict() for r in radii}}
    if not admissible:
        rows.append(_row(None, "admissible_radius", None, None, False))
        return ProbeReport(scenario_id, "operator_norm", radii, rows, False, tol,
                           _provenance(seed, n, controls, coeffs, terms=terms), details)
    r = max(admissible)
    ball = Ball(tuple(center), r)
    ctl = resolve_controls(ball, controls)
    neu = neumann_partial_sum(coeffs, ball, nodes_per_radius, _bind(phi, ball), terms, n, ctl,
                              derive_seed(seed, "neumann"), workers=workers)
    rows.append(_row(r, "admissible_radius", r, None, True))
    rows.append(_row(r, "rho_hat", neu.rho_hat, None, bool(neu.rho_hat < tol["rho_hat_max"])))
    rows.append(_row(r, "rho_bound", neu.rho, None, None))
    rows.append(_row(r, "remainder_bound", neu.remainder_bound, None, None))
    details["neumann"] = neu.to_dict()
    passed = all(row["pass"] is not False for row in rows)
    return ProbeReport(scenario_id, "operator_norm", radii, rows, passed, tol,
                       _provenance(seed, n, controls, coeffs, terms=terms, nodes_per_radius=nodes_per_radius,
                                   probe_fraction=probe_fraction), details)


def green_scaling_error(d: int, ball: Ball, lam: float, n_pairs: int, rng: np.random.Generator) -> float:
    """Max relative error of G_{lam B}(lam x, lam y) = lam^{2-d} G_B(x, y) over random pairs."""
    x = uniform_in_ball(ball, n_pairs, rng)
    y = uniform_in_ball(ball, n_pairs, rng)
    big = green_ball(d, ball, x, y)
    small = green_ball(d, ball.scaled(lam), lam * x, lam * y)
    want = lam ** (2 - d) * big
    return float(np.max(np.abs(small - want) / np.abs(want)))


def analytics_report(
    d: int,
    radius: float = 1.0,
    n: int = 100_000,
    sweeps: int = 2,
    lam: float = 0.5,
    n_pairs: int = 1000,
    seed: int = 0,
    tolerances: Optional[dict] = None,
    scenario_id: str = "",
) -> ProbeReport:
    """3G sweep stability over independent sweeps and the Green scaling identity.

    Tolerances: ``stability`` (0.10: relative spread of the sweep maxima),
    ``scaling`` (1e-12).
    """
    tol = {"stability": 0.10, "scaling": 1e-12, **(tolerances or {})}
    ball = Ball((0.0,) * d, radius)
    rows = []
    sups = []
    for k in range(sweeps):
        out = three_g_sweep(d, ball, n, np.random.default_rng(derive_seed(seed, "3g", k)))
        sups.append(out["sup_ratio"])
        rows.append(_row(radius, f"three_g_sup[{k}]", out["sup_ratio"], None, None))
        rows.append(_row(radius, f"three_g_excluded[{k}]", out["excluded"], None, None))
    spread = (max(sups) - min(sups)) / max(sups)
    rows.append(_row(radius, "three_g_spread", spread, None, bool(spread <= tol["stability"])))
    err = green_scaling_error(d, ball, lam, n_pairs, np.random.default_rng(derive_seed(seed, "scaling")))
    rows.append(_row(radius, "green_scaling_max_rel_error", err, None, bool(err <= tol["scaling"])))
    passed = all(r["pass"] is not False for r in rows)
    return ProbeReport(scenario_id, "analytics", [radius], rows, passed, tol,
                       {"seed": int(seed), "n": int(n), "d": d, "sweeps": sweeps, "lam": lam, "n_pairs": n_pairs})


def combinatorics_report(
    coeffs: CoefficientSet,
    s: float,
    theta5: Optional[float] = None,
    tolerances: Optional[dict] = None,
    scenario_id: str = "",
) -> ProbeReport:
    """Reachability, strict irreducibility and the H series of the switching graph of Q0."""
    tol = {"h_max": 2.0, **(tolerances or {})}
    graph = SwitchGraph.from_q0(coeffs.Q0)
    reach = reachability(graph)
    theta5 = float(np.max(graph.Q0_off)) if theta5 is None else float(theta5)
    rows = [_row(None, "irreducible", float(graph.is_irreducible()), None, None),
            _row(None, "strictly_irreducible", float(graph.is_strictly_irreducible()), None, None)]
    details = {"E": [sorted(e) for e in reach.E],
               "steps": [[None if not math.isfinite(v) else int(v) for v in row] for row in reach.steps]}
    try:
        hs = h_series(graph, s, theta5) if theta5 > 0 else None
    except DivergenceError as exc:
        rows.append(_row(None, "h_series", None, None, False))
        details["h_error"] = str(exc)
        return ProbeReport(scenario_id, "combinatorics", [], rows, False, tol, {"s": s, "theta5": theta5}, details)
    if hs is not None:
        hmax = float(np.max(hs.H))
        rows.append(_row(None, "h_max", hmax, None, bool(hmax < tol["h_max"])))
        rows.append(_row(None, "h_remainder_bound", hs.remainder_bound, None, None))
        details["H"] = hs.H.tolist()
    passed = all(r["pass"] is not False for r in rows)
    return ProbeReport(scenario_id, "combinatorics", [], rows, passed, tol, {"s": s, "theta5": theta5}, details)
