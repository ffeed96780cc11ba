"""Monte Carlo functionals over simulated path batches."""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .analytics import Ball
from .engine import BOUNDARY, HORIZON, SWITCH, Integrand, PathBatch, SimControls, Tally, run_paths
from .operator_model import CoefficientSet

CENSOR_LIMIT = 0.01
DEFAULT_SUB_BATCHES = 40


@dataclass
class MCEstimate:
    """Sample mean with standard error sd/sqrt(n) and a 95% normal interval."""

    mean: float
    stderr: float
    n: int
    n_censored: int = 0
    flags: list = field(default_factory=list)

    @property
    def ci95(self) -> tuple:
        return (self.mean - 1.96 * self.stderr, self.mean + 1.96 * self.stderr)

    @property
    def reliable(self) -> bool:
        return not self.flags

    @classmethod
    def from_samples(cls, values, n_censored: int = 0, flags=None) -> "MCEstimate":
        values = np.asarray(values, dtype=float)
        n = len(values)
        sd = float(np.std(values, ddof=1)) if n > 1 else math.nan
        est = cls(float(np.mean(values)), sd / math.sqrt(n), n, int(n_censored), list(flags or []))
        est._check_censoring()
        return est

    def _check_censoring(self):
        if self.n and self.n_censored / self.n > CENSOR_LIMIT:
            self.flags.append(f"unreliable: {self.n_censored}/{self.n} paths hit the horizon")

    def z_score(self, target: float) -> float:
        return (self.mean - target) / self.stderr if self.stderr > 0 else (0.0 if self.mean == target else math.inf)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "stderr": self.stderr,
            "n": self.n,
            "ci95": list(self.ci95),
            "n_censored": self.n_censored,
            "flags": list(self.flags),
        }


def batch_means(batch_values) -> tuple[float, float]:
    """Mean and standard error from equally sized, independent sub-batch estimates."""
    v = np.asarray(batch_values, dtype=float)
    s = v.shape[0]
    return v.mean(axis=0), v.std(axis=0, ddof=1) / math.sqrt(s)


def _batch_counts(n: int, n_sub: int) -> np.ndarray:
    return np.bincount(np.arange(n) % n_sub, minlength=n_sub)


def _boundary_values(batch: PathBatch, phi, coeffs_m: int) -> np.ndarray:
    """phi at boundary exits, zero for every other termination."""
    out = np.zeros(batch.n)
    hit = np.flatnonzero(batch.reason == BOUNDARY)
    if hit.size:
        out[hit] = np.asarray(phi(batch.exit_x[hit], batch.exit_level[hit]), dtype=float)
    return out


# ---------------------------------------------------------------------------
# boundary functionals, resolvents and pre-switch laws


def estimate_boundary_functional(
    coeffs: CoefficientSet,
    domain: Ball,
    start: tuple,
    phi: Callable,
    mode: str = "full",
    n: int = 10_000,
    controls: Optional[SimControls] = None,
    seed: int = 0,
    workers: int = 1,
    inner_radius: Optional[float] = None,
) -> MCEstimate:
    """u(x, i) = E[phi(X_tau, Lambda_tau)] (mode ``full``) or its restriction
    to exits before the first switch (mode ``pre-switch``).

    With ``inner_radius`` the pre-switch restriction becomes "the inner ball
    B(center, inner_radius) is left before the first switch", which by the
    strong Markov property gives the Harnack h function.
    """
    if mode not in ("full", "pre-switch"):
        raise ValueError("mode must be 'full' or 'pre-switch'")
    controls = controls or SimControls.for_ball(domain)
    if inner_radius is not None:
        batch = run_paths(coeffs, domain, [start], n, controls, seed, mode="switched", inner_radius=inner_radius,
                          workers=workers)
        vals = _boundary_values(batch, phi, coeffs.m) * batch.inner_exit_first
        return MCEstimate.from_samples(vals, batch.n_censored)
    batch = run_paths(coeffs, domain, [start], n, controls, seed, mode="switched" if mode == "full" else "killed",
                      workers=workers)
    return MCEstimate.from_samples(_boundary_values(batch, phi, coeffs.m), batch.n_censored)


class _Restricted:
    """Picklable wrapper evaluating phi at (x, lev)."""

    def __init__(self, phi):
        self.phi = phi

    def __call__(self, x, lev):
        return self.phi(x, lev)


def estimate_resolvent(
    coeffs: CoefficientSet,
    i: int,
    alpha: float,
    phi: Callable,
    start,
    n: int = 10_000,
    controls: Optional[SimControls] = None,
    seed: int = 0,
    domain: Optional[Ball] = None,
    workers: int = 1,
) -> MCEstimate:
    """E int_0^{tau_1 (^ tau_D)} e^{-alpha s} phi(X_s) ds for the level-i subprocess.

    ``phi(x, lev)`` is vectorized.  Without ``domain`` the only terminations
    are the switch and the horizon.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    controls = controls or SimControls()
    batch = run_paths(coeffs, domain, [(start, i)], n, controls, seed, mode="killed",
                      integrands=[Integrand(_Restricted(phi), alpha)], workers=workers)
    return MCEstimate.from_samples(batch.integrals[:, 0], batch.n_censored)


def estimate_preswitch_functional(
    coeffs: CoefficientSet,
    i: int,
    alpha: float,
    phi: Callable,
    start,
    n: int = 10_000,
    controls: Optional[SimControls] = None,
    seed: int = 0,
    domain: Optional[Ball] = None,
    workers: int = 1,
) -> MCEstimate:
    """E[e^{-alpha tau_1} phi(X_{tau_1-}); tau_1 < horizon (and < tau_D)]."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    controls = controls or SimControls()
    batch = run_paths(coeffs, domain, [(start, i)], n, controls, seed, mode="killed", workers=workers)
    vals = np.zeros(batch.n)
    sw = np.flatnonzero(batch.reason == SWITCH)
    if sw.size:
        vals[sw] = np.exp(-alpha * batch.first_switch_time[sw]) * np.asarray(
            phi(batch.preswitch_x[sw], np.full(sw.size, i)), dtype=float)
    return MCEstimate.from_samples(vals, batch.n_censored)


class KillingRate:
    """x -> -q_ii(x) phi(x, i), the integrand of the pre-switch identity."""

    def __init__(self, coeffs: CoefficientSet, phi):
        self.coeffs = coeffs
        self.phi = phi

    def __call__(self, x, lev):
        rows = self.coeffs.q_rows(x, lev)
        return -rows[np.arange(len(lev)), lev] * self.phi(x, lev)


# ---------------------------------------------------------------------------
# occupation density


@dataclass
class OccupancyGrid:
    """Time mass per unit volume in a regular box lattice over the ball.

    ``values[b]`` is the expected time spent in bin ``b`` before exit or
    first switch, divided by the bin volume.
    """

    ball: Ball
    bins_per_radius: int
    values: np.ndarray
    stderr: np.ndarray
    n: int
    mean_exit: float
    n_censored: int = 0
    warnings: list = field(default_factory=list)

    @property
    def width(self) -> float:
        return self.ball.radius / self.bins_per_radius

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def total_mass(self) -> float:
        return float(self.values.sum() * self.width**self.ball.d)

    def bin_lower(self, index) -> np.ndarray:
        index = np.atleast_2d(index)
        return self.ball.c - self.ball.radius + index * self.width

    def bin_centers(self) -> np.ndarray:
        nb = self.values.shape[0]
        grids = np.meshgrid(*([np.arange(nb)] * self.ball.d), indexing="ij")
        idx = np.stack(grids, -1).reshape(-1, self.ball.d)
        return self.bin_lower(idx) + 0.5 * self.width

    def bin_of(self, x) -> tuple:
        k = np.floor((np.asarray(x, dtype=float) - self.ball.c + self.ball.radius) / self.width).astype(int)
        return tuple(k)


class _BinIndex:
    def __init__(self, ball: Ball, bins_per_radius: int):
        self.lo = ball.c - ball.radius
        self.width = ball.radius / bins_per_radius
        self.nb = 2 * bins_per_radius
        self.d = ball.d

    def __call__(self, x, lev):
        k = np.floor((x - self.lo) / self.width).astype(np.int64)
        np.clip(k, 0, self.nb - 1, out=k)
        flat = np.ravel_multi_index(tuple(k.T), (self.nb,) * self.d)
        return flat[:, None], np.ones((len(x), 1))


def estimate_occupation_green(
    coeffs: CoefficientSet,
    i: int,
    ball: Ball,
    start,
    bins_per_radius: int = 16,
    n: int = 100_000,
    controls: Optional[SimControls] = None,
    seed: int = 0,
    n_sub: int = DEFAULT_SUB_BATCHES,
    workers: int = 1,
) -> OccupancyGrid:
    """Occupation density of the level-i subprocess up to tau_B ^ tau_1."""
    if bins_per_radius < 4:
        raise ValueError("binning needs at least 4 bins per radius")
    controls = controls or SimControls.for_ball(ball)
    nb = 2 * bins_per_radius
    ncols = nb**ball.d
    batch = run_paths(coeffs, ball, [(start, i)], n, controls, seed, mode="killed",
                      tally=Tally(_BinIndex(ball, bins_per_radius), ncols), n_sub=n_sub, workers=workers)
    vol = (ball.radius / bins_per_radius) ** ball.d
    counts = _batch_counts(n, n_sub)
    per_batch = batch.tally[0] / counts[:, None] / vol
    _, se = batch_means(per_batch)
    values = batch.tally[0].sum(axis=0) / n / vol
    grid = OccupancyGrid(ball, bins_per_radius, values.reshape((nb,) * ball.d), se.reshape((nb,) * ball.d), n,
                         float(np.mean(batch.exit_time)), batch.n_censored)
    centers = grid.bin_centers()
    inside = np.linalg.norm(centers - ball.c, axis=1) < ball.radius
    empty = np.mean(values[inside] == 0)
    if empty > 0.5:
        grid.warnings.append(f"coverage: {empty:.0%} of interior bins are empty")
    return grid


# ---------------------------------------------------------------------------
# operator-norm probe


class OffDiagonalMass:
    """x -> sum_{l != i} |q_il(x)|."""

    def __init__(self, coeffs: CoefficientSet):
        self.coeffs = coeffs

    def __call__(self, x, lev):
        rows = np.abs(self.coeffs.q_rows(x, lev))
        return rows.sum(axis=1) - rows[np.arange(len(lev)), lev]


@dataclass
class GQNormEstimate:
    """Conservative probe value max(mean + 1.96 stderr) with per-probe estimates."""

    value: float
    estimates: dict
    flags: list

    def __float__(self):
        return self.value

    def to_dict(self) -> dict:
        return {"value": self.value, "flags": self.flags,
                "estimates": {k: v.to_dict() for k, v in self.estimates.items()}}


def estimate_gq_norm(
    coeffs: CoefficientSet,
    ball: Ball,
    probes: Sequence,
    n: int = 10_000,
    controls: Optional[SimControls] = None,
    seed: int = 0,
    workers: int = 1,
) -> GQNormEstimate:
    """Probe of sup_x sum_{l != k} E int_0^{tau ^ tau_1} |q_kl|(X_s) ds over probes and levels."""
    probes = [np.asarray(p, dtype=float) for p in probes]
    for p in probes:
        if not ball.contains(p):
            raise ValueError(f"probe {p.tolist()} is not inside the ball")
    controls = controls or SimControls.for_ball(ball)
    starts = [(p, k) for p in probes for k in range(coeffs.m)]
    batch = run_paths(coeffs, ball, starts, n, controls, seed, mode="killed",
                      integrands=[Integrand(OffDiagonalMass(coeffs))], workers=workers)
    ests = {}
    flags = []
    value = 0.0
    for g, (p, k) in enumerate(starts):
        sel = batch.groups == g
        est = MCEstimate.from_samples(batch.integrals[sel, 0], int(np.sum(batch.reason[sel] == HORIZON)))
        if est.mean > 0 and est.stderr > 0.1 * est.mean:
            est.flags.append("stderr above 10% of the mean")
        key = f"probe{g // coeffs.m}_level{k}"
        ests[key] = est
        flags.extend(f"{key}: {f}" for f in est.flags)
        value = max(value, est.mean + 1.96 * est.stderr)
    return GQNormEstimate(value, ests, flags)


# ---------------------------------------------------------------------------
# Neumann series on a probe lattice


class Lattice:
    """Cubic lattice c + spacing * k, k in {-N..N}^d, covering the ball.

    Values on the lattice are interpolated with multilinear hat functions.
    """

    def __init__(self, ball: Ball, nodes_per_radius: int = 2):
        if nodes_per_radius < 1:
            raise ValueError("need at least one lattice cell per radius")
        self.ball = ball
        self.N = int(nodes_per_radius)
        self.spacing = ball.radius / self.N
        self.side = 2 * self.N + 1
        self.d = ball.d
        axis = np.arange(-self.N, self.N + 1) * self.spacing
        grids = np.meshgrid(*([axis] * self.d), indexing="ij")
        self.nodes = ball.c + np.stack(grids, -1).reshape(-1, self.d)
        self.interior = np.linalg.norm(self.nodes - ball.c, axis=1) < ball.radius * (1 - 1e-12)
        self._corners = np.array(list(itertools.product((0, 1), repeat=self.d)))
        self._strides = self.side ** np.arange(self.d - 1, -1, -1, dtype=np.int64)
        self._corner_offsets = self._corners @ self._strides

    @property
    def size(self) -> int:
        return len(self.nodes)

    def hat(self, x):
        """Node indices (n, 2^d) and multilinear weights (n, 2^d) at points x."""
        u = (np.asarray(x, dtype=float) - self.ball.c) / self.spacing + self.N
        if np.any(u < -1e-9) or np.any(u > 2 * self.N + 1e-9):
            raise ValueError("lattice interpolation requested outside its coverage")
        k = np.clip(np.floor(u).astype(np.int64), 0, 2 * self.N - 1)
        f = u - k
        flat = (k @ self._strides)[:, None] + self._corner_offsets[None, :]
        w = np.ones((len(u), len(self._corners)))
        for j in range(self.d):
            w *= np.where(self._corners[:, j] == 1, f[:, j:j + 1], 1 - f[:, j:j + 1])
        return flat, w

    def interpolate(self, values, x):
        flat, w = self.hat(x)
        return np.sum(np.asarray(values)[flat] * w, axis=1)


class CouplingTally:
    """Columns (node, l) with values q_il(x) * hat_node(x) for l != i."""

    def __init__(self, coeffs: CoefficientSet, lattice: Lattice):
        self.coeffs = coeffs
        self.lattice = lattice

    def __call__(self, x, lev):
        m = self.coeffs.m
        flat, w = self.lattice.hat(x)
        rows = self.coeffs.q_rows(x, lev)
        q = np.where(lev[:, None] == np.arange(m)[None, :], 0.0, rows)
        cols = np.where(q[:, :, None] != 0, flat[:, None, :] * m + np.arange(m)[None, :, None], -1)
        vals = q[:, :, None] * w[:, None, :]
        return cols.reshape(len(x), -1), vals.reshape(len(x), -1)


@dataclass
class CouplingOperator:
    """MC estimate of K[(x, i), (node, l)] = E int_0^{tau ^ tau_1} q_il(X_s) hat_node(X_s) ds.

    Rows are (start, level) pairs; ``batches`` holds the same matrix per
    independent sub-batch.  ``h`` holds the pre-switch boundary values.
    """

    lattice: Lattice
    starts: list
    matrix: np.ndarray
    batches: np.ndarray
    h: np.ndarray
    h_batches: np.ndarray
    n: int
    n_censored: int

    def apply(self, field_values) -> tuple[np.ndarray, np.ndarray]:
        """K applied to a lattice field (size nodes * m), with batch-means stderr."""
        v = np.asarray(field_values, dtype=float).reshape(-1)
        mean = self.matrix @ v
        _, se = batch_means(self.batches @ v)
        return mean, se

    def row_sums(self) -> tuple[np.ndarray, np.ndarray]:
        mean = np.abs(self.matrix).sum(axis=1)
        _, se = batch_means(np.abs(self.batches).sum(axis=2))
        return mean, se


def estimate_coupling_operator(
    coeffs: CoefficientSet,
    lattice: Lattice,
    starts: Sequence[tuple],
    phi: Callable,
    n: int,
    controls: SimControls,
    seed: int,
    n_sub: int = DEFAULT_SUB_BATCHES,
    workers: int = 1,
) -> CouplingOperator:
    """Killed pipelines from each (x, i) start tallying h and the coupling kernel."""
    m = coeffs.m
    ncols = lattice.size * m
    batch = run_paths(coeffs, lattice.ball, starts, n, controls, seed, mode="killed",
                      tally=Tally(CouplingTally(coeffs, lattice), ncols), n_sub=n_sub, workers=workers)
    counts = _batch_counts(n, n_sub)
    K = batch.tally.sum(axis=1) / n
    Kb = batch.tally / counts[None, :, None]
    Kb = np.moveaxis(Kb, 1, 0)  # (sub, rows, cols)
    hv = _boundary_values(batch, phi, m)
    h = np.zeros(len(starts))
    hb = np.zeros((n_sub, len(starts)))
    sub = np.arange(n) % n_sub
    for g in range(len(starts)):
        vals = hv[batch.groups == g]
        h[g] = vals.mean()
        hb[:, g] = np.bincount(sub, vals, minlength=n_sub) / counts
    return CouplingOperator(lattice, list(starts), K, Kb, h, hb, n, batch.n_censored)


@dataclass
class NeumannResult:
    lattice: Lattice
    terms: np.ndarray  # (K + 1, interior nodes, m)
    term_stderr: np.ndarray
    partial_sum: np.ndarray
    remainder_bound: float
    rho: float
    contraction_ratios: list
    rho_hat: float
    n: int

    def to_dict(self) -> dict:
        return {
            "nodes": self.lattice.nodes[self.lattice.interior].tolist(),
            "partial_sum": self.partial_sum.tolist(),
            "term_sup": [float(np.max(np.abs(t))) for t in self.terms],
            "remainder_bound": self.remainder_bound,
            "rho": self.rho,
            "rho_hat": self.rho_hat,
            "contraction_ratios": self.contraction_ratios,
        }


def _phi_sup(phi, lattice: Lattice, m: int) -> float:
    pts = lattice.ball.c + lattice.ball.radius * np.vstack([np.eye(lattice.d), -np.eye(lattice.d)])
    nodes = np.vstack([lattice.nodes, pts])
    return float(max(np.max(np.abs(phi(nodes, np.full(len(nodes), k)))) for k in range(m)))


def neumann_partial_sum(
    coeffs: CoefficientSet,
    ball: Ball,
    grid: int | Lattice,
    phi: Callable,
    K: int,
    n: int = 10_000,
    controls: Optional[SimControls] = None,
    seed: int = 0,
    rho: Optional[float] = None,
    phi_sup: Optional[float] = None,
    n_sub: int = DEFAULT_SUB_BATCHES,
    workers: int = 1,
    operator: Optional[CouplingOperator] = None,
) -> NeumannResult:
    """Terms h, Kh, K^2 h, ... on the interior lattice nodes and their sum.

    Exterior nodes carry phi in term 0 and zero afterwards.  ``rho`` defaults
    to the estimated operator norm (max row sum of |K| + 1.96 stderr); the
    remainder bound is rho^K sup|phi|.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    lattice = grid if isinstance(grid, Lattice) else Lattice(ball, int(grid))
    m = coeffs.m
    controls = controls or SimControls.for_ball(ball)
    inner_nodes = lattice.nodes[lattice.interior]
    starts = [(p, i) for p in inner_nodes for i in range(m)]
    op = operator or estimate_coupling_operator(coeffs, lattice, starts, phi, n, controls, seed, n_sub, workers)
    if rho is None:
        rs, rse = op.row_sums()
        rho = float(np.max(rs + 1.96 * rse)) if len(rs) else 0.0
    if rho >= 1:
        raise ValueError(f"operator norm estimate {rho:.3f} >= 1: Neumann series not certified to converge")
    sup = phi_sup if phi_sup is not None else _phi_sup(phi, lattice, m)

    # full lattice fields (nodes x levels)
    full0 = np.zeros((lattice.size, m))
    ext = np.flatnonzero(~lattice.interior)
    for i in range(m):
        full0[ext, i] = phi(lattice.nodes[ext], np.full(ext.size, i))
    full0[lattice.interior] = op.h.reshape(-1, m)
    terms = [op.h.reshape(-1, m)]
    ses = [batch_means(op.h_batches)[1].reshape(-1, m)]
    field = full0
    for _ in range(K):
        val, se = op.apply(field)
        val = val.reshape(-1, m)
        terms.append(val)
        ses.append(se.reshape(-1, m))
        field = np.zeros((lattice.size, m))
        field[lattice.interior] = val
    terms = np.array(terms)
    ratios = []
    for k in range(K):
        a = float(np.max(np.abs(terms[k])))
        b = float(np.max(np.abs(terms[k + 1])))
        ratios.append(b / a if a > 0 else 0.0)
    return NeumannResult(lattice, terms, np.array(ses), terms.sum(axis=0), rho**K * sup, rho, ratios,
                         max(ratios) if ratios else 0.0, n)
