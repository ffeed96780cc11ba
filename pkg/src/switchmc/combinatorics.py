"""Switching-graph combinatorics: reachability, path weights and the H series."""
from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

MAX_ENUM_STEPS = 8
MAX_ENUM_LEVELS = 6


class DivergenceError(ValueError):
    """The H series is not dominated by a convergent geometric series."""


@dataclass(frozen=True)
class SwitchGraph:
    """Weighted switching graph from the off-diagonal part of Q0.

    Parameters
    ----------
    Q0_off : array_like
        m x m nonnegative weights with zero diagonal.
    """

    Q0_off: np.ndarray

    def __post_init__(self):
        w = np.array(self.Q0_off, dtype=object if _is_integral(self.Q0_off) else float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError("Q0_off must be a square matrix")
        if any(w[k, k] != 0 for k in range(len(w))):
            raise ValueError("Q0_off must have a zero diagonal")
        if np.any(w < 0):
            raise ValueError("Q0_off entries must be nonnegative")
        object.__setattr__(self, "Q0_off", w)

    @classmethod
    def from_q0(cls, q0) -> "SwitchGraph":
        q0 = np.asarray(q0, dtype=float).copy()
        np.fill_diagonal(q0, 0.0)
        return cls(q0)

    @property
    def m(self) -> int:
        return self.Q0_off.shape[0]

    @property
    def adjacency(self) -> np.ndarray:
        return np.asarray(self.Q0_off > 0, dtype=bool)

    @property
    def q0_min(self) -> float | None:
        """Smallest positive weight; None when the graph has no edge."""
        pos = [v for v in self.Q0_off.ravel() if v > 0]
        return min(pos) if pos else None

    def is_irreducible(self) -> bool:
        reach = reachability(self)
        return all(len(e) == self.m - 1 for e in reach.E)

    def is_strictly_irreducible(self) -> bool:
        adj = self.adjacency
        return bool(np.all(adj | np.eye(self.m, dtype=bool)))


def _is_integral(w) -> bool:
    arr = np.asarray(w)
    if arr.dtype.kind in "iub":
        return True
    if arr.dtype == object:
        return all(isinstance(v, (int, np.integer)) for v in arr.ravel())
    return False


@dataclass(frozen=True)
class Reachability:
    """E[k]: levels reachable from k; steps[k][l]: minimal step count (inf if none).

    The diagonal holds the shortest positive cycle length through k, an
    extension flagged by ``diagonal_is_cycle_length``.
    """

    E: tuple
    steps: np.ndarray
    diagonal_is_cycle_length: bool = True


def reachability(graph: SwitchGraph) -> Reachability:
    m = graph.m
    adj = graph.adjacency
    steps = np.full((m, m), math.inf)
    E = []
    for k in range(m):
        dist = {}
        queue = deque()
        for l in np.flatnonzero(adj[k]):
            dist[int(l)] = 1
            queue.append(int(l))
        while queue:
            u = queue.popleft()
            for v in np.flatnonzero(adj[u]):
                v = int(v)
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        for l, n in dist.items():
            steps[k, l] = n
        E.append(frozenset(l for l in dist if l != k))
    return Reachability(tuple(E), steps)


def path_weight_sum(graph: SwitchGraph, n: int) -> np.ndarray:
    """a_n = (Q0_off)^n by iterated multiplication (exact for integer weights)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    w = graph.Q0_off
    out = w.copy()
    for _ in range(n - 1):
        out = out.dot(w)
    return out


def enumerate_paths(graph: SwitchGraph, n: int, k: int, l: int) -> list[tuple]:
    """All level sequences (k, l_1, ..., l_n = l) along positive-weight edges.

    Brute-force oracle for :func:`path_weight_sum`; refuses n > 8 or m > 6.
    """
    if n > MAX_ENUM_STEPS or graph.m > MAX_ENUM_LEVELS:
        raise ValueError(
            f"enumeration guard: need n <= {MAX_ENUM_STEPS} and m <= {MAX_ENUM_LEVELS} (got n={n}, m={graph.m})"
        )
    if n < 1:
        raise ValueError("n must be >= 1")
    adj = graph.adjacency
    out = []
    for mid in itertools.product(range(graph.m), repeat=n - 1):
        seq = (k,) + mid + (l,)
        if all(adj[a, b] for a, b in zip(seq, seq[1:])):
            out.append(seq)
    return out


def path_weight(graph: SwitchGraph, seq) -> float:
    w = graph.Q0_off
    out = 1
    for a, b in zip(seq, seq[1:]):
        out = out * w[a, b]
    return out


@dataclass(frozen=True)
class HSeries:
    """Truncated H(s) with certified remainder and the leading-order sandwich check."""

    H: np.ndarray
    terms: int
    remainder_bound: float
    sandwich_ok: np.ndarray
    below_two: bool


def h_series(graph: SwitchGraph, s: float, theta5: float, tolerance: float = 1e-14) -> HSeries:
    """H_kl(s) = sum_n a_n(kl) s^n, truncated once the geometric tail is below ``tolerance``.

    Uses a_n <= (theta5 (m - 1))^n, so x = s (m - 1) theta5 < 1 is required and
    the tail after N terms is x^{N+1} / (1 - x).
    """
    if s < 0:
        raise ValueError("s must be nonnegative")
    w = np.asarray(graph.Q0_off, dtype=float)
    if np.any(w > theta5):
        raise ValueError("Q0 weights exceed theta5")
    m = graph.m
    x = s * (m - 1) * theta5
    if x >= 1:
        raise DivergenceError(f"s (m-1) theta5 = {x:.4g} >= 1: geometric domination fails, series may diverge")
    H = np.zeros((m, m))
    if s == 0:
        return HSeries(H, 0, 0.0, np.ones((m, m), dtype=bool), True)
    term = np.eye(m)
    n = 0
    tail = math.inf
    first = {}
    while tail >= tolerance:
        n += 1
        term = term @ w
        H += term * s**n
        for k, l in zip(*np.nonzero(term)):
            first.setdefault((k, l), term[k, l] * s**n)
        tail = x ** (n + 1) / (1 - x)
        if n > 10_000:
            break
    sandwich = np.ones((m, m), dtype=bool)
    for (k, l), lead in first.items():
        sandwich[k, l] = lead <= H[k, l] * (1 + 1e-12) and H[k, l] <= 3 * lead
    return HSeries(H, n, tail, sandwich, bool(np.all(H < 2)))
