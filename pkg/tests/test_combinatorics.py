import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from switchmc.combinatorics import (
    DivergenceError,
    SwitchGraph,
    enumerate_paths,
    h_series,
    path_weight,
    path_weight_sum,
    reachability,
)

COMPLETE3 = SwitchGraph(np.array([[0, 1, 1], [1, 0, 1], [1, 1, 0]]))
CHAIN3 = SwitchGraph(np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]]))
EMPTY3 = SwitchGraph(np.zeros((3, 3), dtype=int))


@st.composite
def weight_graphs(draw, integer=True, max_m=4, max_weight=3):
    m = draw(st.integers(2, max_m))
    if integer:
        w = draw(arrays(np.int64, (m, m), elements=st.integers(0, max_weight)))
    else:
        w = draw(arrays(np.float64, (m, m), elements=st.floats(0, max_weight, allow_nan=False)))
    np.fill_diagonal(w, 0)
    return SwitchGraph(w)


# ---------------------------------------------------------------------------
# graph type


def test_graph_invariants():
    with pytest.raises(ValueError):
        SwitchGraph(np.array([[1, 1], [1, 0]]))
    with pytest.raises(ValueError):
        SwitchGraph(np.array([[0, -1], [1, 0]]))
    assert CHAIN3.q0_min == 1
    assert EMPTY3.q0_min is None
    g = SwitchGraph.from_q0([[-3.0, 2.0], [0.5, -0.5]])
    assert g.q0_min == 0.5 and g.Q0_off[0, 0] == 0


def test_irreducibility_classification():
    assert COMPLETE3.is_strictly_irreducible() and COMPLETE3.is_irreducible()
    assert CHAIN3.is_irreducible() and not CHAIN3.is_strictly_irreducible()
    assert not EMPTY3.is_irreducible()


# ---------------------------------------------------------------------------
# reachability


def test_reachability_complete_graph():
    r = reachability(COMPLETE3)
    assert r.E == (frozenset({1, 2}), frozenset({0, 2}), frozenset({0, 1}))
    off = ~np.eye(3, dtype=bool)
    assert np.all(r.steps[off] == 1)


def test_reachability_chain():
    r = reachability(CHAIN3)
    assert r.E[0] == frozenset({1, 2})
    assert r.steps[0, 2] == 2 and r.steps[2, 0] == 2
    # diagonal: shortest positive cycle, 2 through a bidirectional edge
    assert r.diagonal_is_cycle_length
    assert np.all(np.diag(r.steps) == 2)


def test_reachability_empty_graph():
    r = reachability(EMPTY3)
    assert all(len(e) == 0 for e in r.E)
    assert np.all(np.isinf(r.steps[~np.eye(3, dtype=bool)]))


def test_directed_cycle_diagonal_is_three():
    g = SwitchGraph(np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]]))
    assert np.all(np.diag(reachability(g).steps) == 3)


@settings(max_examples=60)
@given(weight_graphs(integer=True, max_m=5, max_weight=1))
def test_min_steps_equal_first_positive_power(g):
    steps = reachability(g).steps
    m = g.m
    first = np.full((m, m), math.inf)
    for n in range(1, 2 * m + 1):
        a = np.asarray(path_weight_sum(g, n), dtype=float)
        first[(a > 0) & np.isinf(first)] = n
    np.testing.assert_array_equal(steps, first)


# ---------------------------------------------------------------------------
# path weights


def test_single_step_weight_is_the_matrix():
    np.testing.assert_array_equal(path_weight_sum(COMPLETE3, 1), COMPLETE3.Q0_off)


def test_two_step_complete_graph():
    a2 = np.asarray(path_weight_sum(COMPLETE3, 2), dtype=int)
    np.testing.assert_array_equal(a2, [[2, 1, 1], [1, 2, 1], [1, 1, 2]])


def test_two_step_chain():
    assert path_weight_sum(CHAIN3, 2)[0, 2] == 1


def test_enumeration_examples():
    assert sorted(enumerate_paths(COMPLETE3, 2, 0, 0)) == [(0, 1, 0), (0, 2, 0)]
    assert enumerate_paths(CHAIN3, 1, 0, 2) == []
    assert enumerate_paths(COMPLETE3, 1, 1, 1) == []


def test_enumeration_guard():
    with pytest.raises(ValueError, match="guard"):
        enumerate_paths(COMPLETE3, 9, 0, 0)
    big = SwitchGraph(np.ones((7, 7), dtype=int) - np.eye(7, dtype=int))
    with pytest.raises(ValueError, match="guard"):
        enumerate_paths(big, 2, 0, 1)


def _enumerated_sum(g, n):
    m = g.m
    out = np.zeros((m, m), dtype=object)
    for k in range(m):
        for l in range(m):
            out[k, l] = sum((path_weight(g, p) for p in enumerate_paths(g, n, k, l)), 0)
    return out


@settings(max_examples=100, deadline=None)
@given(weight_graphs(integer=True), st.integers(1, 6))
def test_path_weight_sum_matches_enumeration_exactly(g, n):
    got = path_weight_sum(g, n)
    want = _enumerated_sum(g, n)
    assert all(int(a) == int(b) for a, b in zip(got.ravel(), want.ravel()))


@settings(max_examples=100, deadline=None)
@given(weight_graphs(integer=False, max_weight=1.5), st.integers(1, 6))
def test_path_weight_sum_matches_enumeration_real(g, n):
    got = np.asarray(path_weight_sum(g, n), dtype=float)
    want = np.asarray(_enumerated_sum(g, n), dtype=float)
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


@settings(max_examples=100)
@given(weight_graphs(integer=False, max_weight=2.0), st.integers(1, 6))
def test_path_weight_sum_geometric_bound(g, n):
    theta5 = 2.0
    a = np.asarray(path_weight_sum(g, n), dtype=float)
    assert np.all(a <= ((g.m - 1) * theta5) ** n * (1 + 1e-12))


# ---------------------------------------------------------------------------
# H series


def test_h_two_level_closed_form():
    g = SwitchGraph(np.array([[0, 1], [1, 0]]))
    res = h_series(g, 0.1, 1.0)
    assert res.H[0, 1] == pytest.approx(0.1 / (1 - 0.01), abs=1e-10)
    assert res.H[0, 0] == pytest.approx(0.01 / (1 - 0.01), abs=1e-10)
    assert res.remainder_bound < 1e-14
    assert res.below_two


def test_h_at_zero():
    res = h_series(COMPLETE3, 0.0, 1.0)
    assert np.all(res.H == 0) and res.terms == 0


def test_h_divergence_refused():
    with pytest.raises(DivergenceError):
        h_series(COMPLETE3, 0.5, 1.0)


def test_h_weights_above_theta5_refused():
    with pytest.raises(ValueError):
        h_series(SwitchGraph(np.array([[0, 3], [1, 0]])), 0.1, 1.0)


def test_h_leading_order_sandwich_chain():
    res = h_series(CHAIN3, 0.1, 1.0)
    assert np.all(res.sandwich_ok)


@settings(max_examples=100, deadline=None)
@given(weight_graphs(integer=False, max_m=4, max_weight=1.0), st.floats(0.0, 0.999))
def test_h_below_two_on_admissible_range(g, frac):
    theta5 = 1.0
    # admissible: s (m - 1) theta5 < 2/3, where the geometric bound x/(1-x) < 2
    s = frac * (2.0 / 3.0) / ((g.m - 1) * theta5)
    res = h_series(g, s, theta5)
    assert res.below_two
    assert np.all(res.H < 2)


@settings(max_examples=60, deadline=None)
@given(weight_graphs(integer=False, max_m=4, max_weight=1.0), st.floats(0.0, 0.9), st.floats(0.0, 0.9))
def test_h_monotone_in_s(g, f1, f2):
    lo, hi = sorted((f1, f2))
    cap = 1.0 / (g.m - 1)
    h_lo = h_series(g, lo * cap, 1.0).H
    h_hi = h_series(g, hi * cap, 1.0).H
    assert np.all(h_lo <= h_hi + 1e-15)
