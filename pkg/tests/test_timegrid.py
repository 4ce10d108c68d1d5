from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spheat.timegrid import (GammaTable, allocate, build_time_grid, gamma, gamma_ratio,
                             parse_allocation, uniform_grid)

F = Fraction


def test_two_three_grid():
    g = build_time_grid([2, 3])
    assert g.tau_exact == (F(0), F(1, 3), F(1, 2), F(2, 3), F(1))
    assert g.membership[g.index_of(F(1, 2))] == {0}
    assert g.membership[g.K] == {0, 1}
    assert g.lookback_time(g.index_of(F(1, 2)), 1) == F(1, 3)
    assert g.lookback_time(g.index_of(F(2, 3)), 0) == F(1, 2)
    assert g.membership[0] == {0, 1}


def test_uniform_grid():
    g = uniform_grid(5, 3)
    assert g.K == 5
    assert all(m == {0, 1, 2, 3} for m in g.membership)


def test_one_four_grid():
    g = build_time_grid([1, 4])
    assert g.tau_exact == (F(0), F(1, 4), F(1, 2), F(3, 4), F(1))
    assert all(g.lookback_time(k, 0) == 0 for k in range(1, 5))


def test_invalid_grids():
    with pytest.raises(ValueError):
        build_time_grid([])
    with pytest.raises(ValueError):
        build_time_grid([2, 0])


def test_ties_merge_exactly():
    g = build_time_grid([2, 4, 6])
    assert len(set(g.tau_exact)) == g.K + 1
    assert g.tau_exact == tuple(sorted(set(F(j, n) for n in (2, 4, 6) for j in range(n + 1))))


@settings(max_examples=50, deadline=None)
@given(n=st.lists(st.integers(1, 12), min_size=1, max_size=5))
def test_grid_invariants(n):
    g = build_time_grid(n)
    assert set(g.tau_exact) == {F(j, m) for m in n for j in range(m + 1)}
    assert g.membership[0] == set(range(len(n)))
    for k in range(1, g.K + 1):
        for lp, m in enumerate(n):
            s = g.lookback_time(k, lp)
            assert s < g.tau_exact[k]
            assert s == max(F(j, m) for j in range(m + 1) if F(j, m) < g.tau_exact[k])
            if lp in g.membership[k]:
                assert g.tau_exact[k] - s == F(1, m)


def test_gamma_examples():
    assert gamma(1, 1.0, build_time_grid([1])) == pytest.approx(1 / 3)
    assert gamma(1, 1.0, build_time_grid([2])) == pytest.approx(1 / 4)
    assert gamma(0, 0.7, build_time_grid([3, 5])) == 1.0
    assert gamma(4, 0.0, build_time_grid([3])) == 1.0


def test_gamma_ratio_examples():
    g = build_time_grid([2])
    assert gamma_ratio(1, 0.3, 0.3, g) == 1.0
    assert gamma_ratio(1, 1.0, 0.5, g) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        gamma_ratio(1, 0.2, 0.5, g)


@settings(max_examples=50, deadline=None)
@given(n=st.lists(st.integers(1, 9), min_size=1, max_size=4), ell=st.integers(0, 20),
       a=st.floats(0, 1), b=st.floats(0, 1))
def test_gamma_ratio_matches_quotient(n, ell, a, b):
    g = build_time_grid(n)
    lo, hi = min(a, b), max(a, b)
    expect = gamma(ell, hi, g) / gamma(ell, lo, g)
    assert gamma_ratio(ell, hi, lo, g) == pytest.approx(expect, rel=1e-12)


def test_gamma_table_matches_direct_formula():
    g = build_time_grid([3, 4, 5])
    tab = GammaTable(g, 6)
    for ell in range(7):
        for k in range(g.K + 1):
            assert tab.values[ell, k] == pytest.approx(gamma(ell, g.tau[k], g), rel=1e-13)
    for hi, lo in [(5, 2), (g.K, 0), (3, 3)]:
        np.testing.assert_allclose(tab.ratio(hi, lo), tab.values[:, hi] / tab.values[:, lo], rtol=1e-13)


def test_gamma_monotone_and_positive():
    g = build_time_grid([3, 7])
    t = np.linspace(0, 1, 301)
    for ell in (1, 5, 30):
        v = np.array([gamma(ell, x, g) for x in t])
        assert np.all(v > 0) and np.all(np.diff(v) <= 0)


def test_gamma_converges_to_exponential():
    # first order: doubling every n roughly halves the sup error once mu/n is moderate
    # (the ratio tends to 1/2 from above, so "at most half" holds only in the limit)
    t = np.linspace(0, 1, 801)
    for ell in range(1, 11):
        mu = ell * (ell + 1)
        errs = []
        for n in (64, 128, 256):
            g = build_time_grid([n, 3 * n])
            errs.append(max(abs(gamma(ell, x, g) - np.exp(-mu * x)) for x in t))
        ratios = np.array(errs[1:]) / np.array(errs[:-1])
        assert np.all(ratios <= 0.6)
        assert ratios[-1] <= ratios[0] + 1e-12


def test_allocation_rules():
    assert allocate("uniform:7", [1, 2], 2) == [7, 7, 7]
    assert allocate("sqrtA:10", [100, 25, 0], 2) == [100, 50, 1]
    assert allocate("sqrtA:4,0.5", [4, 1], 1) == [4, 2]
    assert parse_allocation("sqrtA:8") == ("sqrtA", (8.0, 1.0))
    with pytest.raises(ValueError):
        parse_allocation("geometric:3")
