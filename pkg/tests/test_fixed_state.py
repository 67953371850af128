import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy import optimize

from diamond_relay.core_model import DomainError, gram_stats
from diamond_relay.fixed_state import (brute_force_oracle, grid_oracle_state, rate_single_batch,
                                       rate_single_fixed, rate_two_batch, rate_two_fixed, search_box,
                                       state_objective, subset_values)

rho = st.floats(0, 500)
cap = st.floats(0, 15)


def four_terms(r1, r2, rho1, rho2, c1, c2):
    # written out independently of the package kernels
    a1, a2 = 1 - 2.0 ** -r1, 1 - 2.0 ** -r2
    return [math.log2(1 + a1 * rho1 + a2 * rho2),
            math.log2(1 + a2 * rho2) + c1 - r1,
            math.log2(1 + a1 * rho1) + c2 - r2,
            c1 + c2 - r1 - r2]


@pytest.mark.parametrize("rho1,rho2", [(0, 0), (5, 7), (1e4, 3)])
def test_zero_capacity_gives_zero(rho1, rho2):
    assert rate_single_fixed(rho1, rho2, 0, 0).beta == pytest.approx(0, abs=1e-12)


@pytest.mark.parametrize("c1,c2", [(0, 0), (3, 4), (20, 1)])
def test_zero_snr_gives_zero(c1, c2):
    sol = rate_single_fixed(0, 0, c1, c2)
    assert sol.beta == pytest.approx(0, abs=1e-12)
    assert sol.r1 == 0 and sol.r2 == 0


def test_symmetric_example_matches_grid():
    sol = rate_single_fixed(100, 100, 2, 2)
    assert abs(sol.beta - grid_oracle_state(100, 100, 0, 2, 2, 1e-3)) <= 5e-3
    assert sol.beta == pytest.approx(min(four_terms(sol.r1, sol.r2, 100, 100, 2, 2)), abs=1e-9)


def test_single_relay_reduces_to_crossing():
    # rho = (10, 0), c = (2, 0): max_r min(log2(1 + 10 (1 - 2^-r)), 2 - r)
    root = optimize.brentq(lambda r: math.log2(1 + 10 * (1 - 2.0 ** -r)) - (2 - r), 0, 2, xtol=1e-14)
    expected = 2 - root
    assert rate_single_fixed(10, 0, 2, 0).beta == pytest.approx(expected, abs=1e-9)
    f = state_objective(10, 0, 0, 2, 0)
    step = 1e-3
    oracle = brute_force_oracle(f, search_box(10, 0, 0, 2, 0), step)
    assert abs(oracle - expected) <= step * 2


def test_two_user_diagonal_example():
    h1, h2, s2, c = np.array([1, 0]), np.array([0, 1]), 0.1, 3.0
    sol = rate_two_fixed(h1, h2, s2, c, c)

    # orthogonal channels: the determinant factors into per-relay terms
    def obj(r1, r2):
        a1, a2 = 1 - 2.0 ** -r1, 1 - 2.0 ** -r2
        return min(math.log2((1 + 10 * a1) * (1 + 10 * a2)), math.log2(1 + 10 * a2) + c - r1,
                   math.log2(1 + 10 * a1) + c - r2, 2 * c - r1 - r2)

    oracle = brute_force_oracle(obj, (c + math.log2(21), c + math.log2(21)), 1e-2)
    assert sol.beta >= oracle - 1e-9
    assert sol.beta - oracle <= 5e-3 + 1e-2
    assert abs(sol.beta - grid_oracle_state(10, 10, 100, c, c, 1e-3)) <= 5e-3


def test_two_user_zero_cases():
    assert rate_two_fixed(np.zeros(2), np.zeros(2), 1.0, 5, 5).beta == 0
    assert rate_two_fixed(np.ones(2), np.ones(2), 1.0, 0, 0).beta == pytest.approx(0, abs=1e-12)
    with pytest.raises(DomainError):
        rate_two_fixed(np.ones(2), np.ones(2), 0.0, 1, 1)


def test_domain_errors():
    with pytest.raises(DomainError):
        rate_single_fixed(-1, 1, 1, 1)
    with pytest.raises(DomainError):
        rate_single_fixed(1, 1, -1, 1)
    with pytest.raises(DomainError):
        brute_force_oracle(lambda a, b: 0.0, (-1.0, 1.0), 0.1)
    with pytest.raises(DomainError):
        brute_force_oracle(lambda a, b: 0.0, (1.0, 1.0), 0.0)


def test_brute_force_constant_and_refinement():
    assert brute_force_oracle(lambda a, b: 1.0, (2.0, 3.0), 0.5) == 1.0
    f = state_objective(30, 60, 0, 3, 4)
    box = search_box(30, 60, 0, 3, 4)
    coarse = brute_force_oracle(f, box, 0.2)
    fine = brute_force_oracle(f, box, 0.1)
    assert fine >= coarse


def test_active_subsets_reported():
    sol = rate_single_fixed(100, 100, 2, 2)
    vals = subset_values(sol.r1, sol.r2, 100, 100, 0, 2, 2)
    assert sol.active_subsets
    for t in sol.active_subsets:
        assert vals[t] - sol.beta <= 1e-6


@settings(max_examples=60, deadline=None)
@given(rho, rho, cap, cap)
def test_solver_dominates_coarse_grid(rho1, rho2, c1, c2):
    sol = rate_single_fixed(rho1, rho2, c1, c2)
    grid = grid_oracle_state(rho1, rho2, 0, c1, c2, 0.05)
    assert sol.beta >= grid - 1e-9
    assert sol.beta == pytest.approx(max(min(four_terms(sol.r1, sol.r2, rho1, rho2, c1, c2)), 0), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(rho, rho, cap, cap)
def test_bounds(rho1, rho2, c1, c2):
    beta = rate_single_fixed(rho1, rho2, c1, c2).beta
    assert 0 <= beta <= c1 + c2 + 1e-12
    assert beta <= math.log2(1 + rho1 + rho2) + 1e-12


@settings(max_examples=60, deadline=None)
@given(rho, rho, cap, cap)
def test_symmetry(rho1, rho2, c1, c2):
    a = rate_single_fixed(rho1, rho2, c1, c2).beta
    b = rate_single_fixed(rho2, rho1, c2, c1).beta
    assert a == pytest.approx(b, abs=1e-7)


@settings(max_examples=60, deadline=None)
@given(rho, rho, cap, cap, st.floats(0, 100), st.floats(0, 5))
def test_monotone_in_snr_and_capacity(rho1, rho2, c1, c2, drho, dc):
    base = rate_single_fixed(rho1, rho2, c1, c2).beta
    assert rate_single_fixed(rho1 + drho, rho2, c1, c2).beta >= base - 1e-7
    assert rate_single_fixed(rho1, rho2, c1 + dc, c2).beta >= base - 1e-7


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(-10, 30), cap, cap)
def test_two_user_solver_vs_grid(seed, snr_db, c1, c2):
    rng = np.random.default_rng(seed)
    h = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))) / math.sqrt(2)
    s2 = 10 ** (-snr_db / 10)
    sol = rate_two_fixed(h[0], h[1], s2, c1, c2)
    n1, n2, gamma = (float(x[0]) for x in gram_stats(h, s2))
    assume(n1 + n2 + gamma < 1e6)
    assert sol.beta >= grid_oracle_state(n1, n2, gamma, c1, c2, 0.05) - 1e-9
    logdet = math.log2(np.linalg.det(np.eye(2) + (np.outer(h[0], h[0].conj()) +
                                                  np.outer(h[1], h[1].conj())) / s2).real)
    assert sol.beta <= min(c1 + c2, logdet) + 1e-9


def test_batch_matches_scalar():
    rng = np.random.default_rng(0)
    r1, r2 = rng.exponential(size=20) * 100, rng.exponential(size=20) * 100
    batch = rate_single_batch(r1, r2, 4, 6)
    assert np.allclose(batch, [rate_single_fixed(a, b, 4, 6).beta for a, b in zip(r1, r2)])
    h = (rng.standard_normal((20, 2, 2)) + 1j * rng.standard_normal((20, 2, 2))) / math.sqrt(2)
    batch = rate_two_batch(h, 0.05, 4, 6)
    assert np.allclose(batch, [rate_two_fixed(x[0], x[1], 0.05, 4, 6).beta for x in h])
