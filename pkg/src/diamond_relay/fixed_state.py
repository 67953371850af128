"""Max-min rate programs for a fixed channel state.

Both network sizes reduce to the same four-term program in (r1, r2). With
``a_k = 1 - 2^{-r_k}``:

    T = {}     log2(1 + a1 n1 + a2 n2 + a1 a2 gamma)
    T = {1}    log2(1 + a2 n2) + c1 - r1
    T = {2}    log2(1 + a1 n1) + c2 - r2
    T = {1,2}  c1 + c2 - r1 - r2

For a single user ``n_k = rho_k`` and ``gamma = 0``; for two users
``n_k = ||h_k||^2 / sigma2`` and ``gamma`` is the Gram determinant over
``sigma2^2`` (see :func:`core_model.gram_stats`).

For fixed r1 the best r2 is available in closed form (the increasing and
decreasing branches cross at a root of a linear equation in ``2^{-r2}``).
The resulting partial maximum is concave in r1, so a golden-section search
on r1 gives the joint optimum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit

from .core_model import DomainError, gram_stats

SUBSETS: tuple[tuple[int, ...], ...] = ((), (1,), (2,), (1, 2))
ACTIVE_TOL = 1e-6
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_GOLDEN_ITERS = 80


@dataclass(frozen=True)
class FixedStateSolution:
    r1: float
    r2: float
    beta: float
    active_subsets: list = field(default_factory=list)


@njit(cache=True)
def _terms(r1, r2, n1, n2, gamma, c1, c2):
    a1 = -math.expm1(-r1 * math.log(2.0))
    a2 = -math.expm1(-r2 * math.log(2.0))
    t0 = math.log2(1.0 + a1 * n1 + a2 * n2 + a1 * a2 * gamma)
    t1 = math.log2(1.0 + a2 * n2) + c1 - r1
    t2 = math.log2(1.0 + a1 * n1) + c2 - r2
    t12 = c1 + c2 - r1 - r2
    return t0, t1, t2, t12


@njit(cache=True)
def _objective(r1, r2, n1, n2, gamma, c1, c2):
    t0, t1, t2, t12 = _terms(r1, r2, n1, n2, gamma, c1, c2)
    return min(min(t0, t1), min(t2, t12))


@njit(cache=True)
def _best_r2(r1, n1, n2, gamma, c1, c2):
    if n2 <= 0.0:
        return 0.0
    a1 = -math.expm1(-r1 * math.log(2.0))
    p = a1 * n1
    k1 = min(math.log2(1.0 + p), c1 - r1)
    m = n2 + a1 * gamma
    # crossing of the T={} term with the decreasing branch c2 - r2 + k1
    xa = (1.0 + p + m) / (2.0 ** (k1 + c2) + m)
    # crossing of the T={1} term with the same branch
    xb = (1.0 + n2) / (2.0 ** (k1 + c2 - c1 + r1) + n2)
    # the increasing envelope min(t0, t1) meets the decreasing branch at the later crossing
    x = min(xa, xb)
    if x >= 1.0:
        return 0.0
    return -math.log2(x)


@njit(cache=True)
def _profile(r1, n1, n2, gamma, c1, c2):
    r2 = _best_r2(r1, n1, n2, gamma, c1, c2)
    return _objective(r1, r2, n1, n2, gamma, c1, c2), r2


@njit(cache=True)
def r_cap(n_k, n1, n2, gamma, c_k):
    """Upper end of the search interval for r_k."""
    if n_k <= 0.0:
        return 0.0
    return c_k + math.log2(1.0 + n1 + n2 + gamma)


@njit(cache=True)
def solve_state(n1, n2, gamma, c1, c2):
    """Return (beta, r1, r2) maximizing the four-term minimum."""
    hi = r_cap(n1, n1, n2, gamma, c1)
    best_v, best_r2 = _profile(0.0, n1, n2, gamma, c1, c2)
    best_r1 = 0.0
    if hi > 0.0:
        v, r2 = _profile(hi, n1, n2, gamma, c1, c2)
        if v > best_v:
            best_v, best_r1, best_r2 = v, hi, r2
        lo = 0.0
        x1 = hi - _INVPHI * (hi - lo)
        x2 = lo + _INVPHI * (hi - lo)
        f1, _ = _profile(x1, n1, n2, gamma, c1, c2)
        f2, _ = _profile(x2, n1, n2, gamma, c1, c2)
        for _ in range(_GOLDEN_ITERS):
            if f1 < f2:
                lo = x1
                x1, f1 = x2, f2
                x2 = lo + _INVPHI * (hi - lo)
                f2, _ = _profile(x2, n1, n2, gamma, c1, c2)
            else:
                hi = x2
                x2, f2 = x1, f1
                x1 = hi - _INVPHI * (hi - lo)
                f1, _ = _profile(x1, n1, n2, gamma, c1, c2)
            if hi - lo < 1e-12:
                break
        for x in (x1, x2, 0.5 * (lo + hi)):
            v, r2 = _profile(x, n1, n2, gamma, c1, c2)
            if v > best_v:
                best_v, best_r1, best_r2 = v, x, r2
    return max(best_v, 0.0), best_r1, best_r2


@njit(cache=True)
def solve_state_batch(n1, n2, gamma, c1, c2):
    n = n1.shape[0]
    beta = np.empty(n)
    for i in range(n):
        beta[i] = solve_state(n1[i], n2[i], gamma[i], c1, c2)[0]
    return beta


def _check_capacities(c1: float, c2: float) -> None:
    if not (c1 >= 0 and c2 >= 0):
        raise DomainError(f"fronthaul capacities must be >= 0, got ({c1}, {c2})")


def subset_values(r1: float, r2: float, n1: float, n2: float, gamma: float,
                  c1: float, c2: float) -> dict:
    """Objective value of every subset constraint at (r1, r2)."""
    return dict(zip(SUBSETS, _terms(float(r1), float(r2), n1, n2, gamma, c1, c2)))


def _solution(n1, n2, gamma, c1, c2) -> FixedStateSolution:
    beta, r1, r2 = solve_state(float(n1), float(n2), float(gamma), float(c1), float(c2))
    vals = subset_values(r1, r2, n1, n2, gamma, c1, c2)
    active = [t for t, v in vals.items() if v - beta <= ACTIVE_TOL]
    return FixedStateSolution(r1=float(r1), r2=float(r2), beta=float(beta), active_subsets=active)


def rate_single_fixed(rho1: float, rho2: float, c1: float, c2: float) -> FixedStateSolution:
    """Optimal fixed-state rate of the single-user diamond network."""
    if rho1 < 0 or rho2 < 0:
        raise DomainError(f"SNRs must be >= 0, got ({rho1}, {rho2})")
    _check_capacities(c1, c2)
    return _solution(rho1, rho2, 0.0, c1, c2)


def rate_two_fixed(h1, h2, sigma2: float, c1: float, c2: float) -> FixedStateSolution:
    """Optimal fixed-state rate of the two-user network for channel vectors h1, h2."""
    if not sigma2 > 0:
        raise DomainError(f"sigma2 must be positive, got {sigma2}")
    _check_capacities(c1, c2)
    h = np.stack([np.asarray(h1, dtype=complex), np.asarray(h2, dtype=complex)])
    n1, n2, gamma = (float(x[0]) for x in gram_stats(h, sigma2))
    return _solution(n1, n2, gamma, c1, c2)


def rate_single_batch(rho1: np.ndarray, rho2: np.ndarray, c1: float, c2: float) -> np.ndarray:
    _check_capacities(c1, c2)
    rho1 = np.ascontiguousarray(rho1, dtype=float)
    return solve_state_batch(rho1, np.ascontiguousarray(rho2, dtype=float),
                             np.zeros_like(rho1), float(c1), float(c2))


def rate_two_batch(h: np.ndarray, sigma2: float, c1: float, c2: float) -> np.ndarray:
    """Fixed-state rates for a batch of channel pairs of shape (n, 2, 2)."""
    _check_capacities(c1, c2)
    n1, n2, gamma = gram_stats(h, sigma2)
    return solve_state_batch(np.ascontiguousarray(n1), np.ascontiguousarray(n2),
                             np.ascontiguousarray(gamma), float(c1), float(c2))


def search_box(n1: float, n2: float, gamma: float, c1: float, c2: float) -> tuple[float, float]:
    return (r_cap(n1, n1, n2, gamma, c1), r_cap(n2, n1, n2, gamma, c2))


def brute_force_oracle(objective_fn: Callable[[float, float], float],
                       r_box: tuple[float, float], step: float) -> float:
    """Maximum of ``objective_fn`` over a uniform grid on [0, r_box[0]] x [0, r_box[1]].

    ``objective_fn`` already takes the minimum over the subset constraints.
    Both box ends are always included.
    """
    if not step > 0:
        raise DomainError(f"step must be positive, got {step}")
    r1_max, r2_max = r_box
    if not (r1_max >= 0 and r2_max >= 0) or math.isnan(r1_max) or math.isnan(r2_max):
        raise DomainError(f"empty search box {r_box}")
    g1 = _axis(r1_max, step)
    g2 = _axis(r2_max, step)
    best = -math.inf
    for x in g1:
        for y in g2:
            best = max(best, float(objective_fn(x, y)))
    return best


def _axis(hi: float, step: float) -> np.ndarray:
    n = int(math.floor(hi / step + 1e-9))
    pts = np.arange(n + 1) * step
    if pts[-1] < hi:
        pts = np.append(pts, hi)
    return pts


@njit(cache=True)
def _grid_kernel(n1, n2, gamma, c1, c2, r1_max, r2_max, step):
    # exhaustive scan with exact pruning: rows whose upper bound cannot beat
    # the incumbent are skipped, and columns stop where the decreasing
    # constraints fall below it
    m1 = int(math.floor(r1_max / step + 1e-9))
    m2 = int(math.floor(r2_max / step + 1e-9))
    log2n2 = np.empty(m2 + 1)
    a2s = np.empty(m2 + 1)
    for j in range(m2 + 1):
        a2 = -math.expm1(-j * step * math.log(2.0))
        a2s[j] = a2
        log2n2[j] = math.log2(1.0 + a2 * n2)
    best = _objective(0.0, 0.0, n1, n2, gamma, c1, c2)
    for i in range(m1 + 1):
        r1 = i * step
        a1 = -math.expm1(-r1 * math.log(2.0))
        l1 = math.log2(1.0 + a1 * n1)
        ub = min(min(c1 + c2 - r1, l1 + c2),
                 min(math.log2(1.0 + a1 * n1 + n2 + a1 * gamma), math.log2(1.0 + n2) + c1 - r1))
        if ub <= best:
            continue
        jmax = min(m2, int(math.floor((min(c1 + c2 - r1, l1 + c2) - best) / step + 1e-9)) + 1)
        for j in range(0, jmax + 1):
            r2 = j * step
            a2 = a2s[j]
            v = min(c1 + c2 - r1 - r2, l1 + c2 - r2)
            if v <= best:
                break
            v = min(v, log2n2[j] + c1 - r1)
            if v <= best:
                continue
            v = min(v, math.log2(1.0 + a1 * n1 + a2 * n2 + a1 * a2 * gamma))
            if v > best:
                best = v
    return best


def grid_oracle_state(n1: float, n2: float, gamma: float, c1: float, c2: float,
                      step: float = 1e-3) -> float:
    """Grid maximum of the four-term minimum over the search box, for fine steps."""
    if not step > 0:
        raise DomainError(f"step must be positive, got {step}")
    r1_max, r2_max = search_box(n1, n2, gamma, c1, c2)
    return float(_grid_kernel(float(n1), float(n2), float(gamma), float(c1), float(c2),
                              r1_max, r2_max, float(step)))


def state_objective(n1: float, n2: float, gamma: float, c1: float, c2: float) -> Callable[[float, float], float]:
    """Four-term minimum at fixed state, as a plain function of (r1, r2)."""
    def fn(r1, r2):
        return float(_objective(float(r1), float(r2), n1, n2, gamma, c1, c2))
    return fn
