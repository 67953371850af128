"""Single-user achievable schemes: quantized channel inversion (QCI),
truncated channel inversion (TCI) and MMSE-and-forward.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import cvxpy as cp
import numpy as np
from numba import njit
from scipy import integrate

from .core_model import (ConfigurationError, MCEstimate, NetworkParams, integrate_tail,
                         mc_estimate_batched)
from .fixed_state import _objective

_LN2 = math.log(2.0)
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
DEFAULT_TCI_GRID = tuple(round(0.1 * i, 10) for i in range(21))


# ---------------------------------------------------------------- QCI

@dataclass(frozen=True)
class QciGrid:
    levels: np.ndarray
    probs: np.ndarray
    entropy_bits: float

    @property
    def size(self) -> int:
        return self.levels.size

    def quantized_snr(self, sigma2: float) -> np.ndarray:
        """SNR used at each level; the open top level carries none."""
        with np.errstate(divide="ignore"):
            return np.where(np.isinf(self.levels), 0.0, 1.0 / (self.levels * sigma2))

    def level_index(self, gain: np.ndarray) -> np.ndarray:
        """Index of the smallest level b_j with 1/|S|^2 <= b_j."""
        with np.errstate(divide="ignore"):
            xi = 1.0 / np.asarray(gain, dtype=float)
        return np.searchsorted(self.levels, xi, side="left")


def qci_grid(j: int) -> QciGrid:
    """Equiprobable quantization of the inverse channel gain into j levels.

    With |S|^2 ~ Exponential(1), P(1/|S|^2 <= b) = exp(-1/b), so the j-th
    level is b_j = -1 / ln(j / J) and the last one is unbounded.
    """
    if j < 2:
        raise ConfigurationError(f"QCI needs at least 2 levels, got {j}")
    idx = np.arange(1, j)
    levels = np.append(-1.0 / np.log(idx / j), np.inf)
    probs = np.full(j, 1.0 / j)
    entropy = float(-np.sum(probs * np.log2(probs)))
    return QciGrid(levels=levels, probs=probs, entropy_bits=entropy)


@dataclass(frozen=True)
class QciResult:
    rate: float
    feasible: bool
    status: str
    r: np.ndarray | None = None
    c: np.ndarray | None = None


def _qci_cells(r: np.ndarray, c: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Per-cell max-min value at given per-relay, per-level rates and capacities."""
    j = rho.size
    out = np.empty((j, j))
    for j1 in range(j):
        for j2 in range(j):
            out[j1, j2] = _objective(r[0, j1], r[1, j2], rho[j1], rho[j2], 0.0,
                                     c[0, j1], c[1, j2])
    return out


def qci_objective(r: np.ndarray, c: np.ndarray, grid: QciGrid, sigma2: float) -> float:
    """Exact QCI objective at a candidate (r, c); each cell takes the min over subsets."""
    cells = _qci_cells(np.asarray(r, float), np.asarray(c, float), grid.quantized_snr(sigma2))
    p = grid.probs
    return float(p @ cells @ p)


def _project_budget(c: np.ndarray, probs: np.ndarray, budgets: np.ndarray) -> np.ndarray:
    c = np.maximum(c, 0.0)
    for k in range(2):
        spent = float(probs @ c[k])
        if spent > budgets[k]:
            c[k] *= budgets[k] / spent
    return c


def qci_rate(params: NetworkParams, j: int) -> QciResult:
    """Ergodic QCI rate with j equiprobable levels per relay.

    The joint program over per-level compression rates r, per-level
    capacities c and per-cell rates beta is concave; it is solved with an
    exponential-cone solver and the returned point is re-scored exactly
    after projection onto the feasible set.
    """
    grid = qci_grid(j)
    budgets = np.array([params.c1, params.c2]) - grid.entropy_bits
    if np.any(budgets < 0):
        return QciResult(rate=0.0, feasible=False, status="infeasible: capacity below level entropy")
    if np.all(budgets == 0):
        return QciResult(rate=0.0, feasible=True, status="no signal budget")
    rho = grid.quantized_snr(params.sigma2)
    p = grid.probs
    # work in a = 1 - 2^{-r}: the subset constraints become log-concave in (a, c)
    # without exponentials, which keeps the conic solver well conditioned at high SNR
    a = cp.Variable((2, j))
    c = cp.Variable((2, j), nonneg=True)
    beta = cp.Variable(j * j)
    i1, i2 = np.divmod(np.arange(j * j), j)
    x1 = cp.multiply(rho[i1], a[0, i1])
    x2 = cp.multiply(rho[i2], a[1, i2])
    f1 = c[0, i1] + cp.log(1.0 - a[0, i1]) / _LN2
    f2 = c[1, i2] + cp.log(1.0 - a[1, i2]) / _LN2
    cons = [a >= 0, a <= 1, c @ p <= budgets,
            beta <= cp.log(1.0 + x1 + x2) / _LN2,
            beta <= cp.log(1.0 + x2) / _LN2 + f1,
            beta <= cp.log(1.0 + x1) / _LN2 + f2,
            beta <= f1 + f2]
    prob = cp.Problem(cp.Maximize(np.kron(p, p) @ beta), cons)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            prob.solve(solver=cp.CLARABEL, max_iter=300)
        except cp.error.SolverError:
            prob.solve(solver=cp.SCS, eps=1e-8, max_iters=200_000)
    if a.value is None or c.value is None:
        return QciResult(rate=0.0, feasible=True, status=f"solver failed: {prob.status}")
    a_hat = np.clip(np.asarray(a.value), 0.0, 1.0 - 1e-15)
    r_hat = -np.log2(1.0 - a_hat)
    c_hat = _project_budget(np.array(c.value), p, budgets)
    rate = qci_objective(r_hat, c_hat, grid, params.sigma2)
    baseline = 0.0  # r = c = 0 is always feasible
    return QciResult(rate=max(rate, baseline), feasible=True, status=prob.status, r=r_hat, c=c_hat)


# ---------------------------------------------------------------- TCI

@dataclass(frozen=True)
class TciStats:
    p_sel: float
    h_sel: float
    sigma2_eff: float
    rho_eff: float
    c_eff: float
    feasible: bool


def binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -(p * math.log2(p) + (1.0 - p) * math.log2(1.0 - p))


def exp_integral_e1(a: float) -> float:
    """E1(a) for a > 0, by quadrature of exp(-exp(u)) over u >= ln a."""
    if not a > 0:
        return math.inf
    value, _ = integrate.quad(lambda u: math.exp(-math.exp(u)), math.log(a), math.log(a + 60.0),
                              epsabs=0.0, epsrel=1e-12, limit=200)
    return value


def tci_stats(params: NetworkParams, s_th: float, capacity: float | None = None) -> TciStats:
    """Selection statistics of a relay that forwards only when |S| >= s_th.

    ``capacity`` defaults to ``params.c1``.
    """
    if s_th < 0:
        raise ConfigurationError(f"s_th must be >= 0, got {s_th}")
    cap = params.c1 if capacity is None else capacity
    a = s_th * s_th
    p_sel = math.exp(-a)
    h_sel = binary_entropy(p_sel)
    if a == 0.0:
        # E[1/|S|^2] diverges without truncation
        sigma2_eff, rho_eff = math.inf, 0.0
    else:
        # E[1/e | e >= a] = e^a E1(a), scaled by the noise power
        sigma2_eff = params.sigma2 * math.exp(a) * exp_integral_e1(a)
        rho_eff = 1.0 / sigma2_eff
    feasible = cap >= h_sel and p_sel > 0.0
    c_eff = (cap - h_sel) / p_sel if feasible else 0.0
    return TciStats(p_sel=p_sel, h_sel=h_sel, sigma2_eff=sigma2_eff, rho_eff=rho_eff,
                    c_eff=c_eff, feasible=feasible)


@njit(cache=True)
def _single_relay(r, rho, c):
    return min(math.log2(1.0 - math.expm1(-r * math.log(2.0)) * rho), c - r)


@njit(cache=True)
def _tci_value(r1, r2, p1, p2, rho1, rho2, c1, c2):
    both = _objective(r1, r2, rho1, rho2, 0.0, c1, c2)
    only1 = _single_relay(r1, rho1, c1)
    only2 = _single_relay(r2, rho2, c2)
    return p1 * p2 * both + p1 * (1.0 - p2) * only1 + (1.0 - p1) * p2 * only2


@njit(cache=True)
def _tci_inner(r1, p1, p2, rho1, rho2, c1, c2, hi):
    lo = 0.0
    x1 = hi - _INVPHI * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    f1 = _tci_value(r1, x1, p1, p2, rho1, rho2, c1, c2)
    f2 = _tci_value(r1, x2, p1, p2, rho1, rho2, c1, c2)
    for _ in range(60):
        if f1 < f2:
            lo = x1
            x1, f1 = x2, f2
            x2 = lo + _INVPHI * (hi - lo)
            f2 = _tci_value(r1, x2, p1, p2, rho1, rho2, c1, c2)
        else:
            hi = x2
            x2, f2 = x1, f1
            x1 = hi - _INVPHI * (hi - lo)
            f1 = _tci_value(r1, x1, p1, p2, rho1, rho2, c1, c2)
    best = _tci_value(r1, 0.0, p1, p2, rho1, rho2, c1, c2)
    return max(best, f1, f2)


@njit(cache=True)
def _tci_solve(p1, p2, rho1, rho2, c1, c2):
    span = math.log2(1.0 + rho1 + rho2)
    hi1 = c1 + span if rho1 > 0.0 else 0.0
    hi2 = c2 + span if rho2 > 0.0 else 0.0
    best = _tci_inner(0.0, p1, p2, rho1, rho2, c1, c2, hi2)
    if hi1 <= 0.0:
        return best
    lo = 0.0
    hi = hi1
    x1 = hi - _INVPHI * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    f1 = _tci_inner(x1, p1, p2, rho1, rho2, c1, c2, hi2)
    f2 = _tci_inner(x2, p1, p2, rho1, rho2, c1, c2, hi2)
    for _ in range(60):
        if f1 < f2:
            lo = x1
            x1, f1 = x2, f2
            x2 = lo + _INVPHI * (hi - lo)
            f2 = _tci_inner(x2, p1, p2, rho1, rho2, c1, c2, hi2)
        else:
            hi = x2
            x2, f2 = x1, f1
            x1 = hi - _INVPHI * (hi - lo)
            f1 = _tci_inner(x1, p1, p2, rho1, rho2, c1, c2, hi2)
    return max(best, f1, f2)


def tci_rate(params: NetworkParams, s_th: float) -> float:
    """Ergodic TCI rate for a common truncation threshold s_th."""
    s1 = tci_stats(params, s_th, params.c1)
    s2 = tci_stats(params, s_th, params.c2)
    if not (s1.feasible and s2.feasible):
        return 0.0
    if s1.rho_eff == 0.0 and s2.rho_eff == 0.0:
        return 0.0
    value = _tci_solve(s1.p_sel, s2.p_sel, s1.rho_eff, s2.rho_eff, s1.c_eff, s2.c_eff)
    return max(float(value), 0.0)


def tci_best(params: NetworkParams, grid=DEFAULT_TCI_GRID) -> tuple[float, float]:
    """Best threshold on ``grid`` and its rate; ties keep the smallest threshold."""
    grid = sorted(float(s) for s in grid)
    if not grid:
        raise ConfigurationError("threshold grid is empty")
    best_s, best_rate = grid[0], tci_rate(params, grid[0])
    for s in grid[1:]:
        rate = tci_rate(params, s)
        if rate > best_rate:
            best_s, best_rate = s, rate
    return best_s, best_rate


# ---------------------------------------------------------------- MMSE

@dataclass(frozen=True)
class MmseTerms:
    e_u: float
    e_u2: float
    var_u: float
    e_xbar2: float
    d_k: float
    e_v: float


def _expect_gain(fn) -> float:
    """E[fn(e)] for e ~ Exponential(1)."""
    return integrate_tail(lambda e: fn(e) * math.exp(-e), 0.0, points=[1.0])


def mmse_terms(sigma2: float, capacity: float) -> MmseTerms:
    """Scalar moments of the MMSE estimate U = e / (e + sigma2) at one relay."""
    if not capacity > 0:
        raise ConfigurationError(f"MMSE needs positive fronthaul capacity, got {capacity}")
    e_u = _expect_gain(lambda e: e / (e + sigma2))
    e_u2 = _expect_gain(lambda e: (e / (e + sigma2)) ** 2)
    # |Xbar|^2 averages to U^2 + U sigma2 / (e + sigma2) = U
    e_xbar2 = _expect_gain(lambda e: (e / (e + sigma2)) ** 2 + e * sigma2 / (e + sigma2) ** 2)
    d_k = e_xbar2 / math.expm1(capacity * _LN2)
    e_v = e_u - e_u2 + d_k
    return MmseTerms(e_u=e_u, e_u2=e_u2, var_u=max(e_u2 - e_u * e_u, 0.0), e_xbar2=e_xbar2,
                     d_k=d_k, e_v=e_v)


def _noise_entropy_term(t: MmseTerms) -> float:
    """E[log2(Var(U)|X|^2 + E[V])] with |X|^2 ~ Exponential(1)."""
    return _expect_gain(lambda x: math.log2(t.var_u * x + t.e_v))


def mmse_rate(params: NetworkParams, trials: int, seed: int, workers: int = 1) -> MCEstimate:
    """MMSE-and-forward rate; the joint log-det term is averaged by Monte Carlo.

    The result is clamped at zero (the expression is a lower bound that can
    dip below zero when the fronthaul is tiny).
    """
    terms = [mmse_terms(params.sigma2, c) for c in params.capacities]
    sub = sum(_noise_entropy_term(t) for t in terms)
    s2 = params.sigma2
    d1, d2 = terms[0].d_k, terms[1].d_k

    def batch(rng, n):
        e = rng.standard_exponential((n, 2))
        u = e / (e + s2)
        v = u * (1.0 - u) + np.array([d1, d2])
        det = u[:, 0] ** 2 * v[:, 1] + u[:, 1] ** 2 * v[:, 0] + v[:, 0] * v[:, 1]
        return np.log2(det) - sub

    est = mc_estimate_batched(batch, trials, seed, workers)
    if est.mean < 0.0:
        return MCEstimate(mean=0.0, stderr=est.stderr, trials=est.trials, seed=est.seed)
    return est
