"""Drift-plus-penalty approximation of the informed-receiver upper bound.

Each slot draws a channel state and solves

    minimize  Q1 c1 + Q2 c2 - V beta
    over      c in [0, c_max]^2, r >= 0, beta
    s.t.      the four subset constraints of the fixed-state program with
              capacities c1, c2.

For fixed r the problem is a small LP in (beta, c). Its optimum sits at a
breakpoint of a convex piecewise-linear function of beta and is computed in
closed form. The slot value is convex in r, so r is found by nested
golden-section search. Virtual queues then absorb the excess c_k - C_k.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core_model import ConfigurationError, MCEstimate, NetworkParams, trial_rng

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_GOLDEN_ITERS = 36

DEFAULT_V = 100.0
DEFAULT_SLOTS = 200_000
# c_max = C + offset, swept from C to C + 20
DEFAULT_CMAX_OFFSETS = (0.0, 4.0, 8.0, 12.0, 16.0, 20.0)


@dataclass
class DppState:
    q1: float = 0.0
    q2: float = 0.0
    t: int = 0
    rate_sum: float = 0.0
    cap_sums: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class DppConfig:
    v: float = DEFAULT_V
    c_max: float = 0.0
    slots: int = DEFAULT_SLOTS

    def validate(self, params: NetworkParams) -> None:
        if not self.v > 0:
            raise ConfigurationError(f"V must be positive, got {self.v}")
        if self.c_max < max(params.c1, params.c2):
            raise ConfigurationError(
                f"c_max={self.c_max} is below the largest capacity {max(params.c1, params.c2)}")
        if self.slots < 1:
            raise ConfigurationError(f"slots must be >= 1, got {self.slots}")


@dataclass(frozen=True)
class DppResult:
    estimate: MCEstimate
    avg_c: tuple[float, float]
    final_q: tuple[float, float]
    second_half_rate: float
    second_half_c: tuple[float, float]
    c_max: float
    v: float


@njit(cache=True)
def _slot_lp(r1, r2, rho1, rho2, q1, q2, v, m):
    """Optimal (value, beta, c1, c2) of the per-slot LP at fixed r."""
    a1 = -math.expm1(-r1 * math.log(2.0))
    a2 = -math.expm1(-r2 * math.log(2.0))
    l1 = math.log2(1.0 + a1 * rho1)
    l2 = math.log2(1.0 + a2 * rho2)
    big_a = math.log2(1.0 + a1 * rho1 + a2 * rho2)
    g1 = r1 - l2
    g2 = r2 - l1
    s0 = r1 + r2
    b_up = min(min(big_a, 2.0 * m - s0), min(m - g1, m - g2))
    b_up = max(b_up, -s0)
    qmin = min(q1, q2)
    qmax = max(q1, q2)
    if q1 == q2:
        beta = b_up if v > q1 else -s0
    elif v > qmax:
        beta = b_up
    elif v > qmin:
        g_other = g2 if q2 > q1 else g1
        beta = max(min(min(-g_other, m - s0), b_up), -s0)
    else:
        beta = -s0
    lo1 = max(0.0, beta + g1)
    lo2 = max(0.0, beta + g2)
    d = max(0.0, beta + s0 - lo1 - lo2)
    if q1 < q2:
        x1 = min(d, m - lo1)
        c1 = lo1 + x1
        c2 = lo2 + (d - x1)
    elif q2 < q1:
        x2 = min(d, m - lo2)
        c2 = lo2 + x2
        c1 = lo1 + (d - x2)
    else:
        # equal prices: fill the lower allocation first so capacities stay balanced
        c1, c2 = lo1, lo2
        if d > 0.0:
            gap = abs(c1 - c2)
            fill = min(d, gap)
            if c1 < c2:
                c1 += fill
            else:
                c2 += fill
            c1 += 0.5 * (d - fill)
            c2 += 0.5 * (d - fill)
    c1 = min(max(c1, 0.0), m)
    c2 = min(max(c2, 0.0), m)
    return q1 * c1 + q2 * c2 - v * beta, beta, c1, c2


@njit(cache=True)
def _inner(r1, rho1, rho2, q1, q2, v, m, hi):
    # minimize over r2 for fixed r1; returns (value, r2)
    best_f = _slot_lp(r1, 0.0, rho1, rho2, q1, q2, v, m)[0]
    best_x = 0.0
    if hi <= 0.0:
        return best_f, best_x
    lo = 0.0
    x1 = hi - _INVPHI * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    f1 = _slot_lp(r1, x1, rho1, rho2, q1, q2, v, m)[0]
    f2 = _slot_lp(r1, x2, rho1, rho2, q1, q2, v, m)[0]
    for _ in range(_GOLDEN_ITERS):
        if f1 > f2:
            lo = x1
            x1, f1 = x2, f2
            x2 = lo + _INVPHI * (hi - lo)
            f2 = _slot_lp(r1, x2, rho1, rho2, q1, q2, v, m)[0]
        else:
            hi = x2
            x2, f2 = x1, f1
            x1 = hi - _INVPHI * (hi - lo)
            f1 = _slot_lp(r1, x1, rho1, rho2, q1, q2, v, m)[0]
    if f1 < best_f:
        best_f, best_x = f1, x1
    if f2 < best_f:
        best_f, best_x = f2, x2
    return best_f, best_x


@njit(cache=True)
def _slot(rho1, rho2, q1, q2, v, m):
    """Per-slot optimum: returns (beta, c1, c2, r1, r2)."""
    cap = m + math.log2(1.0 + rho1 + rho2)
    hi1 = cap if rho1 > 0.0 else 0.0
    hi2 = cap if rho2 > 0.0 else 0.0
    best_f, best_r2 = _inner(0.0, rho1, rho2, q1, q2, v, m, hi2)
    best_r1 = 0.0
    if hi1 > 0.0:
        lo = 0.0
        hi = hi1
        x1 = hi - _INVPHI * (hi - lo)
        x2 = lo + _INVPHI * (hi - lo)
        f1, y1 = _inner(x1, rho1, rho2, q1, q2, v, m, hi2)
        f2, y2 = _inner(x2, rho1, rho2, q1, q2, v, m, hi2)
        for _ in range(_GOLDEN_ITERS):
            if f1 > f2:
                lo = x1
                x1, f1, y1 = x2, f2, y2
                x2 = lo + _INVPHI * (hi - lo)
                f2, y2 = _inner(x2, rho1, rho2, q1, q2, v, m, hi2)
            else:
                hi = x2
                x2, f2, y2 = x1, f1, y1
                x1 = hi - _INVPHI * (hi - lo)
                f1, y1 = _inner(x1, rho1, rho2, q1, q2, v, m, hi2)
        if f1 < best_f:
            best_f, best_r1, best_r2 = f1, x1, y1
        if f2 < best_f:
            best_f, best_r1, best_r2 = f2, x2, y2
    _, beta, c1, c2 = _slot_lp(best_r1, best_r2, rho1, rho2, q1, q2, v, m)
    return beta, c1, c2, best_r1, best_r2


@njit(cache=True)
def _run(rho1, rho2, cap1, cap2, v, m):
    n = rho1.shape[0]
    betas = np.empty(n)
    cs1 = np.empty(n)
    cs2 = np.empty(n)
    q1 = 0.0
    q2 = 0.0
    for t in range(n):
        beta, c1, c2, _, _ = _slot(rho1[t], rho2[t], q1, q2, v, m)
        betas[t] = beta
        cs1[t] = c1
        cs2[t] = c2
        q1 = max(q1 + c1 - cap1, 0.0)
        q2 = max(q2 + c2 - cap2, 0.0)
    return betas, cs1, cs2, q1, q2


def dpp_step(state: DppState, rho_sample, config: DppConfig,
             params: NetworkParams) -> tuple[float, float, float]:
    """Per-slot optimizers (c1*, c2*, beta*) for the current queue backlogs."""
    config.validate(params)
    rho1, rho2 = float(rho_sample.rho1), float(rho_sample.rho2)
    beta, c1, c2, _, _ = _slot(rho1, rho2, float(state.q1), float(state.q2),
                               float(config.v), float(config.c_max))
    return c1, c2, beta


def queue_update(state: DppState, c_star, params) -> DppState:
    """Advance the virtual queues by one slot: Q_k <- max(Q_k + c_k - C_k, 0).

    ``params`` may be a :class:`NetworkParams` or a pair of capacities.
    """
    caps = params.capacities if isinstance(params, NetworkParams) else tuple(params)
    c1, c2 = c_star
    return DppState(q1=max(state.q1 + c1 - caps[0], 0.0),
                    q2=max(state.q2 + c2 - caps[1], 0.0),
                    t=state.t + 1,
                    rate_sum=state.rate_sum,
                    cap_sums=(state.cap_sums[0] + c1, state.cap_sums[1] + c2))


def theorem1_gap(params, c_max: float) -> float:
    """Constant B of the DPP optimality gap (the rate is within B / V of the optimum).

    ``params`` may be a :class:`NetworkParams` or a sequence of capacities.
    """
    caps = params.capacities if isinstance(params, NetworkParams) else tuple(params)
    if c_max < max(caps):
        raise ConfigurationError(f"c_max={c_max} is below the largest capacity {max(caps)}")
    return sum(max(c * c, (c_max - c) ** 2) for c in caps) / len(caps)


def draw_states(params: NetworkParams, slots: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    e = trial_rng(seed, 0).standard_exponential((slots, 2))
    return e[:, 0] / params.sigma2, e[:, 1] / params.sigma2


def dpp_run(params: NetworkParams, config: DppConfig, seed: int) -> DppResult:
    """Time average of the per-slot rates over ``config.slots`` slots.

    The standard error treats slot rates as independent; queue coupling makes
    it an approximation.
    """
    config.validate(params)
    rho1, rho2 = draw_states(params, config.slots, seed)
    betas, cs1, cs2, q1, q2 = _run(rho1, rho2, float(params.c1), float(params.c2),
                                    float(config.v), float(config.c_max))
    n = config.slots
    stderr = float(np.std(betas, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    half = n // 2
    return DppResult(
        estimate=MCEstimate(mean=float(np.mean(betas)), stderr=stderr, trials=n, seed=int(seed)),
        avg_c=(float(np.mean(cs1)), float(np.mean(cs2))),
        final_q=(float(q1), float(q2)),
        second_half_rate=float(np.mean(betas[half:])),
        second_half_c=(float(np.mean(cs1[half:])), float(np.mean(cs2[half:]))),
        c_max=float(config.c_max),
        v=float(config.v),
    )


def dpp_best(params: NetworkParams, v: float = DEFAULT_V, offsets=DEFAULT_CMAX_OFFSETS,
             slots: int = DEFAULT_SLOTS, seed: int = 42) -> DppResult:
    """Best DPP rate over c_max = max(C_k) + offset; ties keep the smaller c_max."""
    base = max(params.c1, params.c2)
    best = None
    for off in offsets:
        res = dpp_run(params, DppConfig(v=v, c_max=base + off, slots=slots), seed)
        if best is None or res.estimate.mean > best.estimate.mean:
            best = res
    return best
