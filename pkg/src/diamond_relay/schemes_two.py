"""Two-user fronthaul-compression (FC) scheme.

Each relay spends R(D) = 2 log2(1/D) bits describing its channel vector with
per-component distortion D and uses the rest of its link for a Gaussian
compression of the received signal. The CP sees the quantized channel
Z ~ CN(0, (1 - D) I) and an effective noise 2D + sigma2. Each relay picks
its compression rate as if it were alone (it only knows its own channel).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core_model import (ConfigurationError, DomainError, MCEstimate, NetworkParams,
                         gram_stats, mc_estimate_batched, sample_two_user_batch)


@dataclass(frozen=True)
class FcConfig:
    d: float
    c_eff: tuple[float, float]
    sigma2_eff: float

    @classmethod
    def build(cls, params: NetworkParams, d: float) -> FcConfig:
        bits = rd_bits(d)
        return cls(d=d, c_eff=(params.c1 - bits, params.c2 - bits), sigma2_eff=2.0 * d + params.sigma2)


def rd_bits(d: float) -> float:
    """Bits per symbol to describe a CN(0, I_2) channel vector at distortion d per component."""
    if not (0.0 < d <= 1.0):
        raise DomainError(f"distortion must lie in (0, 1], got {d}")
    return -2.0 * math.log2(d)


def _single_relay_r(snr, c_eff):
    # argmax_r min(c - r, log2(1 + (1 - 2^-r) snr)) = log2((2^c + snr) / (1 + snr)),
    # written to stay finite for large c
    snr = np.asarray(snr, dtype=float)
    if c_eff <= 0.0:
        return np.zeros_like(snr)
    r = c_eff + np.log2(1.0 + snr * 2.0 ** (-c_eff)) - np.log2(1.0 + snr)
    return np.where(snr > 0.0, np.maximum(r, 0.0), 0.0)


def fc_single_relay_r(z_norm_sq: float, c_eff: float, d: float, sigma2: float) -> float:
    """Compression rate a relay would choose if it were the only relay."""
    if z_norm_sq < 0:
        raise DomainError(f"z_norm_sq must be >= 0, got {z_norm_sq}")
    return float(_single_relay_r(z_norm_sq / (2.0 * d + sigma2), c_eff))


def fc_sample_rates(h: np.ndarray, params: NetworkParams, d: float) -> np.ndarray:
    """Per-sample FC rate for unit-variance channel draws ``h`` of shape (n, 2, 2).

    The quantized channel is Z = sqrt(1 - d) h, so the same draws serve every
    distortion level (common random numbers).
    """
    cfg = FcConfig.build(params, d)
    n1, n2, gamma = gram_stats(h * math.sqrt(1.0 - d), cfg.sigma2_eff)
    # a relay whose link is consumed by the channel description stays silent
    on = [c > 0.0 for c in cfg.c_eff]
    caps = [c if o else 0.0 for c, o in zip(cfg.c_eff, on)]
    n1 = n1 if on[0] else np.zeros_like(n1)
    n2 = n2 if on[1] else np.zeros_like(n2)
    if not on[0] or not on[1]:
        gamma = np.zeros_like(gamma)
    r1 = _single_relay_r(n1, caps[0])
    r2 = _single_relay_r(n2, caps[1])
    a1 = -np.expm1(-r1 * math.log(2.0))
    a2 = -np.expm1(-r2 * math.log(2.0))
    t0 = np.log2(1.0 + a1 * n1 + a2 * n2 + a1 * a2 * gamma)
    t1 = np.log2(1.0 + a2 * n2) + caps[0] - r1
    t2 = np.log2(1.0 + a1 * n1) + caps[1] - r2
    t12 = caps[0] + caps[1] - r1 - r2
    return np.maximum(np.minimum(np.minimum(t0, t1), np.minimum(t2, t12)), 0.0)


def fc_rate(params: NetworkParams, d: float, trials: int, seed: int, workers: int = 1) -> MCEstimate:
    """Ergodic FC rate at distortion d."""
    rd_bits(d)

    def batch(rng, n):
        return fc_sample_rates(sample_two_user_batch(rng, n), params, d)

    return mc_estimate_batched(batch, trials, seed, workers)


def fc_best_d(params: NetworkParams, d_grid, trials: int, seed: int,
              workers: int = 1) -> tuple[float, MCEstimate]:
    """Best distortion on ``d_grid``; every point reuses the same channel draws.

    Ties keep the larger distortion.
    """
    grid = sorted((float(x) for x in d_grid), reverse=True)
    if not grid:
        raise ConfigurationError("distortion grid is empty")
    best_d, best = None, None
    for d in grid:
        est = fc_rate(params, d, trials, seed, workers)
        if best is None or est.mean > best.mean:
            best_d, best = d, est
    return best_d, best


def fc_curve(params: NetworkParams, d_grid, trials: int, seed: int,
             workers: int = 1) -> list[tuple[float, MCEstimate]]:
    return [(float(d), fc_rate(params, float(d), trials, seed, workers)) for d in d_grid]
