"""Channel state models, eigenvalue densities and the seeded Monte Carlo harness.

All rates in the package are in bits per complex dimension, so every
logarithm is base 2.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigurationError(ValueError):
    """A run configuration is inconsistent or unusable."""


# Trials are grouped into fixed-size blocks; block b of a run draws from a
# stream keyed by (master_seed, b), so trial i only depends on (master_seed, i).
MC_BLOCK = 8192


@dataclass(frozen=True)
class NetworkParams:
    """Noise power and per-relay fronthaul capacities of a diamond network."""

    sigma2: float
    c1: float
    c2: float

    def __post_init__(self):
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise DomainError(f"sigma2 must be positive and finite, got {self.sigma2}")
        if not (self.c1 >= 0 and self.c2 >= 0):
            raise DomainError(f"fronthaul capacities must be >= 0, got ({self.c1}, {self.c2})")

    @classmethod
    def from_snr_db(cls, snr_db: float, c1: float, c2: float | None = None) -> NetworkParams:
        """Build parameters from SNR in dB; capacities are symmetric when c2 is omitted."""
        return cls(sigma2=10.0 ** (-snr_db / 10.0), c1=c1, c2=c1 if c2 is None else c2)

    @property
    def snr(self) -> float:
        return 1.0 / self.sigma2

    @property
    def snr_db(self) -> float:
        return 10.0 * math.log10(self.snr)

    @property
    def csum(self) -> float:
        return self.c1 + self.c2

    @property
    def capacities(self) -> tuple[float, float]:
        return (self.c1, self.c2)


@dataclass(frozen=True)
class SingleUserSample:
    """Instantaneous relay SNRs rho_k = |S_k|^2 / sigma2."""

    rho1: float
    rho2: float

    @classmethod
    def from_gains(cls, e1: float, e2: float, sigma2: float) -> SingleUserSample:
        if e1 < 0 or e2 < 0:
            raise DomainError("channel gains |S_k|^2 must be >= 0")
        return cls(rho1=e1 / sigma2, rho2=e2 / sigma2)


@dataclass(frozen=True)
class TwoUserSample:
    """Channel vectors seen by relays 1 and 2 (complex, length 2)."""

    h1: np.ndarray
    h2: np.ndarray


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    trials: int
    seed: int


def _as_sigma2(params_or_sigma2) -> float:
    if isinstance(params_or_sigma2, NetworkParams):
        return params_or_sigma2.sigma2
    sigma2 = float(params_or_sigma2)
    if not sigma2 > 0:
        raise DomainError(f"sigma2 must be positive, got {sigma2}")
    return sigma2


def sample_single_user(rng: np.random.Generator, params) -> SingleUserSample:
    """Draw one Rayleigh-fading SNR pair; |S_k|^2 ~ Exponential(1)."""
    e1, e2 = rng.standard_exponential(2)
    return SingleUserSample.from_gains(e1, e2, _as_sigma2(params))


def sample_single_user_batch(rng: np.random.Generator, params, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized draw of n SNR pairs, returned as (rho1, rho2) arrays."""
    sigma2 = _as_sigma2(params)
    e = rng.standard_exponential((n, 2))
    return e[:, 0] / sigma2, e[:, 1] / sigma2


def _complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    # unit variance: each real component has variance 1/2
    z = rng.standard_normal(tuple(shape) + (2,)) * math.sqrt(0.5)
    return z[..., 0] + 1j * z[..., 1]


def sample_two_user(rng: np.random.Generator) -> TwoUserSample:
    h = _complex_normal(rng, (2, 2))
    return TwoUserSample(h1=h[0], h2=h[1])


def sample_two_user_batch(rng: np.random.Generator, n: int) -> np.ndarray:
    """Array of shape (n, 2, 2); [:, k, :] is the channel vector at relay k."""
    return _complex_normal(rng, (n, 2, 2))


def gram_stats(h: np.ndarray, noise: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-relay SNRs and the Gram determinant term of a batch of channel pairs.

    Returns ``(n1, n2, gamma)`` with ``n_k = ||h_k||^2 / noise`` and
    ``gamma = (||h1||^2 ||h2||^2 - |h1^H h2|^2) / noise^2``, so that
    ``det(I + a1 h1 h1^H / noise + a2 h2 h2^H / noise) = 1 + a1 n1 + a2 n2 + a1 a2 gamma``.
    """
    h = np.asarray(h)
    if h.ndim == 2:
        h = h[None]
    p1 = np.sum(np.abs(h[:, 0, :]) ** 2, axis=1)
    p2 = np.sum(np.abs(h[:, 1, :]) ** 2, axis=1)
    cross = np.abs(np.sum(np.conj(h[:, 0, :]) * h[:, 1, :], axis=1)) ** 2
    gamma = np.maximum(p1 * p2 - cross, 0.0)
    return p1 / noise, p2 / noise, gamma / noise**2


def _check_lambda(lam):
    arr = np.asarray(lam, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("eigenvalue density is only defined for lambda >= 0")
    return arr


def eigen_pdf_single(lam):
    """Density lambda * exp(-lambda) of the nonzero eigenvalue of S S^H."""
    arr = _check_lambda(lam)
    out = arr * np.exp(-arr)
    return float(out) if out.ndim == 0 else out


def eigen_pdf_two(lam):
    """Unordered-eigenvalue density of a 2x2 complex Wishart matrix (T=2, n=0).

    (1/2) [L_0(lambda)^2 + L_1(lambda)^2] exp(-lambda) with L_0 = 1, L_1 = 1 - lambda.
    """
    arr = _check_lambda(lam)
    out = 0.5 * (1.0 + (1.0 - arr) ** 2) * np.exp(-arr)
    return float(out) if out.ndim == 0 else out


def integrate_tail(f: Callable[[float], float], a: float, points=None,
                   epsabs: float = 1e-10, epsrel: float = 1e-10) -> float:
    """Integrate an exponentially decaying integrand over [a, inf).

    Adaptive Gauss-Kronrod (QUADPACK) on [a, a + 80]; beyond that every
    integrand used here is below 1e-30 of its mass.
    """
    b = a + 80.0
    pts = None
    if points is not None:
        pts = sorted(p for p in points if a < p < b)
        pts = pts or None
    value, _ = integrate.quad(f, a, b, points=pts, epsabs=epsabs, epsrel=epsrel, limit=500)
    return value


def trial_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent generator for trial/block ``index`` of a run keyed by ``master_seed``."""
    ss = np.random.SeedSequence(int(master_seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(int(index),))
    return np.random.Generator(np.random.PCG64(ss))


def _summarize(values: np.ndarray, seed: int) -> MCEstimate:
    n = values.size
    mean = float(np.mean(values))
    stderr = float(np.std(values, ddof=1) / math.sqrt(n))
    return MCEstimate(mean=mean, stderr=stderr, trials=n, seed=int(seed))


def mc_estimate(per_trial_fn: Callable[[np.random.Generator], float], trials: int,
                master_seed: int, workers: int = 1) -> MCEstimate:
    """Monte Carlo mean of ``per_trial_fn`` with per-trial seeding.

    Trial ``i`` receives ``trial_rng(master_seed, i)``, so the estimate does
    not depend on the order (or concurrency) in which trials are evaluated.
    """
    if trials < 2:
        raise ConfigurationError(f"trials must be >= 2, got {trials}")

    def run(i):
        return float(per_trial_fn(trial_rng(master_seed, i)))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = np.fromiter(pool.map(run, range(trials)), dtype=float, count=trials)
    else:
        values = np.fromiter((run(i) for i in range(trials)), dtype=float, count=trials)
    return _summarize(values, master_seed)


def mc_values_batched(batch_fn: Callable[[np.random.Generator, int], np.ndarray], trials: int,
                      master_seed: int, workers: int = 1) -> np.ndarray:
    """Per-trial values from a vectorized ``batch_fn(rng, n)``.

    Trials are split into blocks of ``MC_BLOCK``; block ``b`` is drawn from
    ``trial_rng(master_seed, b)``.
    """
    if trials < 2:
        raise ConfigurationError(f"trials must be >= 2, got {trials}")
    starts = range(0, trials, MC_BLOCK)

    def run(start):
        n = min(MC_BLOCK, trials - start)
        out = np.asarray(batch_fn(trial_rng(master_seed, start // MC_BLOCK), n), dtype=float)
        if out.shape != (n,):
            raise ValueError(f"batch function returned shape {out.shape}, expected ({n},)")
        return out

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    return np.concatenate(parts)


def mc_estimate_batched(batch_fn: Callable[[np.random.Generator, int], np.ndarray], trials: int,
                        master_seed: int, workers: int = 1) -> MCEstimate:
    """Vectorized counterpart of :func:`mc_estimate`."""
    return _summarize(mc_values_batched(batch_fn, trials, master_seed, workers), master_seed)
