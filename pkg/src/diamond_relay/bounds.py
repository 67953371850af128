"""Cooperative upper bounds in closed form and Monte Carlo lower bounds to the
informed-receiver bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import integrate, optimize

from .core_model import (DomainError, MCEstimate, NetworkParams, eigen_pdf_single, eigen_pdf_two,
                         integrate_tail, mc_estimate_batched, sample_single_user_batch,
                         sample_two_user_batch)
from .fixed_state import rate_single_batch, rate_two_batch

# model name -> (eigenvalue density, number of positive eigenvalues)
MODELS = {
    "single": (eigen_pdf_single, 1),
    "two": (eigen_pdf_two, 2),
}
_LN2 = math.log(2.0)


@dataclass(frozen=True)
class CoopUbResult:
    rate: float
    nu: float
    csum: float

    @property
    def zero_rate(self) -> bool:
        return math.isinf(self.nu)


def _model(model: str):
    try:
        return MODELS[model]
    except KeyError:
        raise DomainError(f"unknown eigenvalue model: {model!r}") from None


def bottleneck_integral(nu: float, sigma2: float, model: str = "single") -> float:
    """Integral of log2(lambda / (nu sigma2)) f(lambda) over lambda >= nu sigma2."""
    pdf, _ = _model(model)
    a = nu * sigma2
    log_a = math.log(a)
    # lambda = exp(u) keeps the integrand smooth when a is many decades below 1
    value, _ = integrate.quad(lambda u: (u - log_a) * pdf(math.exp(u)) * math.exp(u),
                              log_a, math.log(a + 80.0), epsabs=1e-10, epsrel=1e-10, limit=500)
    return value / _LN2


def solve_nu(sigma2: float, csum: float, model: str = "single") -> float:
    """Water level at which the bottleneck integral equals csum (single) or csum / 2 (two).

    The integral is strictly decreasing in nu; the root is bracketed and then
    found by Brent's method on log(nu) to relative tolerance 1e-9.
    csum = 0 returns the +inf sentinel.
    """
    if not csum >= 0:
        raise DomainError(f"csum must be >= 0, got {csum}")
    if not sigma2 > 0:
        raise DomainError(f"sigma2 must be positive, got {sigma2}")
    _, t = _model(model)
    if csum == 0:
        return math.inf
    target = csum / t

    def gap(log_nu):
        return bottleneck_integral(math.exp(log_nu), sigma2, model) - target

    lo, hi = 0.0, 0.0
    while gap(hi) > 0:
        hi += 2.0
    while gap(lo) < 0:
        lo -= 2.0
        if lo < math.log(1e-300 / sigma2):
            return 0.0
    if lo == hi:
        lo = hi - 2.0
    log_nu = optimize.brentq(gap, lo, hi, xtol=1e-12, rtol=1e-10, maxiter=200)
    return math.exp(log_nu)


def coop_ub(sigma2: float, csum: float, model: str = "single") -> CoopUbResult:
    """Cooperative informed-receiver upper bound for total fronthaul csum."""
    pdf, t = _model(model)
    nu = solve_nu(sigma2, csum, model)
    if math.isinf(nu):
        return CoopUbResult(rate=0.0, nu=nu, csum=csum)
    a = nu * sigma2
    log1p_nu = math.log1p(nu)
    value = integrate_tail(lambda x: (math.log1p(x / sigma2) - log1p_nu) / _LN2 * pdf(x), a,
                           points=[1.0, 4.0])
    return CoopUbResult(rate=max(t * value, 0.0), nu=nu, csum=csum)


def full_cooperation_rate(sigma2: float, model: str = "single") -> float:
    """Unlimited-fronthaul limit of the cooperative bound."""
    pdf, t = _model(model)
    return t * integrate_tail(lambda x: math.log1p(x / sigma2) / _LN2 * pdf(x), 0.0,
                              points=[1.0, 4.0])


def _single_batch(params: NetworkParams):
    def batch(rng, n):
        rho1, rho2 = sample_single_user_batch(rng, params, n)
        return rate_single_batch(rho1, rho2, params.c1, params.c2)
    return batch


def _two_batch(params: NetworkParams):
    def batch(rng, n):
        return rate_two_batch(sample_two_user_batch(rng, n), params.sigma2, params.c1, params.c2)
    return batch


def check_ub_single(params: NetworkParams, trials: int, seed: int, workers: int = 1) -> MCEstimate:
    """Ergodic fixed-state rate: a Monte Carlo lower bound to the informed-receiver bound."""
    return mc_estimate_batched(_single_batch(params), trials, seed, workers)


def check_ub_two(params: NetworkParams, trials: int, seed: int, workers: int = 1) -> MCEstimate:
    return mc_estimate_batched(_two_batch(params), trials, seed, workers)


def coop_ub_params(params: NetworkParams, model: str = "single") -> CoopUbResult:
    return coop_ub(params.sigma2, params.csum, model)
