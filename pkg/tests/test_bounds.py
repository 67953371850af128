import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from diamond_relay.bounds import (bottleneck_integral, check_ub_single, check_ub_two, coop_ub,
                                  full_cooperation_rate, solve_nu)
from diamond_relay.core_model import DomainError, NetworkParams


def direct_bottleneck(nu, sigma2, pdf):
    a = nu * sigma2
    val, _ = integrate.quad(lambda x: math.log2(x / a) * pdf(x), a, np.inf, epsabs=1e-12, limit=400)
    return val


def test_zero_csum_sentinel():
    assert solve_nu(0.01, 0) == math.inf
    res = coop_ub(0.01, 0)
    assert res.rate == 0 and res.zero_rate


def test_negative_csum_rejected():
    with pytest.raises(DomainError):
        solve_nu(0.01, -1)
    with pytest.raises(DomainError):
        coop_ub(0.01, -1, "two")


def test_bottleneck_strictly_decreasing():
    vals = [bottleneck_integral(nu, 0.01) for nu in np.logspace(-6, 3, 25)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_nu_reproduces_csum():
    nu = solve_nu(0.01, 20)
    assert abs(bottleneck_integral(nu, 0.01) - 20) < 1e-6
    # independent integration straight on the lambda axis
    assert abs(direct_bottleneck(nu, 0.01, lambda x: x * math.exp(-x)) - 20) < 1e-5


def test_two_user_divides_by_two():
    nu = solve_nu(0.1, 20, "two")
    pdf = lambda x: 0.5 * (1 + (1 - x) ** 2) * math.exp(-x)  # noqa: E731
    assert abs(direct_bottleneck(nu, 0.1, pdf) - 10) < 1e-5


def test_high_snr_limit_single():
    assert abs(coop_ub(1e-6, 10).rate - 10) < 0.05


def test_high_snr_limit_two():
    assert abs(coop_ub(1e-6, 10, "two").rate - 10) < 0.05


def test_large_fronthaul_limit():
    oracle, _ = integrate.quad(lambda x: math.log2(1 + x / 0.01) * x * math.exp(-x), 0, np.inf)
    assert abs(coop_ub(0.01, 200).rate - oracle) < 0.01
    assert full_cooperation_rate(0.01) == pytest.approx(oracle, abs=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.floats(-10, 40), st.floats(0.1, 40), st.sampled_from(["single", "two"]))
def test_bound_properties(snr_db, csum, model):
    s2 = 10 ** (-snr_db / 10)
    res = coop_ub(s2, csum, model)
    t = 1 if model == "single" else 2
    assert 0 <= res.rate <= csum + 1e-9
    assert abs(bottleneck_integral(res.nu, s2, model) - csum / t) < 1e-6
    assert coop_ub(s2, csum * 1.5, model).rate >= res.rate - 1e-9


def test_check_ub_zero_capacity():
    p = NetworkParams.from_snr_db(20, 0)
    assert check_ub_single(p, 1000, 1).mean == 0
    assert check_ub_two(p, 1000, 1).mean == 0


def test_check_ub_below_coop():
    p = NetworkParams.from_snr_db(20, 10)
    est = check_ub_single(p, 20_000, 3)
    assert est.mean <= coop_ub(p.sigma2, 20).rate + 3 * est.stderr
    p2 = NetworkParams.from_snr_db(10, 10)
    est2 = check_ub_two(p2, 20_000, 3)
    assert est2.mean <= coop_ub(p2.sigma2, 20, "two").rate + 3 * est2.stderr


def test_check_ub_low_snr():
    assert check_ub_single(NetworkParams.from_snr_db(-60, 10), 10_000, 2).mean < 0.01


def test_check_ub_two_grows_with_capacity():
    a = check_ub_two(NetworkParams.from_snr_db(10, 5), 5_000, 8).mean
    b = check_ub_two(NetworkParams.from_snr_db(10, 10), 5_000, 8).mean
    assert b >= a


def test_check_ub_deterministic():
    p = NetworkParams.from_snr_db(10, 4)
    assert check_ub_single(p, 10_000, 5).mean == check_ub_single(p, 10_000, 5, workers=3).mean
