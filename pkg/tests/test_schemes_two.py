import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diamond_relay.bounds import coop_ub
from diamond_relay.core_model import ConfigurationError, DomainError, NetworkParams, trial_rng
from diamond_relay.schemes_two import (FcConfig, fc_best_d, fc_rate, fc_sample_rates,
                                       fc_single_relay_r, rd_bits)


def test_rd_bits_values():
    assert rd_bits(1.0) == 0
    assert rd_bits(0.5) == 2
    assert rd_bits(0.001) == pytest.approx(2 * math.log2(1000))
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(DomainError):
            rd_bits(bad)


def test_fc_config():
    cfg = FcConfig.build(NetworkParams.from_snr_db(20, 40, 10), 0.25)
    assert cfg.c_eff == (36, 6) and cfg.sigma2_eff == pytest.approx(0.51)
    assert FcConfig.build(NetworkParams.from_snr_db(20, 1), 0.1).c_eff[0] < 0


def test_single_relay_r_degenerate():
    assert fc_single_relay_r(10, 0.0, 0.1, 0.01) == 0
    assert fc_single_relay_r(10, -3.0, 0.1, 0.01) == 0
    assert fc_single_relay_r(0, 5.0, 0.1, 0.01) == 0


def test_single_relay_r_matches_grid():
    z, c, d, s2 = 10.0, 5.0, 0.1, 0.01
    snr = z / (2 * d + s2)
    r = np.arange(0, c + 1e-4, 1e-4)
    obj = np.minimum(c - r, np.log2(1 + (1 - 2.0 ** -r) * snr))
    assert abs(fc_single_relay_r(z, c, d, s2) - r[np.argmax(obj)]) < 1e-3


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1e3), st.floats(-5, 60), st.floats(1e-3, 1), st.floats(1e-4, 10))
def test_single_relay_r_range(z, c, d, s2):
    r = fc_single_relay_r(z, c, d, s2)
    assert 0 <= r <= max(c, 0) + 1e-9


def test_fc_full_distortion_is_zero():
    est = fc_rate(NetworkParams.from_snr_db(20, 10), 1.0, 1000, 1)
    assert est.mean == 0


def test_fc_consumed_link_stays_silent():
    # R(D) exceeds the link: relay silenced, rate exactly zero
    assert fc_rate(NetworkParams.from_snr_db(20, 19), 0.001, 1000, 1).mean == 0
    assert fc_rate(NetworkParams.from_snr_db(20, 5), 0.01, 1000, 1).mean == 0


def test_fc_one_silent_relay_keeps_other():
    p = NetworkParams.from_snr_db(20, 10, 1)
    est = fc_rate(p, 0.1, 5000, 3)
    assert est.mean > 0


def test_fc_per_sample_cap():
    p = NetworkParams.from_snr_db(20, 8, 6)
    d = 0.2
    h = trial_rng(6, 0).standard_normal((4000, 2, 2)) + 1j * trial_rng(7, 0).standard_normal((4000, 2, 2))
    vals = fc_sample_rates(h / math.sqrt(2), p, d)
    assert np.all(vals >= 0)
    assert np.all(vals <= sum(FcConfig.build(p, d).c_eff) + 1e-12)


def test_fc_high_capacity_below_coop():
    p = NetworkParams.from_snr_db(20, 40)
    est = fc_rate(p, 0.001, 100_000, 42)
    ub = coop_ub(p.sigma2, 80, "two").rate
    assert est.mean <= ub + 3 * est.stderr
    assert est.mean > 0.9 * ub


def test_fc_best_d_grid_of_one():
    assert fc_best_d(NetworkParams.from_snr_db(20, 10), [1.0], 100, 1)[0] == 1.0
    assert fc_best_d(NetworkParams.from_snr_db(20, 10), [1.0], 100, 1)[1].mean == 0
    with pytest.raises(ConfigurationError):
        fc_best_d(NetworkParams.from_snr_db(20, 10), [], 100, 1)


def test_fc_best_d_tie_prefers_larger():
    d, est = fc_best_d(NetworkParams.from_snr_db(20, 1), [0.1, 0.2], 100, 1)
    assert d == 0.2 and est.mean == 0


def test_fc_interior_optimum_at_moderate_capacity():
    p = NetworkParams.from_snr_db(10, 20)
    grid = np.logspace(-3, 0, 12)
    d, _ = fc_best_d(p, grid, 20_000, 42)
    assert grid[0] < d < grid[-1]


def test_fc_interior_optimum_on_wide_grid():
    p = NetworkParams.from_snr_db(20, 40)
    grid = np.logspace(-7, 0, 15)
    d, _ = fc_best_d(p, grid, 20_000, 42)
    assert grid[0] < d < grid[-1]


def test_fc_best_d_stable_under_more_trials():
    p = NetworkParams.from_snr_db(10, 20)
    grid = np.logspace(-3, 0, 12)
    d1, _ = fc_best_d(p, grid, 20_000, 42)
    d2, _ = fc_best_d(p, grid, 40_000, 42)
    i1, i2 = (int(np.argmin(np.abs(grid - x))) for x in (d1, d2))
    assert abs(i1 - i2) <= 1
