import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dprgmi import accountant
from dprgmi.accountant import (DEFAULT_ORDERS, RdpCurve, calibrate_sigma, compose, epsilon,
                               rdp_subsampled_gaussian, rdp_to_eps)
from dprgmi.errors import CalibrationError, ConfigError


def mp_rdp(q, sigma, alpha, dps=50):
    """Independent high-precision evaluation of the binomial moment bound."""
    with mpmath.workdps(dps):
        q, s = mpmath.mpf(q), mpmath.mpf(sigma)
        total = mpmath.fsum(mpmath.binomial(alpha, k) * (1 - q) ** (alpha - k) * q ** k
                            * mpmath.exp(mpmath.mpf(k * (k - 1)) / (2 * s ** 2))
                            for k in range(alpha + 1))
        return mpmath.log(total) / (alpha - 1)


def value_at(curve, alpha):
    return curve.values[curve.orders.index(alpha)]


# frozen high-precision reference values
FROZEN = [
    (0.01, 1.0, 8, 0.0008936439076060318473),
    (0.032, 2.0, 64, 4.503349836235411577878),
]


@pytest.mark.parametrize("q,sigma,alpha,ref", FROZEN)
def test_frozen_reference(q, sigma, alpha, ref):
    assert value_at(rdp_subsampled_gaussian(q, sigma), alpha) == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("q", [0.001, 0.01, 0.1, 0.5])
@pytest.mark.parametrize("sigma", [0.6, 1.0, 3.0])
@pytest.mark.parametrize("alpha", [2, 5, 16, 40])
def test_matches_mpmath(q, sigma, alpha):
    got = value_at(rdp_subsampled_gaussian(q, sigma), alpha)
    ref = float(mp_rdp(q, sigma, alpha))
    assert got == pytest.approx(ref, rel=1e-10, abs=1e-300)


@pytest.mark.parametrize("sigma", [0.5, 1.0, 4.0])
def test_full_batch_closed_form(sigma):
    c = rdp_subsampled_gaussian(1.0, sigma)
    np.testing.assert_allclose(c.values, np.array(c.orders) / (2 * sigma ** 2), rtol=1e-12)


def test_scan_oracle_eps():
    # brute-force scan over integer orders for q=1, sigma=1, T=1
    ref = min(a / 2 + math.log(1e5) / (a - 1) for a in range(2, 257))
    assert ref == pytest.approx(5.3025850929940456840, rel=1e-15)
    eps, order = rdp_to_eps(compose(rdp_subsampled_gaussian(1.0, 1.0), 1), 1e-5)
    assert eps == pytest.approx(ref, rel=1e-9)
    assert order == 6


def test_tie_breaks_to_smaller_order():
    # with delta = 1/e both orders give 1.5
    c = RdpCurve((2, 3), np.array([0.5, 1.0]))
    eps, order = rdp_to_eps(c, math.exp(-1.0))
    assert eps == pytest.approx(1.5) and order == 2


def test_monotone_in_sigma_q_steps():
    sig = np.linspace(0.5, 20, 30)
    e = [epsilon(0.01, s, 1000, 1e-5) for s in sig]
    assert np.all(np.diff(e) < 0)
    qs = np.linspace(0.001, 0.5, 30)
    e = [epsilon(q, 1.5, 100, 1e-5) for q in qs]
    assert np.all(np.diff(e) > 0)
    ts = np.arange(1, 31) * 50
    e = [epsilon(0.01, 1.5, t, 1e-5) for t in ts]
    assert np.all(np.diff(e) > 0)


@pytest.mark.parametrize("target", [0.7, 2.0, 8.0])
def test_calibration_round_trip(target):
    s = calibrate_sigma(target, 1e-5, 0.01, 2000)
    e = epsilon(0.01, s, 2000, 1e-5)
    assert target - 1e-3 <= e <= target


def test_calibration_unreachable_target():
    with pytest.raises(CalibrationError) as exc:
        calibrate_sigma(1e6, 1e-5, 0.01, 10)
    assert exc.value.bracket is not None


def test_calibration_expands_upper_bracket():
    s = calibrate_sigma(0.2, 1e-5, 1.0, 10_000)
    assert s > 500 and 0.2 - 1e-3 <= epsilon(1.0, s, 10_000, 1e-5) <= 0.2


@settings(max_examples=60, deadline=None)
@given(q=st.floats(1e-5, 1.0), sigma=st.floats(0.3, 50.0), steps=st.integers(1, 10_000))
def test_finite_and_nonnegative(q, sigma, steps):
    e = epsilon(q, sigma, steps, 1e-5)
    assert math.isfinite(e) and e >= 0


def test_zero_and_one_step_composition():
    c = rdp_subsampled_gaussian(0.05, 1.2)
    assert np.all(compose(c, 0).values == 0)
    np.testing.assert_array_equal(compose(c, 1).values, c.values)
    assert epsilon(0.05, 1.2, 0, 1e-5) == 0.0


def test_composition_associative():
    c = rdp_subsampled_gaussian(0.05, 1.2)
    np.testing.assert_allclose(compose(compose(c, 3), 7).values, compose(c, 21).values, rtol=1e-14)
    np.testing.assert_allclose(compose(c, 5).values + compose(c, 8).values, compose(c, 13).values,
                               rtol=1e-14)


def test_delta_near_one_lowers_eps():
    c = compose(rdp_subsampled_gaussian(0.1, 1.0), 100)
    assert rdp_to_eps(c, 1 - 1e-9)[0] < rdp_to_eps(c, 1e-5)[0]


@pytest.mark.parametrize("kw", [dict(q=0.0), dict(q=1.2), dict(sigma=0.0)])
def test_invalid_mechanism(kw):
    args = dict(q=0.1, sigma=1.0)
    args.update(kw)
    with pytest.raises(ConfigError):
        rdp_subsampled_gaussian(**args)


@pytest.mark.parametrize("delta", [0.0, 1.0, -1e-3])
def test_invalid_delta(delta):
    with pytest.raises(ConfigError):
        rdp_to_eps(rdp_subsampled_gaussian(0.1, 1.0), delta)


def test_default_order_grid():
    assert DEFAULT_ORDERS[0] == 2 and DEFAULT_ORDERS[-3:] == (64, 128, 256)
    assert accountant.DEFAULT_DELTA == 6e-6
