import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from doublesampling.numerics import (
    TruncatedGaussianSpec,
    beta_quantile,
    std_normal_cdf,
    student_t_quantile,
    truncated_normal_cdf,
    truncnorm_sf,
)

mp.mp.dps = 50


def mp_phi(z):
    return mp.erfc(-mp.mpf(z) / mp.sqrt(2)) / 2


def mp_mass(lo, hi):
    # Probability of [lo, hi] under N(0, 1), taken from whichever tail avoids
    # cancelling two numbers close to 1.
    if lo >= 0:
        return mp_phi(-lo) - mp_phi(-hi)
    return mp_phi(hi) - mp_phi(lo)


def mp_truncnorm_sf(x, mu, s, lo=0.0, hi=1.0):
    a, b, z = (mp.mpf(lo) - mu) / s, (mp.mpf(hi) - mu) / s, (mp.mpf(x) - mu) / s
    return mp_mass(z, b) / mp_mass(a, b)


def test_normal_cdf_values():
    assert std_normal_cdf(0.0) == 0.5
    assert abs(std_normal_cdf(1.96) - 0.9750021) <= 1e-7
    assert abs(std_normal_cdf(1.96) - float(mp_phi(1.96))) <= 1e-10


@pytest.mark.parametrize("z", [-8.0, -3.3, -1.0, -0.1, 0.7, 2.5, 6.0, 9.0])
def test_normal_cdf_matches_erf_oracle(z):
    assert abs(std_normal_cdf(z) - float(mp_phi(z))) <= 1e-10


def test_normal_cdf_saturates():
    assert std_normal_cdf(-60.0) == 0.0
    assert std_normal_cdf(60.0) == 1.0


@given(st.floats(-10, 10))
def test_normal_cdf_symmetry(z):
    assert abs(std_normal_cdf(-z) - (1 - std_normal_cdf(z))) <= 1e-15


def test_truncated_cdf_examples():
    spec = TruncatedGaussianSpec(0.5, 0.3)
    assert abs(truncated_normal_cdf(0.5, spec) - 0.5) <= 1e-15
    assert truncated_normal_cdf(0.0, spec) == 0.0
    assert truncated_normal_cdf(1.0, spec) == 1.0
    assert truncated_normal_cdf(-3.0, spec) == 0.0
    assert truncated_normal_cdf(4.0, spec) == 1.0


def test_truncated_tail_against_high_precision_oracle():
    oracle = float(mp_truncnorm_sf(0.8, 0.2, 0.1))
    assert abs(oracle - 1.01e-9) < 1e-11
    assert abs(truncnorm_sf(0.8, 0.2, 0.1) - oracle) <= 1e-10
    assert abs(truncated_normal_cdf(0.8, TruncatedGaussianSpec(0.2, 0.1)) - (1 - oracle)) <= 1e-10
    # relative accuracy of the tail itself
    assert truncnorm_sf(0.8, 0.2, 0.1) == pytest.approx(oracle, rel=1e-9)


@settings(max_examples=200)
@given(st.floats(0, 1), st.floats(-0.5, 1.5), st.floats(0.01, 2.0))
def test_truncated_tail_matches_oracle_everywhere(x, mu, s):
    assert abs(truncnorm_sf(x, mu, s) - float(mp_truncnorm_sf(x, mu, s))) <= 1e-10


@given(st.floats(0, 1), st.floats(0, 1), st.floats(-0.5, 1.5), st.floats(0.01, 2.0))
def test_truncated_cdf_monotone(x1, x2, mu, s):
    lo, hi = sorted((x1, x2))
    spec = TruncatedGaussianSpec(mu, s)
    assert 0.0 <= truncated_normal_cdf(lo, spec) <= truncated_normal_cdf(hi, spec) <= 1.0


def test_truncated_spec_validation():
    with pytest.raises(ValueError):
        TruncatedGaussianSpec(0.0, 1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        TruncatedGaussianSpec(0.0, -1.0)
    with pytest.raises(ValueError):
        truncated_normal_cdf(0.3, TruncatedGaussianSpec(0.5, 0.0))


def test_beta_quantile_examples():
    assert beta_quantile(0.5, 1, 1) == pytest.approx(0.5, abs=1e-12)
    assert abs(beta_quantile(0.5, 2, 1) - math.sqrt(0.5)) <= 1e-6
    assert abs(beta_quantile(0.5, 2, 1) - 0.7071068) <= 1e-6


@settings(max_examples=200)
@given(st.floats(1e-6, 1 - 1e-6), st.floats(0.2, 500), st.floats(0.2, 500))
def test_beta_quantile_round_trip(q, a, b):
    x = beta_quantile(q, a, b)
    assert 0.0 <= x <= 1.0
    cdf = lambda v: float(mp.betainc(a, b, 0, v, regularized=True))
    if abs(cdf(x) - q) > 1e-8:
        # quantile not representable to that accuracy: x must be the nearest double
        assert cdf(np.nextafter(x, 0.0)) - 1e-8 <= q <= cdf(np.nextafter(x, 1.0)) + 1e-8


@given(st.floats(0.01, 0.99), st.floats(0.5, 50), st.floats(0.5, 50))
def test_beta_quantile_reflection(q, a, b):
    assert beta_quantile(q, a, b) + beta_quantile(1 - q, b, a) == pytest.approx(1.0, abs=1e-9)


def test_beta_quantile_rejects_bad_level():
    for q in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            beta_quantile(q, 2, 2)
    with pytest.raises(ValueError):
        beta_quantile(0.5, 0, 1)


def test_student_t_quantile_examples():
    assert student_t_quantile(0.5, 3.0, location=1.7, scale=2.0) == pytest.approx(1.7, abs=1e-12)
    assert abs(student_t_quantile(0.75, 1.0) - 1.0) <= 1e-8
    normal_q = float(mp.sqrt(2) * mp.erfinv(2 * mp.mpf("0.975") - 1))
    assert abs(student_t_quantile(0.975, 1e6) - normal_q) <= 1e-3


def mp_t_cdf(x, nu):
    nu = mp.mpf(nu)
    w = nu / (nu + mp.mpf(x) ** 2)
    tail = mp.betainc(nu / 2, mp.mpf(1) / 2, 0, w, regularized=True) / 2
    return 1 - tail if x > 0 else tail


@settings(max_examples=100)
@given(st.floats(1e-4, 1 - 1e-4), st.floats(0.5, 200), st.floats(-3, 3), st.floats(0.1, 5))
def test_student_t_round_trip(q, nu, loc, scale):
    x = student_t_quantile(q, nu, loc, scale)
    assert abs(float(mp_t_cdf((x - loc) / scale, nu)) - q) <= 1e-8


def test_student_t_validation():
    with pytest.raises(ValueError):
        student_t_quantile(1.0, 2.0)
    with pytest.raises(ValueError):
        student_t_quantile(0.4, 0.0)
    with pytest.raises(ValueError):
        student_t_quantile(0.4, 2.0, scale=0.0)


def test_vectorized_inputs():
    q = np.array([0.1, 0.5, 0.9])
    assert beta_quantile(q, 2.0, 3.0).shape == (3,)
    assert student_t_quantile(q, np.array([1.0, 2.0, 3.0])).shape == (3,)
    assert truncnorm_sf(q, 0.5, np.array([0.1, 0.2, 0.3])).shape == (3,)
