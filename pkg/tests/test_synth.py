import math

import numpy as np
import pytest

from signmfdfa.errors import UsageError
from signmfdfa.synth import (
    CascadeSpec,
    FgnSpec,
    analytic_binomial_hurst,
    binomial_cascade,
    fgn,
    fgn_autocovariance,
    sign_randomize,
)


def test_one_level():
    assert binomial_cascade(CascadeSpec(1, 0.75)).values.tolist() == [0.75, 0.25]


def test_two_levels():
    assert binomial_cascade(CascadeSpec(2, 0.75)).values.tolist() == [0.5625, 0.1875, 0.1875, 0.0625]


@pytest.mark.parametrize("k", [1, 4, 10, 16, 22])
@pytest.mark.parametrize("a", [0.55, 0.75, 0.9])
def test_mass_conservation(k, a):
    x = binomial_cascade(CascadeSpec(k, a)).values
    assert len(x) == 2**k
    assert math.fsum(x) == pytest.approx(1.0, abs=1e-12)
    assert np.all(x > 0)


@pytest.mark.parametrize("k", [2, 8, 15])
def test_pairwise_sums_give_previous_level(k):
    fine = binomial_cascade(CascadeSpec(k, 0.7)).values
    coarse = binomial_cascade(CascadeSpec(k - 1, 0.7)).values
    np.testing.assert_allclose(fine[0::2] + fine[1::2], coarse, rtol=2e-16, atol=0)


@pytest.mark.parametrize("bad", [{"levels": 0}, {"levels": 27}, {"a": 0.5}, {"a": 0.4}, {"a": 1.0}])
def test_cascade_spec_validation(bad):
    kw = {"levels": 8, "a": 0.75} | bad
    with pytest.raises(UsageError):
        CascadeSpec(**kw)


def test_sign_randomized_cascade():
    plain = binomial_cascade(CascadeSpec(14, 0.75)).values
    signed = binomial_cascade(CascadeSpec(14, 0.75, seed=3)).values
    assert np.array_equal(np.abs(signed), plain)
    frac = np.mean(signed < 0)
    assert abs(frac - 0.5) < 4 * 0.5 / np.sqrt(len(plain))
    assert np.array_equal(signed, sign_randomize(plain, 3))
    assert not np.array_equal(signed, sign_randomize(plain, 4))


def direct_h(q, a):
    return 1 / q - math.log2(a**q + (1 - a) ** q) / q


def test_analytic_hurst_values():
    assert analytic_binomial_hurst(1.0, 0.75) == pytest.approx(1.0, abs=1e-15)
    assert analytic_binomial_hurst(10.0, 0.75) == pytest.approx(direct_h(10, 0.75), rel=1e-13)
    assert analytic_binomial_hurst(10.0, 0.75) == pytest.approx(0.51504, abs=1e-5)
    assert analytic_binomial_hurst(2.0, 0.6) == pytest.approx(0.5 - math.log2(0.52) / 2, rel=1e-13)
    assert analytic_binomial_hurst(2.0, 0.6) == pytest.approx(0.97171, abs=1e-5)


def test_analytic_hurst_large_q_limit():
    assert analytic_binomial_hurst(200.0, 0.75) == pytest.approx(-math.log2(0.75), abs=6e-3)
    assert analytic_binomial_hurst(-200.0, 0.75) == pytest.approx(-math.log2(0.25), abs=6e-3)


def test_analytic_hurst_continuous_at_zero():
    a = 0.75
    h0 = analytic_binomial_hurst(0.0, a)
    assert h0 == pytest.approx(-(math.log2(a) + math.log2(1 - a)) / 2, rel=1e-15)
    assert abs(analytic_binomial_hurst(1e-6, a) - analytic_binomial_hurst(-1e-6, a)) <= 1e-5
    assert analytic_binomial_hurst(1e-6, a) == pytest.approx(h0, abs=1e-5)
    q = np.array([-0.5, 0.0, 0.5])
    np.testing.assert_allclose(
        analytic_binomial_hurst(q, a)[[0, 2]], [direct_h(-0.5, a), direct_h(0.5, a)], rtol=1e-13
    )


def test_fgn_white_noise_lag_one():
    n = 2**16
    x = fgn(FgnSpec(0.5, n, seed=1)).values
    r1 = np.corrcoef(x[:-1], x[1:])[0, 1]
    assert abs(r1) <= 3 / math.sqrt(n)


def test_fgn_deterministic():
    a = fgn(FgnSpec(0.7, 5000, seed=7)).values
    b = fgn(FgnSpec(0.7, 5000, seed=7)).values
    assert a.tobytes() == b.tobytes()
    assert len(a) == 5000
    assert not np.array_equal(a, fgn(FgnSpec(0.7, 5000, seed=8)).values)


def bartlett_se(gamma, k, n):
    """Standard error of the lag-k sample autocovariance (Bartlett's formula)."""
    j = np.arange(-(len(gamma) - 1 - k), len(gamma) - k)
    g = lambda m: gamma[np.abs(m)]
    return math.sqrt(np.sum(g(j) ** 2 + g(j + k) * g(j - k)) / n)


@pytest.mark.parametrize("hurst", [0.3, 0.5, 0.7])
def test_fgn_autocovariance(hurst):
    n = 2**16
    x = fgn(FgnSpec(hurst, n, seed=12)).values
    x = x - x.mean()
    gamma = fgn_autocovariance(np.arange(4000), hurst)
    for k in range(1, 11):
        sample = np.dot(x[:-k], x[k:]) / n
        assert abs(sample - gamma[k]) <= 4 * bartlett_se(gamma, k, n)


@pytest.mark.parametrize("hurst", [0.3, 0.5, 0.7])
def test_fgn_moments(hurst):
    n = 2**16
    x = fgn(FgnSpec(hurst, n, seed=3)).values
    # the sample mean of fGn has standard deviation n**(H-1)
    assert abs(x.mean()) <= 4 * n ** (hurst - 1)
    assert abs(x.var() - 1) <= 0.05


def test_fgn_non_power_of_two_length():
    assert len(fgn(FgnSpec(0.3, 1000, 0)).values) == 1000


@pytest.mark.parametrize("bad", [{"hurst": 0.0}, {"hurst": 1.0}, {"length": 0}, {"seed": -1}])
def test_fgn_spec_validation(bad):
    kw = {"hurst": 0.5, "length": 16, "seed": 0} | bad
    with pytest.raises(UsageError):
        FgnSpec(**kw)
