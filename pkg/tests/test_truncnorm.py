import numpy as np
import pytest
from scipy.stats import truncnorm as sp_truncnorm

from ordlag.truncnorm import log_interval_prob, sample_truncnorm

CASES = [
    # (mu, sigma, lo, hi)
    (0.0, 1.0, -np.inf, 0.0),
    (0.0, 1.0, 0.0, np.inf),
    (1.5, 2.0, -1.0, 3.0),
    (-2.0, 0.5, -2.5, -1.8),
    (0.0, 1.0, 5.0, np.inf),       # deep upper tail
    (0.0, 1.0, -np.inf, -5.0),     # deep lower tail
    (0.0, 1.0, 5.0, 5.5),          # bounded interval in the tail
    (3.0, 2.0, 13.5, 14.0),        # > 5 sigma with offset mean
    (0.0, 1.0, -0.1, 0.1),
    (10.0, 3.0, -np.inf, 2.0),
    (0.0, 1.0, 8.0, 9.0),
    (-4.0, 0.25, -3.0, np.inf),
]


def _analytic_moments(mu, sigma, lo, hi):
    a = -np.inf if np.isneginf(lo) else (lo - mu) / sigma
    b = np.inf if np.isposinf(hi) else (hi - mu) / sigma
    mean, var = sp_truncnorm.stats(a, b, loc=mu, scale=sigma, moments="mv")
    return float(mean), float(var)


@pytest.mark.parametrize("mu,sigma,lo,hi", CASES)
def test_moments_match_analytic(mu, sigma, lo, hi):
    rng = np.random.default_rng(123)
    N = 200_000
    x = sample_truncnorm(rng, np.full(N, mu), sigma, lo, hi)
    assert np.all(x >= lo) and np.all(x <= hi)
    mean, var = _analytic_moments(mu, sigma, lo, hi)
    se_mean = np.sqrt(var / N)
    m4 = ((x - x.mean()) ** 4).mean()
    se_var = np.sqrt(max(m4 - x.var() ** 2, 0) / N)
    assert abs(x.mean() - mean) < 4 * se_mean + 1e-12
    assert abs(x.var(ddof=1) - var) < 4 * se_var + 1e-12


def test_upper_truncated_standard_normal_mean():
    # E[X | X <= 0] for X ~ N(0,1) is -sqrt(2/pi)
    rng = np.random.default_rng(7)
    x = sample_truncnorm(rng, np.zeros(1_000_000), 1.0, -np.inf, 0.0)
    assert abs(x.mean() - (-np.sqrt(2 / np.pi))) < 0.003


def test_log_interval_prob_matches_direct():
    from scipy.stats import norm
    rng = np.random.default_rng(5)
    a = rng.uniform(-3, 2.5, size=200)
    b = a + rng.uniform(0.01, 3, size=200)
    direct = np.log(norm.cdf(b) - norm.cdf(a))
    np.testing.assert_allclose(log_interval_prob(a, b), direct, rtol=1e-9)


def test_log_interval_prob_tails():
    # symmetric flip must keep deep-tail intervals finite and exact:
    # log(Phi(9) - Phi(8)) = log(sf(8) - sf(9)), evaluable in the tail
    from scipy.stats import norm
    lp = log_interval_prob(np.array([8.0]), np.array([9.0]))
    ref = np.log(norm.sf(8.0) - norm.sf(9.0))
    assert np.isfinite(lp[0])
    assert lp[0] == pytest.approx(ref, rel=1e-9)


def test_log_interval_prob_infinite_edges():
    assert log_interval_prob(-np.inf, np.inf) == pytest.approx(0.0)
    assert log_interval_prob(-np.inf, 0.0) == pytest.approx(np.log(0.5))
    assert log_interval_prob(0.0, np.inf) == pytest.approx(np.log(0.5))
