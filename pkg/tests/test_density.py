import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from genrbf.data import Dataset
from genrbf.density import (EMDivergenceError, GaussianModel, _e_step, _m_step,
                            _pattern_groups, estimate_em, log_likelihood_observed,
                            penalized_objective)
from oracles import loglik_by_integration_2d, random_spd


def test_complete_data_gives_sample_moments(rng):
    X = rng.normal(size=(40, 3)) @ rng.normal(size=(3, 3))
    d = Dataset(X, np.zeros_like(X, bool), np.ones(40))
    m = estimate_em(d, ridge=1e-3)
    np.testing.assert_allclose(m.mean, X.mean(axis=0), atol=1e-12)
    S = np.cov(X, rowvar=False, bias=True) + 1e-3 * np.eye(3)
    np.testing.assert_allclose(m.cov, S, atol=1e-12)


def test_missing_row_does_not_move_1d_mean():
    d = Dataset.from_array([[1.0], [3.0], [np.nan]], [1, -1, 1])
    assert estimate_em(d).mean[0] == pytest.approx(2.0, abs=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_recovers_known_2d_gaussian(seed):
    rng = np.random.default_rng(seed)
    m = np.array([1.0, -1.0])
    S = np.array([[2.0, 1.0], [1.0, 2.0]])
    X = rng.multivariate_normal(m, S, size=2000)
    X[rng.random(X.shape) < 0.3] = np.nan
    model = estimate_em(Dataset.from_array(X, np.ones(2000)))
    assert np.abs(model.mean - m).max() < 0.1
    assert np.abs(model.cov - S).max() < 0.15


def test_never_observed_feature_errors():
    d = Dataset.from_array([[1.0, np.nan], [2.0, np.nan]], [1, -1])
    with pytest.raises(ValueError, match="never observed"):
        estimate_em(d)


def test_single_row_errors():
    with pytest.raises(ValueError):
        estimate_em(Dataset.from_array([[1.0]], [1]))


def test_loglik_standard_normal_peak():
    d = Dataset.from_array([[0.0]], [1])
    ll = log_likelihood_observed(d, GaussianModel([0.0], [[1.0]]))
    assert ll == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-15)


def test_loglik_fully_missing_row_is_zero(rng):
    S = random_spd(rng, 3)
    model = GaussianModel(rng.normal(size=3), S)
    d = Dataset.from_array([[np.nan, np.nan, np.nan]], [1])
    assert log_likelihood_observed(d, model) == 0.0


def test_loglik_matches_integration():
    rng = np.random.default_rng(7)
    S = random_spd(rng, 2, cond=5)
    m = rng.normal(size=2)
    X = rng.multivariate_normal(m, S, size=12)
    miss = np.zeros_like(X, bool)
    miss[:4, 0] = True
    miss[4:8, 1] = True
    miss[11] = True
    d = Dataset(X, miss, np.ones(12))
    expected = loglik_by_integration_2d(X, miss, m, S)
    assert abs(log_likelihood_observed(d, GaussianModel(m, S)) - expected) < 1e-6


def test_divergence_detected(monkeypatch):
    """A corrupted M-step that lowers the likelihood must raise."""
    import genrbf.density as dens

    def bad_m_step(X_hat, C_sum, ridge):
        mean, cov = _m_step(X_hat, C_sum, ridge)
        return mean + 10.0, cov

    monkeypatch.setattr(dens, "_m_step", bad_m_step)
    rng = np.random.default_rng(0)
    X = rng.normal(size=(50, 2))
    X[::3, 0] = np.nan
    with pytest.raises(EMDivergenceError):
        estimate_em(Dataset.from_array(X, np.ones(50)))


def test_json_round_trip(rng):
    m = GaussianModel(rng.normal(size=3), random_spd(rng, 3), ridge=0.01)
    doc = json.loads(m.to_json())
    assert set(doc) == {"mean", "covariance", "ridge"}
    back = GaussianModel.from_json(m.to_json())
    np.testing.assert_array_equal(back.mean, m.mean)
    np.testing.assert_array_equal(back.cov, m.cov)
    assert back.ridge == 0.01


def _random_masked(seed, M, N, p):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(M, N)) @ rng.normal(size=(N, N))
    miss = rng.random((M, N)) < p
    miss[0] = False
    return Dataset(X, miss, np.ones(M))


def _em_trace(d, ridge, iters=25):
    """Objective values along plain EM iterations from the default start."""
    groups = _pattern_groups(d.missing)
    observed = ~d.missing
    counts = observed.sum(axis=0)
    mean = np.where(observed, d.values, 0).sum(axis=0) / counts
    var = (np.where(observed, d.values - mean, 0) ** 2).sum(axis=0) / counts
    cov = np.diag(np.where(var > 0, var, max(ridge, 1e-6)))
    out = []
    for _ in range(iters):
        ll, X_hat, C_sum = _e_step(d.values, groups, mean, cov)
        out.append((ll, penalized_objective(ll, cov, len(d), ridge)))
        mean, cov = _m_step(X_hat, C_sum, ridge)
    return out


@given(st.integers(0, 10_000), st.integers(1, 5), st.floats(0.0, 0.5))
def test_loglik_monotone_without_ridge(seed, N, p):
    # enough rows that the unregularized maximum likelihood is well defined
    d = _random_masked(seed, 10 * N + 10, N, p)
    lls = [ll for ll, _ in _em_trace(d, ridge=0.0)]
    assert all(b >= a - 1e-8 for a, b in zip(lls, lls[1:]))


@given(st.integers(0, 10_000), st.integers(5, 40), st.integers(1, 5),
       st.floats(0.0, 0.7))
def test_penalized_objective_monotone_with_ridge(seed, M, N, p):
    d = _random_masked(seed, M, N, p)
    ridge = 1e-3
    objs = [obj for _, obj in _em_trace(d, ridge)]
    assert all(b >= a - 1e-8 * max(1.0, abs(a)) for a, b in zip(objs, objs[1:]))


@given(st.integers(0, 10_000), st.integers(5, 40), st.integers(1, 5),
       st.floats(0.0, 0.7))
def test_output_covariance_spd(seed, M, N, p):
    m = estimate_em(_random_masked(seed, M, N, p), max_iters=50)
    np.testing.assert_array_equal(m.cov, m.cov.T)
    np.linalg.cholesky(m.cov)


@given(st.integers(0, 10_000), st.integers(3, 30), st.integers(1, 5))
def test_empty_mask_equals_closed_form(seed, M, N):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(M, N))
    model = estimate_em(Dataset(X, np.zeros((M, N), bool), np.ones(M)), ridge=1e-4)
    S = np.cov(X, rowvar=False, bias=True).reshape(N, N) + 1e-4 * np.eye(N)
    np.testing.assert_allclose(model.mean, X.mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(model.cov, S, atol=1e-12)
