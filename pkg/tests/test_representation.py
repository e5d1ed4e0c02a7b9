import numpy as np
import pytest
from hypothesis import given, strategies as st

from genrbf.density import GaussianModel
from genrbf.representation import (PointRepresentation, ambient_cov, condition,
                                   represent_dataset)
from genrbf.subspace import MissingSubspacePoint, from_mask, orthonormalize
from oracles import random_spd, schur_conditional


def test_complete_point_is_dirac(rng):
    x = rng.normal(size=3)
    rep = condition(GaussianModel(np.zeros(3), np.eye(3)), from_mask(x, np.zeros(3, bool)))
    assert rep.rank == 0
    np.testing.assert_array_equal(rep.mean, x)


def test_two_d_schur_example():
    model = GaussianModel([0.0, 0.0], [[2.0, 1.0], [1.0, 2.0]])
    rep = condition(model, from_mask(np.array([0.0, 1.0]), np.array([True, False])))
    np.testing.assert_allclose(rep.mean, [0.5, 1.0], atol=1e-15)
    np.testing.assert_allclose(rep.small_cov, [[1.5]], atol=1e-15)


def test_fully_missing_returns_model(rng):
    S = random_spd(rng, 4)
    m = rng.normal(size=4)
    rep = condition(GaussianModel(m, S), from_mask(rng.normal(size=4), np.ones(4, bool)))
    np.testing.assert_allclose(rep.mean, m, atol=1e-12)
    np.testing.assert_allclose(rep.small_cov, S, atol=1e-12)


def test_ambient_cov_examples():
    assert not ambient_cov(PointRepresentation.dirac([1.0, 2.0])).any()
    rep = PointRepresentation([0.5, 1.0], [[1.0], [0.0]], [[1.5]])
    np.testing.assert_array_equal(ambient_cov(rep), [[1.5, 0.0], [0.0, 0.0]])


def test_ambient_cov_spectrum(rng):
    for _ in range(20):
        N = int(rng.integers(2, 9))
        n = int(rng.integers(1, N + 1))
        v = orthonormalize(rng.normal(size=(N, n)))
        Sv = random_spd(rng, n)
        rep = PointRepresentation(rng.normal(size=N), v, Sv)
        ev = np.sort(np.linalg.eigvalsh(ambient_cov(rep)))
        expected = np.sort(np.concatenate([np.linalg.eigvalsh(Sv), np.zeros(N - n)]))
        assert np.abs(ev - expected).max() < 1e-10


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        condition(GaussianModel(np.zeros(2), np.eye(2)), MissingSubspacePoint(np.zeros(3),
                                                                             np.eye(3)[:, :1]))


def test_json_round_trip(rng):
    rep = condition(GaussianModel(np.zeros(3), random_spd(rng, 3)),
                    from_mask(rng.normal(size=3), np.array([True, False, True])))
    back = PointRepresentation.from_dict(rep.to_dict())
    np.testing.assert_array_equal(back.mean, rep.mean)
    np.testing.assert_array_equal(back.basis, rep.basis)
    np.testing.assert_array_equal(back.small_cov, rep.small_cov)


@st.composite
def conditioning_cases(draw):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    N = draw(st.integers(1, 10))
    mask = np.array(draw(st.lists(st.booleans(), min_size=N, max_size=N)))
    S = random_spd(rng, N)
    m = rng.normal(size=N)
    x = rng.normal(size=N)
    return m, S, x, mask


@given(conditioning_cases())
def test_matches_schur_complement(case):
    m, S, x, mask = case
    rep = condition(GaussianModel(m, S), from_mask(x, mask))
    cm, cS = schur_conditional(m, S, x, mask)
    miss = np.flatnonzero(mask)
    assert np.abs(rep.mean[miss] - cm).max(initial=0) < 1e-9
    Sa = ambient_cov(rep)
    assert np.abs(Sa[np.ix_(miss, miss)] - cS).max(initial=0) < 1e-9


@given(conditioning_cases())
def test_observed_coordinates_exact_and_mean_in_subspace(case):
    m, S, x, mask = case
    p = from_mask(x, mask)
    rep = condition(GaussianModel(m, S), p)
    np.testing.assert_array_equal(rep.mean[~mask], x[~mask])
    d = rep.mean - p.base
    assert np.linalg.norm(d - p.basis @ (p.basis.T @ d)) < 1e-9


@given(conditioning_cases(), st.integers(0, 1000))
def test_placeholder_invariance(case, seed):
    m, S, x, mask = case
    model = GaussianModel(m, S)
    p1 = from_mask(x, mask)
    shift = np.random.default_rng(seed).normal(size=p1.rank)
    p2 = MissingSubspacePoint(p1.base + p1.basis @ shift, p1.basis)
    r1, r2 = condition(model, p1), condition(model, p2)
    assert np.abs(r1.mean - r2.mean).max() < 1e-9
    assert np.abs(ambient_cov(r1) - ambient_cov(r2)).max() < 1e-9


def test_non_canonical_basis_matches_dense_formula(rng):
    for _ in range(20):
        N = int(rng.integers(2, 8))
        n = int(rng.integers(1, N + 1))
        v = orthonormalize(rng.normal(size=(N, n)))
        S = random_spd(rng, N)
        m, x = rng.normal(size=N), rng.normal(size=N)
        rep = condition(GaussianModel(m, S), MissingSubspacePoint(x, v))
        Si = np.linalg.inv(S)
        Sv = np.linalg.inv(v.T @ Si @ v)
        mv = Sv @ v.T @ Si @ (m - x)
        np.testing.assert_allclose(rep.small_cov, Sv, atol=1e-9)
        np.testing.assert_allclose(rep.mean, x + v @ mv, atol=1e-9)


def test_represent_dataset(rng):
    S = random_spd(rng, 3)
    X = rng.normal(size=(5, 3))
    miss = rng.random((5, 3)) < 0.4
    reps = represent_dataset(GaussianModel(np.zeros(3), S), X, miss)
    assert [r.rank for r in reps] == miss.sum(axis=1).tolist()
