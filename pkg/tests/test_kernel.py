import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from genrbf import _backend
from genrbf.density import GaussianModel
from genrbf.kernel import (KernelError, KernelParams, PackedReps, embed_regularize,
                           gaussian_l2_inner, gaussian_l2_norm, gram, gram_cross,
                           kernel_value, lowrank_logdet, rbf, read_gram_binary,
                           read_gram_csv, write_gram_binary, write_gram_csv)
from genrbf.representation import PointRepresentation, ambient_cov, represent_dataset
from genrbf.subspace import orthonormalize
from conftest import random_incomplete, random_rep
from oracles import dense_genrbf, quadrature_l2_inner_2d, random_spd

GAMMAS = [2.0 ** k for k in range(-5, 16, 2)]


def test_params_validation():
    with pytest.raises(ValueError):
        KernelParams(0.0)
    with pytest.raises(ValueError):
        KernelParams(float("inf"))
    assert KernelParams.from_sigma(1.0).gamma == 0.25
    assert KernelParams(0.25).sigma2 == 1.0


def test_identical_reps_give_one(rng):
    rep = random_rep(rng, 4, "partial")
    assert kernel_value(rep, rep, 0.7) == pytest.approx(1.0, abs=1e-12)


def test_classical_reduction_example():
    a = PointRepresentation.dirac([0.0, 0.0])
    b = PointRepresentation.dirac([2.0, 0.0])
    assert kernel_value(a, b, 0.25) == pytest.approx(math.exp(-1.0), abs=1e-16)


def test_one_d_dirac_vs_fully_missing():
    a = PointRepresentation.dirac([0.0])
    b = PointRepresentation([0.0], [[1.0]], [[1.0]])
    expected = 2 ** 0.25 / 1.5 ** 0.5
    assert kernel_value(a, b, 0.25) == pytest.approx(expected, abs=1e-14)
    assert expected == pytest.approx(0.97098, abs=1e-5)


def test_one_d_dirac_vs_fully_missing_by_integration():
    from scipy import integrate, stats
    # ψ are the unit-normalized smoothed densities: N(0,1) and N(0,2)
    f = stats.norm(0, 1).pdf
    g = stats.norm(0, math.sqrt(2)).pdf
    inner = integrate.quad(lambda t: f(t) * g(t), -np.inf, np.inf)[0]
    nf = math.sqrt(integrate.quad(lambda t: f(t) ** 2, -np.inf, np.inf)[0])
    ng = math.sqrt(integrate.quad(lambda t: g(t) ** 2, -np.inf, np.inf)[0])
    b = PointRepresentation([0.0], [[1.0]], [[1.0]])
    assert kernel_value(PointRepresentation.dirac([0.0]), b, 0.25) == pytest.approx(
        inner / (nf * ng), rel=1e-10)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        kernel_value(PointRepresentation.dirac([0.0]), PointRepresentation.dirac([0.0, 1.0]), 1)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_overflow_names_factor():
    big = PointRepresentation([0.0], [[1.0]], [[1e300]])
    with pytest.raises(KernelError, match="det"):
        kernel_value(big, PointRepresentation.dirac([0.0]), 1e300)


def test_l2_inner_examples():
    assert gaussian_l2_inner([0.0], [[0.5]], [0.0], [[0.5]]) == pytest.approx(
        1 / math.sqrt(2 * math.pi), rel=1e-14)
    assert gaussian_l2_inner([0.0], [[1.0]], [2.0], [[1.0]]) == pytest.approx(
        math.exp(-1) / math.sqrt(4 * math.pi), rel=1e-14)
    with pytest.raises(ValueError):
        gaussian_l2_inner([0.0], [[-1.0]], [0.0], [[0.5]])


def test_l2_inner_matches_quadrature(rng):
    for _ in range(5):
        S1, S2 = random_spd(rng, 2, 5), random_spd(rng, 2, 5)
        m1, m2 = rng.normal(size=2), rng.normal(size=2)
        q = quadrature_l2_inner_2d(m1, S1, m2, S2)
        assert abs(gaussian_l2_inner(m1, S1, m2, S2) - q) / q < 1e-4


def test_embed_examples():
    m, S = embed_regularize(PointRepresentation.dirac([1.0, 2.0]), 0.25)
    np.testing.assert_array_equal(m, [1.0, 2.0])
    np.testing.assert_array_equal(S, np.eye(2))
    m, S = embed_regularize(PointRepresentation([0.0], [[1.0]], [[1.0]]), 0.25)
    np.testing.assert_array_equal(S, [[2.0]])


def test_lowrank_logdet_vs_dense(rng):
    for _ in range(50):
        N = int(rng.integers(1, 10))
        rep = random_rep(rng, N)
        c = float(rng.uniform(0.01, 100))
        dense = np.linalg.det(np.eye(N) + c * ambient_cov(rep))
        assert abs(math.exp(lowrank_logdet(rep, c)) - dense) / dense < 1e-10


def test_gram_single_point(rng):
    np.testing.assert_array_equal(gram([random_rep(rng, 3)], 1.0), [[1.0]])


def test_gram_complete_matches_rbf(rng):
    X = rng.normal(size=(20, 5))
    K = gram([PointRepresentation.dirac(x) for x in X], 0.3)
    assert np.abs(K - rbf(X, X, 0.3)).max() < 1e-12


def test_gram_psd_example(rng):
    d = random_incomplete(rng, 30, 6, 0.4)
    model = GaussianModel(np.zeros(6), random_spd(rng, 6))
    reps = represent_dataset(model, d.values, d.missing)
    K = gram(reps, float(rng.choice(GAMMAS[:6])))
    assert np.linalg.eigvalsh(K).min() >= -1e-8 * 30


def test_gram_cross_consistency(rng):
    reps = [random_rep(rng, 4) for _ in range(12)]
    K = gram(reps, 0.5)
    assert np.abs(gram_cross(reps, reps, 0.5) - K).max() < 1e-12
    assert np.abs(gram_cross(reps[:5], reps[5:], 0.5) - K[:5, 5:]).max() < 1e-12
    assert gram_cross(reps[:1], reps[:1], 0.5)[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_gram_matches_reference_entries(rng):
    reps = [random_rep(rng, 5) for _ in range(10)]
    K = gram(reps, 0.8)
    for i in range(10):
        for j in range(i + 1, 10):
            assert abs(K[i, j] - kernel_value(reps[i], reps[j], 0.8)) < 1e-12


def test_gram_independent_of_threads(rng):
    reps = [random_rep(rng, 5) for _ in range(25)]
    np.testing.assert_array_equal(gram(reps, 0.5, n_threads=1), gram(reps, 0.5, n_threads=3))


def test_gram_file_round_trips(tmp_path, rng):
    reps = [random_rep(rng, 3) for _ in range(7)]
    K = gram(reps, 0.5)
    write_gram_binary(K, tmp_path / "k.bin")
    np.testing.assert_array_equal(read_gram_binary(tmp_path / "k.bin"), K)
    raw = (tmp_path / "k.bin").read_bytes()
    assert raw[:4] == b"GRBF" and int.from_bytes(raw[4:8], "little") == 7
    assert len(raw) == 8 + 8 * 7 * 8 // 2
    write_gram_csv(K, tmp_path / "k.csv")
    np.testing.assert_array_equal(read_gram_csv(tmp_path / "k.csv"), K)


def test_packed_logdets_match(rng):
    reps = [random_rep(rng, 4) for _ in range(6)]
    P = PackedReps(reps)
    for r, ld in zip(reps, P.logdets(0.7)):
        assert abs(ld - lowrank_logdet(r, 2.8)) < 1e-12


@st.composite
def rep_pairs(draw, max_dim=8):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    N = draw(st.integers(1, max_dim))
    kinds = st.sampled_from(["dirac", "full", "partial", None])
    a = random_rep(rng, N, draw(kinds))
    b = random_rep(rng, N, draw(kinds))
    gamma = draw(st.sampled_from(GAMMAS[:6]))
    return a, b, gamma


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 20), st.sampled_from(GAMMAS))
def test_reduction_property(seed, N, gamma):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=N), rng.normal(size=N)
    k = kernel_value(PointRepresentation.dirac(x), PointRepresentation.dirac(y), gamma)
    assert abs(k - math.exp(-gamma * np.sum((x - y) ** 2))) < 1e-12


@given(rep_pairs())
def test_symmetry_range_normalization(pair):
    a, b, gamma = pair
    kab, kba = kernel_value(a, b, gamma), kernel_value(b, a, gamma)
    assert abs(kab - kba) < 1e-12
    assert 0 < kab <= 1 + 1e-10
    assert abs(kernel_value(a, a, gamma) - 1) < 1e-10


@given(rep_pairs())
def test_factorized_consistency(pair):
    a, b, gamma = pair
    ma, Sa = embed_regularize(a, gamma)
    mb, Sb = embed_regularize(b, gamma)
    via_parts = gaussian_l2_inner(ma, Sa, mb, Sb) / (gaussian_l2_norm(Sa) * gaussian_l2_norm(Sb))
    assert abs(kernel_value(a, b, gamma) - via_parts) < 1e-10


@given(rep_pairs())
def test_matches_dense_oracle(pair):
    a, b, gamma = pair
    ref = dense_genrbf(a.mean, ambient_cov(a), b.mean, ambient_cov(b), gamma)
    assert abs(kernel_value(a, b, gamma) - ref) < 1e-10


@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 30), st.integers(1, 8),
       st.floats(0.0, 0.7), st.sampled_from(GAMMAS[:6]))
def test_gram_psd_property(seed, M, N, p, gamma):
    rng = np.random.default_rng(seed)
    d = random_incomplete(rng, M, N, p, min_per_class=1)
    reps = represent_dataset(GaussianModel(rng.normal(size=N), random_spd(rng, N)),
                             d.values, d.missing)
    K = gram(reps, gamma)
    assert np.abs(K - K.T).max() <= 1e-12
    assert np.all(np.diag(K) == 1.0)
    assert np.linalg.eigvalsh(K).min() >= -1e-8 * M


@pytest.mark.skipif(_backend.compiled_core is None, reason="compiled core not built")
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 25), st.integers(1, 8),
       st.sampled_from(GAMMAS))
def test_backends_agree_on_gram(seed, M, N, gamma):
    rng = np.random.default_rng(seed)
    rows = [random_rep(rng, N) for _ in range(M)]
    cols = [random_rep(rng, N) for _ in range(3)]
    # entries are sensitive to input round-off in proportion to gamma
    tol = 1e-12 + 1e-13 * gamma
    Kc = gram(rows, gamma, core=_backend.compiled_core)
    Kp = gram(rows, gamma, core=_backend.python_core)
    assert np.abs(Kc - Kp).max() < tol
    Cc = gram_cross(rows, cols, gamma, core=_backend.compiled_core)
    Cp = gram_cross(rows, cols, gamma, core=_backend.python_core)
    assert np.abs(Cc - Cp).max() < tol


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 10),
       st.sampled_from(["dirac", "full", "partial", None]), st.sampled_from(GAMMAS))
def test_self_kernel_full_grid(seed, N, kind, gamma):
    rep = random_rep(np.random.default_rng(seed), N, kind)
    assert abs(kernel_value(rep, rep, gamma) - 1.0) < 1e-10
