import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from egmrank.spectral import SpectralMatrix
from egmrank.svdcore import (NumericalError, jacobi_svd, profile_from_values, rank_estimate,
                             reconstruction_residual, svd_profile)


def gram_oracle(b):
    """Singular values from the eigenvalues of the smaller Gram matrix."""
    g = b @ b.T if b.shape[0] <= b.shape[1] else b.T @ b
    ev = np.linalg.eigvalsh(g)[::-1]
    return np.sqrt(np.clip(ev, 0, None))


@pytest.mark.parametrize("shape", [(9, 130), (130, 9), (1, 5), (5, 1), (4, 4)])
def test_matches_lapack(shape):
    b = np.random.default_rng(0).random(shape)
    u, s, v = jacobi_svd(b)
    np.testing.assert_allclose(s, np.linalg.svd(b, compute_uv=False), rtol=1e-12, atol=1e-13)
    assert reconstruction_residual(b, u, s, v) < 1e-13
    k = min(shape)
    np.testing.assert_allclose(u.T @ u, np.eye(k), atol=1e-12)
    np.testing.assert_allclose(v.T @ v, np.eye(k), atol=1e-12)


def test_gram_oracle_agreement():
    b = np.random.default_rng(1).random((9, 130))
    s = svd_profile(b).sigmas
    np.testing.assert_allclose(s, gram_oracle(b), rtol=1e-9, atol=1e-9 * s[0])


def test_rank_one_second_value_is_roundoff():
    rng = np.random.default_rng(2)
    b = np.outer(rng.random(9), rng.random(130))
    p = svd_profile(b)
    assert p.normalized[0] == 1.0 and p.sigma2 < 1e-12
    assert p.rank_estimate == 1


def test_small_singular_values_keep_relative_accuracy():
    # sigma = 1, 1e-6, 1e-12: squaring into the Gram matrix alone would lose the last one
    rng = np.random.default_rng(3)
    u, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    v, _ = np.linalg.qr(rng.normal(size=(40, 3)))
    s = np.array([1.0, 1e-6, 1e-12])
    b = (u * s) @ v.T
    got = jacobi_svd(b)[1]
    np.testing.assert_allclose(got[:2], s[:2], rtol=1e-8)
    assert got[2] < 1e-10


def test_zero_matrix():
    p = svd_profile(np.zeros((3, 5)))
    np.testing.assert_array_equal(p.normalized, 0.0)
    assert p.rank_estimate == 0


def test_accepts_spectral_matrix():
    b = SpectralMatrix(np.eye(2, 4), np.arange(1.0, 5.0))
    assert svd_profile(b).sigma2 == 1.0


def test_rejects_nonfinite_and_bad_shapes():
    with pytest.raises(ValueError):
        jacobi_svd(np.array([[1.0, np.inf]]))
    with pytest.raises(ValueError):
        jacobi_svd(np.ones(3))


def test_non_convergence_raises():
    b = np.random.default_rng(4).random((4, 10))
    with pytest.raises(NumericalError):
        jacobi_svd(b, tol=0.0, max_sweeps=1)


def test_rank_estimate_threshold():
    p = profile_from_values([10.0, 1.0, 0.4, 0.1])
    assert rank_estimate(p, 0.05) == 2
    assert rank_estimate(p, 0.01) == 4
    with pytest.raises(ValueError):
        rank_estimate(p, 1.5)
    with pytest.raises(ValueError):
        profile_from_values([1.0, -0.1])


mats = arrays(np.float64, st.tuples(st.integers(1, 9), st.integers(1, 40)),
              elements=st.floats(0, 100, allow_nan=False, allow_infinity=False))


@settings(max_examples=60, deadline=None)
@given(mats)
def test_profile_properties(b):
    p = svd_profile(b)
    assert np.all(np.diff(p.sigmas) <= 1e-12 * max(1.0, p.sigmas[0]))
    assert np.all((p.normalized >= 0) & (p.normalized <= 1 + 1e-12))
    ref = np.linalg.svd(b, compute_uv=False)
    np.testing.assert_allclose(p.sigmas, ref, atol=1e-10 * max(1.0, ref[0]))


@settings(max_examples=40, deadline=None)
@given(mats, st.floats(1e-3, 1e3), st.randoms(use_true_random=False))
def test_profile_invariant_to_scaling_and_row_order(b, scale, rnd):
    p = svd_profile(b)
    rows = list(range(b.shape[0]))
    rnd.shuffle(rows)
    q = svd_profile(scale * b[rows])
    np.testing.assert_allclose(q.normalized, p.normalized, atol=1e-9)
