import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmtlab.ensembles import EnsembleConfig, sample_wigner
from rmtlab.tridiag import eigh_qr, householder_tridiagonalize


@pytest.mark.parametrize("beta", [1, 2])
def test_householder_is_similarity(beta):
    h = sample_wigner(EnsembleConfig.gaussian(beta, 25, seed=4), 0).entries
    d, e, q = householder_tridiagonalize(h)
    t = np.diag(d) + np.diag(e[:-1] if e.size == d.size else e, 1) + np.diag(e[:-1] if e.size == d.size else e, -1)
    assert np.allclose(q.conj().T @ h @ q, t, atol=1e-12)
    assert np.allclose(q.conj().T @ q, np.eye(25), atol=1e-12)


@pytest.mark.parametrize("beta", [1, 2])
def test_qr_matches_lapack(beta):
    h = sample_wigner(EnsembleConfig.gaussian(beta, 60, seed=9), 2).entries
    w, v = eigh_qr(h, want_vectors=True)
    assert np.allclose(w, np.linalg.eigvalsh(h), atol=1e-11)
    assert np.allclose(h @ v, v * w[None, :], atol=1e-10)


def test_tiny_cases():
    assert np.allclose(eigh_qr(np.zeros((3, 3)))[0], 0.0)
    assert np.allclose(eigh_qr(np.array([[0.0, 1.0], [1.0, 0.0]]))[0], [-1.0, 1.0])
    assert np.allclose(eigh_qr(np.array([[5.0]]))[0], [5.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(0, 10**6))
def test_qr_agrees_on_random_symmetric(n, seed):
    a = np.random.default_rng(seed).standard_normal((n, n))
    a = a + a.T
    assert np.allclose(eigh_qr(a)[0], np.linalg.eigvalsh(a), atol=1e-10)
