import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from rmtlab.ensembles import EnsembleConfig, sample_wigner
from rmtlab.errors import DomainError
from rmtlab.spectral import (
    Spectrum,
    classical_locations,
    count_in_interval,
    eigen_decompose,
    eigenvalue_batch,
    empirical_stieltjes,
    minor_analysis,
    self_consistency_residual,
    semicircle_cdf,
    semicircle_density,
    semicircle_stieltjes,
)


class TestEigenDecompose:
    def test_zero_matrix(self):
        assert np.array_equal(eigen_decompose(np.zeros((3, 3))).eigenvalues, np.zeros(3))

    def test_diagonal(self):
        assert np.allclose(eigen_decompose(np.diag([2.0, -1.0])).eigenvalues, [-1, 2])

    def test_off_diagonal_pair(self):
        assert np.allclose(eigen_decompose(np.array([[0.0, 1.0], [1.0, 0.0]])).eigenvalues, [-1, 1])

    @pytest.mark.parametrize("method", ["lapack", "qr"])
    def test_vectors_orthonormal_and_phase_fixed(self, method):
        H = sample_wigner(EnsembleConfig.gaussian(2, 40, seed=3), 1)
        s = eigen_decompose(H, want_vectors=True, method=method)
        v = s.eigenvectors
        assert np.allclose(v.conj().T @ v, np.eye(40), atol=1e-10)
        top = v[np.argmax(np.abs(v), axis=0), np.arange(40)]
        assert np.allclose(top.imag, 0, atol=1e-12) and np.all(top.real > 0)
        assert np.all(np.diff(s.eigenvalues) >= 0)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            eigen_decompose(np.eye(2), method="jacobi")

    def test_save_load_round_trip(self, tmp_path):
        H = sample_wigner(EnsembleConfig.gaussian(2, 8, seed=1), 0)
        s = eigen_decompose(H, want_vectors=True)
        s.save(tmp_path / "s.tsv", "hello")
        r = Spectrum.load(tmp_path / "s.tsv")
        assert np.array_equal(r.eigenvalues, s.eigenvalues)
        assert np.array_equal(r.eigenvectors, s.eigenvectors)
        assert (tmp_path / "s.tsv").read_text().startswith("# rmtlab spectrum N=8")


class TestStieltjes:
    def test_point_mass(self):
        assert empirical_stieltjes(np.zeros(2), 1j) == pytest.approx(1j)

    def test_large_z(self):
        z = 1e6 * np.exp(0.3j)
        lam = np.linspace(-2, 2, 7)
        assert abs(empirical_stieltjes(lam, z) + 1 / z) < 1e-5 * abs(1 / z)
        assert abs(semicircle_stieltjes(z) + 1 / z) < 1e-5 * abs(1 / z)

    def test_needs_upper_half_plane(self):
        with pytest.raises(DomainError):
            empirical_stieltjes(np.zeros(2), 1.0)
        with pytest.raises(DomainError):
            semicircle_stieltjes(-1j)

    def test_semicircle_at_i(self):
        assert semicircle_stieltjes(1j) == pytest.approx(1j * (math.sqrt(5) - 1) / 2, rel=1e-14)

    def test_semicircle_edge(self):
        assert abs(semicircle_stieltjes(2 + 1e-8j) + 1) < 1e-3

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-5, 5), st.floats(1e-6, 5))
    def test_semicircle_root_properties(self, x, y):
        z = complex(x, y)
        m = semicircle_stieltjes(z)
        assert m.imag > 0
        assert abs(m * m + z * m + 1) < 1e-9 * max(1.0, abs(z) ** 2)

    def test_semicircle_matches_quadrature(self):
        z = 0.3 + 0.2j
        re = integrate.quad(lambda x: (semicircle_density(x) / (x - z)).real, -2, 2)[0]
        im = integrate.quad(lambda x: (semicircle_density(x) / (x - z)).imag, -2, 2)[0]
        assert semicircle_stieltjes(z) == pytest.approx(complex(re, im), abs=1e-8)

    def test_goe_stieltjes_near_semicircle(self):
        lam = eigenvalue_batch(EnsembleConfig.gaussian(1, 1000, seed=0), 200)
        z = 0.1j
        m = np.mean([empirical_stieltjes(row, z) for row in lam])
        assert abs(m - semicircle_stieltjes(z)) < 0.05
        res = [self_consistency_residual(row, z) for row in lam]
        assert np.mean(np.array(res) < 0.1) >= 0.95


class TestClassicalLocations:
    def test_two(self):
        assert np.allclose(classical_locations(2), [0.0, 2.0], atol=1e-14)

    def test_four_against_quadrature(self):
        g = classical_locations(4)
        assert g[1] == pytest.approx(0.0, abs=1e-14)
        mass = integrate.quad(semicircle_density, -2, g[0])[0]
        assert mass == pytest.approx(0.25, abs=1e-10)

    @pytest.mark.parametrize("N", [5, 50, 333])
    def test_quantile_property(self, N):
        g = classical_locations(N)
        assert g[-1] == 2.0
        assert np.all(np.diff(g) > 0)
        assert np.allclose(semicircle_cdf(g[:-1]), np.arange(1, N) / N, atol=1e-10)

    def test_symmetric_for_even_n(self):
        g = classical_locations(10)
        assert np.allclose(g[:9], -g[8::-1], atol=1e-12)

    def test_rejects_zero(self):
        with pytest.raises(DomainError):
            classical_locations(0)


class TestCounting:
    def test_small(self):
        lam = np.array([-1.0, 0.0, 1.0])
        assert count_in_interval(lam, 0, 1) == 1
        assert count_in_interval(lam, 0, 2.5) == 3
        assert count_in_interval(lam, 0.5, 1.0) == 2  # closed interval

    def test_bad_width(self):
        with pytest.raises(DomainError):
            count_in_interval(np.zeros(2), 0, 0)

    def test_goe_mean_count(self):
        lam = eigenvalue_batch(EnsembleConfig.gaussian(1, 1000, seed=0), 200)
        mean = np.mean([count_in_interval(row, 0, 0.05) for row in lam])
        assert mean == pytest.approx(50 / math.pi, rel=0.05)


class TestMinor:
    @pytest.mark.parametrize("beta", [1, 2])
    def test_identity_and_interlacing(self, beta):
        H = sample_wigner(EnsembleConfig.gaussian(beta, 10, seed=5), 0)
        for k in range(10):
            r = minor_analysis(H, k, 0.2 + 0.05j)
            assert abs(r.resolvent_identity - r.resolvent_direct) < 1e-8 * abs(r.resolvent_direct)
            assert r.interlaces()
            assert r.xi.sum() == pytest.approx(10 * r.column_norm_sq, rel=1e-12)

    def test_xi_has_unit_mean(self):
        cfg = EnsembleConfig.gaussian(1, 200, seed=8)
        xs = np.array([minor_analysis(sample_wigner(cfg, i), 0, 0.5j).xi.mean() for i in range(100)])
        assert abs(xs.mean() - 1) < 3 * xs.std(ddof=1) / math.sqrt(xs.size)

    def test_domain(self):
        H = sample_wigner(EnsembleConfig.gaussian(1, 4), 0)
        with pytest.raises(DomainError):
            minor_analysis(H, 4, 1j)
        with pytest.raises(DomainError):
            minor_analysis(H, 0, 1.0)
