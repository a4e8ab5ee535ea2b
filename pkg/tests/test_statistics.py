import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmtlab.ensembles import EnsembleConfig
from rmtlab.errors import DomainError
from rmtlab.spectral import Spectrum, eigenvalue_batch
from rmtlab.statistics import (
    _union_length,
    batch_means,
    bulk_indices,
    delocalization_stats,
    gap_distribution,
    gap_observable,
    kpoint_correlation,
    ks_to_surmise,
    level_repulsion_probe,
    local_law_scan,
    occupancy_fraction,
    observable_table,
    scaled_norms,
    sine_kernel_determinant,
    sine_two_point,
    smooth_bump,
    triangle_bump,
)


def test_batch_means_constant_has_zero_error():
    m, se = batch_means(np.full(40, 2.5))
    assert m == 2.5 and se == 0.0


def test_batch_means_single_sample():
    m, se = batch_means([1.0])
    assert m == 1.0 and np.isinf(se)


def test_bulk_indices_centered():
    idx = bulk_indices(100, 0.6)
    assert idx[0] == 20 and idx[-1] == 78


# ----------------------------------------------------------------- local law

def test_local_law_at_mesoscopic_scale():
    cfg = EnsembleConfig.gaussian(1, 1000, seed=0)
    rep = local_law_scan(cfg, 0.0, [50 / 1000, 0.5], 200)
    assert rep.reference_density == pytest.approx(1 / math.pi)
    assert rep.mean_deviation[0] < 0.05
    assert rep.mean_deviation[1] < 0.02


def test_local_law_domain_checks():
    cfg = EnsembleConfig.gaussian(1, 100)
    with pytest.raises(DomainError):
        local_law_scan(cfg, 1.95, [0.1], 2)
    with pytest.raises(DomainError):
        local_law_scan(cfg, 0.0, [0.001], 2)
    with pytest.raises(DomainError):
        local_law_scan(cfg, 0.0, [0.2, 0.1], 2)


# ------------------------------------------------------------ delocalization

def test_norms_of_extreme_vectors():
    N = 100
    e = np.zeros((N, 1))
    e[0] = 1
    flat = np.full((N, 1), N ** -0.5)
    pn, sup = scaled_norms(e, 4)
    assert pn[0] == pytest.approx(100 ** 0.25) and sup[0] == N
    for p in (3, 4, 7.5):
        assert scaled_norms(flat, p)[0][0] == pytest.approx(1.0, rel=1e-12)


def test_basis_vector_flagged_localized():
    N = 100
    lam = np.linspace(-1, 1, N)
    spec = Spectrum(lam, np.eye(N))
    rep = delocalization_stats(spec, 0.0, window_count=5)
    assert rep.localized.all() and rep.indices.size > 0


def test_delocalization_needs_vectors():
    with pytest.raises(DomainError):
        delocalization_stats(Spectrum(np.zeros(3)), 0.0)


# ---------------------------------------------------------------- repulsion

@pytest.mark.parametrize("lo,hi", [(-1.0, 1.0), (-3.0, -2.0), (0.25, 0.75)])
def test_union_length_handles_negative_positions(lo, hi):
    left = np.array([-2.9, -2.5, -0.5, 0.1, 0.6])
    right = np.array([-2.6, -2.2, 0.0, 0.3, 0.9])
    grid = np.linspace(lo, hi, 200001)
    covered = np.zeros_like(grid, dtype=bool)
    for a, b in zip(left, right):
        covered |= (grid >= a) & (grid <= b)
    assert _union_length(left, right, lo, hi) == pytest.approx(covered.mean() * (hi - lo), abs=1e-4)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=12), st.floats(0.01, 1.5),
       st.integers(1, 3))
def test_occupancy_matches_brute_force(points, width, n):
    lam = np.sort(np.array(points))
    lo, hi = -1.0, 1.0
    v = np.linspace(lo, hi, 4001)
    cnt = ((lam[None, :] >= v[:, None] - width / 2) & (lam[None, :] <= v[:, None] + width / 2)).sum(1)
    brute = np.mean(cnt >= n)
    assert occupancy_fraction(lam, width, n, lo, hi) == pytest.approx(brute, abs=3e-3)


def test_single_level_probability_is_linear():
    cfg = EnsembleConfig.gaussian(1, 200, seed=3)
    rep = level_repulsion_probe(cfg, 0.0, [0.05, 0.1, 0.2, 0.4], 1, 200)
    assert abs(rep.slope - 1) < 0.15
    # first order: P ~ rho_sc(0) eps
    assert rep.probability[0] == pytest.approx(0.05 / math.pi, rel=0.1)


@pytest.mark.parametrize("beta,expected", [(1, 3.0), (2, 4.0)])
def test_pair_repulsion_exponent(beta, expected):
    cfg = EnsembleConfig.gaussian(beta, 200, seed=11)
    rep = level_repulsion_probe(cfg, 0.0, [0.2, 0.3, 0.45, 0.7], 2, 800)
    assert rep.expected_exponent == expected
    assert abs(rep.slope - expected) < 0.25 * expected


def test_repulsion_needs_smooth_entries():
    with pytest.raises(DomainError):
        level_repulsion_probe(EnsembleConfig(1, 50, "rademacher"), 0.0, [0.1], 1, 2)


# --------------------------------------------------------------------- gaps

def test_goe_gap_statistics():
    g = gap_distribution(EnsembleConfig.gaussian(1, 500, seed=0), n_samples=40)
    assert g.s.size >= 10_000
    assert np.mean(g.s < 0.05) < 0.01
    assert g.s.mean() == pytest.approx(1.0, abs=0.02)
    assert ks_to_surmise(g, 1) < 0.05


# ------------------------------------------------------------- correlations

def test_sine_kernel_determinant_values():
    assert sine_kernel_determinant([0.3]) == 1.0
    assert sine_kernel_determinant([0, 1e-7]) == pytest.approx(0, abs=1e-12)
    assert sine_kernel_determinant([0, 0.5]) == pytest.approx(1 - (2 / math.pi) ** 2, rel=1e-12)
    assert sine_two_point(0.5) == pytest.approx(1 - (2 / math.pi) ** 2)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=5), st.floats(-10, 10), st.randoms())
def test_sine_determinant_symmetries(x, c, rnd):
    d = sine_kernel_determinant(x)
    y = list(x)
    rnd.shuffle(y)
    assert sine_kernel_determinant(y) == pytest.approx(d, abs=1e-12)
    assert sine_kernel_determinant(np.array(x) + c) == pytest.approx(d, abs=1e-10)


def test_one_point_density_is_flat():
    cfg = EnsembleConfig.gaussian(2, 1000, seed=0)
    est = kpoint_correlation(cfg, 1, 0.0, 0.1, np.linspace(-3, 3, 7), 50)
    assert np.all(np.abs(est.values - 1) < 0.05)


def test_two_point_function_matches_sine_kernel():
    cfg = EnsembleConfig.gaussian(2, 500, seed=0)
    bins = np.linspace(0, 3, 31)
    est = kpoint_correlation(cfg, 2, 0.0, 0.1, bins, 200)
    x = est.centers
    sel = x >= 0.2
    assert np.max(np.abs(est.values[sel] - sine_two_point(x[sel]))) < 0.1
    assert est.values[0] < 0.05


def test_correlation_rejects_bad_k():
    with pytest.raises(DomainError):
        kpoint_correlation(EnsembleConfig.gaussian(2, 50), 4, 0.0, 0.1, [0, 1], 1)


# ---------------------------------------------------------- gap observables

def test_bumps():
    assert triangle_bump(1.0) == 1.0 and triangle_bump(2.0) == 0.0
    assert smooth_bump(1.0) == pytest.approx(1.0)
    assert smooth_bump(0.5) == 0.0 and smooth_bump(1.5) == 0.0


def test_gap_observable_equally_spaced():
    N = 50
    x = np.arange(N) / N
    J = np.arange(10, 30)
    assert gap_observable(x, triangle_bump, 1, J) == pytest.approx(J.size / N)
    assert gap_observable(x, lambda t: np.ones_like(t), 1) == pytest.approx((N - 1) / N)


def test_gap_observable_rejects_overflowing_index_set():
    with pytest.raises(DomainError):
        gap_observable(np.arange(5.0), triangle_bump, 2, [3])


def test_observable_separates_symmetry_classes():
    a = observable_table(eigenvalue_batch(EnsembleConfig.gaussian(1, 500, seed=0), 40), (1,))[1][:, 0]
    b = observable_table(eigenvalue_batch(EnsembleConfig.gaussian(2, 500, seed=0), 40), (1,))[1][:, 0]
    se = math.hypot(a.std(ddof=1) / math.sqrt(a.size), b.std(ddof=1) / math.sqrt(b.size))
    assert abs(a.mean() - b.mean()) > 3 * se
