import math
from dataclasses import replace

import numpy as np
import pytest

from rmtlab.ensembles import EnsembleConfig, counter_rng, sample_wigner
from rmtlab.errors import DomainError, StiffnessError
from rmtlab.flows import (
    FlowState,
    _em_step,
    convexity_bound,
    dbm_drift,
    dbm_step,
    evolve,
    evolve_relaxation,
    lambda_estimate,
    local_relaxation_drift,
    local_relaxation_step,
    matrix_ou_flow,
    ou_to_dbm_time,
    relaxation_drift,
    relaxation_hamiltonian,
    relaxation_potential,
    rigidity,
    RelaxationPotential,
    step_size,
    universality_experiment,
)
from rmtlab.spectral import classical_locations


def _python_loop(state, t_end, step, dt_max=1e-2, safety=0.1):
    while state.t < t_end - 1e-15:
        dt = min(step_size(state.positions, dt_max, safety), t_end - state.t)
        state = step(state, dt)
    return state


def test_time_map():
    assert ou_to_dbm_time(0.1, 1) == pytest.approx(0.2)
    assert ou_to_dbm_time(0.1, 2) == pytest.approx(0.1)


def test_drift_pushes_pair_apart():
    f = dbm_drift(np.array([-0.01, 0.01]), 1.0)
    assert f[0] < 0 < f[1]
    assert dbm_drift(np.array([3.0]), 2.0)[0] == pytest.approx(-1.5)


def test_step_size_floor():
    assert step_size(np.array([0.0, 1e-12]), 1.0) == pytest.approx(0.1 * 2 * 1e-16)
    assert step_size(np.array([0.0]), 0.5) == 0.5


def test_em_step_halves_then_gives_up():
    rng = np.random.default_rng(0)
    x = np.array([0.0, 1.0])
    y, taken = _em_step(x, lambda z: np.array([0.9, -0.9]), 1.0, rng)
    assert taken < 1.0 and y[1] - y[0] > 0.1
    with pytest.raises(StiffnessError):
        _em_step(x, lambda z: np.array([1e7, -1e7]), 1.0, rng)


def test_dbm_preserves_order():
    lam = np.linalg.eigvalsh(sample_wigner(EnsembleConfig.gaussian(1, 40, seed=2), 0).entries)
    s = evolve(FlowState.from_spectrum(lam, 1.0, 2, 0), 0.2)
    assert s.is_ordered() and s.t == pytest.approx(0.2)


@pytest.mark.parametrize("beta", [1.0, 2.0])
def test_single_particle_is_ou(beta):
    # dx = dB - beta x/4 dt, so Var x_t = (2/beta)(1 - exp(-beta t/2)) from x_0 = 0
    t = 1.0
    xs = np.array([evolve(FlowState([0.0], 0.0, beta, counter_rng(1, i, 2)), t,
                          step=dbm_step, dt_max=0.01).positions[0] for i in range(1500)])
    var = 2 / beta * (1 - math.exp(-beta * t / 2))
    assert abs(xs.mean()) < 4 * math.sqrt(var / xs.size)
    assert xs.var() == pytest.approx(var, rel=0.12)


@pytest.mark.parametrize("beta", [1.0, 2.0])
def test_compiled_dbm_matches_python(beta):
    lam = np.linalg.eigvalsh(sample_wigner(EnsembleConfig.gaussian(int(beta), 12, seed=4), 0).entries)
    a = FlowState.from_spectrum(lam, beta, 4, 0)
    b = FlowState.from_spectrum(lam, beta, 4, 0)
    fast = evolve(a, 0.05)
    slow = _python_loop(b, 0.05, dbm_step)
    assert fast.t == pytest.approx(slow.t, abs=1e-15)
    assert np.allclose(fast.positions, slow.positions, rtol=0, atol=1e-10)


def test_compiled_relaxation_matches_python():
    pot = RelaxationPotential(16, 0.2)
    start = pot.gamma - 1 / 16
    fast = evolve_relaxation(FlowState(start, 0.0, 1.0, counter_rng(3, 0, 2)), pot, 0.05)
    slow = _python_loop(FlowState(start, 0.0, 1.0, counter_rng(3, 0, 2)), 0.05,
                        lambda s, dt: local_relaxation_step(s, pot, dt))
    assert np.allclose(fast.positions, slow.positions, rtol=0, atol=1e-10)


# ------------------------------------------------------------- matrix OU

def test_matrix_ou_endpoints():
    H = sample_wigner(EnsembleConfig(1, 6, "rademacher", seed=1), 0)
    assert matrix_ou_flow(H, 0.0, 1) is H
    V = matrix_ou_flow(H, math.inf, 1)
    assert V.is_self_adjoint() and not np.allclose(V.entries, H.entries)
    with pytest.raises(DomainError):
        matrix_ou_flow(H, -1.0, 1)


@pytest.mark.parametrize("beta", [1, 2])
def test_matrix_ou_preserves_entry_variance(beta):
    N = 30
    cfg = EnsembleConfig(beta, N, "rademacher", seed=5)
    off = []
    for i in range(200):
        h = matrix_ou_flow(sample_wigner(cfg, i), 0.3, 5, i)
        assert h.is_self_adjoint()
        off.append(np.abs(h.entries[np.triu_indices(N, 1)]) ** 2)
    off = np.concatenate(off)
    assert off.mean() == pytest.approx(1 / N, rel=0.02)


def test_universality_at_infinite_time():
    cfg = EnsembleConfig(1, 100, "rademacher", seed=3)
    rep = universality_experiment(cfg, math.inf, n_samples=100)
    assert rep.within(3.0)


# -------------------------------------------------- relaxation potential

def test_potential_domain():
    with pytest.raises(DomainError):
        RelaxationPotential(10, 0.05)
    RelaxationPotential(10, 0.05, strict=False)


def test_potential_is_c1_at_junctions():
    pot = relaxation_potential(40, 0.1)
    h = 1e-7
    for j in (0, 7, 20, 39):
        for b in (pot.lo[j], pot.hi[j]):
            for f in (pot.value, pot.d1):
                assert f(j, b - h) == pytest.approx(f(j, b + h), abs=1e-5)


def test_potential_derivatives_by_finite_differences():
    pot = relaxation_potential(30, 0.2)
    h = 1e-6
    rng = np.random.default_rng(0)
    for _ in range(20):
        j = int(rng.integers(30))
        x = rng.uniform(-2.5, 2.5)
        fd1 = (pot.value(j, x + h) - pot.value(j, x - h)) / (2 * h)
        fd2 = (pot.d1(j, x + h) - pot.d1(j, x - h)) / (2 * h)
        assert pot.d1(j, x) == pytest.approx(fd1, abs=1e-6)
        assert pot.d2(j, x) == pytest.approx(fd2, abs=1e-4)


def test_convexity_matches_dense_scan():
    pot = relaxation_potential(50, 0.1)
    res = convexity_bound(pot)
    grid = np.linspace(-3, 3, 4001)
    dense = min(float(np.min(pot.d2(j, grid))) for j in range(pot.N))
    assert res.min_convexity > 0
    assert res.min_convexity <= dense + 1e-9
    assert res.min_convexity == pytest.approx(dense, rel=1e-3)


@pytest.mark.parametrize("beta", [1.0, 2.0])
def test_drift_decomposition(beta):
    pot = relaxation_potential(60, 0.1)
    x = classical_locations(60) - 1 / 60 + 0.003 * np.sin(np.arange(60))
    b = relaxation_drift(FlowState(x, beta=beta), pot)
    lhs = dbm_drift(x, beta) - b
    assert np.allclose(local_relaxation_drift(x, pot, beta), lhs, rtol=0, atol=1e-12)


def test_relaxation_drift_is_minus_gradient():
    N, beta = 12, 1.0
    pot = relaxation_potential(N, 0.25)
    x = classical_locations(N) - 0.05
    h = 1e-6
    grad = np.empty(N)
    for i in range(N):
        e = np.zeros(N)
        e[i] = h
        grad[i] = (relaxation_hamiltonian(x + e, pot, beta) - relaxation_hamiltonian(x - e, pot, beta)) / (2 * h)
    assert np.allclose(local_relaxation_drift(x, pot, beta), -grad / (2 * N), atol=1e-6)


def test_hamiltonian_infinite_off_ordered_set():
    pot = relaxation_potential(4, 0.3)
    assert relaxation_hamiltonian(np.array([0.0, 0.0, 1.0, 2.0]), pot, 1.0) == math.inf


def test_rigidity_and_lambda():
    pot = relaxation_potential(40, 0.1)
    assert rigidity(pot.gamma) == 0.0
    rng = np.random.default_rng(1)
    samples = [np.sort(pot.gamma - 1 / 40 + 0.002 * rng.standard_normal(40)) for _ in range(30)]
    d = lambda_estimate(samples, pot, min_convexity=1.0)
    assert d.Lambda_hat > 0 and d.sample_count == 30
    with pytest.raises(DomainError):
        lambda_estimate(samples[:5], pot)
