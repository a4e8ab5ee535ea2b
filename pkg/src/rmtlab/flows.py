"""Dyson Brownian motion, the matrix Ornstein-Uhlenbeck flow and the local relaxation flow.

Time is measured in the units of the eigenvalue SDE

    dx_i = dB_i / sqrt(N) + [-(beta/4) x_i + (beta/2N) sum_{j != i} 1/(x_i - x_j)] dt,

whose invariant measure is the Gaussian-ensemble eigenvalue law.  The
entrywise OU flow ``H_t = e^{-t/2} H_0 + sqrt(1 - e^{-t}) V`` moves the
eigenvalues along this SDE at time ``2 t / beta`` (see :func:`ou_to_dbm_time`).

The local relaxation flow replaces the interaction with far particles by a
convex mean-field potential built on the classical locations.  With
``W_j`` stored without the factor ``beta``,

    b_j = (beta/2) [ (1/N) sum_{|k-j| >= w} sgn(x_j - x_k)/(|x_j - x_k| + eta) + W_j'(x_j) ],

and the DBM drift splits exactly as ``relaxation drift + b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from rmtlab.ensembles import (
    STREAM_FLOW,
    STREAM_OU_NOISE,
    EnsembleConfig,
    WignerMatrix,
    assemble,
    counter_rng,
    draw_entries,
    sample_wigner,
)
from rmtlab.errors import DomainError, StiffnessError
from rmtlab.spectral import classical_locations, eigen_decompose

MAX_HALVINGS = 20
MAX_GAP_SHRINK = 0.1
GAP_FLOOR = 1e-8


@dataclass
class FlowState:
    positions: np.ndarray
    t: float = 0.0
    beta: float = 1.0
    rng: np.random.Generator = field(default=None, repr=False)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.beta < 1:
            raise DomainError("beta must be >= 1")
        if self.rng is None:
            self.rng = np.random.default_rng(0)

    @property
    def N(self) -> int:
        return self.positions.size

    def is_ordered(self) -> bool:
        return bool(np.all(np.diff(self.positions) > 0))

    @classmethod
    def from_spectrum(cls, eigenvalues, beta: float, seed: int, index: int) -> "FlowState":
        return cls(np.array(eigenvalues, dtype=float), 0.0, beta,
                   counter_rng(seed, index, STREAM_FLOW))


def ou_to_dbm_time(t_matrix: float, beta: float) -> float:
    """Eigenvalue-SDE time reached by the matrix OU flow after ``t_matrix``."""
    return 2.0 * t_matrix / beta


# ------------------------------------------------------------------ DBM

def _pair_sum(x: np.ndarray) -> np.ndarray:
    """``sum_{j != i} 1/(x_i - x_j)``."""
    d = x[:, None] - x[None, :]
    np.fill_diagonal(d, np.inf)
    return np.sum(1.0 / d, axis=1)


def dbm_drift(x: np.ndarray, beta: float) -> np.ndarray:
    N = x.size
    return -0.25 * beta * x + (0.5 * beta / N) * _pair_sum(x)


def _em_step(x, drift, dt, rng):
    """Euler-Maruyama step that retries with ``dt/2`` on a bad proposal.

    A proposal is rejected when it breaks the ordering or shrinks some gap
    by more than ``MAX_GAP_SHRINK``; the retry uses fresh noise.  Returns the
    new positions and the step actually taken.
    """
    N = x.size
    f = drift(x)
    gaps = np.diff(x)
    for _ in range(MAX_HALVINGS + 1):
        y = x + f * dt + math.sqrt(dt / N) * rng.standard_normal(N)
        if N < 2 or np.all(np.diff(y) > MAX_GAP_SHRINK * gaps):
            return y, dt
        dt *= 0.5
    raise StiffnessError(
        f"ordering lost after {MAX_HALVINGS} halvings (min gap {gaps.min():.3e})",
        float(gaps.min()),
    )


def _flow_step(state: FlowState, dt: float, drift) -> FlowState:
    if dt <= 0:
        raise DomainError("dt must be positive")
    x, taken = _em_step(state.positions, drift, dt, state.rng)
    return replace(state, positions=x, t=state.t + taken)


def dbm_step(state: FlowState, dt: float) -> FlowState:
    """One ordering-preserving Euler-Maruyama step of Dyson Brownian motion."""
    return _flow_step(state, dt, lambda x: dbm_drift(x, state.beta))


def step_size(x: np.ndarray, dt_max: float, safety: float = 0.1) -> float:
    """``min(dt_max, safety * N * g^2)`` with ``g = max(min gap, GAP_FLOOR)``.

    For beta near 1 the nearest-neighbour gap behaves like a critical Bessel
    process and visits arbitrarily small scales; below ``GAP_FLOOR`` the
    repulsive drift kicks the pair apart instead of the step shrinking
    towards round-off.
    """
    if x.size < 2:
        return dt_max
    g = max(float(np.min(np.diff(x))), GAP_FLOOR)
    return min(dt_max, safety * x.size * g * g)


def evolve(state: FlowState, t_end: float, step=dbm_step, dt_max: float = 1e-2,
           safety: float = 0.1, check_order: bool = True) -> FlowState:
    """Advance ``state`` to time ``t_end`` with adaptive steps.

    ``step`` is any ``(state, dt) -> state`` map; the DBM default runs in a
    compiled loop that consumes the random stream exactly like repeated
    :func:`dbm_step` calls.  See also :func:`evolve_relaxation`.
    """
    if step is dbm_step and state.N > 1:
        return _evolve_compiled(state, t_end, None, dt_max, safety)
    while state.t < t_end - 1e-15:
        dt = min(step_size(state.positions, dt_max, safety), t_end - state.t)
        state = step(state, dt)
        if check_order and state.N > 1 and not state.is_ordered():
            raise StiffnessError("integrator produced an unordered state")
    return state


def evolve_relaxation(state: FlowState, pot: "RelaxationPotential", t_end: float,
                      dt_max: float = 1e-2, safety: float = 0.1) -> FlowState:
    """Compiled equivalent of repeated :func:`local_relaxation_step` calls."""
    if state.N != pot.N:
        raise DomainError("state and potential sizes differ")
    return _evolve_compiled(state, t_end, pot, dt_max, safety)


def _evolve_compiled(state, t_end, pot, dt_max, safety):
    from rmtlab import _kernels

    x = np.array(state.positions, dtype=float)
    if pot is None:
        args = (0, 0.0, np.zeros(1), np.zeros(1, dtype=np.int64), np.zeros(1, dtype=np.int64),
                np.zeros((2, 1)), np.zeros((2, 1)))
    else:
        args = (1, pot.eta, pot.gamma, pot.lo_index.astype(np.int64),
                pot.hi_index.astype(np.int64),
                np.stack([pot._junction["lo"][1], pot._junction["hi"][1]]),
                np.stack([pot._junction["lo"][2], pot._junction["hi"][2]]))
    t, status, gmin = _kernels.evolve(x, state.t, t_end, state.beta, dt_max, safety, state.rng,
                                      MAX_HALVINGS, MAX_GAP_SHRINK, GAP_FLOOR, *args)
    if status != 0:
        raise StiffnessError(f"ordering lost after {MAX_HALVINGS} halvings (min gap {gmin:.3e})",
                             gmin)
    return replace(state, positions=x, t=t)


# ----------------------------------------------------------- matrix OU

def matrix_ou_flow(H0: WignerMatrix, t: float, seed: int, sample_index: int = 0) -> WignerMatrix:
    """Exact entrywise OU evolution ``e^{-t/2} H0 + sqrt(1 - e^{-t}) V``.

    ``V`` is an independent Gaussian matrix of the same class, drawn from the
    OU-noise stream of ``(seed, sample_index)``.  ``t = inf`` returns ``V``.
    """
    if t < 0:
        raise DomainError("t must be >= 0")
    if t == 0:
        return H0
    cfg = EnsembleConfig.gaussian(H0.beta, H0.N, seed)
    upper, diag = draw_entries(cfg, counter_rng(seed, sample_index, STREAM_OU_NOISE))
    v = assemble(H0.beta, H0.N, upper, diag) / math.sqrt(H0.N)
    if math.isinf(t):
        return WignerMatrix(H0.beta, H0.N, v)
    a = math.exp(-0.5 * t)
    b = math.sqrt(-math.expm1(-t))
    h = a * H0.entries + b * v
    # re-symmetrize bitwise: the affine map is applied entrywise so it already is,
    # but the diagonal of hermitian matrices must stay exactly real
    if H0.beta == 2:
        h[np.diag_indices(H0.N)] = h.diagonal().real
    return WignerMatrix(H0.beta, H0.N, h)


# ------------------------------------------------- relaxation potential

class RelaxationPotential:
    """Regularized mean-field potentials ``W_j`` on the semicircle grid.

    ``W_j(x) = -(1/N) sum_{|k-j| >= w} log(|x - gamma_k| + eta)`` with
    ``w = ceil(N eta)``, used on ``[gamma_{j-w}, gamma_{j+w}]`` (clipped to the
    grid) and continued outside by the quadratic matching value, slope and
    curvature at each junction.  The factor ``beta`` is applied by the
    flows, not stored here.
    """

    def __init__(self, N: int, eta: float, strict: bool = True):
        # strict=False admits eta <= 1/N, used by the two-particle oracles
        if not (0.0 < eta < 1.0) or (strict and eta <= 1.0 / N):
            raise DomainError(f"eta must satisfy 1/N < eta < 1, got {eta}")
        self.N = int(N)
        self.eta = float(eta)
        self.gamma = classical_locations(N)
        self.w = int(math.ceil(N * eta - 1e-12))
        idx = np.arange(N)
        self.lo_index = np.maximum(idx - self.w, 0)
        self.hi_index = np.minimum(idx + self.w, N - 1)
        self.lo = self.gamma[self.lo_index]
        self.hi = self.gamma[self.hi_index]
        # side[j, k] = +1 for far k left of j, -1 for far k right of j, 0 near
        dist = idx[None, :] - idx[:, None]
        self.far = np.abs(dist) >= self.w
        self.side = np.where(self.far, -np.sign(dist), 0).astype(float)
        self._junction = {}
        for edge, pts in (("lo", self.lo), ("hi", self.hi)):
            self._junction[edge] = (
                self._inner(idx, pts, 0), self._inner(idx, pts, 1), self._inner(idx, pts, 2)
            )

    def _inner(self, j, x, order):
        """Formula inside the window, where ``sgn(x - gamma_k) = side[j, k]``."""
        j = np.asarray(j)
        x = np.asarray(x, dtype=float)
        side = self.side[j]
        u = side * (x[..., None] - self.gamma) + self.eta
        far = self.far[j]
        if order == 0:
            terms = -np.log(np.where(far, u, 1.0))
        elif order == 1:
            terms = -side / np.where(far, u, 1.0)
        else:
            terms = 1.0 / np.where(far, u, 1.0) ** 2
        return np.sum(np.where(far, terms, 0.0), axis=-1) / self.N

    def _evaluate(self, j, x, order):
        j, x = np.broadcast_arrays(np.asarray(j), np.asarray(x, dtype=float))
        lo, hi = self.lo[j], self.hi[j]
        xin = np.clip(x, lo, hi)
        val = self._inner(j, xin, order)
        for edge, b in (("lo", lo), ("hi", hi)):
            mask = x < lo if edge == "lo" else x > hi
            if not np.any(mask):
                continue
            v0, v1, v2 = (arr[j] for arr in self._junction[edge])
            d = x - b
            ext = (v0 + v1 * d + 0.5 * v2 * d * d, v1 + v2 * d, v2)[order]
            val = np.where(mask, ext, val)
        return val

    def value(self, j, x):
        return self._evaluate(j, x, 0)

    def d1(self, j, x):
        return self._evaluate(j, x, 1)

    def d2(self, j, x):
        return self._evaluate(j, x, 2)

    def d1_diagonal(self, x: np.ndarray) -> np.ndarray:
        """``W_j'(x_j)`` for all ``j`` at once."""
        return self.d1(np.arange(self.N), x)

    def value_diagonal(self, x: np.ndarray) -> np.ndarray:
        return self.value(np.arange(self.N), x)


def relaxation_potential(N: int, eta: float) -> RelaxationPotential:
    return RelaxationPotential(N, eta)


@dataclass
class ConvexityResult:
    min_convexity: float
    argmin_j: int
    argmin_x: float
    per_j: np.ndarray = field(repr=False)


def convexity_bound(pot: RelaxationPotential, x_range=(-3.0, 3.0), n_grid: int = 17,
                    n_refine: int = 60, chunk: int = 256) -> ConvexityResult:
    """``inf_j inf_x W_j''(x)``: coarse grid per window, then golden-section refinement.

    Inside a window ``W_j''`` is a sum of convex functions of ``x`` and it is
    constant on the quadratic extensions, so the refined minimum over the
    window is the global one.
    """
    N = pot.N
    mins = np.empty(N)
    where = np.empty(N)
    phi = (math.sqrt(5) - 1) / 2
    for s in range(0, N, chunk):
        j = np.arange(s, min(N, s + chunk))
        lo = np.maximum(pot.lo[j], x_range[0])
        hi = np.minimum(pot.hi[j], x_range[1])
        grid = lo[:, None] + (hi - lo)[:, None] * np.linspace(0, 1, n_grid)[None, :]
        vals = pot.d2(j[:, None], grid)
        k = np.argmin(vals, axis=1)
        a = grid[np.arange(j.size), np.maximum(k - 1, 0)]
        b = grid[np.arange(j.size), np.minimum(k + 1, n_grid - 1)]
        c = b - phi * (b - a)
        d = a + phi * (b - a)
        fc, fd = pot.d2(j, c), pot.d2(j, d)
        for _ in range(n_refine):
            left = fc < fd
            b = np.where(left, d, b)
            a = np.where(left, a, c)
            c_new = b - phi * (b - a)
            d_new = a + phi * (b - a)
            c, d = c_new, d_new
            fc, fd = pot.d2(j, c), pot.d2(j, d)
        xr = 0.5 * (a + b)
        cand = np.stack([xr, grid[np.arange(j.size), k]], axis=1)
        cv = np.stack([pot.d2(j, xr), vals[np.arange(j.size), k]], axis=1)
        pick = np.argmin(cv, axis=1)
        mins[j] = cv[np.arange(j.size), pick]
        where[j] = cand[np.arange(j.size), pick]
    jmin = int(np.argmin(mins))
    return ConvexityResult(float(mins[jmin]), jmin, float(where[jmin]), mins)


# ------------------------------------------------- local relaxation flow

def _far_interaction(x: np.ndarray, pot: RelaxationPotential) -> np.ndarray:
    """``(1/N) sum_{far k} sgn(x_j - x_k) / (|x_j - x_k| + eta)``."""
    d = x[:, None] - x[None, :]
    t = np.sign(d) / (np.abs(d) + pot.eta)
    return np.sum(np.where(pot.far, t, 0.0), axis=1) / x.size


def relaxation_drift(state: FlowState, pot: RelaxationPotential) -> np.ndarray:
    """Drift correction ``b_j`` separating DBM from the local relaxation flow."""
    x = state.positions
    if x.size != pot.N:
        raise DomainError("state and potential sizes differ")
    return 0.5 * state.beta * (_far_interaction(x, pot) + pot.d1_diagonal(x))


def relaxation_hamiltonian(x: np.ndarray, pot: RelaxationPotential, beta: float) -> float:
    """Energy of the local relaxation measure (``+inf`` off the ordered set).

    ``N sum_j [beta x_j^2/4 + beta W_j(x_j)] - beta sum_{i<j} log|x_i - x_j|
    + beta sum_{i<j, far} log(|x_i - x_j| + eta)``.
    """
    x = np.asarray(x, dtype=float)
    N = x.size
    if np.any(np.diff(x) <= 0):
        return math.inf
    iu = np.triu_indices(N, 1)
    d = np.abs(x[iu[0]] - x[iu[1]])
    far = pot.far[iu]
    return float(
        N * np.sum(0.25 * beta * x * x + beta * pot.value_diagonal(x))
        - beta * np.sum(np.log(d))
        + beta * np.sum(np.log(d[far] + pot.eta))
    )


def local_relaxation_drift(x: np.ndarray, pot: RelaxationPotential, beta: float) -> np.ndarray:
    """``-(1/2N) grad`` of :func:`relaxation_hamiltonian`, assembled term by term."""
    N = x.size
    return (
        -0.25 * beta * x
        - 0.5 * beta * pot.d1_diagonal(x)
        + (0.5 * beta / N) * _pair_sum(x)
        - 0.5 * beta * _far_interaction(x, pot)
    )


def local_relaxation_step(state: FlowState, pot: RelaxationPotential, dt: float) -> FlowState:
    """Euler-Maruyama step of the diffusion reversible for the local relaxation measure."""
    return _flow_step(state, dt, lambda x: local_relaxation_drift(x, pot, state.beta))


# ---------------------------------------------------------- diagnostics

@dataclass
class FlowDiagnostics:
    b: np.ndarray
    Lambda_hat: float
    Lambda_se: float
    mean_rigidity: float
    rigidity_se: float
    min_convexity: float
    sample_count: int


def rigidity(x: np.ndarray, gamma: np.ndarray | None = None) -> float:
    """``(1/N) sum_k |x_k - gamma_k|``."""
    gamma = classical_locations(x.size) if gamma is None else gamma
    return float(np.mean(np.abs(x - gamma)))


def lambda_estimate(samples, pot: RelaxationPotential, beta: float = 1.0,
                    min_convexity: float | None = None) -> FlowDiagnostics:
    """Monte Carlo ``N sum_j b_j^2`` and rigidity over a collection of configurations."""
    from rmtlab.statistics import batch_means

    samples = [s.positions if isinstance(s, FlowState) else np.asarray(s) for s in samples]
    if len(samples) < 30:
        raise DomainError("lambda_estimate needs at least 30 samples")
    lam_vals, rig_vals, bs = [], [], []
    for x in samples:
        b = relaxation_drift(FlowState(x, beta=beta), pot)
        bs.append(b)
        lam_vals.append(pot.N * float(np.sum(b * b)))
        rig_vals.append(rigidity(x, pot.gamma))
    lm, lse = batch_means(np.array(lam_vals))
    rm, rse = batch_means(np.array(rig_vals))
    mc = convexity_bound(pot).min_convexity if min_convexity is None else min_convexity
    return FlowDiagnostics(np.mean(bs, axis=0), float(lm), float(lse), float(rm), float(rse),
                           mc, len(samples))


# ------------------------------------------------ universality experiment

@dataclass
class UniversalityRow:
    observable: str
    n: int
    value: float
    value_se: float
    reference: float
    reference_se: float

    @property
    def difference(self) -> float:
        return self.value - self.reference

    @property
    def combined_se(self) -> float:
        return math.hypot(self.value_se, self.reference_se)

    @property
    def z(self) -> float:
        if self.combined_se > 0:
            return self.difference / self.combined_se
        # both sides constant (e.g. G never hit): equal values agree exactly
        return 0.0 if self.difference == 0 else math.inf


@dataclass
class UniversalityReport:
    config: EnsembleConfig
    t_flow: float
    n_samples: int
    rows: list

    def within(self, n_se: float) -> bool:
        return all(abs(r.z) <= n_se for r in self.rows)


def _flowed_eigenvalues(args):
    config, t_flow, index = args
    h = sample_wigner(config, index)
    if t_flow > 0:
        h = matrix_ou_flow(h, t_flow, config.seed, index)
    return eigen_decompose(h).eigenvalues


def flowed_spectra(config: EnsembleConfig, t_flow: float, n_samples: int, start: int = 0,
                   workers=None) -> np.ndarray:
    from rmtlab.harness.parallel import parallel_map

    rows = parallel_map(_flowed_eigenvalues,
                        [(config, t_flow, i) for i in range(start, start + n_samples)], workers)
    return np.vstack(rows)


def universality_experiment(config: EnsembleConfig, t_flow: float, battery=None, n_values=(1, 2),
                            n_samples: int = 200, reference_seed: int | None = None,
                            reference_spectra=None, workers=None) -> UniversalityReport:
    """Gap-observable battery after an OU flow of ``t_flow``, against the Gaussian ensemble.

    The reference is an independent Gaussian ensemble of the same class and
    size (seed ``reference_seed``, default ``config.seed + 1``).
    """
    from rmtlab.statistics import batch_means, observable_table

    if t_flow < 0:
        raise DomainError("t_flow must be >= 0")
    spectra = flowed_spectra(config, t_flow, n_samples, workers=workers)
    if reference_spectra is None:
        ref_cfg = EnsembleConfig.gaussian(config.beta, config.N,
                                          config.seed + 1 if reference_seed is None else reference_seed)
        reference_spectra = flowed_spectra(ref_cfg, 0.0, n_samples, workers=workers)
    names, vals = observable_table(spectra, n_values, battery)
    _, ref = observable_table(reference_spectra, n_values, battery)
    vm, vse = batch_means(vals)
    rm, rse = batch_means(ref)
    rows = [UniversalityRow(g, n, float(vm[i]), float(vse[i]), float(rm[i]), float(rse[i]))
            for i, (g, n) in enumerate(names)]
    return UniversalityReport(config, t_flow, n_samples, rows)


# ------------------------------------------------ trajectory ensembles

def _dbm_trajectory(args):
    config, t_end, index = args
    lam = eigen_decompose(sample_wigner(config, index)).eigenvalues
    state = FlowState.from_spectrum(lam, float(config.beta), config.seed, index)
    return evolve(state, t_end).positions


def dbm_evolved_spectra(config: EnsembleConfig, t_end: float, n_samples: int, start: int = 0,
                        workers=None) -> np.ndarray:
    """Spectra of ``config`` samples each carried to time ``t_end`` by Dyson Brownian motion.

    Trajectory ``i`` starts from sample ``i`` and draws its noise from the
    flow stream of ``(seed, i)``.
    """
    from rmtlab.harness.parallel import parallel_map

    rows = parallel_map(_dbm_trajectory,
                        [(config, t_end, i) for i in range(start, start + n_samples)], workers)
    return np.vstack(rows)


def _relaxation_trajectory(args):
    N, eta, beta, t_grid, seed, index = args
    pot = _cached_potential(N, eta)
    state = FlowState(pot.gamma - 1.0 / N, 0.0, beta, counter_rng(seed, index, STREAM_FLOW))
    out = []
    for t in t_grid:
        state = evolve_relaxation(state, pot, t) if t > state.t else state
        out.append(state.positions.copy())
    return np.array(out)


_POTENTIAL_CACHE: dict = {}


def _cached_potential(N, eta):
    if (N, eta) not in _POTENTIAL_CACHE:
        _POTENTIAL_CACHE[(N, eta)] = RelaxationPotential(N, eta)
    return _POTENTIAL_CACHE[(N, eta)]


def relaxation_from_lattice(N: int, eta: float, beta: float, t_grid, n_samples: int,
                            seed: int = 0, workers=None) -> np.ndarray:
    """Local relaxation trajectories started on the classical grid.

    The start is ``gamma_k - 1/N`` so the top particle sits inside the
    spectrum.  Returns positions of shape ``(n_samples, len(t_grid), N)``.
    """
    from rmtlab.harness.parallel import parallel_map

    t_grid = [float(t) for t in t_grid]
    rows = parallel_map(_relaxation_trajectory,
                        [(N, eta, beta, t_grid, seed, i) for i in range(n_samples)], workers)
    return np.stack(rows)
