"""Independent reference computations.

* Exact two-particle gap laws (the Wigner surmise) and a brute-force 2x2
  sampler that checks them.
* Random-walk Metropolis samplers for the Gaussian-ensemble eigenvalue law
  ``mu`` and for the local relaxation measure ``omega``.
* A finite-volume Fokker-Planck solver for two particles that tracks the
  relative entropy and the Dirichlet form along the relaxation flow.

Both Gibbs measures are written ``exp(-H)`` with

    H_mu(x) = N sum_i beta x_i^2 / 4 - beta sum_{i<j} log|x_i - x_j|

and ``H_omega`` as in :func:`rmtlab.flows.relaxation_hamiltonian`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse, special, stats
from scipy.sparse import linalg as sparse_linalg

from rmtlab.ensembles import STREAM_CHAIN, counter_rng
from rmtlab.errors import CFLError, DomainError, TuningError
from rmtlab.flows import RelaxationPotential, relaxation_hamiltonian

MAX_CHAIN_N = 64


# ------------------------------------------------------------ Gibbs specs

@dataclass(frozen=True)
class GibbsSpec:
    """Target measure for the samplers: ``kind`` is ``"mu"`` or ``"omega"``."""

    beta: float
    N: int
    kind: str = "mu"
    eta: float | None = None

    def __post_init__(self):
        if self.kind not in ("mu", "omega"):
            raise DomainError(f"unknown Gibbs kind {self.kind!r}")
        if self.kind == "omega" and self.eta is None:
            raise DomainError("omega needs eta")
        if self.N < 1 or self.beta <= 0:
            raise DomainError("need N >= 1 and beta > 0")

    @property
    def potential(self) -> RelaxationPotential | None:
        if self.kind != "omega":
            return None
        return _potential(self.N, self.eta)


_POTENTIALS: dict = {}


def _potential(N, eta):
    key = (N, eta)
    if key not in _POTENTIALS:
        _POTENTIALS[key] = RelaxationPotential(N, eta, strict=False)
    return _POTENTIALS[key]


def hamiltonian(spec: GibbsSpec, x) -> float:
    """``H(x)``; ``+inf`` unless ``x`` is strictly increasing."""
    x = np.asarray(x, dtype=float)
    if spec.kind == "omega":
        return relaxation_hamiltonian(x, spec.potential, spec.beta)
    if np.any(np.diff(x) <= 0):
        return math.inf
    iu = np.triu_indices(x.size, 1)
    return float(spec.N * np.sum(0.25 * spec.beta * x * x)
                 - spec.beta * np.sum(np.log(x[iu[1]] - x[iu[0]])))


def acceptance_probability(spec: GibbsSpec, x, y) -> float:
    """Metropolis acceptance ``min(1, exp(H(x) - H(y)))`` for a symmetric proposal."""
    hx, hy = hamiltonian(spec, x), hamiltonian(spec, y)
    if math.isinf(hy):
        return 0.0
    return float(min(1.0, math.exp(min(0.0, hx - hy))))


def _site_delta(spec: GibbsSpec, X: np.ndarray, i: int, new: np.ndarray) -> np.ndarray:
    """``H(x with x_i = new) - H(x)`` for every chain (rows of ``X``)."""
    beta, N = spec.beta, spec.N
    old = X[:, i]
    others = np.delete(X, i, axis=1)
    dH = N * 0.25 * beta * (new * new - old * old)
    dH -= beta * np.sum(np.log(np.abs(new[:, None] - others))
                        - np.log(np.abs(old[:, None] - others)), axis=1)
    if spec.kind == "omega":
        pot = spec.potential
        dH += N * beta * (pot.value(i, new) - pot.value(i, old))
        far = np.delete(pot.far[i], i)
        if np.any(far):
            o = others[:, far]
            dH += beta * np.sum(np.log(np.abs(new[:, None] - o) + pot.eta)
                                - np.log(np.abs(old[:, None] - o) + pot.eta), axis=1)
    return dH


# ------------------------------------------------------------- Metropolis

@dataclass
class ChainResult:
    """Pooled Metropolis output; ``samples`` has shape ``(n, N)``, ordered rows."""

    spec: GibbsSpec
    samples: np.ndarray = field(repr=False)
    acceptance: float
    step: np.ndarray = field(repr=False)
    ess: float
    stationarity_ks: float
    stationarity_limit: float

    @property
    def stationary(self) -> bool:
        return self.stationarity_ks < self.stationarity_limit


def _sweep(spec, X, step, rng):
    """One systematic-scan sweep; returns the per-site acceptance counts."""
    n_chains, N = X.shape
    acc = np.zeros(N)
    for i in range(N):
        new = X[:, i] + step[i] * rng.standard_normal(n_chains)
        lo = X[:, i - 1] if i > 0 else -np.inf
        hi = X[:, i + 1] if i < N - 1 else np.inf
        inside = (new > lo) & (new < hi)
        dH = np.full(n_chains, np.inf)
        if np.any(inside):
            dH[inside] = _site_delta(spec, X[inside], i, new[inside])
        ok = np.log(rng.random(n_chains)) < -dH
        X[ok, i] = new[ok]
        acc[i] = ok.mean()
    return acc


def _integrated_autocorrelation(series: np.ndarray) -> float:
    """Sokal-windowed integrated autocorrelation time, averaged over chains (columns)."""
    y = series - series.mean(axis=0)
    n = y.shape[0]
    var = np.mean(y * y)
    if var == 0 or n < 4:
        return 1.0
    tau = 1.0
    for lag in range(1, n // 2):
        rho = np.mean(y[lag:] * y[:-lag]) / var
        tau += 2.0 * rho
        if lag >= 5 * tau:
            break
    return max(tau, 1.0)


def metropolis_sample(spec: GibbsSpec, n_samples: int, burn_in: int = 200, thinning: int = 2,
                      n_chains: int = 256, seed: int = 0, target: float = 0.35,
                      tune_sweeps: int = 100) -> ChainResult:
    """Random-walk Metropolis on the ordered set with single-coordinate proposals.

    ``n_chains`` independent chains run side by side.  During the first
    ``tune_sweeps`` sweeps of burn-in the per-site step sizes are adapted
    towards acceptance ``target``; they are frozen afterwards.  Proposals
    that leave the ordered set are rejected.
    """
    if spec.N > MAX_CHAIN_N:
        raise DomainError(f"Metropolis oracle is limited to N <= {MAX_CHAIN_N}")
    rng = counter_rng(seed, spec.N, STREAM_CHAIN)
    N = spec.N
    from rmtlab.spectral import classical_locations

    base = classical_locations(N) if N > 1 else np.zeros(1)
    if N > 1:
        base = base - 1.0 / N  # gamma_N = 2 sits on the edge; shift off it
    X = np.tile(base, (n_chains, 1)) + 0.1 / N * rng.standard_normal((n_chains, N))
    X.sort(axis=1)
    step = np.full(N, 0.5 / N if N > 1 else 1.0)
    tune_sweeps = min(tune_sweeps, burn_in)
    for k in range(burn_in):
        acc = _sweep(spec, X, step, rng)
        if k < tune_sweeps:
            step *= np.exp((acc - target) / math.sqrt(k + 1.0))
    per_chain = max(1, -(-n_samples // n_chains))
    out = np.empty((per_chain, n_chains, N))
    acc_total = np.zeros(N)
    for k in range(per_chain):
        for _ in range(thinning):
            acc_total += _sweep(spec, X, step, rng)
        out[k] = X
    acceptance = float(acc_total.mean() / (per_chain * thinning))
    if not 0.1 <= acceptance <= 0.7:
        raise TuningError(f"Metropolis acceptance {acceptance:.3f} outside [0.1, 0.7]")
    # diagnostics on a scalar summary: the first gap (or position when N = 1)
    summary = out[:, :, 1] - out[:, :, 0] if N > 1 else out[:, :, 0]
    tau = _integrated_autocorrelation(summary)
    total = per_chain * n_chains
    ess = total / tau
    half = per_chain // 2
    if half >= 1:
        first, second = summary[:half].ravel(), summary[half:2 * half].ravel()
        ks = float(stats.ks_2samp(first, second).statistic)
        n_eff = max(first.size / tau, 1.0)
        # mean KS distance between two independent samples of size n is
        # about 0.87 sqrt(2/n)
        limit = 2.0 * 0.87 * math.sqrt(2.0 / n_eff)
    else:
        ks, limit = 0.0, math.inf
    samples = out.reshape(total, N)[:n_samples]
    return ChainResult(spec, samples, acceptance, step, float(ess), ks, limit)


# ------------------------------------------------------------- surmise

def wigner_surmise(beta: int, s):
    """Two-particle gap density normalized to unit mean spacing."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise DomainError("gap must be nonnegative")
    if beta == 1:
        return 0.5 * np.pi * s * np.exp(-0.25 * np.pi * s * s)
    if beta == 2:
        return 32.0 / np.pi ** 2 * s * s * np.exp(-4.0 * s * s / np.pi)
    raise DomainError("surmise is available for beta 1 and 2")


def surmise_cdf(beta: int, s):
    s = np.clip(np.asarray(s, dtype=float), 0.0, None)
    if beta == 1:
        return -np.expm1(-0.25 * np.pi * s * s)
    if beta == 2:
        return special.erf(2.0 * s / math.sqrt(np.pi)) - 4.0 * s / np.pi * np.exp(-4.0 * s * s / np.pi)
    raise DomainError("surmise is available for beta 1 and 2")


def two_by_two_gap(a, c, b):
    """Eigenvalue gap of ``[[a, b], [conj(b), c]]``: ``sqrt((a - c)^2 + 4|b|^2)``."""
    return np.sqrt((np.asarray(a) - c) ** 2 + 4.0 * np.abs(b) ** 2)


def small_n_gap_law(beta: int, n_samples: int, seed: int = 0) -> np.ndarray:
    """Unit-mean gaps of directly sampled 2x2 Gaussian matrices of class ``beta``."""
    if beta not in (1, 2):
        raise DomainError("beta must be 1 or 2")
    rng = counter_rng(seed, 2, STREAM_CHAIN)
    # diagonal variance 2, off-diagonal variance 1 (real parts 1/2 each when complex)
    dscale = math.sqrt(2.0) if beta == 1 else 1.0
    a, c = dscale * rng.standard_normal((2, n_samples))
    if beta == 1:
        b = rng.standard_normal(n_samples)
    else:
        b = (rng.standard_normal(n_samples) + 1j * rng.standard_normal(n_samples)) / math.sqrt(2.0)
    g = two_by_two_gap(a, c, b)
    return g / g.mean()


# ------------------------------------------------------ Fokker-Planck

@dataclass
class DensityGrid:
    """Density ``q`` relative to the reference measure on a (centre, gap) grid.

    ``c_edges`` and ``g_edges`` are cell edges; ``q`` holds cell values;
    ``mass`` is the reference probability of each cell (``None`` until a
    reference is attached).
    """

    c_edges: np.ndarray
    g_edges: np.ndarray
    q: np.ndarray
    t: float = 0.0
    mass: np.ndarray | None = field(default=None, repr=False)

    dimension = 2

    @property
    def c(self) -> np.ndarray:
        return 0.5 * (self.c_edges[1:] + self.c_edges[:-1])

    @property
    def g(self) -> np.ndarray:
        return 0.5 * (self.g_edges[1:] + self.g_edges[:-1])

    @property
    def spacing(self):
        return np.diff(self.c_edges), np.diff(self.g_edges)

    def total(self) -> float:
        return float(np.sum(self.q * self.mass))


def gap_edges(g_min: float = 1e-4, g_max: float = 6.0, n: int = 160, n_log: int = 40) -> np.ndarray:
    """Gap-coordinate edges: ``n_log`` log-spaced cells from ``g_min`` then uniform to ``g_max``."""
    if n < 4:
        raise DomainError("need at least 4 gap cells")
    n_log = min(n_log, n // 4)
    split = 0.05
    log_part = np.geomspace(g_min, split, n_log + 1)
    h = log_part[-1] - log_part[-2]
    n_lin = max(int(math.ceil((g_max - split) / max(h, (g_max - split) / (n - n_log)))), 1)
    lin = np.linspace(split, g_max, n_lin + 1)
    return np.concatenate([log_part, lin[1:]])


def reduced_hamiltonian(spec: GibbsSpec, c, g) -> np.ndarray:
    """Two-particle energy in centre/gap coordinates, ``x = c -/+ g/2``."""
    if spec.N != 2:
        raise DomainError("reduced coordinates need N = 2")
    c, g = np.broadcast_arrays(np.asarray(c, dtype=float), np.asarray(g, dtype=float))
    x1, x2 = c - 0.5 * g, c + 0.5 * g
    beta = spec.beta
    H = 2 * 0.25 * beta * (x1 * x1 + x2 * x2) - beta * np.log(g)
    if spec.kind == "omega":
        pot = spec.potential
        H = H + 2 * beta * (pot.value(0, x1) + pot.value(1, x2))
        if pot.far[0, 1]:
            H = H + beta * np.log(g + pot.eta)
    return H


@dataclass
class _Operator:
    K: sparse.csr_matrix
    mass: np.ndarray
    keep: np.ndarray
    shape: tuple


def _assemble(spec: GibbsSpec, c_edges, g_edges, cutoff: float) -> _Operator:
    """Finite-volume generator ``K/m`` of the reversible flow on the grid.

    Dirichlet form ``(1/2N) sum_j int (d_j f)^2`` becomes
    ``(1/2N) int [(1/2)(d_c f)^2 + 2 (d_g f)^2]`` in centre/gap coordinates.
    Face weights use the geometric mean of the neighbouring densities so
    that ``K`` is symmetric and the flow preserves the cell masses ``m``.
    """
    hc, hg = np.diff(c_edges), np.diff(g_edges)
    cc = 0.5 * (c_edges[1:] + c_edges[:-1])
    gc = 0.5 * (g_edges[1:] + g_edges[:-1])
    C, G = np.meshgrid(cc, gc, indexing="ij")
    H = reduced_hamiltonian(spec, C, G)
    H = H - H.min()
    keep = H < cutoff
    dens = np.exp(-np.minimum(H, cutoff))
    nc, ng = H.shape
    idx = np.arange(nc * ng).reshape(nc, ng)
    coef = 1.0 / (2 * spec.N)
    wc = np.sqrt(dens[1:, :] * dens[:-1, :]) * hg[None, :] / (0.5 * (hc[1:] + hc[:-1]))[:, None]
    wg = np.sqrt(dens[:, 1:] * dens[:, :-1]) * hc[:, None] / (0.5 * (hg[1:] + hg[:-1]))[None, :]
    wc = wc * coef * 0.5 * (keep[1:, :] & keep[:-1, :])
    wg = wg * coef * 2.0 * (keep[:, 1:] & keep[:, :-1])
    rows = np.concatenate([idx[1:, :].ravel(), idx[:, 1:].ravel()])
    cols = np.concatenate([idx[:-1, :].ravel(), idx[:, :-1].ravel()])
    vals = np.concatenate([wc.ravel(), wg.ravel()])
    n = nc * ng
    K = sparse.coo_matrix((np.r_[vals, vals], (np.r_[rows, cols], np.r_[cols, rows])),
                          shape=(n, n)).tocsr()
    K = K - sparse.diags(np.asarray(K.sum(axis=1)).ravel())
    mass = (dens * hc[:, None] * hg[None, :]).ravel()
    mass = np.where(keep.ravel(), mass, 0.0)
    mass /= mass.sum()
    # rescale K by the same normalization as the masses
    norm = float(np.sum(dens[keep] * (hc[:, None] * hg[None, :])[keep]))
    return _Operator((K / norm).tocsr(), mass, keep.ravel(), (nc, ng))


def relative_entropy(grid: DensityGrid) -> float:
    """``S(q) = int q log q`` against the reference cell masses."""
    q = grid.q.ravel()
    m = grid.mass.ravel()
    pos = (q > 0) & (m > 0)
    return float(np.sum(m[pos] * q[pos] * np.log(q[pos])))


def dirichlet_form(grid: DensityGrid, spec: GibbsSpec) -> float:
    """``(1/2N) sum_j int (d_j sqrt(q))^2`` by central differences on the grid."""
    if spec.N != 2:
        raise DomainError("the grid Dirichlet form is implemented for N = 2")
    r = np.sqrt(np.clip(grid.q, 0.0, None))
    dc = np.gradient(r, grid.c, axis=0)
    dg = np.gradient(r, grid.g, axis=1)
    m = grid.mass.reshape(r.shape)
    return float(np.sum(m * (0.5 * dc * dc + 2.0 * dg * dg)) / (2 * spec.N))


@dataclass
class DecayReport:
    spec: GibbsSpec
    times: np.ndarray
    entropy: np.ndarray
    dirichlet: np.ndarray
    total_mass: np.ndarray
    rate: float
    rate_window: tuple
    dissipation_ratio: np.ndarray = field(repr=False)
    final: DensityGrid = field(repr=False)

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.entropy) <= 1e-14 * max(1.0, abs(self.entropy[0]))))

    @property
    def mass_drift(self) -> float:
        return float(np.max(np.abs(self.total_mass - 1.0)))

    def rows(self):
        """``(t, S, D)`` triples."""
        return list(zip(self.times.tolist(), self.entropy.tolist(), self.dirichlet.tolist()))


def default_grid(spec: GibbsSpec, n_c: int = 120, n_g: int = 160, c_max: float = 4.0) -> DensityGrid:
    c_edges = np.linspace(-c_max, c_max, n_c + 1)
    g_edges = gap_edges(n=n_g)
    shape = (n_c, g_edges.size - 1)
    return DensityGrid(c_edges, g_edges, np.ones(shape))


def tilted_start(spec: GibbsSpec, grid: DensityGrid | None = None, amplitude: float = 0.8) -> DensityGrid:
    """Bounded initial density ``~ 1 + amplitude * tanh(c + g - 1)``."""
    grid = default_grid(spec) if grid is None else grid
    C, G = np.meshgrid(grid.c, grid.g, indexing="ij")
    return DensityGrid(grid.c_edges, grid.g_edges, 1.0 + amplitude * np.tanh(C + G - 1.0))


def fokker_planck_decay(spec: GibbsSpec, initial: DensityGrid, t_max: float, dt: float = 0.01,
                        method: str = "implicit", record_every: int = 5, cutoff: float = 50.0,
                        fit_range=(1e-2, 1e-7)) -> DecayReport:
    """Evolve ``dq/dt = L q`` for two particles and track entropy decay.

    ``method="implicit"`` takes backward Euler steps (one sparse LU
    factorization, unconditionally stable, positivity and mass preserving).
    ``method="explicit"`` takes forward Euler steps and raises
    :class:`CFLError` when ``dt`` exceeds the stability limit of the grid.
    Cells whose reference weight is below ``exp(-cutoff)`` relative to the
    maximum are dropped.  The decay rate is fitted to ``log S`` while
    ``S / S_0`` lies inside ``fit_range``.
    """
    if spec.N != 2:
        raise DomainError("the Fokker-Planck oracle works with N = 2")
    if dt <= 0 or t_max <= 0:
        raise DomainError("dt and t_max must be positive")
    op = _assemble(spec, initial.c_edges, initial.g_edges, cutoff)
    keep = op.keep
    m = op.mass[keep]
    A = op.K[keep][:, keep]
    # generator on q is m^{-1} A
    q = np.asarray(initial.q, dtype=float).ravel()[keep]
    if np.any(q < 0):
        raise DomainError("initial density must be nonnegative")
    q = q / np.sum(q * m)
    if method == "explicit":
        limit = 1.0 / np.max(-A.diagonal() / m)
        if dt > limit:
            raise CFLError(f"explicit step {dt:.3e} exceeds the stability limit {limit:.3e}")

        def advance(v):
            return v + dt * (A @ v) / m
    elif method == "implicit":
        lu = sparse_linalg.splu((sparse.diags(m) - dt * A).tocsc())

        def advance(v):
            return lu.solve(m * v)
    else:
        raise DomainError(f"unknown method {method!r}")

    full = np.ones(op.mass.size)
    grid = DensityGrid(initial.c_edges, initial.g_edges, None, 0.0, op.mass.reshape(op.shape))

    def snapshot(v, t):
        full[keep] = v
        grid.q = full.reshape(op.shape).copy()
        grid.t = t
        return relative_entropy(grid), dirichlet_form(grid, spec), float(np.sum(v * m))

    times, S, D, M = [], [], [], []
    n_steps = int(math.ceil(t_max / dt - 1e-9))
    for k in range(n_steps + 1):
        if k % record_every == 0 or k == n_steps:
            s_k, d_k, m_k = snapshot(q, k * dt)
            times.append(k * dt)
            S.append(s_k)
            D.append(d_k)
            M.append(m_k)
        if k < n_steps:
            q = advance(q)
    times, S, D, M = map(np.array, (times, S, D, M))
    rate, window = _fit_rate(times, S, fit_range)
    dSdt = np.gradient(S, times)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(D > 0, -dSdt / (4.0 * D), np.nan)
    return DecayReport(spec, times, S, D, M, rate, window, ratio, grid)


def _fit_rate(t, S, fit_range):
    """Least-squares slope of ``-log S`` where ``fit_range[1] < S/S_0 < fit_range[0]``."""
    if S[0] <= 0:
        return 0.0, (0.0, 0.0)
    rel = S / S[0]
    sel = (rel < fit_range[0]) & (rel > fit_range[1])
    if sel.sum() < 3:
        sel = rel > 0
        sel[0] = False
    if sel.sum() < 2:
        return 0.0, (0.0, 0.0)
    slope = np.polyfit(t[sel], np.log(S[sel]), 1)[0]
    return float(-slope), (float(t[sel][0]), float(t[sel][-1]))


def spectral_gap(spec: GibbsSpec, grid: DensityGrid | None = None, cutoff: float = 50.0) -> float:
    """Smallest nonzero eigenvalue of ``-L`` on the grid (``S`` decays at about twice this)."""
    grid = default_grid(spec) if grid is None else grid
    op = _assemble(spec, grid.c_edges, grid.g_edges, cutoff)
    keep = op.keep
    m = op.mass[keep]
    A = op.K[keep][:, keep]
    s = sparse.diags(1.0 / np.sqrt(m))
    ev = sparse_linalg.eigsh(-(s @ A @ s), k=2, sigma=-1e-6, which="LM")[0]
    return float(np.sort(ev)[1])
