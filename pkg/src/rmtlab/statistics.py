"""Monte Carlo estimators for local spectral statistics.

Each estimator reduces per-sample quantities with an order-independent sum
and reports standard errors by batch means over sample index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from rmtlab.ensembles import EnsembleConfig, sample_wigner
from rmtlab.errors import DomainError
from rmtlab.spectral import (
    Spectrum,
    count_in_interval,
    eigen_decompose,
    eigenvalue_batch,
    semicircle_density,
)

DEFAULT_BULK_FRACTION = 0.6
N_BATCHES = 20


def batch_means(values, n_batches: int = N_BATCHES):
    """Mean and batch-means standard error along axis 0.

    Samples are split into contiguous batches in index order; with fewer
    samples than batches every sample is its own batch.
    """
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    if n == 0:
        raise ValueError("no samples")
    mean = v.mean(axis=0)
    b = min(n_batches, n)
    if b < 2:
        return mean, np.full_like(mean, np.inf)
    edges = np.linspace(0, n, b + 1).astype(int)
    bm = np.array([v[edges[i]:edges[i + 1]].mean(axis=0) for i in range(b)])
    w = np.diff(edges)
    # weighted batch means (batches differ by at most one sample)
    var = np.sum(w[:, None] * (bm - mean) ** 2 if bm.ndim > 1 else w * (bm - mean) ** 2, axis=0)
    var /= (b - 1) * n
    return mean, np.sqrt(var)


def bulk_indices(N: int, bulk_fraction: float = DEFAULT_BULK_FRACTION) -> np.ndarray:
    """Indices ``i`` of the central ``bulk_fraction`` of the spectrum (gap ``i -> i+1``)."""
    if not 0 < bulk_fraction < 1:
        raise DomainError("bulk_fraction must lie in (0, 1)")
    lo = int(math.floor(N * (1 - bulk_fraction) / 2))
    hi = N - 1 - lo
    return np.arange(lo, hi)


# ----------------------------------------------------------- local law

@dataclass
class LocalLawReport:
    E: float
    eta_grid: np.ndarray
    mean_deviation: np.ndarray
    max_deviation: np.ndarray
    deviation_se: np.ndarray
    mean_density: np.ndarray
    sample_count: int
    reference_density: float

    def rows(self):
        for i, eta in enumerate(self.eta_grid):
            yield (eta, self.mean_deviation[i], self.deviation_se[i], self.max_deviation[i],
                   self.mean_density[i])


def local_law_scan(config: EnsembleConfig, E: float, eta_grid, n_samples: int,
                   kappa: float = 0.1, K: float = 2.0, start: int = 0,
                   workers=None) -> LocalLawReport:
    """Deviation ``|N_I/(N eta) - rho_sc(E)|`` per window width, over samples."""
    if abs(E) > 2 - kappa:
        raise DomainError(f"E={E} outside the bulk guard |E| <= {2 - kappa}")
    eta_grid = np.asarray(eta_grid, dtype=float)
    N = config.N
    if np.any(np.diff(eta_grid) <= 0):
        raise DomainError("eta_grid must be strictly increasing")
    if np.any(eta_grid < K / N - 1e-15) or np.any(eta_grid > 1 / K + 1e-15):
        raise DomainError(f"every eta must satisfy K/N <= eta <= 1/K with K={K}")
    lam = eigenvalue_batch(config, n_samples, start, workers)
    rho = float(semicircle_density(E))
    dens = np.empty((n_samples, eta_grid.size))
    for s in range(n_samples):
        for i, eta in enumerate(eta_grid):
            dens[s, i] = count_in_interval(lam[s], E, eta) / (N * eta)
    dev = np.abs(dens - rho)
    mean, se = batch_means(dev)
    return LocalLawReport(float(E), eta_grid, mean, dev.max(axis=0), se, dens.mean(axis=0),
                          n_samples, rho)


# ----------------------------------------------------------- delocalization

@dataclass
class DelocalizationReport:
    N: int
    p: float
    E: float
    indices: np.ndarray
    eigenvalues: np.ndarray
    scaled_p_norm: np.ndarray  # N^(1/2 - 1/p) ||v||_p
    scaled_sup_norm_sq: np.ndarray  # N ||v||_inf^2
    localized: np.ndarray

    @property
    def participation(self) -> np.ndarray:
        """``N ||v||_4^4`` when ``p == 4``."""
        return self.scaled_p_norm ** 4 if self.p == 4 else None


def scaled_norms(vectors: np.ndarray, p: float):
    """``N^(1/2-1/p) ||v||_p`` and ``N ||v||_inf^2`` per column."""
    N = vectors.shape[0]
    a = np.abs(vectors)
    pn = np.sum(a ** p, axis=0) ** (1.0 / p) * N ** (0.5 - 1.0 / p)
    sup = N * np.max(a, axis=0) ** 2
    return pn, sup


def delocalization_stats(spec: Spectrum, E: float, window_count: float = 5.0, p: float = 4.0,
                         M: float = 2.5) -> DelocalizationReport:
    """Norms of eigenvectors with eigenvalue within ``window_count/N`` of ``E``.

    A vector is flagged localized when its scaled ``p``-norm exceeds ``M``.
    """
    if spec.eigenvectors is None:
        raise DomainError("delocalization_stats needs eigenvectors")
    if abs(E) >= 2:
        raise DomainError("E must lie inside (-2, 2)")
    if p <= 2:
        raise DomainError("p must exceed 2")
    N = spec.N
    sel = np.nonzero(np.abs(spec.eigenvalues - E) <= window_count / N)[0]
    vecs = spec.eigenvectors[:, sel]
    pn, sup = scaled_norms(vecs, p) if sel.size else (np.empty(0), np.empty(0))
    return DelocalizationReport(N, p, float(E), sel, spec.eigenvalues[sel], pn, sup, pn > M)


# ------------------------------------------------------- level repulsion

def _union_length(left: np.ndarray, right: np.ndarray, lo: float, hi: float) -> float:
    """Length of ``[lo, hi] ∩ union_i [left_i, right_i]`` (``left`` sorted)."""
    left = np.clip(left, lo, hi)
    right = np.clip(right, lo, hi)
    keep = right > left
    left, right = left[keep], right[keep]
    if left.size == 0:
        return 0.0
    # running max of right ends merges overlapping intervals in one pass
    run = np.maximum.accumulate(right)
    starts = np.r_[True, left[1:] > run[:-1]]
    seg_id = np.cumsum(starts) - 1
    seg_left = left[starts]
    seg_right = np.full(seg_left.size, -np.inf)
    np.maximum.at(seg_right, seg_id, right)
    return float(np.sum(seg_right - seg_left))


def occupancy_fraction(lam: np.ndarray, width: float, n: int, lo: float, hi: float) -> float:
    """Fraction of window centres ``v`` in ``[lo, hi]`` whose window of ``width`` holds >= n levels.

    A window centred at ``v`` holds levels ``i..i+n-1`` exactly when
    ``lam[i+n-1] - width/2 <= v <= lam[i] + width/2``; the set of good
    centres is the union of those intervals.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    if lam.size < n:
        return 0.0
    first = lam[: lam.size - n + 1]
    last = lam[n - 1:]
    ok = (last - first) <= width
    return _union_length(last[ok] - width / 2, first[ok] + width / 2, lo, hi) / (hi - lo)


@dataclass
class RepulsionReport:
    beta: int
    n: int
    E: float
    delta: float
    epsilon_grid: np.ndarray
    probability: np.ndarray
    probability_se: np.ndarray
    hit_events: np.ndarray
    slope: float
    slope_se: float
    slope_ci: tuple
    expected_exponent: float
    sample_count: int
    widened_uncertainty: bool


def repulsion_exponent(beta: int, n: int) -> float:
    return float(n * n) if beta == 2 else n * (n + 1) / 2.0


def level_repulsion_probe(config: EnsembleConfig, E: float, epsilon_grid, n: int,
                          n_samples: int, delta: float = 0.25, start: int = 0,
                          require_smooth: bool = True, workers=None) -> RepulsionReport:
    """``P(N_I >= n)`` for ``I`` of length ``eps/N``, averaged over centres in ``[E-delta, E+delta]``.

    Each spectrum contributes the exact fraction of centres whose window is
    occupied by ``n`` or more levels, which resolves events far rarer than
    one per matrix.  The exponent is the weighted least-squares slope of
    ``log P`` against ``log eps``.
    """
    if require_smooth and not config.entry_distribution.is_smooth:
        raise DomainError("level repulsion needs a smooth entry density (gaussian or laplace)")
    if abs(E) + delta >= 2:
        raise DomainError("energy window must stay inside (-2, 2)")
    eps = np.asarray(epsilon_grid, dtype=float)
    if np.any(eps <= 0) or np.any(eps > 1):
        raise DomainError("epsilon values must lie in (0, 1]")
    N = config.N
    lam = eigenvalue_batch(config, n_samples, start, workers)
    frac = np.empty((n_samples, eps.size))
    hits = np.zeros(eps.size, dtype=int)
    lo, hi = E - delta, E + delta
    for s in range(n_samples):
        row = lam[s]
        inside = row[(row >= lo - 1.0 / N) & (row <= hi + 1.0 / N)]
        for i, e in enumerate(eps):
            w = e / N
            frac[s, i] = occupancy_fraction(inside, w, n, lo, hi)
            hits[i] += int(np.count_nonzero(inside[n - 1:] - inside[: inside.size - n + 1] <= w))
    prob, se = batch_means(frac)
    x = np.log(eps)
    good = prob > 0
    slope, slope_se = np.nan, np.inf
    if good.sum() >= 2:
        y = np.log(prob[good])
        sy = np.where(se[good] > 0, se[good] / prob[good], 1.0)
        wts = 1.0 / sy**2
        X = np.vstack([np.ones(good.sum()), x[good]]).T
        cov = np.linalg.inv(X.T @ (X * wts[:, None]))
        coef = cov @ (X.T @ (wts * y))
        slope = float(coef[1])
        slope_se = float(math.sqrt(cov[1, 1]))
    ci = (slope - 1.96 * slope_se, slope + 1.96 * slope_se)
    return RepulsionReport(config.beta, n, float(E), delta, eps, prob, se, hits, slope, slope_se,
                           ci, repulsion_exponent(config.beta, n), n_samples,
                           bool(hits[np.argmin(eps)] < 25))


# ------------------------------------------------------------------ gaps

@dataclass
class GapSample:
    s: np.ndarray
    beta: int
    N: int
    bulk_fraction: float
    sample_count: int
    source: str = ""
    histogram_edges: np.ndarray = field(default=None, repr=False)
    histogram_density: np.ndarray = field(default=None, repr=False)


def unfolded_gaps(lam: np.ndarray, bulk_fraction: float = DEFAULT_BULK_FRACTION) -> np.ndarray:
    """``N rho_sc(lambda_i) (lambda_{i+1} - lambda_i)`` over the bulk index window."""
    N = lam.size
    idx = bulk_indices(N, bulk_fraction)
    return N * semicircle_density(lam[idx]) * (lam[idx + 1] - lam[idx])


def gaps_from_spectra(spectra, beta: int, bulk_fraction: float = DEFAULT_BULK_FRACTION,
                      source: str = "", bins=None) -> GapSample:
    spectra = np.atleast_2d(np.asarray(spectra))
    s = np.concatenate([unfolded_gaps(row, bulk_fraction) for row in spectra])
    edges = np.linspace(0, 4, 81) if bins is None else np.asarray(bins)
    dens, _ = np.histogram(s, bins=edges, density=True)
    return GapSample(s, beta, spectra.shape[1], bulk_fraction, spectra.shape[0], source, edges, dens)


def gap_distribution(config: EnsembleConfig, bulk_fraction: float = DEFAULT_BULK_FRACTION,
                     n_samples: int = 100, start: int = 0, bins=None) -> GapSample:
    lam = eigenvalue_batch(config, n_samples, start)
    return gaps_from_spectra(lam, config.beta, bulk_fraction, config.label, bins)


def ks_to_surmise(sample: GapSample | np.ndarray, beta: int) -> float:
    from rmtlab.oracles import surmise_cdf

    s = sample.s if isinstance(sample, GapSample) else np.asarray(sample)
    return float(stats.ks_1samp(s, lambda t: surmise_cdf(beta, t)).statistic)


def ks_two_sample(a, b) -> float:
    a = a.s if isinstance(a, GapSample) else np.asarray(a)
    b = b.s if isinstance(b, GapSample) else np.asarray(b)
    return float(stats.ks_2samp(a, b).statistic)


# ---------------------------------------------------------- correlations

def sine_kernel(x):
    return np.sinc(np.asarray(x, dtype=float))


def sine_kernel_determinant(points) -> float:
    """``det[K(x_i - x_j)]`` with ``K(x) = sin(pi x)/(pi x)``, ``K(0) = 1``."""
    x = np.atleast_1d(np.asarray(points, dtype=float))
    if x.size < 1:
        raise DomainError("need at least one point")
    return float(np.linalg.det(sine_kernel(x[:, None] - x[None, :])))


def sine_two_point(x):
    """``1 - K(x)^2``, the unfolded two-point function of the hermitian bulk."""
    return 1.0 - sine_kernel(x) ** 2


@dataclass
class CorrelationEstimate:
    k: int
    E: float
    delta: float
    bins: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    counts: np.ndarray
    sample_count: int
    origin_count: int
    widened_uncertainty: bool

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bins[1:] + self.bins[:-1])


def _correlation_sample(lam, k, E, delta, bins, n_energy, N):
    rho = float(semicircle_density(E))
    scale = N * rho
    width = np.diff(bins)
    xmax = float(np.max(np.abs(bins)))
    if k == 1:
        vs = np.linspace(E - delta, E + delta, n_energy)
        cnt = np.zeros(width.size)
        for v in vs:
            x = scale * (lam - v)
            cnt += np.histogram(x[np.abs(x) <= xmax], bins=bins)[0]
        return cnt, n_energy
    origins = np.nonzero((lam >= E - delta) & (lam <= E + delta))[0]
    if k == 2:
        cnt = np.zeros(width.size)
        for i in origins:
            x = scale * (lam - lam[i])
            x = np.delete(x, i)
            x = x[np.abs(x) <= xmax]
            # symmetrize: both signed offsets land in the (nonnegative) bins
            cnt += 0.5 * (np.histogram(x, bins=bins)[0] + np.histogram(-x, bins=bins)[0])
        return cnt, origins.size
    cnt = np.zeros((width.size, width.size))
    for i in origins:
        x = scale * (lam - lam[i])
        x = np.delete(x, i)
        x = x[np.abs(x) <= xmax]
        a, b = np.meshgrid(x, x, indexing="ij")
        off = ~np.eye(x.size, dtype=bool)
        cnt += np.histogram2d(a[off], b[off], bins=[bins, bins])[0]
    return cnt, origins.size


def kpoint_correlation(config: EnsembleConfig, k: int, E: float, delta: float, bins,
                       n_samples: int, kappa: float = 0.1, n_energy: int = 20,
                       start: int = 0, workers=None) -> CorrelationEstimate:
    """Energy-averaged, unfolded ``k``-point correlation around ``E``.

    Coordinates are ``x = N rho_sc(E) (lambda - origin)``.  For ``k = 1`` the
    origin runs over ``n_energy`` grid energies in ``[E-delta, E+delta]``; for
    ``k >= 2`` every eigenvalue inside that window serves as origin, which is
    the continuum limit of the energy average and avoids the size bias of
    picking the level nearest a grid energy.  Values are densities in
    unfolded units (sine-kernel determinant with one point at the origin).
    """
    if k not in (1, 2, 3):
        raise DomainError("k must be 1, 2 or 3")
    if abs(E) >= 2 - kappa:
        raise DomainError("E outside the bulk guard")
    bins = np.asarray(bins, dtype=float)
    N = config.N
    lam = eigenvalue_batch(config, n_samples, start, workers)
    per_sample = []
    norms = []
    for s in range(n_samples):
        c, o = _correlation_sample(lam[s], k, E, delta, bins, n_energy, N)
        per_sample.append(c)
        norms.append(o)
    per_sample = np.array(per_sample)
    norms = np.array(norms, dtype=float)
    width = np.diff(bins)
    cell = width if k <= 2 else np.outer(width, width)
    total_norm = norms.sum()
    counts = per_sample.sum(axis=0)
    values = counts / (total_norm * cell)
    # ratio estimator: batch means of per-sample counts and normalizers
    b = min(N_BATCHES, n_samples)
    edges = np.linspace(0, n_samples, b + 1).astype(int)
    bc = np.array([per_sample[edges[i]:edges[i + 1]].sum(axis=0) for i in range(b)])
    bn = np.array([norms[edges[i]:edges[i + 1]].sum() for i in range(b)])
    ratios = bc / (np.where(bn > 0, bn, np.nan).reshape((-1,) + (1,) * (bc.ndim - 1)) * cell)
    err = np.nanstd(ratios, axis=0, ddof=1) / math.sqrt(b) if b > 1 else np.full_like(values, np.inf)
    widened = bool(np.any(counts == 0))
    return CorrelationEstimate(k, float(E), float(delta), bins, values, err, counts, n_samples,
                               int(total_norm), widened)


# ------------------------------------------------------- gap observables

def triangle_bump(t):
    """``max(0, 1 - |t - 1|)``."""
    return np.clip(1.0 - np.abs(np.asarray(t, dtype=float) - 1.0), 0.0, None)


def smooth_bump(t, lo: float = 0.5, hi: float = 1.5):
    """C-infinity bump supported on ``[lo, hi]`` with peak value 1."""
    t = np.asarray(t, dtype=float)
    u = (2.0 * t - (lo + hi)) / (hi - lo)
    out = np.zeros_like(u)
    m = np.abs(u) < 1
    out[m] = np.exp(1.0 - 1.0 / (1.0 - u[m] ** 2))
    return out


OBSERVABLE_BATTERY = {"triangle@1": triangle_bump, "smooth[0.5,1.5]": smooth_bump}


def gap_observable(positions, G, n: int, J=None) -> float:
    """``(1/N) sum_{i in J} G(N (x_{i+n} - x_i))`` for ordered positions.

    Uses the positive gap ``x_{i+n} - x_i``; ``J`` holds 0-based indices and
    defaults to all admissible ones.
    """
    x = positions.eigenvalues if isinstance(positions, Spectrum) else np.asarray(positions)
    N = x.size
    if n < 1:
        raise DomainError("n must be >= 1")
    J = np.arange(N - n) if J is None else np.asarray(J, dtype=int)
    if J.size and (J.min() < 0 or J.max() + n >= N):
        raise DomainError("index set J overflows the configuration")
    return float(np.sum(G(N * (x[J + n] - x[J]))) / N)


def observable_table(spectra, n_values=(1, 2), battery=None, bulk_fraction=DEFAULT_BULK_FRACTION):
    """Per-sample battery values, shape ``(n_samples, len(battery) * len(n_values))``."""
    battery = OBSERVABLE_BATTERY if battery is None else battery
    spectra = np.atleast_2d(spectra)
    N = spectra.shape[1]
    J = bulk_indices(N, bulk_fraction)
    names, cols = [], []
    for gname, G in battery.items():
        for n in n_values:
            Jn = J[J + n < N]
            names.append((gname, n))
            cols.append([gap_observable(row, G, n, Jn) for row in spectra])
    return names, np.array(cols).T
