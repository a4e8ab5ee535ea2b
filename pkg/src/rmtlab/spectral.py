"""Spectra, Stieltjes transforms and semicircle reference quantities.

Also holds the minor/resolvent machinery behind the local semicircle law:
removing row and column ``k`` gives the minor ``B^(k)``, whose spectrum
interlaces with that of ``H`` and whose eigenvectors, projected on the
removed column, give the weights ``xi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import optimize

from rmtlab.ensembles import EnsembleConfig, WignerMatrix, sample_wigner
from rmtlab.errors import DomainError, NumericalError


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Ascending eigenvalues with optional orthonormal eigenvectors (columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None

    def __post_init__(self):
        self.eigenvalues.setflags(write=False)
        if self.eigenvectors is not None:
            self.eigenvectors.setflags(write=False)

    @property
    def N(self) -> int:
        return self.eigenvalues.size

    # columnar text file (index, eigenvalue) plus an optional raw
    # little-endian eigenvector block stored next to it in C order
    def save(self, path, header: str = "") -> None:
        path = Path(path)
        lines = [f"# rmtlab spectrum N={self.N} units=normalized-energy"]
        if header:
            lines.extend(f"# {h}" for h in header.splitlines())
        if self.eigenvectors is not None:
            vec_path = path.with_suffix(".vec.bin")
            dtype = "<c16" if np.iscomplexobj(self.eigenvectors) else "<f8"
            np.ascontiguousarray(self.eigenvectors).astype(dtype).tofile(vec_path)
            lines.append(f"# eigenvectors={vec_path.name} dtype={dtype} shape={self.N},{self.N} "
                         f"order=C columns=eigenvectors")
        lines.append("index\teigenvalue")
        body = "\n".join(f"{i}\t{v:.17g}" for i, v in enumerate(self.eigenvalues))
        path.write_text("\n".join(lines) + "\n" + body + "\n")

    @classmethod
    def load(cls, path) -> "Spectrum":
        path = Path(path)
        vec_meta = None
        rows = []
        for line in path.read_text().splitlines():
            if line.startswith("#"):
                if "eigenvectors=" in line:
                    vec_meta = dict(tok.split("=", 1) for tok in line[1:].split() if "=" in tok)
                continue
            if line.startswith("index"):
                continue
            rows.append(float(line.split("\t")[1]))
        lam = np.array(rows)
        vecs = None
        if vec_meta is not None:
            n = lam.size
            vecs = np.fromfile(path.parent / vec_meta["eigenvectors"], dtype=vec_meta["dtype"])
            vecs = vecs.reshape(n, n).astype(np.complex128 if "c" in vec_meta["dtype"] else np.float64)
        return cls(lam, vecs)


def _fix_phase(v: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude component is real positive."""
    idx = np.argmax(np.abs(v), axis=0)
    top = v[idx, np.arange(v.shape[1])]
    return v * (np.abs(top) / top)[None, :]


def eigen_decompose(H: WignerMatrix | np.ndarray, want_vectors: bool = False,
                    method: str = "lapack") -> Spectrum:
    """Full spectrum of a self-adjoint matrix, sorted ascending.

    ``method="lapack"`` uses the LAPACK symmetric/hermitian drivers;
    ``method="qr"`` uses the in-house Householder + implicit QR solver
    (:mod:`rmtlab.tridiag`), practical up to a few hundred rows.
    """
    h = H.entries if isinstance(H, WignerMatrix) else np.asarray(H)
    try:
        if method == "lapack":
            if want_vectors:
                w, v = np.linalg.eigh(h)
            else:
                w, v = np.linalg.eigvalsh(h), None
        elif method == "qr":
            from rmtlab.tridiag import eigh_qr

            w, v = eigh_qr(h, want_vectors)
        else:
            raise ValueError(f"unknown eigensolver method {method!r}")
    except (np.linalg.LinAlgError, NumericalError) as exc:
        fp = H.fingerprint if isinstance(H, WignerMatrix) else "raw-array"
        raise NumericalError(f"eigensolver failed on matrix {fp}: {exc}") from exc
    if v is not None:
        v = _fix_phase(v)
    return Spectrum(np.array(w, dtype=float), v)


def empirical_stieltjes(spec: Spectrum | np.ndarray, z: complex) -> complex:
    """``(1/N) sum 1/(lambda - z)`` for ``Im z > 0``."""
    if np.imag(z) <= 0:
        raise DomainError("Stieltjes transform needs Im z > 0")
    lam = spec.eigenvalues if isinstance(spec, Spectrum) else np.asarray(spec)
    return complex(np.mean(1.0 / (lam - z)))


# ---------------------------------------------------------------- semicircle

def semicircle_density(E):
    E = np.asarray(E, dtype=float)
    return np.sqrt(np.clip(4.0 - E * E, 0.0, None)) / (2.0 * np.pi)


def semicircle_cdf(E):
    """Closed form of the integrated semicircle density."""
    E = np.clip(np.asarray(E, dtype=float), -2.0, 2.0)
    return 0.5 + E * np.sqrt(4.0 - E * E) / (4.0 * np.pi) + np.arcsin(E / 2.0) / np.pi


def semicircle_stieltjes(z: complex) -> complex:
    """Root of ``m^2 + z m + 1 = 0`` lying in the upper half plane."""
    z = complex(z)
    if z.imag <= 0:
        raise DomainError("semicircle_stieltjes needs Im z > 0")
    s = np.sqrt(z * z - 4.0 + 0j)
    # the larger-magnitude root is computed directly, the other via m1*m2 = 1
    big = (-z - s) / 2.0 if abs(-z - s) >= abs(-z + s) else (-z + s) / 2.0
    small = 1.0 / big
    return complex(big if big.imag > 0 else small)


@lru_cache(maxsize=32)
def _classical_locations(N: int) -> tuple:
    out = []
    for j in range(1, N):
        target = j / N
        out.append(optimize.brentq(lambda e: float(semicircle_cdf(e)) - target, -2.0, 2.0,
                                   xtol=1e-15, rtol=4 * np.finfo(float).eps))
    out.append(2.0)
    return tuple(out)


def classical_locations(N: int) -> np.ndarray:
    """Semicircle quantiles ``gamma_j``, ``n_sc(gamma_j) = j/N``, with ``gamma_N = 2``."""
    if N < 1:
        raise DomainError("N must be >= 1")
    return np.array(_classical_locations(int(N)))


def count_in_interval(spec: Spectrum | np.ndarray, E: float, eta: float) -> int:
    """Number of eigenvalues in the closed interval ``[E - eta/2, E + eta/2]``."""
    if eta <= 0:
        raise DomainError("eta must be positive")
    lam = spec.eigenvalues if isinstance(spec, Spectrum) else np.asarray(spec)
    lo = np.searchsorted(lam, E - eta / 2.0, side="left")
    hi = np.searchsorted(lam, E + eta / 2.0, side="right")
    return int(hi - lo)


def self_consistency_residual(spec: Spectrum | np.ndarray, z: complex) -> float:
    """``|m + 1/(m + z)|`` for the empirical Stieltjes transform ``m``."""
    m = empirical_stieltjes(spec, z)
    return abs(m + 1.0 / (m + z))


# ---------------------------------------------------------- minor analysis

@dataclass(frozen=True, eq=False)
class MinorAnalysis:
    k: int
    z: complex
    eigenvalues: np.ndarray
    minor_eigenvalues: np.ndarray
    xi: np.ndarray
    X_k: complex
    column_norm_sq: float
    resolvent_direct: complex
    resolvent_identity: complex

    def interlaces(self, tol: float = 1e-9) -> bool:
        lam, mu = self.eigenvalues, self.minor_eigenvalues
        return bool(np.all(lam[:-1] <= mu + tol) and np.all(mu <= lam[1:] + tol))


def minor_analysis(H: WignerMatrix, k: int, z: complex, rtol: float = 1e-8) -> MinorAnalysis:
    """Decompose the ``(k, k)`` resolvent entry through the minor ``B^(k)``.

    ``k`` is a 0-based row index.  The diagonal resolvent entry is rebuilt
    as ``1 / (h_kk - z - (1/N) sum_a xi_a / (mu_a - z))`` and compared with a
    direct linear solve; a mismatch beyond ``rtol`` raises.
    """
    if np.imag(z) <= 0:
        raise DomainError("minor_analysis needs Im z > 0")
    h = H.entries
    N = h.shape[0]
    if not 0 <= k < N:
        raise DomainError(f"row index {k} outside [0, {N})")
    keep = np.r_[0:k, k + 1:N]
    b = h[np.ix_(keep, keep)]
    a = h[keep, k]
    mu, u = np.linalg.eigh(b)
    xi = N * np.abs(u.conj().T @ a) ** 2
    X = complex(np.sum((xi - 1.0) / (mu - z)) / N)
    g_id = 1.0 / (h[k, k] - z - np.sum(xi / (mu - z)) / N)
    e_k = np.zeros(N, dtype=complex)
    e_k[k] = 1.0
    try:
        g_direct = np.linalg.solve(h - z * np.eye(N), e_k)[k]
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"resolvent solve failed on matrix {H.fingerprint}") from exc
    if abs(g_id - g_direct) > rtol * abs(g_direct):
        raise NumericalError(
            f"resolvent identity mismatch {abs(g_id - g_direct):.3e} on matrix {H.fingerprint}"
        )
    lam = np.linalg.eigvalsh(h)
    return MinorAnalysis(k, complex(z), lam, mu, xi, X, float(np.sum(np.abs(a) ** 2)),
                         complex(g_direct), complex(g_id))


# ------------------------------------------------------------ batch helpers

def _eigenvalues_of_sample(args):
    config, index = args
    return eigen_decompose(sample_wigner(config, index)).eigenvalues


@lru_cache(maxsize=12)
def eigenvalue_batch(config: EnsembleConfig, n_samples: int, start: int = 0,
                     workers: int | None = None) -> np.ndarray:
    """Eigenvalues of samples ``start .. start+n_samples-1`` as an ``(n, N)`` array.

    Cached because several estimators reuse the same spectra.
    """
    from rmtlab.harness.parallel import parallel_map

    rows = parallel_map(_eigenvalues_of_sample,
                        [(config, i) for i in range(start, start + n_samples)], workers)
    out = np.vstack(rows)
    out.setflags(write=False)
    return out
