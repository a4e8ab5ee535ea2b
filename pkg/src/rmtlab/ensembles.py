"""Wigner matrix ensembles.

Entries above the diagonal are i.i.d. with mean zero and unit variance
(split evenly between real and imaginary part in the hermitian case),
diagonal entries have variance 2 (symmetric) or 1 (hermitian), and the
whole matrix is scaled by ``N**-0.5`` so the spectrum fills ``[-2, 2]``.

Randomness is counter-based: every ``(seed, sample_index, stream)`` triple
keys its own Philox generator, so a sample never depends on which worker
produced it or in which order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import integrate

from rmtlab.errors import ConfigurationError

KINDS = ("gaussian", "rademacher", "uniform", "laplace")

_DECAY = {
    "gaussian": ("gaussian-decay", 2.0),
    "rademacher": ("gaussian-decay", 2.0),
    "uniform": ("gaussian-decay", 2.0),
    "laplace": ("subexponential", 1.0),
}

# exact fourth moments of the unit-variance laws
_FOURTH_MOMENT = {"gaussian": 3.0, "rademacher": 1.0, "uniform": 9.0 / 5.0, "laplace": 6.0}

_MASK64 = (1 << 64) - 1
_INDEX_BITS = 48

# stream ids used to decorrelate the different consumers of a sample index
STREAM_MATRIX = 0
STREAM_OU_NOISE = 1
STREAM_FLOW = 2
STREAM_CHAIN = 3


def counter_rng(seed: int, sample_index: int, stream: int = STREAM_MATRIX) -> np.random.Generator:
    """Philox generator keyed by ``(seed, stream, sample_index)``."""
    if sample_index < 0 or sample_index >= (1 << _INDEX_BITS):
        raise ConfigurationError(f"sample_index out of range: {sample_index}")
    key = np.array(
        [int(seed) & _MASK64, ((int(stream) & 0xFFFF) << _INDEX_BITS) | int(sample_index)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class EntryDistribution:
    """Standardized (mean 0, variance 1) single-entry law.

    The sampler rescales draws to the variances each matrix position needs;
    ``decay_class`` and ``decay_exponent`` record which tail condition the
    law satisfies.
    """

    kind: str = "gaussian"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(
                f"unsupported distribution kind {self.kind!r}; expected one of {KINDS}"
            )

    @property
    def decay_class(self) -> str:
        return _DECAY[self.kind][0]

    @property
    def decay_exponent(self) -> float:
        return _DECAY[self.kind][1]

    @property
    def mean(self) -> float:
        return 0.0

    @property
    def variance(self) -> float:
        return 1.0

    @property
    def fourth_moment(self) -> float:
        return _FOURTH_MOMENT[self.kind]

    @property
    def is_smooth(self) -> bool:
        """Absolutely continuous with a strictly positive smooth density."""
        return self.kind in ("gaussian", "laplace")

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "gaussian":
            return rng.standard_normal(size)
        if self.kind == "rademacher":
            return 2.0 * rng.integers(0, 2, size=size).astype(np.float64) - 1.0
        if self.kind == "uniform":
            return rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size=size)
        return rng.laplace(0.0, 1.0 / math.sqrt(2.0), size=size)

    def pdf(self, x):
        """Density of the standardized law (``None`` for the discrete kind)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "gaussian":
            return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        if self.kind == "uniform":
            a = math.sqrt(3.0)
            return np.where(np.abs(x) <= a, 1.0 / (2.0 * a), 0.0)
        if self.kind == "laplace":
            b = 1.0 / math.sqrt(2.0)
            return np.exp(-np.abs(x) / b) / (2.0 * b)
        return None

    def moment(self, order: int) -> float:
        """Exact raw moment, by quadrature of the density (or enumeration)."""
        if self.kind == "rademacher":
            return 1.0 if order % 2 == 0 else 0.0
        lim = math.sqrt(3.0) if self.kind == "uniform" else np.inf
        val, _ = integrate.quad(lambda t: t**order * float(self.pdf(t)), -lim, lim, limit=200)
        return val


@dataclass(frozen=True)
class EnsembleConfig:
    """Symmetry class, size, entry law and seed of a Wigner ensemble."""

    beta: int
    N: int
    entry_distribution: EntryDistribution = field(default_factory=EntryDistribution)
    seed: int = 0

    def __post_init__(self):
        if self.beta not in (1, 2):
            raise ConfigurationError(f"beta must be 1 or 2, got {self.beta}")
        if int(self.N) != self.N or self.N < 2:
            raise ConfigurationError(f"N must be an integer >= 2, got {self.N}")
        if isinstance(self.entry_distribution, str):
            object.__setattr__(self, "entry_distribution", EntryDistribution(self.entry_distribution))

    @classmethod
    def gaussian(cls, beta: int, N: int, seed: int = 0) -> "EnsembleConfig":
        return cls(beta, N, EntryDistribution("gaussian"), seed)

    def with_(self, **changes) -> "EnsembleConfig":
        d = dict(beta=self.beta, N=self.N, entry_distribution=self.entry_distribution, seed=self.seed)
        d.update(changes)
        return EnsembleConfig(**d)

    @property
    def label(self) -> str:
        name = {1: "symmetric", 2: "hermitian"}[self.beta]
        return f"{name}-{self.entry_distribution.kind}-N{self.N}"

    # plain-text persistence: JSON object with a schema version field
    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "beta": self.beta,
            "N": self.N,
            "distribution": self.entry_distribution.kind,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleConfig":
        version = d.get("schema_version", 1)
        if version != 1:
            raise ConfigurationError(f"unsupported ensemble schema_version {version}")
        try:
            return cls(
                beta=int(d["beta"]),
                N=int(d["N"]),
                entry_distribution=EntryDistribution(d.get("distribution", "gaussian")),
                seed=int(d.get("seed", 0)),
            )
        except KeyError as exc:
            raise ConfigurationError(f"ensemble config missing field {exc}") from None

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "EnsembleConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True, eq=False)
class WignerMatrix:
    beta: int
    N: int
    entries: np.ndarray

    @cached_property
    def fingerprint(self) -> str:
        import hashlib

        return hashlib.sha256(np.ascontiguousarray(self.entries).tobytes()).hexdigest()[:16]

    def is_self_adjoint(self) -> bool:
        """Exact (bitwise) self-adjointness check."""
        h = self.entries
        return bool(np.array_equal(h, h.conj().T))


def _off_diagonal_scale(beta: int) -> float:
    return 1.0 if beta == 1 else math.sqrt(0.5)


def _diagonal_scale(beta: int) -> float:
    return math.sqrt(2.0) if beta == 1 else 1.0


def assemble(beta: int, N: int, upper: np.ndarray, diag: np.ndarray) -> np.ndarray:
    """Build the self-adjoint matrix from its strict upper triangle and diagonal.

    ``upper`` is ordered like ``np.triu_indices(N, 1)``.
    """
    dtype = np.float64 if beta == 1 else np.complex128
    h = np.zeros((N, N), dtype=dtype)
    iu = np.triu_indices(N, 1)
    h[iu] = upper
    h[iu[1], iu[0]] = np.conj(upper)
    h[np.diag_indices(N)] = diag
    return h


def draw_entries(config: EnsembleConfig, rng: np.random.Generator):
    """Unscaled (variance-normalized) upper-triangle and diagonal draws."""
    N, beta = config.N, config.beta
    dist = config.entry_distribution
    m = N * (N - 1) // 2
    if beta == 1:
        upper = dist.draw(rng, m)
    else:
        s = _off_diagonal_scale(2)
        upper = s * dist.draw(rng, m) + 1j * (s * dist.draw(rng, m))
    diag = _diagonal_scale(beta) * dist.draw(rng, N)
    return upper, diag


def sample_wigner(config: EnsembleConfig, sample_index: int) -> WignerMatrix:
    """Draw sample ``sample_index`` of the ensemble.

    Deterministic in ``(config.seed, sample_index)``; distinct indices use
    disjoint Philox keys and are therefore independent.
    """
    if sample_index < 0:
        raise ConfigurationError("sample_index must be >= 0")
    rng = counter_rng(config.seed, sample_index, STREAM_MATRIX)
    upper, diag = draw_entries(config, rng)
    scale = 1.0 / math.sqrt(config.N)
    h = assemble(config.beta, config.N, upper * scale, diag * scale)
    return WignerMatrix(config.beta, config.N, h)


@dataclass
class MomentReport:
    kind: str
    n_draws: int
    mean: float
    variance: float
    fourth_moment: float
    mean_se: float
    variance_se: float
    fourth_moment_se: float
    expected_fourth_moment: float
    passed: bool

    def as_dict(self) -> dict:
        return asdict(self)


def check_moments(dist: EntryDistribution, n_draws: int = 100_000, seed: int = 0,
                  n_se: float = 4.0) -> MomentReport:
    """Empirical mean, variance and fourth moment against the declared values.

    The declared fourth moment comes from quadrature of the density, not from
    the table used elsewhere, so the report doubles as an independent check.
    Tolerance is ``n_se`` standard errors (plus a floating-point floor for
    the degenerate rademacher case).
    """
    if n_draws < 10_000:
        raise ConfigurationError("check_moments needs at least 1e4 draws")
    x = dist.draw(counter_rng(seed, 0, STREAM_CHAIN), n_draws)
    m1 = x.mean()
    m2 = np.mean(x * x)
    m4 = np.mean(x**4)
    m8 = np.mean(x**8)
    var = m2 - m1 * m1
    se1 = math.sqrt(m2 / n_draws)
    se2 = math.sqrt(max(m4 - m2 * m2, 0.0) / n_draws)
    se4 = math.sqrt(max(m8 - m4 * m4, 0.0) / n_draws)
    expected4 = dist.moment(4)
    floor = 1e-12
    ok = (
        abs(m1 - dist.mean) <= n_se * se1 + floor
        and abs(var - dist.variance) <= n_se * (se2 + se1 * se1) + floor
        and abs(m4 - expected4) <= n_se * se4 + 1e-8
    )
    return MomentReport(dist.kind, n_draws, float(m1), float(var), float(m4), se1, se2, se4,
                        expected4, bool(ok))
