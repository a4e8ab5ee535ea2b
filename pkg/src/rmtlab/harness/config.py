"""Experiment specifications: validated, hashable, stored as JSON text."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from rmtlab.ensembles import EnsembleConfig
from rmtlab.errors import ConfigurationError

SCHEMA_VERSION = 1

# experiment kind -> (required parameters, optional parameters with defaults)
SCHEMAS = {
    "local-law": ({"E", "eta"}, {"kappa": 0.1, "K": 2.0}),
    "delocalization": (set(), {"bulk_fraction": 0.6, "p": 4.0}),
    "repulsion": ({"epsilon", "n"}, {"E": 0.0, "delta": 0.25}),
    "gaps": (set(), {"bulk_fraction": 0.6}),
    "correlation": ({"k", "delta", "bins"}, {"E": 0.0, "kappa": 0.1, "n_energy": 20}),
    "dbm-invariance": ({"t"}, {"bulk_fraction": 0.6}),
    "ou-oracle": ({"t"}, {"bulk_fraction": 0.6}),
    "relaxation": ({"eta", "times"}, {"bulk_fraction": 0.6, "n_values": [1]}),
    "universality": ({"t_flow"}, {"n_values": [1, 2]}),
    "entropy-decay": ({"eta", "t_max"}, {"dt": 0.01, "beta": 1.0}),
}
KINDS = tuple(SCHEMAS)


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment: kind, ensemble, parameters and sample count.

    ``workers`` and ``output`` do not enter :attr:`spec_hash` because they
    cannot change the numbers.
    """

    kind: str
    ensemble: EnsembleConfig
    params: dict = field(default_factory=dict)
    n_samples: int = 100
    workers: int | None = None
    output: str | None = None

    def __post_init__(self):
        if self.kind not in SCHEMAS:
            raise ConfigurationError(f"unknown experiment kind {self.kind!r}; known: {', '.join(KINDS)}")
        if int(self.n_samples) != self.n_samples or self.n_samples < 1:
            raise ConfigurationError(f"n_samples must be a positive integer, got {self.n_samples}")
        required, optional = SCHEMAS[self.kind]
        missing = required - set(self.params)
        if missing:
            raise ConfigurationError(f"{self.kind} spec is missing {sorted(missing)}")
        unknown = set(self.params) - required - set(optional)
        if unknown:
            raise ConfigurationError(f"{self.kind} spec has unknown parameters {sorted(unknown)}")
        merged = dict(optional)
        merged.update(self.params)
        object.__setattr__(self, "params", merged)
        if self.workers is not None and self.workers < 1:
            raise ConfigurationError("workers must be >= 1")

    def to_dict(self, with_runtime: bool = True) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "ensemble": self.ensemble.to_dict(),
            "params": self.params,
            "n_samples": self.n_samples,
        }
        if with_runtime:
            d["workers"] = self.workers
            d["output"] = self.output
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ConfigurationError(f"unsupported schema_version {d.get('schema_version')!r}")
        try:
            return cls(
                kind=d["kind"],
                ensemble=EnsembleConfig.from_dict(d["ensemble"]),
                params=dict(d.get("params", {})),
                n_samples=d.get("n_samples", 100),
                workers=d.get("workers"),
                output=d.get("output"),
            )
        except KeyError as exc:
            raise ConfigurationError(f"experiment spec missing field {exc}") from None

    @property
    def spec_hash(self) -> str:
        text = json.dumps(self.to_dict(with_runtime=False), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:12]

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(data)
