"""Run an :class:`ExperimentSpec`, collect metrics and write result tables."""

from __future__ import annotations

import json
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from rmtlab import __version__
from rmtlab.errors import ConfigurationError, DomainError, NumericalError
from rmtlab.harness.config import ExperimentSpec


@dataclass
class Metric:
    name: str
    value: float
    se: float
    n_samples: int
    units: str = "dimensionless"


@dataclass
class Table:
    name: str
    columns: list
    rows: list
    units: str = "dimensionless"


@dataclass
class ExperimentRecord:
    spec: ExperimentSpec
    spec_hash: str
    version: str
    wall_time: float
    metrics: list
    tables: list = field(default_factory=list)
    paths: list = field(default_factory=list)

    def metric(self, name: str) -> Metric:
        for m in self.metrics:
            if m.name == name:
                return m
        raise KeyError(name)

    def values(self) -> dict:
        return {m.name: (m.value, m.se) for m in self.metrics}


def artifact_version() -> str:
    """Package version, with the short commit id when run from a git checkout."""
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], cwd=Path(__file__).parent,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


# ----------------------------------------------------------- dispatchers

def _local_law(spec):
    from rmtlab.statistics import local_law_scan

    p = spec.params
    energies = np.atleast_1d(p["E"]).astype(float)
    etas = np.atleast_1d(p["eta"]).astype(float)
    metrics, rows = [], []
    for E in energies:
        rep = local_law_scan(spec.ensemble, float(E), etas, spec.n_samples, p["kappa"], p["K"],
                             workers=spec.workers)
        for eta, mean, se, mx, dens in rep.rows():
            metrics.append(Metric(f"deviation[E={E:g},eta={eta:g}]", float(mean), float(se),
                                  spec.n_samples))
            rows.append((E, eta, mean, se, mx, dens, rep.reference_density))
    return metrics, [Table("deviation", ["E", "eta", "mean_dev", "se", "max_dev", "mean_density",
                                         "rho_sc"], rows, "energy and density in normalized units")]


def _bulk_norms(args):
    from rmtlab.ensembles import sample_wigner
    from rmtlab.spectral import eigen_decompose
    from rmtlab.statistics import bulk_indices, scaled_norms

    config, index, bulk_fraction, p = args
    sp = eigen_decompose(sample_wigner(config, index), want_vectors=True)
    idx = bulk_indices(config.N, bulk_fraction)
    pn, sup = scaled_norms(sp.eigenvectors[:, idx], p)
    return pn ** p, sup


def _delocalization(spec):
    from rmtlab.harness.parallel import parallel_map
    from rmtlab.statistics import batch_means

    p = spec.params
    out = parallel_map(_bulk_norms, [(spec.ensemble, i, p["bulk_fraction"], p["p"])
                                     for i in range(spec.n_samples)], spec.workers)
    moment = np.array([o[0].mean() for o in out])
    sup = np.array([o[1].max() for o in out])
    m, se = batch_means(moment)
    n_vec = int(sum(o[0].size for o in out))
    metrics = [
        Metric(f"mean_N^(p/2-1)||v||_p^p[p={p['p']:g}]", float(m), float(se), n_vec),
        Metric("max_N||v||_inf^2", float(sup.max()), float("nan"), n_vec),
    ]
    rows = [(i, moment[i], sup[i]) for i in range(spec.n_samples)]
    return metrics, [Table("per_sample", ["sample", "mean_scaled_p_moment", "max_sup_sq"], rows)]


def _repulsion(spec):
    from rmtlab.statistics import level_repulsion_probe

    p = spec.params
    rep = level_repulsion_probe(spec.ensemble, p["E"], p["epsilon"], int(p["n"]), spec.n_samples,
                                p["delta"], workers=spec.workers)
    metrics = [Metric("slope", rep.slope, rep.slope_se, spec.n_samples),
               Metric("expected_exponent", rep.expected_exponent, 0.0, spec.n_samples)]
    rows = [(e, pr, se, h) for e, pr, se, h in zip(rep.epsilon_grid, rep.probability,
                                                   rep.probability_se, rep.hit_events)]
    return metrics, [Table("occupancy", ["epsilon", "probability", "se", "hit_events"], rows,
                           "epsilon in units of 1/N")]


def _gaps(spec):
    from rmtlab.oracles import wigner_surmise
    from rmtlab.spectral import eigenvalue_batch
    from rmtlab.statistics import gaps_from_spectra, ks_to_surmise

    lam = eigenvalue_batch(spec.ensemble, spec.n_samples, 0, spec.workers)
    gs = gaps_from_spectra(lam, spec.ensemble.beta, spec.params["bulk_fraction"])
    ks = ks_to_surmise(gs, spec.ensemble.beta)
    c = 0.5 * (gs.histogram_edges[1:] + gs.histogram_edges[:-1])
    rows = list(zip(c, gs.histogram_density, wigner_surmise(spec.ensemble.beta, c)))
    return ([Metric("ks_to_surmise", ks, float("nan"), gs.s.size)],
            [Table("histogram", ["s", "density", "surmise"], rows, "s in mean spacings")])


def _correlation(spec):
    from rmtlab.statistics import kpoint_correlation, sine_kernel_determinant

    p = spec.params
    bins = np.asarray(p["bins"], dtype=float)
    est = kpoint_correlation(spec.ensemble, int(p["k"]), p["E"], p["delta"], bins,
                             spec.n_samples, p["kappa"], p["n_energy"], workers=spec.workers)
    rows = []
    if est.k <= 2:
        for x, v, e in zip(est.centers, est.values, est.errors):
            ref = sine_kernel_determinant([0.0, x]) if est.k == 2 else 1.0
            rows.append((x, v, e, ref))
        dev = max(abs(r[1] - r[3]) for r in rows) if spec.ensemble.beta == 2 else float("nan")
    else:
        for i, x in enumerate(est.centers):
            for j, y in enumerate(est.centers):
                rows.append((x, y, est.values[i, j], est.errors[i, j],
                             sine_kernel_determinant([0.0, x, y])))
        dev = float("nan")
    cols = ["x", "value", "se", "sine_kernel"] if est.k <= 2 else ["x", "y", "value", "se",
                                                                    "sine_kernel"]
    return ([Metric("max_deviation_from_sine_kernel", float(dev), float("nan"), spec.n_samples)],
            [Table("correlation", cols, rows, "x in mean spacings")])


def _ks_metrics(a, b, name):
    from rmtlab.statistics import ks_two_sample

    return Metric(name, ks_two_sample(a, b), float("nan"), min(a.size, b.size), "KS distance")


def _dbm_invariance(spec):
    from rmtlab.flows import dbm_evolved_spectra
    from rmtlab.spectral import eigenvalue_batch
    from rmtlab.statistics import gaps_from_spectra

    bf = spec.params["bulk_fraction"]
    flowed = dbm_evolved_spectra(spec.ensemble, spec.params["t"], spec.n_samples,
                                 workers=spec.workers)
    static = eigenvalue_batch(spec.ensemble, spec.n_samples, spec.n_samples, spec.workers)
    a = gaps_from_spectra(flowed, spec.ensemble.beta, bf).s
    b = gaps_from_spectra(static, spec.ensemble.beta, bf).s
    return [_ks_metrics(a, b, "ks_flowed_vs_static")], []


def _ou_oracle(spec):
    from rmtlab.flows import dbm_evolved_spectra, flowed_spectra, ou_to_dbm_time
    from rmtlab.statistics import gaps_from_spectra

    bf = spec.params["bulk_fraction"]
    t = spec.params["t"]
    beta = spec.ensemble.beta
    sde = dbm_evolved_spectra(spec.ensemble, ou_to_dbm_time(t, beta), spec.n_samples,
                              workers=spec.workers)
    ou = flowed_spectra(spec.ensemble, t, spec.n_samples, start=spec.n_samples,
                        workers=spec.workers)
    a = gaps_from_spectra(sde, beta, bf).s
    b = gaps_from_spectra(ou, beta, bf).s
    return [_ks_metrics(a, b, "ks_sde_vs_matrix_ou")], []


def _relaxation(spec):
    from rmtlab.ensembles import EnsembleConfig
    from rmtlab.flows import relaxation_from_lattice
    from rmtlab.spectral import eigenvalue_batch
    from rmtlab.statistics import batch_means, observable_table

    p = spec.params
    cfg = spec.ensemble
    times = [float(t) for t in p["times"]]
    traj = relaxation_from_lattice(cfg.N, p["eta"], float(cfg.beta), times, spec.n_samples,
                                   cfg.seed, spec.workers)
    ref = eigenvalue_batch(EnsembleConfig.gaussian(cfg.beta, cfg.N, cfg.seed + 1), spec.n_samples,
                           0, spec.workers)
    names, rv = observable_table(ref, p["n_values"], bulk_fraction=p["bulk_fraction"])
    rm, rse = batch_means(rv)
    metrics, rows = [], []
    for k, t in enumerate(times):
        _, v = observable_table(traj[:, k, :], p["n_values"], bulk_fraction=p["bulk_fraction"])
        vm, vse = batch_means(v)
        z = np.abs(vm - rm) / np.hypot(vse, rse)
        metrics.append(Metric(f"max_z[t={t:g}]", float(z.max()), float("nan"), spec.n_samples,
                              "combined standard errors"))
        for i, (g, n) in enumerate(names):
            rows.append((t, g, n, vm[i], vse[i], rm[i], rse[i]))
    return metrics, [Table("observables", ["t", "observable", "n", "value", "se", "reference",
                                           "reference_se"], rows, "t in flow time")]


def _universality(spec):
    from rmtlab.flows import universality_experiment

    rep = universality_experiment(spec.ensemble, spec.params["t_flow"],
                                  n_values=tuple(spec.params["n_values"]),
                                  n_samples=spec.n_samples, workers=spec.workers)
    metrics = [Metric(f"z[{r.observable},n={r.n}]", r.z, float("nan"), spec.n_samples,
                      "combined standard errors") for r in rep.rows]
    rows = [(r.observable, r.n, r.value, r.value_se, r.reference, r.reference_se, r.difference,
             r.combined_se) for r in rep.rows]
    return metrics, [Table("battery", ["observable", "n", "value", "se", "reference",
                                       "reference_se", "difference", "combined_se"], rows)]


def _entropy_decay(spec):
    from rmtlab.oracles import GibbsSpec, fokker_planck_decay, tilted_start

    p = spec.params
    g = GibbsSpec(float(p["beta"]), 2, "omega", float(p["eta"]))
    rep = fokker_planck_decay(g, tilted_start(g), float(p["t_max"]), float(p["dt"]))
    metrics = [Metric("rate", rep.rate, float("nan"), 1, "1/time"),
               Metric("monotone", float(rep.monotone), 0.0, 1, "boolean"),
               Metric("mass_drift", rep.mass_drift, 0.0, 1, "probability")]
    return metrics, [Table("decay", ["t", "S", "D"], rep.rows(), "t in flow time")]


DISPATCH = {
    "local-law": _local_law,
    "delocalization": _delocalization,
    "repulsion": _repulsion,
    "gaps": _gaps,
    "correlation": _correlation,
    "dbm-invariance": _dbm_invariance,
    "ou-oracle": _ou_oracle,
    "relaxation": _relaxation,
    "universality": _universality,
    "entropy-decay": _entropy_decay,
}


class ExperimentError(RuntimeError):
    """Failure inside an experiment, tagged with the spec hash."""

    def __init__(self, message, spec_hash, cause=None):
        super().__init__(f"[spec {spec_hash}] {message}")
        self.spec_hash = spec_hash
        self.cause = cause


def run_experiment(spec: ExperimentSpec, output: str | Path | None = None) -> ExperimentRecord:
    """Dispatch ``spec`` to its estimator and, if an output directory is set, write tables."""
    h = spec.spec_hash
    t0 = time.perf_counter()
    try:
        metrics, tables = DISPATCH[spec.kind](spec)
    except (NumericalError, DomainError, ConfigurationError) as exc:
        raise ExperimentError(str(exc), h, exc) from exc
    rec = ExperimentRecord(spec, h, artifact_version(), time.perf_counter() - t0, metrics, tables)
    out = output if output is not None else spec.output
    if out is not None:
        try:
            write_record(rec, Path(out))
        except OSError as exc:
            raise ExperimentError(f"cannot write results: {exc}", h, exc) from exc
    return rec


def _header(rec: ExperimentRecord, units: str) -> list:
    s = rec.spec
    return [
        f"# rmtlab {rec.version} experiment={s.kind} spec_hash={rec.spec_hash}",
        f"# ensemble={s.ensemble.label} seed={s.ensemble.seed} n_samples={s.n_samples}",
        f"# units: {units}",
    ]


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10g}"
    return str(v)


def write_record(rec: ExperimentRecord, directory: Path) -> list:
    """Write metrics and tables as tab-separated text; returns the paths written."""
    directory.mkdir(parents=True, exist_ok=True)
    stem = f"{rec.spec.kind}-{rec.spec_hash}"
    paths = []
    lines = _header(rec, "per-metric column 'units'") + [
        f"# wall_time_s={rec.wall_time:.3f}",
        "metric\tvalue\tse\tn_samples\tunits",
    ]
    lines += ["\t".join(_fmt(v) for v in (m.name, m.value, m.se, m.n_samples, m.units))
              for m in rec.metrics]
    p = directory / f"{stem}-metrics.tsv"
    p.write_text("\n".join(lines) + "\n")
    paths.append(p)
    for t in rec.tables:
        lines = _header(rec, t.units) + ["\t".join(t.columns)]
        lines += ["\t".join(_fmt(v) for v in row) for row in t.rows]
        p = directory / f"{stem}-{t.name}.tsv"
        p.write_text("\n".join(lines) + "\n")
        paths.append(p)
    p = directory / f"{stem}-spec.json"
    p.write_text(json.dumps(rec.spec.to_dict(), indent=2, sort_keys=True) + "\n")
    paths.append(p)
    rec.paths = paths
    return paths
