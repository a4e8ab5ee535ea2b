"""Acceptance battery: ten property and scaling checks at desk scale.

The ``full`` tier uses the stated sizes and tolerances.  The ``quick`` tier
divides matrix sizes and sample counts by about four and doubles the
tolerances; checks whose cost does not depend on sampling keep their size.
Runtime budgets are reported but never fail a criterion.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from rmtlab.ensembles import EnsembleConfig
from rmtlab.errors import ConfigurationError

TIERS = ("quick", "full")


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    wall_time: float = 0.0
    budget: float = math.inf
    values: dict = field(default_factory=dict)

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        over = "  [over budget]" if self.wall_time > self.budget else ""
        return (f"[{flag}] criterion {self.number:2d} {self.title}: {self.detail} "
                f"({self.wall_time:.1f} s, budget {self.budget:.0f} s){over}")


def _tier(tier):
    if tier not in TIERS:
        raise ConfigurationError(f"unknown tier {tier!r}; use one of {', '.join(TIERS)}")
    quick = tier == "quick"
    return quick, (4 if quick else 1), (2.0 if quick else 1.0)


def _samples_for_gaps(n_gaps, N, bulk_fraction=0.6):
    from rmtlab.statistics import bulk_indices

    return int(math.ceil(n_gaps / bulk_indices(N, bulk_fraction).size))


# ------------------------------------------------------------ criteria

def local_law(tier="full", workers=None, seed=11):
    from rmtlab.statistics import local_law_scan

    quick, shrink, widen = _tier(tier)
    N, n, tol = 1000 // shrink, 200 // shrink, 0.05 * widen
    worst, values = 0.0, {}
    for kind in ("gaussian", "rademacher"):
        cfg = EnsembleConfig(1, N, kind, seed)
        for E in (-1.0, 0.0, 1.0):
            rep = local_law_scan(cfg, E, [50.0 / N], n, workers=workers)
            dev = float(rep.mean_deviation[0])
            values[f"{kind},E={E:g}"] = dev
            worst = max(worst, dev)
    return worst < tol, f"worst mean deviation {worst:.4f} < {tol:g} (N={N}, {n} samples)", values


def delocalization(tier="full", workers=None, seed=12):
    from rmtlab.harness.config import ExperimentSpec
    from rmtlab.harness.runner import run_experiment

    quick, shrink, widen = _tier(tier)
    N = 1000 // shrink
    n = _samples_for_gaps(1000, N)
    lo, hi = 3.0 - 0.5 * widen, 3.0 + 0.5 * widen
    ok, parts, values = True, [], {}
    for kind in ("gaussian", "rademacher"):
        spec = ExperimentSpec("delocalization", EnsembleConfig(1, N, kind, seed), {}, n, workers)
        rec = run_experiment(spec)
        m4 = rec.metrics[0].value
        sup = rec.metrics[1].value
        values[kind] = (m4, sup)
        ok &= lo <= m4 <= hi and sup < 40
        parts.append(f"{kind}: N||v||_4^4={m4:.3f} max N||v||_inf^2={sup:.1f}")
    return ok, "; ".join(parts) + f" over {rec.metrics[0].n_samples} vectors each", values


def level_repulsion(tier="full", workers=None, seed=13):
    from rmtlab.statistics import level_repulsion_probe

    quick, shrink, widen = _tier(tier)
    N, n = 400 // shrink, 20000 // shrink
    tol = 0.25 * widen
    eps = [0.2, 0.3, 0.45, 0.7]
    ok, parts, values = True, [], {}
    for beta, target in ((2, 4.0), (1, 3.0)):
        rep = level_repulsion_probe(EnsembleConfig.gaussian(beta, N, seed), 0.0, eps, 2, n,
                                    workers=workers)
        rel = abs(rep.slope - target) / target
        values[beta] = (rep.slope, rep.slope_se)
        ok &= rel < tol
        parts.append(f"beta={beta} slope {rep.slope:.3f}+-{rep.slope_se:.3f} vs {target:g}")
    return ok, "; ".join(parts) + f" (tol {tol:.0%}, N={N}, {n} samples)", values


def gap_law(tier="full", workers=None, seed=14):
    from rmtlab.oracles import small_n_gap_law, surmise_cdf
    from rmtlab.spectral import eigenvalue_batch
    from rmtlab.statistics import gaps_from_spectra, ks_to_surmise
    from scipy import stats

    quick, shrink, widen = _tier(tier)
    N = 500 // shrink
    n_gaps = 10_000 // shrink
    n_draws = 1_000_000 // shrink
    ok, parts, values = True, [], {}
    for beta in (1, 2):
        cfg = EnsembleConfig.gaussian(beta, N, seed)
        lam = eigenvalue_batch(cfg, _samples_for_gaps(n_gaps, N), 0, workers)
        s = gaps_from_spectra(lam, beta).s[:n_gaps]
        ks = ks_to_surmise(s, beta)
        brute = small_n_gap_law(beta, n_draws, seed)
        ks2 = float(stats.ks_1samp(brute, lambda t: surmise_cdf(beta, t)).statistic)
        values[beta] = (ks, ks2)
        ok &= ks < 0.05 * widen and ks2 < 0.01 * widen
        parts.append(f"beta={beta} KS {ks:.4f}, 2x2 oracle KS {ks2:.4f}")
    return ok, "; ".join(parts) + f" (limits {0.05 * widen:g}/{0.01 * widen:g})", values


def sine_kernel(tier="full", workers=None, seed=15):
    from rmtlab.statistics import kpoint_correlation, sine_two_point

    quick, shrink, widen = _tier(tier)
    N, n, tol = 500 // shrink, 500 // shrink, 0.1 * widen
    bins = np.linspace(0.2, 3.0, 29)
    est = kpoint_correlation(EnsembleConfig.gaussian(2, N, seed), 2, 0.0, 0.1, bins, n,
                             workers=workers)
    dev = np.abs(est.values - sine_two_point(est.centers))
    worst = float(dev.max())
    return worst < tol, (f"max |R2 - (1 - K^2)| = {worst:.4f} < {tol:g} on [0.2, 3] "
                         f"({est.origin_count} origins)"), {"max_dev": worst}


def universality(tier="full", workers=None, seed=16):
    from rmtlab.flows import flowed_spectra, universality_experiment

    quick, shrink, widen = _tier(tier)
    N, n, lim = 500 // shrink, 200 // shrink, 3.0 * widen
    worst, values = 0.0, {}
    for beta in (1, 2):
        cfg = EnsembleConfig(beta, N, "rademacher", seed)
        ref = flowed_spectra(EnsembleConfig.gaussian(beta, N, seed + 1), 0.0, n, workers=workers)
        for t in (0.0, 0.2):
            rep = universality_experiment(cfg, t, n_values=(1, 2), n_samples=n,
                                          reference_spectra=ref, workers=workers)
            z = max(abs(r.z) for r in rep.rows)
            values[(beta, t)] = z
            worst = max(worst, z)
    return worst <= lim, (f"largest |difference|/combined SE = {worst:.2f} <= {lim:g} "
                          f"(N={N}, {n} samples)"), values


def dbm_invariance(tier="full", workers=None, seed=17):
    from rmtlab.flows import dbm_evolved_spectra, flowed_spectra, ou_to_dbm_time
    from rmtlab.spectral import eigenvalue_batch
    from rmtlab.statistics import gaps_from_spectra, ks_two_sample

    quick, shrink, widen = _tier(tier)
    N = 200 // shrink
    n_gaps = 10_000 // shrink
    n = _samples_for_gaps(n_gaps, N)
    goe = EnsembleConfig.gaussian(1, N, seed)
    flowed = gaps_from_spectra(dbm_evolved_spectra(goe, 1.0, n, workers=workers), 1).s[:n_gaps]
    # the static reference is cheap, so it is ten times larger
    static = gaps_from_spectra(eigenvalue_batch(goe, 10 * n, n, workers), 1).s
    ks1 = ks_two_sample(flowed, static)
    rad = EnsembleConfig(1, N, "rademacher", seed)
    sde = gaps_from_spectra(dbm_evolved_spectra(rad, ou_to_dbm_time(0.1, 1), n, workers=workers),
                            1).s[:n_gaps]
    ou = gaps_from_spectra(flowed_spectra(rad, 0.1, 10 * n, start=n, workers=workers), 1).s
    ks2 = ks_two_sample(sde, ou)
    ok = ks1 < 0.02 * widen and ks2 < 0.03 * widen
    return ok, (f"DBM t=1 vs static GOE KS {ks1:.4f} < {0.02 * widen:g}; SDE vs matrix OU KS "
                f"{ks2:.4f} < {0.03 * widen:g} ({flowed.size} flowed gaps, N={N})"), \
        {"invariance": ks1, "oracle": ks2}


def convexity_scaling(tier="full", workers=None, seed=None):
    from rmtlab.flows import convexity_bound, relaxation_potential

    quick, shrink, widen = _tier(tier)
    N = 2000
    tol = 0.3 * widen
    c1 = convexity_bound(relaxation_potential(N, 1e-2)).min_convexity
    c2 = convexity_bound(relaxation_potential(N, 1e-3)).min_convexity
    ratio = c1 / c2
    target = 10 ** (-1 / 3)
    rel = abs(ratio - target) / target
    ok = rel <= tol and c1 > 0 and c2 > 0
    return ok, (f"min W'' ratio {ratio:.4f} vs {target:.4f} (off by {rel:.0%}, tol {tol:.0%}); "
                f"minima {c1:.4f}, {c2:.4f} > 0"), {"ratio": ratio, "c1": c1, "c2": c2}


def drift_and_rigidity(tier="full", workers=None, seed=19):
    from rmtlab.flows import (
        FlowState,
        dbm_drift,
        local_relaxation_drift,
        relaxation_drift,
        relaxation_potential,
        rigidity,
    )
    from rmtlab.spectral import eigenvalue_batch

    quick, shrink, widen = _tier(tier)
    rng = np.random.default_rng(seed)
    worst_id = 0.0
    for N, eta in ((50, 0.1), (200, 0.05), (400, 0.02)):
        pot = relaxation_potential(N, eta)
        for _ in range(5):
            x = np.sort(rng.uniform(-2.5, 2.5, N))
            if np.min(np.diff(x)) <= 0:
                continue
            for beta in (1.0, 2.0, 3.5):
                d = dbm_drift(x, beta) - local_relaxation_drift(x, pot, beta) \
                    - relaxation_drift(FlowState(x, beta=beta), pot)
                worst_id = max(worst_id, float(np.max(np.abs(d))))
    sizes = [n // shrink for n in (200, 400, 800, 1600)]
    n_samples = 20
    rig = []
    for N in sizes:
        lam = eigenvalue_batch(EnsembleConfig.gaussian(1, N, seed), n_samples, 0, workers)
        rig.append(float(np.mean([rigidity(row) for row in lam])))
    N0 = 1000 // shrink
    lam = eigenvalue_batch(EnsembleConfig.gaussian(1, N0, seed), n_samples, 0, workers)
    r0 = float(np.mean([rigidity(row) for row in lam]))
    mono = all(a > b for a, b in zip(rig, rig[1:]))
    ok = worst_id < 1e-12 and r0 < N0 ** -0.5 and mono
    return ok, (f"decomposition residual {worst_id:.2e} < 1e-12; rigidity(N={N0}) {r0:.4f} < "
                f"{N0 ** -0.5:.4f}; monotone over {sizes}: "
                f"{', '.join(f'{r:.4f}' for r in rig)}"), {"identity": worst_id, "rigidity": r0,
                                                            "trend": rig}


def entropy_decay(tier="full", workers=None, seed=None):
    from rmtlab.oracles import GibbsSpec, fokker_planck_decay, tilted_start

    quick, shrink, widen = _tier(tier)
    tol = 0.35 * widen
    rates, mono, drift = {}, True, 0.0
    for eta in (0.05, 0.2):
        g = GibbsSpec(1.0, 2, "omega", eta)
        rep = fokker_planck_decay(g, tilted_start(g), 25.0, 0.01)
        rates[eta] = rep.rate
        mono &= rep.monotone
        drift = max(drift, rep.mass_drift)
    ratio = rates[0.05] / rates[0.2]
    target = 4 ** (1 / 3)
    rel = abs(ratio - target) / target
    ok = rel <= tol and mono and drift < 1e-6
    return ok, (f"rate ratio {ratio:.4f} vs {target:.4f} (off by {rel:.0%}, tol {tol:.0%}); "
                f"rates {rates[0.05]:.4f}, {rates[0.2]:.4f}; S monotone={mono}; "
                f"mass drift {drift:.1e}"), {"ratio": ratio, "rates": rates}


CRITERIA = [
    (1, "local semicircle law", local_law, 600),
    (2, "eigenvector delocalization", delocalization, 600),
    (3, "level repulsion exponents", level_repulsion, 3600),
    (4, "gap law vs Wigner surmise", gap_law, 600),
    (5, "sine-kernel two-point function", sine_kernel, 1200),
    (6, "universality of gap observables", universality, 1800),
    (7, "DBM invariance and matrix-OU equivalence", dbm_invariance, 1800),
    (8, "convexity scaling", convexity_scaling, 300),
    (9, "drift decomposition and rigidity", drift_and_rigidity, 900),
    (10, "entropy decay scaling", entropy_decay, 600),
]


def run_criterion(number: int, tier: str = "full", workers=None) -> CriterionResult:
    _tier(tier)
    for num, title, fn, budget in CRITERIA:
        if num == number:
            t0 = time.perf_counter()
            ok, detail, values = fn(tier, workers)
            return CriterionResult(num, title, bool(ok), detail, time.perf_counter() - t0,
                                   budget, values)
    raise ConfigurationError(f"no criterion {number}")


def acceptance_suite(tier: str, workers=None, only=None, echo=print) -> list:
    """Run the battery; ``echo`` receives one line per criterion as it finishes."""
    _tier(tier)
    out = []
    for num, *_ in CRITERIA:
        if only and num not in only:
            continue
        res = run_criterion(num, tier, workers)
        if echo is not None:
            echo(res.line())
        out.append(res)
    return out
