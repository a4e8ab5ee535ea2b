"""Command line interface.

    rmtlab sample --beta 1 --N 200 --index 0 -o matrix.tsv
    rmtlab spectrum --beta 2 --N 500 --vectors -o spec.tsv
    rmtlab experiment run spec.json [-o results/]
    rmtlab accept quick|full [--only 1,4]

Exit status: 0 success, 1 acceptance failure, 2 usage or configuration
error, 3 numerical error.  ``RMTLAB_WORKERS`` sets the default worker count.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from rmtlab.errors import ConfigurationError, DomainError, NumericalError

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _ensemble(args):
    from rmtlab.ensembles import EnsembleConfig

    if args.config:
        return EnsembleConfig.load(args.config)
    return EnsembleConfig(args.beta, args.N, args.distribution, args.seed)


def _add_ensemble_args(p):
    p.add_argument("--config", help="ensemble config JSON (overrides the flags below)")
    p.add_argument("--beta", type=int, default=1, choices=(1, 2))
    p.add_argument("--N", type=int, default=100)
    p.add_argument("--distribution", default="gaussian",
                   choices=("gaussian", "rademacher", "uniform", "laplace"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--index", type=int, default=0, help="sample index")
    p.add_argument("-o", "--output", help="output file (default: stdout)")


def _cmd_sample(args):
    from rmtlab.ensembles import sample_wigner

    cfg = _ensemble(args)
    H = sample_wigner(cfg, args.index)
    head = (f"# rmtlab matrix {cfg.label} seed={cfg.seed} index={args.index} "
            f"fingerprint={H.fingerprint} units=normalized-entries")
    if np.iscomplexobj(H.entries):
        cols = "row\tcol\treal\timag"
        body = [f"{i}\t{j}\t{H.entries[i, j].real:.17g}\t{H.entries[i, j].imag:.17g}"
                for i in range(cfg.N) for j in range(cfg.N)]
    else:
        cols = "row\tcol\tvalue"
        body = [f"{i}\t{j}\t{H.entries[i, j]:.17g}" for i in range(cfg.N) for j in range(cfg.N)]
    _emit(args.output, "\n".join([head, cols] + body) + "\n")
    return EXIT_OK


def _cmd_spectrum(args):
    from rmtlab.ensembles import sample_wigner
    from rmtlab.spectral import eigen_decompose

    cfg = _ensemble(args)
    H = sample_wigner(cfg, args.index)
    spec = eigen_decompose(H, want_vectors=args.vectors, method=args.method)
    header = f"{cfg.label} seed={cfg.seed} index={args.index} fingerprint={H.fingerprint}"
    if args.output:
        spec.save(args.output, header)
    else:
        lines = [f"# rmtlab spectrum N={spec.N} units=normalized-energy", f"# {header}",
                 "index\teigenvalue"]
        lines += [f"{i}\t{v:.17g}" for i, v in enumerate(spec.eigenvalues)]
        _emit(None, "\n".join(lines) + "\n")
    return EXIT_OK


def _cmd_experiment(args):
    from rmtlab.harness.config import ExperimentSpec
    from rmtlab.harness.runner import run_experiment

    spec = ExperimentSpec.load(args.spec)
    if args.workers is not None:
        spec = ExperimentSpec(spec.kind, spec.ensemble, spec.params, spec.n_samples,
                              args.workers, spec.output)
    out = args.output or spec.output or "."
    rec = run_experiment(spec, out)
    print(f"spec {rec.spec_hash} ({spec.kind}) finished in {rec.wall_time:.1f} s")
    for m in rec.metrics:
        print(f"  {m.name}\t{m.value:.6g}\t+- {m.se:.3g}\t(n={m.n_samples})")
    for p in rec.paths:
        print(f"  wrote {p}")
    return EXIT_OK


def _cmd_accept(args):
    from rmtlab.harness.acceptance import acceptance_suite

    only = None
    if args.only:
        try:
            only = {int(x) for x in args.only.split(",")}
        except ValueError:
            raise ConfigurationError(f"--only expects comma separated numbers, got {args.only!r}")
    results = acceptance_suite(args.tier, args.workers, only,
                               echo=lambda line: print(line, flush=True))
    failed = [r.number for r in results if not r.passed]
    if failed:
        print(f"FAILED criteria: {', '.join(map(str, failed))}")
        return EXIT_FAIL
    print(f"all {len(results)} criteria passed")
    return EXIT_OK


def _emit(path, text):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rmtlab", description="Wigner-matrix local statistics laboratory")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("sample", help="draw one Wigner matrix")
    _add_ensemble_args(s)
    s.set_defaults(func=_cmd_sample)

    s = sub.add_parser("spectrum", help="eigenvalues (and vectors) of one sample")
    _add_ensemble_args(s)
    s.add_argument("--vectors", action="store_true", help="also store eigenvectors")
    s.add_argument("--method", default="lapack", choices=("lapack", "qr"))
    s.set_defaults(func=_cmd_spectrum)

    e = sub.add_parser("experiment", help="run experiment specs")
    esub = e.add_subparsers(dest="action", parser_class=_Parser)
    r = esub.add_parser("run", help="run one experiment spec (JSON)")
    r.add_argument("spec")
    r.add_argument("-o", "--output", help="directory for result tables")
    r.add_argument("--workers", type=int)
    r.set_defaults(func=_cmd_experiment)

    a = sub.add_parser("accept", help="run the acceptance battery")
    a.add_argument("tier", nargs="?", default="")
    a.add_argument("--only", help="comma separated criterion numbers")
    a.add_argument("--workers", type=int)
    a.set_defaults(func=_cmd_accept)
    return p


def main(argv=None) -> int:
    from rmtlab.harness.runner import ExperimentError

    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL if isinstance(exc.cause, NumericalError) else EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigurationError, DomainError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
