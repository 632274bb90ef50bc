"""ness-lab command line: run sweeps, render figures, self-check invariants.

Exit codes: 0 success, 1 partial failure, 2 configuration error.
"""

import argparse
import logging
import sys

import numpy as np

from .plotting import SchemaError, emit_plots
from .sweep import PICTURES, ConfigError, default_workers, load_config, run_sweep

log = logging.getLogger("ness_lab")


def _pictures(text):
    items = tuple(p.strip() for p in text.split(",") if p.strip())
    bad = [p for p in items if p not in PICTURES]
    if bad or not items:
        raise argparse.ArgumentTypeError(f"pictures must be a subset of {','.join(PICTURES)}")
    return items


def cmd_run(args):
    try:
        config = load_config(args.config, out=args.out, pictures=args.pictures, seed_base=args.seed_base)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    workers = args.workers or default_workers()
    manifest = run_sweep(config, workers=workers)
    out = args.out or config.out
    n_ok = len(manifest.records) - len(manifest.failures)
    print(f"{n_ok}/{len(manifest.records)} instances solved -> {out}")
    if config.figures:
        for path in emit_plots(out, config.temperature_b):
            print(f"figure: {path}")
    return 1 if manifest.failures else 0


def cmd_plot(args):
    try:
        written = emit_plots(args.indir)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    if not written:
        print("warning: nothing to plot", file=sys.stderr)
    for path in written:
        print(f"figure: {path}")
    return 0


def run_checks(seed=0):
    """Small built-in invariant suite; returns a list of (name, passed, detail)."""
    from .model import BathSpec, ChainSpec, DrivingSpec, build_perturbation_matrix, canonical_distribution, sample_couplings
    from .quantum import build_superoperator, solve_quantum_ness
    from .stochastic import build_rate_matrix, cooling_rate, ear, solve_ness

    chain, bath = ChainSpec(), BathSpec()
    results = []
    worst = 0.0
    for eps in (0.1, 3.0, 1e3):
        d = DrivingSpec(eps, 2.0, seed)
        ness = solve_ness(build_rate_matrix(chain, bath, sample_couplings(chain, d)))
        w, q = ear(chain, ness.rate_matrix.couplings, ness.populations_exact), cooling_rate(chain, bath, ness.populations_exact)
        worst = max(worst, abs(w - q) / max(abs(w), 1e-30))
    results.append(("stochastic EAR = cooling", worst < 1e-10, f"max rel diff {worst:.1e}"))

    d = DrivingSpec(1e-6, 2.0, seed)
    ness = solve_ness(build_rate_matrix(chain, bath, sample_couplings(chain, d)))
    gap = float(np.max(np.abs(ness.populations - canonical_distribution(chain, bath.temperature_b))))
    results.append(("weak driving -> canonical", gap < 1e-6, f"max gap {gap:.1e}"))

    d = DrivingSpec(3.0, 2.0, seed)
    v = build_perturbation_matrix(chain, sample_couplings(chain, d), d)
    rho = solve_quantum_ness(build_superoperator(chain, bath, v, d))
    results.append(("quantum trace", rho.trace_error < 1e-12, f"{rho.trace_error:.1e}"))
    results.append(("quantum hermiticity", rho.hermiticity_error < 1e-12, f"{rho.hermiticity_error:.1e}"))
    results.append(("quantum positivity", rho.min_eigenvalue >= -1e-10, f"min eig {rho.min_eigenvalue:.2e}"))
    return results


def cmd_check(args):
    results = run_checks()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return 0 if all(ok for _, ok, _ in results) else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="ness-lab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve a parameter sweep and write CSV datasets")
    run.add_argument("--config", help="TOML run configuration (defaults to the built-in reference parameters)")
    run.add_argument("--out", help="output directory")
    run.add_argument("--workers", type=int, help="worker processes (default: available CPUs)")
    run.add_argument("--pictures", type=_pictures, help="comma list from stochastic,quantum")
    run.add_argument("--seed-base", type=int, default=None, help="offset added to every configured seed")
    run.set_defaults(func=cmd_run)

    plot = sub.add_parser("plot", help="render SVG figures from a sweep directory")
    plot.add_argument("--in", dest="indir", required=True)
    plot.set_defaults(func=cmd_plot)

    check = sub.add_parser("check", help="run the built-in invariant checks")
    check.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
