"""Command line entry point: ``eigrefine <experiment> [options]``."""

import argparse
import sys

from . import harness
from .errors import EigRefineError

DEFAULT_OUT = {
    "simple": "data/simple_convergence.dat",
    "complex": "data/complex_convergence.dat",
    "preprocess": "data/biortho_preprocess.dat",
    "cluster": "data/cluster_handling.dat",
    "cluster-cond": "data/cluster_conditioning.dat",
    "alpha-sweep": "data/alpha_sensitivity.dat",
    "delta-sweep": "data/delta_sensitivity.dat",
    "suitesparse": "data/suitesparse_benchmarks.dat",
    "timing": "data/timing.dat",
    "refine": "data/refine.dat",
}


def _seeds(text):
    try:
        seeds = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("empty seed list")
    return seeds


def build_parser():
    p = argparse.ArgumentParser(
        prog="eigrefine",
        description="Run an eigendecomposition refinement experiment and "
                    "write its data file.")
    p.add_argument("experiment", choices=harness.EXPERIMENTS)
    p.add_argument("--n", type=int, help="matrix dimension (or, for timing, "
                   "a single dimension instead of the default grid)")
    p.add_argument("--alpha", type=float, help="nonnormality amplitude")
    p.add_argument("--delta", type=float, help="cluster threshold")
    p.add_argument("--iters", type=int, help="refinement steps")
    p.add_argument("--seeds", type=_seeds, help="comma separated seeds")
    p.add_argument("--mode", choices=sorted(harness.MODE_NAMES),
                   help="driving mode (refine, suitesparse right-only)")
    p.add_argument("--out", help="output data file")
    p.add_argument("--mtx", nargs="*", default=[], help="Matrix Market files")
    p.add_argument("--adapter", help="initial eigensolver adapter "
                   "(lapack32, lapack64, lapack32-complex, builtin-qr, "
                   "ground-truth)")
    p.add_argument("--family", default="simple-real",
                   choices=("simple-real", "simple-complex", "clustered"),
                   help="family for the refine experiment")
    p.add_argument("--repeats", type=int, default=3,
                   help="timing repetitions (minimum is reported)")
    p.add_argument("--quiet", action="store_true")
    return p


def _kwargs(args):
    name = args.experiment
    kw = {}
    if args.adapter:
        kw["adapter"] = args.adapter
    seeds = args.seeds
    single = name in ("simple", "complex", "preprocess", "cluster", "refine",
                      "timing")
    if seeds is not None:
        if single:
            kw["seed"] = seeds[0]
        elif name != "suitesparse":
            kw["seeds"] = seeds
    if args.n is not None:
        if name == "timing":
            kw["ns"] = (args.n,)
        elif name != "suitesparse":
            kw["n"] = args.n
    if args.alpha is not None and name == "alpha-sweep":
        kw["alphas"] = (args.alpha,)
    elif args.alpha is not None:
        if name not in ("simple", "complex", "preprocess", "refine", "timing"):
            raise EigRefineError(f"--alpha does not apply to {name}")
        kw["alpha"] = args.alpha
    if args.delta is not None:
        if name in ("cluster", "cluster-cond", "refine"):
            kw["delta"] = args.delta
        elif name == "delta-sweep":
            kw["deltas"] = (args.delta,)
        else:
            raise EigRefineError(f"--delta does not apply to {name}")
    if args.iters is not None:
        kw["max_iters" if name == "suitesparse" else "iters"] = args.iters
    if args.mode is not None:
        if name == "refine":
            kw["mode"] = harness.MODE_NAMES[args.mode]
        elif name == "suitesparse":
            if args.mode == "w":
                raise EigRefineError("suitesparse --mode selects the "
                                     "right-only realization")
            kw["mode"] = harness.MODE_NAMES[args.mode]
        else:
            raise EigRefineError(f"--mode does not apply to {name}")
    if name == "refine":
        kw["kind"] = args.family
    if name == "suitesparse":
        kw["paths"] = tuple(args.mtx)
    if name == "timing":
        kw["repeats"] = args.repeats
    return kw


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        table = harness.run_experiment(args.experiment, **_kwargs(args))
        path = table.write(args.out or DEFAULT_OUT[args.experiment])
    except (EigRefineError, ValueError, OSError) as exc:
        print(f"eigrefine: error: {exc}", file=sys.stderr)
        return 2
    if not args.quiet:
        sys.stdout.write(table.to_text())
        print(f"wrote {path}", file=sys.stderr)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
