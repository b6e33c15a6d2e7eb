"""Command-line driver: `esflow run` and `esflow sweep`."""

from __future__ import annotations

import argparse
import json
import os
import sys


def _build_parser():
    parser = argparse.ArgumentParser(prog="esflow",
                                     description="benchmark driver for the solver")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one benchmark case")
    run.add_argument("--config", required=True, help="INI run configuration")
    run.add_argument("--out", default=None, help="output directory override")
    run.add_argument("--seed", type=int, default=None, help="RNG seed override")
    run.add_argument("--threads", type=int, default=None,
                     help="BLAS/OpenMP thread cap")
    run.add_argument("--override", action="append", default=[],
                     metavar="SECTION.KEY=VALUE", help="config override")
    run.add_argument("--verbose", action="store_true")

    sw = sub.add_parser("sweep", help="run a temporal or spatial refinement sweep")
    sw.add_argument("--config", required=True, help="base INI configuration")
    sw.add_argument("--param", required=True,
                    help="swept key: time.dt_initial or case.elements")
    sw.add_argument("--values", required=True,
                    help="comma-separated values for the swept key")
    sw.add_argument("--out", default=None, help="output directory override")
    sw.add_argument("--seed", type=int, default=None)
    sw.add_argument("--threads", type=int, default=None)
    sw.add_argument("--override", action="append", default=[])
    sw.add_argument("--reference-dt", type=float, default=None,
                    help="measure temporal errors against a same-mesh run at this dt")
    return parser


def _set_threads(n):
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def main(argv=None):
    args = _build_parser().parse_args(argv)
    _set_threads(getattr(args, "threads", None))
    # heavy imports after the thread env is pinned
    from . import bench

    overrides = list(args.override)
    if args.seed is not None:
        overrides.append(f"case.seed={args.seed}")
    if args.out is not None:
        overrides.append(f"output.directory={args.out}")

    if args.command == "run":
        try:
            config = bench.load_config(args.config, overrides)
            status, summary = bench.run_case(config, quiet=not args.verbose)
        except (bench.ConfigError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print(json.dumps(summary, indent=2, sort_keys=True))
        return status

    if args.command == "sweep":
        values = args.values.split(",")
        if len(values) < 3:
            print("error: a sweep needs at least 3 values", file=sys.stderr)
            return 2
        mode = "temporal" if "dt" in args.param else "spatial"
        configs = []
        try:
            for v in values:
                cfg = bench.load_config(args.config,
                                        overrides + [f"{args.param}={v}"])
                out_dir = cfg.out_dir
                cfg.out_dir = os.path.join(out_dir, f"sweep_{v.replace(',', 'x')}")
                configs.append(cfg)
            reference = None
            if args.reference_dt is not None:
                reference = bench.load_config(
                    args.config,
                    overrides + [f"time.dt_initial={args.reference_dt}"])
                reference.out_dir = os.path.join(out_dir, "sweep_reference")
            out_csv = os.path.join(out_dir, "convergence.csv")
            os.makedirs(out_dir, exist_ok=True)
            result = bench.sweep(configs, mode, out_path=out_csv,
                                 reference=reference)
        except (bench.ConfigError, bench.SweepError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        sys.stdout.write(result["csv"])
        return 0 if all(r["status"] == 0 for r in result["rows"]) else 1

    return 2


if __name__ == "__main__":
    sys.exit(main())
