"""Command line entry point: ``python -m lrperc <subcommand>``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .errors import ConfigError, DomainError, ResourceError, SearchError

ESTIMATE_AUDITS = ("tail", "two_point", "typical_max")
AUDIT_AUDITS = ("tail", "two_point", "typical_max", "bound", "two_ghost")


def _load(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"not valid JSON: {e}") from None


def _common(p):
    p.add_argument("--config", "-c", help="JSON run configuration")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--workers", "-j", type=int, help="worker processes")
    p.add_argument("--output-dir", "-o", help=f"output root (default ${harness.OUTPUT_ROOT_ENV} or ./lrperc-runs)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lrperc", description="Long-range percolation experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="sample one configuration and dump its edge list")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--L", type=int, default=1024)
    p.add_argument("--boundary", choices=["torus", "free"], default="torus")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--replica", type=int, default=0)
    p.add_argument("--method", choices=["coupled", "geometric"], default="coupled")
    p.add_argument("--no-normalize", action="store_true", help="use the raw kernel amplitude")
    p.add_argument("--out", default="configuration", help="output stem for .bin/.json")
    p.add_argument("--seed", type=int, default=0)

    for name, text in (("estimate", "tails, two-point averages and typical maxima"),
                       ("audit", "estimates plus bound and two-ghost audits"),
                       ("oracle", "exact tiny-graph inequality suite")):
        p = sub.add_parser(name, help=text)
        _common(p)

    p = sub.add_parser("report", help="summarize a run directory")
    p.add_argument("results_dir")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "sample":
            return _sample(args)
        if args.command == "report":
            print(harness.report(args.results_dir), end="")
            return 0
        cfg = _load(args.config) if args.config else {"schema_version": harness.SCHEMA_VERSION}
        if args.command == "oracle":
            cfg.setdefault("audits", ["oracle"])
            only = ("oracle",)
        elif args.command == "estimate":
            only = ESTIMATE_AUDITS
        else:
            only = AUDIT_AUDITS + (("oracle",) if "oracle" in cfg.get("audits", ()) else ())
        status, outdir = harness.run(cfg, seed=args.seed, workers=args.workers,
                                     output_dir=args.output_dir, only=only)
        print((outdir / "audit_report.txt").read_text(), end="")
        print(f"results in {outdir}")
        return status
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (DomainError, ResourceError, SearchError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


def _sample(args) -> int:
    from .kernel import Kernel, TorusBox
    from .sampler import dump_configuration, sample_configuration

    k = Kernel(args.d, args.alpha)
    if not args.no_normalize:
        k = k.normalized()
    box = TorusBox(args.d, args.L, args.boundary)
    cfg = sample_configuration(box, k, args.beta, args.seed, args.replica, method=args.method)
    b, j = dump_configuration(cfg, args.out)
    print(f"{cfg.n_edges} open edges -> {b}, {j}")
    return 0
