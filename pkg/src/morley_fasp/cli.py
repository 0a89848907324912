"""Command-line entry point ``solver``.

    solver run <config> [--out DIR] [--workers N]
    solver mesh <domain> <level> --out <path>
    solver scatter <domain> <level> [--out DIR]

Exit codes: 0 success, 2 invalid config or arguments, 3 solver failure.
"""
from __future__ import annotations

import argparse
import sys

from .experiments import ConfigError, emit_scatter, estimate_cost, load_config, run_config
from .mesh import DOMAINS, MeshError, build_domain, save_mesh
from .operators import BudgetError
from .spectra import SpectrumError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="solver", description="Morley biharmonic FASP experiments")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("--out", help="override the config's output directory")
    run.add_argument("--workers", type=int, default=1, help="parallel level cells")

    mesh = sub.add_parser("mesh", help="write a refined domain mesh")
    mesh.add_argument("domain", choices=sorted(DOMAINS))
    mesh.add_argument("level", type=int)
    mesh.add_argument("--out", required=True)

    sc = sub.add_parser("scatter", help="eigenvalue scatter data for T2*S and T3*S")
    sc.add_argument("domain", choices=sorted(DOMAINS))
    sc.add_argument("level", type=int)
    sc.add_argument("--out", default=".")
    return p


def _run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for line in estimate_cost(cfg):
        print(line)
    result = run_config(cfg, output=args.out, workers=max(1, args.workers))
    print(f"wrote {result.csv_path}")
    if not result.ok:
        for row in result.rows:
            if row.failed:
                print(f"level {row.level} failed: {row.failed}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _mesh(args) -> int:
    if args.level < 0:
        print("level must be non-negative", file=sys.stderr)
        return EXIT_CONFIG
    mesh = build_domain(args.domain, args.level)
    save_mesh(mesh, args.out)
    print(f"{args.domain} level {args.level}: {mesh.n_vertices} vertices, "
          f"{mesh.n_triangles} triangles -> {args.out}")
    return EXIT_OK


def _scatter(args) -> int:
    if args.level < 0:
        print("level must be non-negative", file=sys.stderr)
        return EXIT_CONFIG
    try:
        out = emit_scatter(args.domain, args.level, args.out)
    except (SpectrumError, BudgetError) as exc:
        print(f"scatter failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    for key in ("T2_path", "T3_path", "script"):
        print(f"wrote {out[key]}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": _run, "mesh": _mesh, "scatter": _scatter}[args.command]
    try:
        return handler(args)
    except MeshError as exc:
        print(f"mesh error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
