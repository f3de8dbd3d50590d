"""Command-line entry point: ``ksstokes <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import sys

from .diagnostics import moser_closed_form, moser_partial_product
from .errors import InvalidArgument, NumericalError
from .harness import compare, find_gstar, find_mass_threshold, resolve_config, run, sweep_g


def _grid(text: str) -> tuple[int, int]:
    """``N`` (cells per side) or ``NXxNY``; N cells means N - 1 interior nodes."""
    try:
        parts = [int(p) for p in text.lower().split("x")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}, use N or NXxNY") from None
    if len(parts) == 1:
        parts *= 2
    if len(parts) != 2 or min(parts) < 4:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}, need at least 4 cells per side")
    return parts[0] - 1, parts[1] - 1


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def _ints(text: str) -> list[int]:
    return [int(v) for v in _floats(text)]


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", help="TOML config file or a shipped experiment name (E-1 ... E-5)")
    p.add_argument("--g", type=float)
    p.add_argument("--t-end", type=float)
    p.add_argument("--dt-target", type=float)
    p.add_argument("--snapshot-dt", type=float)
    p.add_argument("--mass", type=float)
    p.add_argument("--grid", type=_grid, help="cells per side, N or NXxNY")
    p.add_argument("--backend", choices=["fd", "galerkin"])
    p.add_argument("--modes", type=int, help="Galerkin truncation n = m")
    p.add_argument("--out")
    p.add_argument("--dump-fields", action="store_true", default=None)


def _overrides(a: argparse.Namespace) -> dict:
    o = {"g": a.g, "t_end": a.t_end, "dt_target": a.dt_target, "snapshot_dt": a.snapshot_dt,
         "mass": a.mass, "backend": a.backend, "out": a.out, "dump_fields": a.dump_fields}
    if a.grid is not None:
        o["nx"], o["ny"] = a.grid
    if a.modes is not None:
        o["n_modes"] = o["m_modes"] = a.modes
    return o


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ksstokes",
                                     description="Keller-Segel density coupled to Stokes-Boussinesq flow")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_overrides(sub.add_parser("run", help="single run"))

    p = sub.add_parser("sweep", help="run a list of g values")
    _add_overrides(p)
    p.add_argument("--g-list", type=_floats, required=True)
    p.add_argument("--workers", type=int, default=1)

    for name, what in (("find-gstar", "suppression threshold g*"), ("find-mass", "blow-up mass threshold")):
        p = sub.add_parser(name, help=f"bisect the {what}")
        _add_overrides(p)
        p.add_argument("--lo", type=float, required=True)
        p.add_argument("--hi", type=float, required=True)
        p.add_argument("--iters", type=int, default=4)

    p = sub.add_parser("compare", help="grid vs Galerkin backend")
    _add_overrides(p)
    p.add_argument("--truncations", type=_ints, help="list of n = m truncations")

    p = sub.add_parser("moser", help="Moser exponent product and its closed form")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, choices=[2, 3], required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "moser":
            print(json.dumps({"n": args.n, "d": args.d, "product": moser_partial_product(args.n, args.d),
                              "closed_form": moser_closed_form(args.n, args.d)}))
            return 0
        cfg = resolve_config(args.config, _overrides(args))
        if args.command == "run":
            r = run(cfg)
            rate = r.quench.rate if r.quench and r.quench.ok else None
            print(json.dumps({"verdict": r.verdict, "t_final": r.t_final, "quench_rate": rate,
                              "csv": r.csv_path, "wall_time": round(r.wall_time, 3)}))
        elif args.command == "sweep":
            print(json.dumps(sweep_g(cfg, args.g_list, args.workers).to_dict(), indent=2))
        elif args.command == "find-gstar":
            lo, hi = find_gstar(cfg, args.lo, args.hi, args.iters)
            print(json.dumps({"g_minus": lo, "g_plus": hi}))
        elif args.command == "find-mass":
            lo, hi = find_mass_threshold(cfg, args.lo, args.hi, args.iters)
            print(json.dumps({"M_minus": lo, "M_plus": hi}))
        elif args.command == "compare":
            print(json.dumps(compare(cfg, args.truncations), indent=2))
    except InvalidArgument as exc:
        print(f"ksstokes: error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"ksstokes: numerical failure: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
