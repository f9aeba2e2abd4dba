"""Command-line entry point.

Exit codes: 0 on success, 1 on scenario validation failure, 2 on I/O
errors (missing or malformed files, unreadable cubes).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .cubefile import CubeFormatError, ingest_cube
from .harness import Campaign, run_campaign
from .scenario import ConfigurationError, Scenario, load_scenario, \
    validate_scenario

_DEFAULT_GRIDS = {
    "pd_vs_rcs": "-20,-15,-10,-5,0,5,10",
    "pd_vs_mod": "4,16,64,256,1024",
    "tradeoff_rho": "0,0.2,0.4,0.6,0.8,1",
    "tradeoff_timeshare": "0,0.25,0.5,0.75,1",
    "range_profile": "4,1024",
    "rate": "",
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", required=True, help="scenario file "
                   "(TOML or JSON)")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output CSV path")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--pad", type=int, default=None,
                   help="zero-pad factor override for delay-Doppler maps")
    p.add_argument("--grid", default=None,
                   help="comma-separated sweep values")
    p.add_argument("--mi-samples", type=int, default=None,
                   help="Monte-Carlo samples per mutual-information cell")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ofdm-isac",
        description="Monostatic OFDM ISAC simulation and analysis")
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("scenario")

    ing = sub.add_parser("ingest", help="validate a radar cube file")
    ing.add_argument("cube")

    for cmd, kind in (("range-profile", "range_profile"),
                      ("pd-vs-rcs", "pd_vs_rcs"),
                      ("pd-vs-mod", "pd_vs_mod"),
                      ("tradeoff-rho", "tradeoff_rho"),
                      ("tradeoff-timeshare", "tradeoff_timeshare"),
                      ("rate", "rate")):
        p = sub.add_parser(cmd, help=f"run the {kind} campaign")
        p.set_defaults(kind=kind)
        _add_common(p)
    return ap


def _load(path: str) -> Scenario:
    try:
        return load_scenario(path)
    except FileNotFoundError as exc:
        raise _IoFailure(f"cannot read scenario: {exc}") from exc


class _IoFailure(Exception):
    pass


def _cmd_validate(args) -> int:
    scenario = _load(args.scenario)
    violations = validate_scenario(scenario)
    if violations:
        for v in violations:
            print(v, file=sys.stderr)
        return 1
    print(f"{args.scenario}: ok")
    return 0


def _cmd_ingest(args) -> int:
    try:
        cube, meta = ingest_cube(args.cube)
    except FileNotFoundError as exc:
        raise _IoFailure(str(exc)) from exc
    except CubeFormatError as exc:
        raise _IoFailure(str(exc)) from exc
    print(f"{args.cube}: version {meta.version}, "
          f"NR={meta.nr} N={meta.n_subcarriers} M={meta.n_symbols}, "
          f"df={meta.df:.6g} Hz, fc={meta.fc:.6g} Hz, "
          f"{cube.samples.nbytes} sample bytes")
    return 0


def _cmd_campaign(args) -> int:
    scenario = _load(args.scenario)
    violations = validate_scenario(scenario)
    if violations:
        for v in violations:
            print(v, file=sys.stderr)
        return 1
    if args.pad is not None:
        scenario = replace(scenario, pad=args.pad)
    if args.mi_samples is not None:
        scenario = replace(scenario, mi_samples=args.mi_samples)
    grid_text = args.grid if args.grid is not None \
        else _DEFAULT_GRIDS[args.kind]
    grid = tuple(float(g) for g in grid_text.split(",") if g.strip())
    out = args.out or f"{args.kind}.csv"
    campaign = Campaign(kind=args.kind, scenario=scenario, grid=grid,
                        trials=args.trials, seed=args.seed, out=out,
                        threads=args.threads)
    try:
        path = run_campaign(campaign)
    except OSError as exc:
        raise _IoFailure(str(exc)) from exc
    print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return _cmd_validate(args)
        if args.command == "ingest":
            return _cmd_ingest(args)
        return _cmd_campaign(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _IoFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
