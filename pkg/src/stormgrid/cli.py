"""Command line interface.

    stormgrid validate --config run.yaml
    stormgrid simulate --config run.yaml [--seed N] [--samples N] [--out DIR] [--workers N]
    stormgrid indices  --config run.yaml [--out DIR]
    stormgrid convert-matpower case.m out.json [--substation-geo CSV] [--county-map CSV]

Exit status: 0 success, 2 invalid input or configuration, 1 unexpected failure.
"""

import argparse
import logging
import sys

from .config import load_config
from .errors import ConfigError, StormgridError, ValidationError

log = logging.getLogger("stormgrid")

EXIT_OK, EXIT_FAILURE, EXIT_INVALID = 0, 1, 2


def _config(args, allow_default=None):
    allow = args.allow_default_fragility if allow_default is None else allow_default
    cfg = load_config(args.config, allow_default_fragility=allow)
    return cfg.with_overrides(seed=getattr(args, "seed", None), samples=getattr(args, "samples", None),
                              out=getattr(args, "out", None), workers=getattr(args, "workers", None))


def cmd_validate(args) -> int:
    from .pipeline import run_validate
    cfg = _config(args, allow_default=True)
    problems, counts = run_validate(cfg)
    for key, value in counts.items():
        print(f"{key}: {value}")
    if not args.allow_default_fragility:
        try:
            load_config(args.config)
        except ConfigError as exc:
            problems.append(str(exc))
    if problems:
        print(f"FAILED ({len(problems)} problem{'s' if len(problems) != 1 else ''})")
        for p in problems:
            print(f"  - {p}")
        return EXIT_INVALID
    print("OK")
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .pipeline import run_simulate
    cfg = _config(args)
    manifest = run_simulate(cfg)
    print(f"simulated {len(manifest['storms'])} storms x {cfg.n_samples} samples "
          f"-> {cfg.output_dir} ({manifest['wall_clock_s']} s)")
    return EXIT_OK


def cmd_indices(args) -> int:
    from .pipeline import run_indices
    cfg = _config(args)
    table = run_indices(cfg)
    print(f"indices for {len(table)} counties -> {cfg.output_dir}")
    return EXIT_OK


def cmd_convert(args) -> int:
    from .grid import validate_case, write_grid_case
    from .matpower import convert_matpower
    case = convert_matpower(args.case, args.substation_geo, args.county_map)
    problems = validate_case(case)
    if problems:
        raise ValidationError("converted case failed validation", problems)
    write_grid_case(case, args.output)
    print(f"{len(case.buses)} buses, {len(case.substations)} substations, "
          f"{len(case.lines)} line circuits ({case.line_corridors()} corridors), "
          f"{case.total_load_mw / 1000:.2f} GW load -> {args.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stormgrid", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def study(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--allow-default-fragility", action="store_true",
                       help="run with built-in flood fragility constants when the config has none")
        p.set_defaults(func=func)
        return p

    study("validate", cmd_validate, "check every input file and print counts")
    p = study("simulate", cmd_simulate, "run the Monte Carlo study")
    p.add_argument("--seed", type=int, help="base seed (overrides config)")
    p.add_argument("--samples", type=int, help="Monte Carlo samples per storm")
    p.add_argument("--workers", type=int, help="worker processes")
    study("indices", cmd_indices, "compute BVI, SSVI, OVI, SVI, ICVI from simulate outputs")

    c = sub.add_parser("convert-matpower", help="convert a MATPOWER case to grid case JSON")
    c.add_argument("case")
    c.add_argument("output")
    c.add_argument("--substation-geo", help="CSV substation,lat,lon,zip[,elevation_m]")
    c.add_argument("--county-map", help="CSV zip,city,county_fips,population_share")
    c.set_defaults(func=cmd_convert)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (StormgridError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID if isinstance(exc, (ConfigError, ValidationError, ValueError)) else EXIT_FAILURE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
