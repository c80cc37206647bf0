"""
STO Engine command line.

    python -m sto_engine.cli fixed-point --preset clustered
    python -m sto_engine.cli compare --preset er --threads 4
    python -m sto_engine.cli probe lasota_yorke --config experiment.ini
"""
import argparse
import logging
import sys
from dataclasses import replace

from sto_engine import config as settings
from sto_engine import database
from sto_engine.errors import ConfigError, StoError
from sto_engine.services import runner
from sto_engine.services.probes import PROBES
from sto_engine.services.reporter import build_report_plain

logger = logging.getLogger(__name__)


def _common(parser):
    parser.add_argument("--config", help="experiment file (INI or JSON)")
    parser.add_argument("--preset", choices=sorted(settings.PRESETS), help="start from a named preset")
    parser.add_argument("--threads", type=int, default=None, help="worker threads (default: $STO_THREADS or 1)")
    parser.add_argument("--seed", type=int, default=None, help="override the master seed")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--dry-run", action="store_true", help="validate and print the plan without computing")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sto",
        description="Self-consistent transfer operators for graphon-coupled expanding circle maps",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fixed = sub.add_parser("fixed-point", help="solve for the fixed point and run the configured probes")
    _common(fixed)
    fixed.add_argument("--sweep", action="store_true", help="also run the finite-N convergence sweep")

    simulate = sub.add_parser("simulate", help="simulate the finite network and dump its trajectory")
    _common(simulate)
    simulate.add_argument("--nodes", type=int, default=400, help="network size N")
    simulate.add_argument("--realizations", type=int, default=None, help="ensemble size R (default: sweep R)")
    simulate.add_argument("--steps", type=int, default=None, help="time steps (default: sweep t)")
    simulate.add_argument("--no-dump", action="store_true", help="skip the trajectory file")

    compare = sub.add_parser("compare", help="finite-N sweep against the mean-field fibers")
    _common(compare)

    probe = sub.add_parser("probe", help="run one named probe")
    probe.add_argument("name", choices=sorted(PROBES))
    _common(probe)

    sub.add_parser("presets", help="list the built-in presets")

    runs = sub.add_parser("runs", help="list recent runs from the ledger")
    runs.add_argument("--limit", type=int, default=20)
    runs.add_argument("--status", choices=database.RUN_STATUSES, default=None)
    runs.add_argument("-v", "--verbose", action="store_true")
    return parser


def load_config(args):
    """Config file, else preset, else defaults; then command-line overrides."""
    if args.config and args.preset:
        raise ConfigError("invalid_value", "use --config or --preset, not both (set [run] preset in the file)")
    if args.config:
        config = settings.parse_config(args.config)
    elif args.preset:
        config = settings.load_preset(args.preset)
    else:
        config = settings.validate(settings.ExperimentConfig())
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.threads is not None:
        overrides["threads"] = args.threads
    return replace(config, **overrides) if overrides else config


def _print_presets():
    for name in sorted(settings.PRESETS):
        print(f"{name:10s}  {settings.PRESETS[name]['description']}")


def _print_runs(args):
    rows = database.list_runs(limit=args.limit, status=args.status)
    if not rows:
        print("no runs recorded")
        return
    for row in rows:
        wall = "-" if row["wall_seconds"] is None else f"{row['wall_seconds']:.1f}s"
        print(
            f"#{row['id']:<5d} {row['started_at']}  {row['command']:<12s} "
            f"{(row['preset'] or '-'):<10s} {row['status']:<8s} exit={row['exit_code']} {wall}"
        )


def _dispatch(args, config):
    if args.command == "fixed-point":
        return runner.run_scenario(config, sweep=True if args.sweep else None)
    if args.command == "probe":
        return runner.run_scenario(config, command="probe", probes=[args.name], sweep=False)
    if args.command == "compare":
        return runner.run_compare(config)
    R = args.realizations or config.R
    steps = config.t if args.steps is None else args.steps
    return runner.run_simulation(config, args.nodes, R, steps, dump=not args.no_dump)


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if getattr(args, "verbose", False) else settings.LOG_LEVEL
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    if args.command == "presets":
        _print_presets()
        return 0
    if args.command == "runs":
        _print_runs(args)
        return 0

    try:
        config = load_config(args)
        if args.dry_run:
            probes = [args.name] if args.command == "probe" else None
            for line in runner.plan(config, args.command, probes):
                print(line)
            return 0
        outcome = _dispatch(args, config)
    except StoError as e:
        code = runner.exit_code_for(e)
        print(f"error: {e}", file=sys.stderr)
        return code

    print(build_report_plain(outcome.report))
    for kind, path in sorted(outcome.files.items()):
        logger.info(f"[CLI] {kind}: {path}")
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
