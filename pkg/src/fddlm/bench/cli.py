"""Command line entry point: ``fddlm run ...``.

Settings come from built-in defaults, then an optional ``--config`` file of
``key = value`` lines (``#`` starts a comment, keys are the long flag names
with ``-`` or ``_``), then the command line.
"""
import argparse
import logging
import sys
from pathlib import Path

from fddlm.assembly import ProblemConfig
from fddlm.bench.experiment import (CASES, SHAPES, SolverSettings, level_pairs,
                                    run_matrix)
from fddlm.bench.report import emit_csv, emit_plots
from fddlm.precond import VARIANTS

log = logging.getLogger("fddlm")


def read_config_file(path):
    """Parse ``key = value`` lines into a dict of strings."""
    values = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _csv_list(choices):
    def parse(text):
        items = [t.strip().lower() for t in text.split(",") if t.strip()]
        bad = [t for t in items if t not in choices]
        if bad:
            raise argparse.ArgumentTypeError(f"invalid choice(s) {bad}; pick from {choices}")
        return items
    return parse


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def build_parser():
    parser = argparse.ArgumentParser(prog="fddlm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run (part of) the experiment matrix")
    cases = tuple(c.value for c in CASES)
    shapes = tuple(s.lower() for s in SHAPES)
    run.add_argument("--element", type=_csv_list(cases), default=None,
                     help=f"comma-separated subset of {','.join(cases)} (default: all)")
    run.add_argument("--shape", type=_csv_list(shapes), default=None,
                     help="comma-separated subset of p1,p2,p3 (default: all)")
    run.add_argument("--variant", type=_csv_list(VARIANTS), default=None,
                     help="comma-separated subset of dd,dm,md,mm (default: all)")
    run.add_argument("--min-level", type=int, default=2)
    run.add_argument("--max-level", type=int, default=5,
                     help="level L is a 2^L x 2^L background grid (default: 5)")
    run.add_argument("--disk-level-offset", type=int, default=0)
    run.add_argument("--beta", type=float, default=1.0)
    run.add_argument("--beta2", type=float, default=10.0)
    run.add_argument("--f", type=float, default=1.0)
    run.add_argument("--f2", type=float, default=1.0)
    run.add_argument("--tol", type=float, default=1e-12)
    run.add_argument("--relative", type=_bool, nargs="?", const=True, default=False,
                     help="divide the residual by ||b|| in the stopping test")
    run.add_argument("--max-iter", type=int, default=100_000)
    run.add_argument("--restart", type=int, default=200)
    run.add_argument("--smooth-steps", type=int, default=2)
    run.add_argument("--sor-omega", type=float, default=1.0)
    run.add_argument("--dense-cap", type=int, default=6000,
                     help="largest system whose condition number is taken by dense SVD")
    run.add_argument("--cond-time-limit", type=float, default=None,
                     help="seconds allowed per iterative preconditioned condition "
                          "estimate; over-budget rows get cond_method=timeout")
    run.add_argument("--no-cond", action="store_true",
                     help="skip condition number estimates")
    run.add_argument("--allow-beta2-le-beta", action="store_true")
    run.add_argument("--csv", type=Path, default=Path("results.csv"))
    run.add_argument("--plots", type=Path, default=None, help="directory for SVG plots")
    run.add_argument("--config", type=Path, default=None)
    run.add_argument("-v", "--verbose", action="store_true")
    return parser


def _apply_config_file(parser, argv):
    """Re-parse with file values installed as defaults."""
    args = parser.parse_args(argv)
    if getattr(args, "config", None) is None:
        return args
    run = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in run._actions}
    defaults = {}
    for key, value in read_config_file(args.config).items():
        action = known.get(key)
        if action is None or key in ("config", "help"):
            parser.error(f"{args.config}: unknown key {key!r}")
        if action.type is not None:
            defaults[key] = action.type(value)
        elif isinstance(action.const, bool):
            defaults[key] = _bool(value)
        else:
            defaults[key] = value
    run.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None):
    parser = build_parser()
    args = _apply_config_file(parser, argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = ProblemConfig(beta=args.beta, beta2=args.beta2, f=args.f, f2=args.f2,
                               allow_beta2_le_beta=args.allow_beta2_le_beta)
        levels = level_pairs(args.min_level, args.max_level, args.disk_level_offset)
    except ValueError as exc:
        parser.error(str(exc))
    settings = SolverSettings(tol=args.tol, max_iter=args.max_iter, restart=args.restart,
                              relative=args.relative, smooth_steps=args.smooth_steps,
                              sor_omega=args.sor_omega, dense_cap=args.dense_cap,
                              cond_time_limit=args.cond_time_limit,
                              estimate_condition=not args.no_cond)
    rows = run_matrix(levels, config, settings, cases=args.element,
                      shapes=args.shape, variants=args.variant)
    emit_csv(rows, args.csv)
    print(f"wrote {len(rows)} rows to {args.csv}")
    if args.plots is not None:
        paths = emit_plots(rows, args.plots)
        print(f"wrote {len(paths)} plots to {args.plots}")
    failed = sum(not r.converged for r in rows)
    if failed:
        print(f"{failed} of {len(rows)} runs did not converge", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
