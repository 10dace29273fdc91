"""Command-line front end: run a config file, run a named preset, or list
the available presets.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, apply_override, parse_config
from .presets import PRESETS, _emit_run_files, _single_exit_code, execute_config, list_presets, run_preset
from .output import sanitize, write_summary
import os


def _add_common_flags(sub):
    sub.add_argument("--output-dir", default=None, help="directory for emitted files")
    sub.add_argument("--scheme", default=None, choices=["galerkin", "low_order", "fct"])
    sub.add_argument("--refinement", default=None, type=int, help="mesh refinement level")
    sub.add_argument("--dt", default=None, type=float, help="time step")
    sub.add_argument("--quiet", action="store_true", help="suppress progress lines")


def _flag_overrides(args) -> list[str]:
    out = []
    if args.scheme is not None:
        out.append(f"time.scheme={args.scheme}")
    if args.refinement is not None:
        out.append(f"mesh.refinement={args.refinement}")
    if args.dt is not None:
        out.append(f"time.dt={args.dt}")
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="turfsim",
        description="Finite-element simulator of gang territory formation via graffiti avoidance.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p_run = subs.add_parser("run", help="execute a configuration file")
    p_run.add_argument("config", help="path to a plain-text config")
    _add_common_flags(p_run)

    p_preset = subs.add_parser("preset", help="execute a named preset")
    p_preset.add_argument("name", help="preset name (see list-presets)")
    p_preset.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="config override, repeatable",
    )
    _add_common_flags(p_preset)

    subs.add_parser("list-presets", help="show the preset catalogue")

    args = parser.parse_args(argv)

    if args.command == "list-presets":
        for name, description in list_presets():
            print(f"{name:26s} {description}")
        return 0

    try:
        if args.command == "run":
            with open(args.config) as fh:
                cfg = parse_config(fh.read())
            for spec in _flag_overrides(args):
                cfg = apply_override(cfg, spec)
            outdir = args.output_dir or cfg.output_dir
            result, mesh, summary = execute_config(cfg)
            _emit_run_files(cfg, result, mesh, outdir)
            if cfg.outputs.summary:
                write_summary(os.path.join(outdir, "summary.json"), sanitize(summary))
            code = _single_exit_code(None, summary)
            if not args.quiet:
                print(f"run: status={summary['status']} exit={code} output={outdir}")
            return code

        # preset
        if args.name not in PRESETS:
            print(f"unknown preset {args.name!r}; available:", file=sys.stderr)
            for name, _ in list_presets():
                print(f"  {name}", file=sys.stderr)
            return 2
        overrides = list(args.override) + _flag_overrides(args)
        outdir = args.output_dir or PRESETS[args.name].config.output_dir
        outcome = run_preset(args.name, overrides=tuple(overrides), output_dir=outdir, quiet=args.quiet)
        if not args.quiet:
            print(f"{args.name}: exit={outcome.exit_code} output={outdir}")
        return outcome.exit_code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
