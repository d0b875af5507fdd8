"""Command-line entry point: ``tvsaddle {run,dump-graphs,verify,presets,floor}``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import config as config_mod
from .exceptions import ConfigError, TvSaddleError
from .harness import PRESETS, csv_text, graph_dump_lines, preset, run_experiment
from .invariants import run_suite


def resolve_config(ref: str):
    """A config file path, or the name of a built-in preset."""
    if Path(ref).is_file():
        return config_mod.load(ref)
    if ref in PRESETS:
        return preset(ref)
    raise ConfigError("<config>", f"{ref!r} is neither a readable file nor a preset name")


def _apply_overrides(cfg, args):
    out = {}
    if args.checkpoint_stride is not None:
        out["checkpoint_stride"] = args.checkpoint_stride
    if args.output is not None:
        out["dir"] = args.output
    if args.plot:
        out["plot"] = True
    return cfg.replace(output=out) if out else cfg


def cmd_run(args):
    cfg = _apply_overrides(resolve_config(args.config), args)
    result = run_experiment(cfg, quiet=args.quiet)
    if not args.quiet:
        print(f"wrote {len(result.files)} files to {result.out_dir}")
    return 0


def cmd_dump_graphs(args):
    if args.rounds < 0:
        raise ConfigError("--rounds", "must be non-negative")
    lines = graph_dump_lines(resolve_config(args.config), args.rounds)
    text = "".join(line + "\n" for line in lines)
    if args.output:
        Path(args.output).mkdir(parents=True, exist_ok=True)
        (Path(args.output) / "graphs.txt").write_text(text, encoding="utf-8")
    if not args.quiet or not args.output:
        sys.stdout.write(text)
    return 0


def cmd_verify(args):
    results = run_suite()
    for r in results:
        if not args.quiet or not r.passed:
            status = "PASS" if r.passed else "FAIL"
            print(f"{status} {r.group} checks={r.checks} violations={r.violations} ({r.detail})")
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        rows = [(r.group, r.checks, r.violations, "PASS" if r.passed else "FAIL") for r in results]
        text = "group,checks,violations,status\n" + "".join(",".join(map(str, row)) + "\n" for row in rows)
        (out / "verify.csv").write_text(text, encoding="utf-8", newline="\n")
    failed = [r.group for r in results if not r.passed]
    if failed:
        print(f"error: invariant groups failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def cmd_presets(args):
    if args.show:
        sys.stdout.write(preset(args.show).dumps())
        return 0
    for name, (description, _) in PRESETS.items():
        print(f"{name}: {description}")
    return 0


def cmd_floor(args):
    cfg = _apply_overrides(resolve_config(args.config), args)
    if cfg.problem["family"] != "lower_bound":
        raise ConfigError("problem.family", "floor triples need the 'lower_bound' family")
    result = run_experiment(cfg.replace(repeats=cfg.repeats[:1]), quiet=True)
    text = (result.out_dir / "floor.csv").read_text(encoding="utf-8")
    if not args.quiet:
        sys.stdout.write(text)
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", metavar="DIR", help="directory for the written artifacts")
    common.add_argument("--plot", action="store_true", help="also write a plot.svg")
    common.add_argument("--checkpoint-stride", type=int, metavar="N", help="record every N-th iteration")
    common.add_argument("--quiet", action="store_true", help="suppress non-essential output")

    parser = argparse.ArgumentParser(prog="tvsaddle", description="Decentralized saddle-point experiments on time-varying graphs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run an experiment config or preset")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("dump-graphs", parents=[common], help="print the first graphs of a config's sequence")
    p.add_argument("config")
    p.add_argument("--rounds", type=int, required=True, metavar="K")
    p.set_defaults(func=cmd_dump_graphs)

    p = sub.add_parser("verify", parents=[common], help="run the invariant self-check suite")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("presets", parents=[common], help="list built-in configs")
    p.add_argument("--show", metavar="NAME", help="print one preset as TOML")
    p.set_defaults(func=cmd_presets)

    p = sub.add_parser("floor", parents=[common], help="emit K,floor,measured triples for a hard-instance config")
    p.add_argument("config")
    p.set_defaults(func=cmd_floor)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: config field {exc.field}: {str(exc).split(': ', 1)[-1]}", file=sys.stderr)
        return 2
    except (TvSaddleError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
