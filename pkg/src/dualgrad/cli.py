"""Command-line harness.

    dualgrad equiv|fig7|props|optimize|generate|plot
        --config <path> --seed <int> --out <path>
        [--reps <int>] [--mode exact|kernel] [--schedule per-token|fractional:<S>]

Exit codes: 0 success, 1 suite/acceptance failure, 2 config error, 3 I/O error.
``DUALGRAD_SEED`` overrides the default master seed when no flag is given.
"""

import argparse
import sys

from . import props as props_mod
from .config import load_config, write_csv
from .errors import (
    ConstructionFailed,
    DualgradError,
    EmptyData,
    InvalidConfig,
    InvalidParameter,
    IoError,
    ParseError,
)
from .experiments import (
    EQUIV_HEADER,
    FIG7_HEADER,
    GENERATE_HEADER,
    OPTIMIZE_HEADER,
    collapse_comparison,
    run_equiv,
    run_fig7,
    run_generate,
    run_optimize,
)
from .svgplot import line_chart, read_csv


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualgrad")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("equiv", "fig7", "props", "optimize", "generate", "plot"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--reps", type=int, default=None)
        p.add_argument("--mode", choices=("exact", "kernel"), default=None)
        p.add_argument("--schedule", default=None)
        if name == "plot":
            p.add_argument("csv", nargs="?", default=None)
    return parser


def _overrides(args) -> dict:
    return {
        "seed": args.seed,
        "out": args.out,
        "reps": args.reps,
        "mode": args.mode,
        "schedule": args.schedule,
    }


def _emit(cfg, header, rows) -> None:
    if cfg.out:
        write_csv(cfg.out, header, rows)
    else:
        print(",".join(header))
        for row in rows:
            from .config import format_cell

            print(",".join(format_cell(v) for v in row))


def cmd_equiv(args) -> int:
    cfg = load_config("equiv", args.config, _overrides(args))
    rows = run_equiv(cfg)
    _emit(cfg, EQUIV_HEADER, rows)
    terminal = {}
    for seed, _, step, se, _, _ in rows:
        terminal[seed] = se  # rows are ordered by step within each seed
    worst = max(terminal.values())
    print(f"summary: seeds={cfg.reps} max_terminal_se={worst!r}")
    return 0


def cmd_fig7(args) -> int:
    cfg = load_config("fig7", args.config, _overrides(args))
    report = run_fig7(cfg)
    if cfg.out:
        write_csv(cfg.out, FIG7_HEADER, report.rows)
    for kind in ("good", "bad"):
        print(
            f"{kind}: hit_position={report.hits[kind]} "
            f"effect_d={report.effects[kind]!r} "
            f"terminal_se={report.terminal_se[kind]!r}"
        )
    return 0


def cmd_props(args) -> int:
    cfg = load_config("props", args.config, _overrides(args))
    ok, lines = props_mod.run_all(cfg.inject_fault)
    for line in lines:
        print(line)
    return 0 if ok else 1


def cmd_optimize(args) -> int:
    cfg = load_config("optimize", args.config, _overrides(args))
    rows = run_optimize(cfg)
    _emit(cfg, OPTIMIZE_HEADER, rows)
    if cfg.paired:
        summary = collapse_comparison(cfg, n_seeds=cfg.reps)
        print(
            f"paired: seeds={summary.seeds} "
            f"sim_with={summary.sim_with!r} sim_without={summary.sim_without!r} "
            f"best_with={summary.best_with!r} best_without={summary.best_without!r}"
        )
    return 0


def cmd_generate(args) -> int:
    cfg = load_config("generate", args.config, _overrides(args))
    _emit(cfg, GENERATE_HEADER, run_generate(cfg))
    return 0


def cmd_plot(args) -> int:
    cfg = load_config("plot", args.config, _overrides(args))
    csv_path = args.csv or cfg.out
    if not csv_path:
        raise InvalidConfig("plot needs a CSV path (positional or out=)")
    header, rows = read_csv(csv_path)
    group = cfg.group if cfg.group in header else None
    svg = line_chart(header, rows, cfg.x, cfg.y, group)
    out = cfg.out if cfg.out and cfg.out != csv_path else csv_path + ".svg"
    try:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(svg)
    except OSError as exc:
        raise IoError(f"cannot write {out}: {exc}") from exc
    print(f"wrote {out}")
    return 0


_COMMANDS = {
    "equiv": cmd_equiv,
    "fig7": cmd_fig7,
    "props": cmd_props,
    "optimize": cmd_optimize,
    "generate": cmd_generate,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (InvalidConfig, InvalidParameter, ParseError, EmptyData) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except IoError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3
    except (ConstructionFailed, DualgradError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
