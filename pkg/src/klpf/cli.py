"""Command-line entry point: ``klpf <command> [options]``."""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import sys
from dataclasses import replace

import numpy as np

from .experiments import (
    PARTICLE_KINDS,
    FilterSpec,
    dump_config,
    emit_csv,
    load_config,
    preset,
    run_experiment,
)
from .filters import run_filter
from .kalman import lambda_scheme_of, riccati_sequence
from .model import RngStream, simulate


class UsageError(ValueError):
    pass


def _add_common(p, particles=True):
    p.add_argument("--config", metavar="PATH", help="TOML experiment file")
    p.add_argument("--preset", metavar="NAME", help="example1 or example2")
    p.add_argument("--variant", default="soi", choices=("soi", "two_bit"))
    p.add_argument("--horizon", type=int, metavar="T")
    p.add_argument("--seed", type=int, metavar="S")
    p.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
    if particles:
        p.add_argument("--filters", metavar="KIND[,KIND...]",
                       help="replace the filter list, e.g. klpf,soi_kf")
        p.add_argument("--particles", metavar="N[,N...]",
                       help="particle counts, parallel to the filter list")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="klpf", description="Filtering with quantized innovations.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="dump one simulated trajectory as CSV")
    _add_common(p, particles=False)

    p = sub.add_parser("filter", help="run the filters once and dump per-step estimates")
    _add_common(p)

    p = sub.add_parser("riccati", help="full and modified Riccati trace curves")
    _add_common(p, particles=False)

    p = sub.add_parser("compare", help="Monte-Carlo MSE experiment")
    _add_common(p)
    p.add_argument("--trials", type=int, metavar="M")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--timing", action="store_true", help="record wall-clock runtime in the CSV")
    p.add_argument("--quiet", action="store_true", help="skip the summary table on stderr")

    p = sub.add_parser("preset", help="write a preset as a TOML config")
    p.add_argument("--preset", metavar="NAME", required=True)
    p.add_argument("--variant", default="soi", choices=("soi", "two_bit"))
    p.add_argument("--out", metavar="PATH")
    return parser


def _config(args):
    if args.config and args.preset:
        raise UsageError("give either --config or --preset, not both")
    if args.config:
        cfg = load_config(args.config)
    elif args.preset:
        cfg = preset(args.preset, args.variant)
    else:
        raise UsageError("one of --config or --preset is required")
    changes = {}
    for name in ("horizon", "seed", "trials"):
        value = getattr(args, name, None)
        if value is not None:
            changes[name] = value
    if getattr(args, "out", None):
        changes["out"] = args.out
    filters = cfg.filters
    kinds = [f.kind for f in filters]
    counts = [f.particles for f in filters]
    if getattr(args, "filters", None):
        kinds = [k.strip() for k in args.filters.split(",")]
        counts = [None] * len(kinds)
    if getattr(args, "particles", None):
        given = [int(c) for c in args.particles.split(",")]
        slots = [i for i, k in enumerate(kinds) if k in PARTICLE_KINDS]
        if len(given) == len(kinds):
            slots = [i for i in range(len(kinds)) if kinds[i] in PARTICLE_KINDS]
            given = [given[i] for i in slots]
        elif len(given) != len(slots):
            raise UsageError(f"--particles has {len(given)} entries for {len(kinds)} filters")
        for i, c in zip(slots, given):
            counts[i] = c
    missing = [k for k, c in zip(kinds, counts) if k in PARTICLE_KINDS and c is None]
    if missing:
        raise UsageError(f"no particle count for {', '.join(missing)}; use --particles")
    filters = [FilterSpec(k, c if k in PARTICLE_KINDS else None) for k, c in zip(kinds, counts)]
    changes["filters"] = filters
    return replace(cfg, **changes)


def _open_out(path):
    return open(path, "w", newline="") if path else contextlib.nullcontext(sys.stdout)


def _fmt(v):
    return f"{v:.12g}"


def cmd_simulate(args):
    cfg = _config(args)
    traj = simulate(cfg.model, cfg.horizon, RngStream(cfg.seed, (0,)).child(0))
    d = cfg.model.dim
    with _open_out(cfg.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", *[f"x{i + 1}" for i in range(d)], "y"])
        for n, (x, y) in enumerate(zip(traj.states, traj.measurements)):
            w.writerow([n, *map(_fmt, x), _fmt(y)])


def cmd_filter(args):
    cfg = _config(args)
    stream = RngStream(cfg.seed, (0,))
    traj = simulate(cfg.model, cfg.horizon, stream.child(0))
    d = cfg.model.dim
    with _open_out(cfg.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["filter", "n", "label", "lower", "upper", "ess",
                    *[f"xhat{i + 1}" for i in range(d)], *[f"x{i + 1}" for i in range(d)]])
        for j, spec in enumerate(cfg.filters):
            opts = {}
            if spec.particles is not None:
                opts = {"innovation_scale": cfg.innovation_scale, "resampling": cfg.resampling}
            out = run_filter(spec.kind, cfg.model, cfg.scheme, traj, spec.particles,
                             stream.child(1, j), **opts)
            for n in range(cfg.horizon + 1):
                w.writerow([spec.name, n, out.labels[n], _fmt(out.lower[n]), _fmt(out.upper[n]),
                            _fmt(out.ess[n]), *map(_fmt, out.estimates[n]),
                            *map(_fmt, traj.states[n])])


def cmd_riccati(args):
    cfg = _config(args)
    lam = lambda_scheme_of(cfg.scheme).lam
    pf, ff = riccati_sequence(cfg.model, cfg.horizon, 1.0)
    pm, fm = riccati_sequence(cfg.model, cfg.horizon, lam)
    with _open_out(cfg.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "lambda", "full_predicted", "full_filtered",
                    "modified_predicted", "modified_filtered"])
        for n in range(cfg.horizon + 1):
            w.writerow([n, _fmt(lam), *(_fmt(np.trace(M[n])) for M in (pf, ff, pm, fm))])


def cmd_compare(args):
    cfg = _config(args)
    report = run_experiment(cfg, threads=args.threads)
    emit_csv(report, cfg.out or sys.stdout, timing=args.timing)
    if not args.quiet:
        print(report.summary(), file=sys.stderr)


def cmd_preset(args):
    text = dump_config(preset(args.preset, args.variant), args.out)
    if not args.out:
        sys.stdout.write(text)


COMMANDS = {
    "simulate": cmd_simulate,
    "filter": cmd_filter,
    "riccati": cmd_riccati,
    "compare": cmd_compare,
    "preset": cmd_preset,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - reported as a machine-readable line
        print(json.dumps({"error": type(exc).__name__, "message": str(exc),
                          "command": args.command}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
