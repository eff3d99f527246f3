"""Command line entry point: ``lacuna <subcommand> [flags]``.

Experiment subcommands print (or write with ``--out``) a report and exit
with status 0 exactly when every pass flag in it is true.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys

import numpy as np

from . import experiments as ex
from .decomposition import size, size_decomposition
from .errors import LacunaError
from .model import (TILE_SUM_OFFSET, greedy_choice, lacunary_bitiles, maximal_operator, model_sum,
                    write_choice_csv)
from .norms import read_layercake_csv
from .tiles import bitiles_to_json, forest_to_json, is_convex
from .walsh import GridSignal, partial_sum, read_signal_csv, walsh_coefficients, write_signal_csv

EXPERIMENTS = {
    "weak-lp": ex.run_weak_lp_sweep,
    "estimate-ww": ex.run_estimate_ww,
    "exp-tail": ex.run_exp_tail,
    "embedding": ex.run_embedding,
    "strong-lp": ex.run_strong_lp,
}

_GLOBAL_KEYS = ("resolution", "seq", "seed", "trials")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    p.add_argument("--resolution", type=int, help="grid resolution N (2^N cells)")
    p.add_argument("--seq", help='lacunary sequence: "1,2,4", "pow2:J", "ones:J" or "alt:J"')
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--trials", type=int, help="functions per family")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=("json", "csv"), help="report format")
    p.add_argument("--config", help="JSON file with experiment config keys")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="lacuna", parents=[common],
                                     description="Lacunary Walsh-Carleson experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("walsh", parents=[common], help="Walsh coefficients or a partial sum of a signal")
    p.add_argument("--input", help="signal CSV (index,re,im); default: random signs")
    p.add_argument("--partial", type=int, help="emit sum_{k<=n} <f,W_k> W_k instead of coefficients")

    p = sub.add_parser("tiles", parents=[common], help="bitiles whose upper half meets the sequence")

    p = sub.add_parser("model-sum", parents=[common], help="model sum with the maximizing choice")
    p.add_argument("--input", help="signal CSV; default: random signs")
    p.add_argument("--choice-out", help="write the choice function CSV here")

    p = sub.add_parser("decompose", parents=[common], help="size decomposition of the lacunary bitiles")
    p.add_argument("--input", help="signal CSV; default: random signs")
    p.add_argument("--forest-out", help="write the forests as JSON here")

    for name in EXPERIMENTS:
        p = sub.add_parser(name, parents=[common], help=f"run the {name} campaign")
        if name == "embedding":
            p.add_argument("--cake", action="append", help="layer cake CSV (logmag,logmeasure); repeatable")
    return parser


def _config(args) -> ex.ExperimentConfig:
    cfg = ex.ExperimentConfig.from_file(args.config) if getattr(args, "config", None) else ex.ExperimentConfig()
    return cfg.replace(**{k: getattr(args, k, None) for k in _GLOBAL_KEYS})


def _signal(args, cfg: ex.ExperimentConfig) -> GridSignal:
    if getattr(args, "input", None):
        return read_signal_csv(args.input)
    rng = np.random.default_rng(cfg.seed)
    return GridSignal(cfg.resolution, rng.choice([-1.0, 1.0], size=1 << cfg.resolution))


def _write(text: str, args) -> None:
    out = getattr(args, "out", None)
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _signal_text(f: GridSignal, args) -> str:
    out = getattr(args, "out", None)
    if out:
        write_signal_csv(out, f)
        return ""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "re", "im"])
    for i, v in enumerate(np.asarray(f.values, dtype=complex)):
        w.writerow([i, format(v.real, ".17g"), format(v.imag, ".17g")])
    return buf.getvalue()


def _cmd_walsh(args, cfg) -> int:
    f = _signal(args, cfg)
    if getattr(args, "partial", None) is not None:
        result = partial_sum(f, args.partial)
    else:
        result = GridSignal(f.resolution, walsh_coefficients(f))
    sys.stdout.write(_signal_text(result, args))
    return 0


def _cmd_tiles(args, cfg) -> int:
    S = lacunary_bitiles(cfg.resolution, cfg.sequence(), check_convex=False)
    text = bitiles_to_json(S)
    _write(text + "\n", args)
    print(f"{len(S)} bitiles, convex: {is_convex(S, cfg.resolution)}", file=sys.stderr)
    return 0


def _cmd_model_sum(args, cfg) -> int:
    f = _signal(args, cfg)
    seq = cfg.sequence()
    S = lacunary_bitiles(f.resolution, seq, check_convex=False)
    Nf = greedy_choice(f, seq)
    C = model_sum(S, f, Nf)
    W = maximal_operator(f, seq, offset=TILE_SUM_OFFSET)
    err = float(np.abs(np.abs(np.asarray(C.values)) - np.asarray(W.values)).max())
    if getattr(args, "choice_out", None):
        write_choice_csv(args.choice_out, Nf)
    sys.stdout.write(_signal_text(C, args))
    ok = err < 1e-10
    print(f"max | |C f| - W* f | = {err:.3e} ({'pass' if ok else 'FAIL'})", file=sys.stderr)
    return 0 if ok else 1


def _cmd_decompose(args, cfg) -> int:
    f = _signal(args, cfg)
    S = lacunary_bitiles(f.resolution, cfg.sequence())
    # size <= sup|f| exactly; the max only absorbs rounding
    A = max(float(np.abs(np.asarray(f.values)).max()), size(S, f))
    dec = size_decomposition(S, f, A)
    rows = dec.rows()
    report = {"experiment": "decompose", "config": cfg.as_dict(), "rows": rows,
              "constants": {"A": dec.A, "C_dec": dec.counting_constant(),
                            "residual_count": len(dec.residual)},
              "pass": all(r["size_bound_ok"] for r in rows)}
    if getattr(args, "forest_out", None):
        payload = [{"sigma": sigma, "forest": json.loads(forest_to_json(F))} for sigma, F in dec.levels]
        with open(args.forest_out, "w") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)
            fh.write("\n")
    _write(ex.emit_report(report, getattr(args, "format", "json")), args)
    return 0 if report["pass"] else 1


def _cmd_experiment(args, cfg) -> int:
    run = EXPERIMENTS[args.command]
    if args.command == "embedding" and getattr(args, "cake", None):
        report = run(cfg, cakes=[(path, read_layercake_csv(path)) for path in args.cake])
    else:
        report = run(cfg)
    text = ex.emit_report(report, getattr(args, "format", "json"))
    _write(text, args)
    return 0 if report["pass"] else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        handler = {"walsh": _cmd_walsh, "tiles": _cmd_tiles, "model-sum": _cmd_model_sum,
                   "decompose": _cmd_decompose}.get(args.command, _cmd_experiment)
        return handler(args, cfg)
    except (LacunaError, OSError) as exc:
        print(f"lacuna {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
