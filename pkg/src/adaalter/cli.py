"""Command-line interface.

Verbs:
  run <config>                          one run, artifacts to the run directory
  sweep <config> --H 1,4,8 --seeds 0,1  grid of runs, per-H summary table
  compare <config> [<config>...]        aligned loss/comm curves across configs
  verify-bound <trace>... <bounds>      compare measured average to the bound
  check-lemma1 [--trials N]             random stress test of the summation lemma

Exit codes: 0 success, 2 configuration/usage error, 3 runtime invariant
violation.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
from pathlib import Path

from .analysis import avg_sq_grad_norm, bound_report, parse_bound_inputs, random_lemma_trials
from .cluster import comm_summary, read_trace
from .config import load_config
from .errors import ConfigError, InvariantViolation
from .experiments import (
    compare_baselines,
    format_sweep_table,
    run_and_save,
    run_sweep,
    write_compare_csv,
    write_sweep_csv,
)


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adaalter",
        description="Deterministic multi-worker simulator for local SGD with "
                    "lazily synchronized adaptive denominators.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="execute one configured run")
    p_run.add_argument("config", help="path to a key=value config file")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--out-dir", default=None, help="override the output directory")

    p_sweep = sub.add_parser("sweep", help="run a grid over H values and seeds")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--H", type=_int_list, required=True, metavar="1,4,8")
    p_sweep.add_argument("--seeds", type=_int_list, required=True, metavar="0,1,2")
    p_sweep.add_argument("--out-dir", default=None)

    p_cmp = sub.add_parser("compare", help="align loss/comm curves of several configs")
    p_cmp.add_argument("configs", nargs="+", metavar="config")
    p_cmp.add_argument("--seeds", type=_int_list, default=None)
    p_cmp.add_argument("--out", default="compare.csv", help="output CSV path")

    p_vb = sub.add_parser("verify-bound", help="check traces against the convergence bound")
    p_vb.add_argument("traces", nargs="+", metavar="trace.csv",
                      help="trace file(s); the last positional is the bound-inputs file")
    p_vb.add_argument("bound_inputs", metavar="bounds.cfg")
    p_vb.add_argument("--out", default=None, help="report JSON path (default: alongside first trace)")

    p_lem = sub.add_parser("check-lemma1", help="random stress test of the summation lemma")
    p_lem.add_argument("--trials", type=int, default=10_000)
    p_lem.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.out_dir is not None:
        cfg = cfg.replace(out_dir=args.out_dir)
    result, out_dir = run_and_save(cfg)
    comm = comm_summary(result.ledger, cfg.T, cfg.algo)
    print(f"run dir: {out_dir}")
    print(f"final loss F(x_bar_T): {result.final_loss:.10g}")
    print(f"final |grad F|^2:      {result.final_grad_norm_sq:.10g}")
    print(f"avg |grad F|^2:        {avg_sq_grad_norm(result.trace):.10g}")
    print(f"floats sent/worker:    {comm['floats_sent_per_worker']} "
          f"({comm['floats_per_iter_avg']:.4g}/iter, "
          f"{comm['reduction_factor']:.4g}x of sync-every-step)")
    return 0


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.out_dir is not None:
        cfg = cfg.replace(out_dir=args.out_dir)
    rows = run_sweep(cfg, args.H, args.seeds, save=True)
    out_csv = Path(cfg.out_dir) / "sweep_summary.csv"
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(rows, out_csv)
    print(format_sweep_table(rows))
    print(f"\nsummary CSV: {out_csv}")
    if any(row["status"] != "ok" for row in rows):
        print("warning: some cells failed; see status column", file=sys.stderr)
    return 0


def _cmd_compare(args) -> int:
    configs = [load_config(path) for path in args.configs]
    report = compare_baselines(configs, seeds=args.seeds)
    write_compare_csv(report, args.out)
    for label in report["labels"]:
        info = report["final"][label]
        print(f"{label}: final loss {info['final_loss_mean']:.10g}, "
              f"floats/worker {info['comm_floats_total']}")
    print(f"curves CSV: {args.out}")
    return 0


def _cmd_verify_bound(args) -> int:
    trace_paths = list(args.traces)
    inputs_path = args.bound_inputs
    with open(inputs_path) as fh:
        inputs = parse_bound_inputs(fh.read())
    traces = [read_trace(p) for p in trace_paths]
    measured = statistics.fmean(avg_sq_grad_norm(tr) for tr in traces)
    report = bound_report(inputs, measured)
    out = args.out or str(Path(trace_paths[0]).with_suffix(".bound.json"))
    with open(out, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    t1, t2, t3 = report["bound_terms"]
    print(f"bound terms: gap {t1:.6g}, drift {t2:.6g}, variance {t3:.6g}")
    print(f"bound total: {report['bound_total']:.6g}")
    print(f"measured avg |grad F|^2 over {len(traces)} trace(s): {measured:.6g}")
    print(f"dominated: {report['dominated']}")
    print(f"report JSON: {out}")
    return 0


def _cmd_check_lemma1(args) -> int:
    summary = random_lemma_trials(trials=args.trials, seed=args.seed)
    print(f"trials: {summary['trials']}, failures: {summary['failures']}, "
          f"max lhs-rhs: {summary['max_violation']:.3e}")
    if summary["failures"] > 0:
        raise InvariantViolation(
            f"summation lemma violated in {summary['failures']} of "
            f"{summary['trials']} trials"
        )
    print("lemma holds on all trials")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "compare": _cmd_compare,
    "verify-bound": _cmd_verify_bound,
    "check-lemma1": _cmd_check_lemma1,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.verb](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
