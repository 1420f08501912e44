"""Run orchestration: saving run artifacts, H sweeps, baseline comparisons.

Every saved run gets its own directory `run_<confighash>_s<seed>/` under the
config's out_dir, holding the canonical config snapshot, the trace CSV, and
a JSON summary - enough to re-run the cell bit-identically.
"""

from __future__ import annotations

import json
import statistics
from pathlib import Path

import numpy as np

from .analysis import avg_sq_grad_norm
from .cluster import RunResult, build_problem_for, run
from .config import RunConfig, config_hash, emit_config
from .errors import ConfigError
from .problems import dump_shards_csv

SWEEP_COLUMNS = ("H", "seeds", "runs_ok", "final_loss_mean", "final_loss_std",
                 "avg_sq_grad_norm_mean", "comm_floats_per_worker", "status")


def run_dir_for(cfg: RunConfig) -> Path:
    return Path(cfg.out_dir) / f"run_{config_hash(cfg)}_s{cfg.seed}"


def run_and_save(cfg: RunConfig, problem=None) -> tuple[RunResult, Path]:
    """Execute a run and persist config snapshot, trace, and summary."""
    result = run(cfg, problem=problem)
    out = run_dir_for(cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(emit_config(cfg))
    result.trace.write_csv(out / f"trace_{config_hash(cfg)}_s{cfg.seed}.csv")
    with open(out / "summary.json", "w") as fh:
        json.dump(result.summary_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if cfg.dump_shards:
        if problem is None:
            problem = build_problem_for(cfg)
        dump_shards_csv(problem, out / "shards.csv")
    return result, out


def run_sweep(base: RunConfig, H_values, seeds, save: bool = True) -> list[dict]:
    """One run per (H, seed); per-H summary rows. Failed cells are recorded,
    not fatal, so a long sweep survives a diverging corner."""
    H_values = list(H_values)
    seeds = list(seeds)
    if not H_values or not seeds:
        raise ConfigError("sweep needs at least one H value and one seed")
    if base.algo in ("sgd", "adagrad") and H_values != [1]:
        raise ConfigError(f"algo {base.algo!r} cannot sweep H (it syncs every step)")

    problem = build_problem_for(base)
    rows = []
    for H in H_values:
        finals, avgs, comms = [], [], []
        errors = []
        for seed in seeds:
            cfg = base.replace(H=H, seed=seed)
            try:
                if save:
                    result, _ = run_and_save(cfg, problem=problem)
                else:
                    result = run(cfg, problem=problem)
            except Exception as exc:  # keep sweeping, mark the cell
                errors.append(f"seed {seed}: {exc}")
                continue
            finals.append(result.final_loss)
            avgs.append(avg_sq_grad_norm(result.trace))
            comms.append(result.ledger.floats_sent_per_worker)
        row = {
            "H": H,
            "seeds": len(seeds),
            "runs_ok": len(finals),
            "final_loss_mean": statistics.fmean(finals) if finals else float("nan"),
            "final_loss_std": statistics.pstdev(finals) if finals else float("nan"),
            "avg_sq_grad_norm_mean": statistics.fmean(avgs) if avgs else float("nan"),
            "comm_floats_per_worker": comms[0] if comms else -1,
            "status": "ok" if not errors else "failed: " + "; ".join(errors),
        }
        rows.append(row)
    return rows


def write_sweep_csv(rows: list[dict], path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(SWEEP_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_render(row[c]) for c in SWEEP_COLUMNS) + "\n")


def _render(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value).replace(",", ";")


def format_sweep_table(rows: list[dict]) -> str:
    header = f"{'H':>6} {'ok':>5} {'final loss (mean±std)':>28} {'avg |grad|^2':>14} {'floats/worker':>14}  status"
    lines = [header, "-" * len(header)]
    for r in rows:
        loss = f"{r['final_loss_mean']:.6g} ± {r['final_loss_std']:.3g}"
        lines.append(
            f"{r['H']:>6} {r['runs_ok']:>5} {loss:>28} "
            f"{r['avg_sq_grad_norm_mean']:>14.6g} {r['comm_floats_per_worker']:>14}  {r['status']}"
        )
    return "\n".join(lines)


def _label(cfg: RunConfig) -> str:
    if cfg.algo in ("sgd", "adagrad"):
        return cfg.algo
    if cfg.sync_mode == "never":
        return f"{cfg.algo}_Hinf"
    return f"{cfg.algo}_H{cfg.H}"


def compare_baselines(configs: list[RunConfig], seeds=None) -> dict:
    """Aligned loss-vs-iteration and loss-vs-communication curves.

    All configs must share the problem kind, dimension, horizon, and data
    seed so that curves are comparable. Loss curves are seed-averaged; the
    communication column is deterministic per config.
    """
    if not configs:
        raise ConfigError("compare needs at least one config")
    head = configs[0]
    for cfg in configs[1:]:
        same = (cfg.problem == head.problem and cfg.d == head.d
                and cfg.T == head.T and cfg.problem_seed == head.problem_seed)
        if not same:
            raise ConfigError(
                "compare configs must share problem, d, T, and problem_seed"
            )

    labels = []
    for cfg in configs:
        base = _label(cfg)
        label = base
        k = 2
        while label in labels:
            label = f"{base}_{k}"
            k += 1
        labels.append(label)

    curves = {}
    comm = {}
    final = {}
    for cfg, label in zip(configs, labels):
        seed_list = list(seeds) if seeds is not None else [cfg.seed]
        problem = build_problem_for(cfg)
        losses = []
        finals = []
        last = None
        for seed in seed_list:
            result = run(cfg.replace(seed=seed), problem=problem)
            losses.append(result.trace.loss_avg_model)
            finals.append(result.final_loss)
            last = result
        curves[label] = np.mean(np.stack(losses), axis=0)
        comm[label] = last.trace.comm_floats_cum
        final[label] = {
            "final_loss_mean": statistics.fmean(finals),
            "comm_floats_total": int(last.ledger.floats_sent_per_worker),
        }
    return {
        "labels": labels,
        "t": np.arange(1, head.T + 1),
        "loss": curves,
        "comm": comm,
        "final": final,
    }


def write_compare_csv(report: dict, path) -> None:
    labels = report["labels"]
    with open(path, "w") as fh:
        cols = ["t"]
        for label in labels:
            cols += [f"loss_{label}", f"comm_{label}"]
        fh.write(",".join(cols) + "\n")
        T = len(report["t"])
        for i in range(T):
            row = [str(int(report["t"][i]))]
            for label in labels:
                row.append(repr(float(report["loss"][label][i])))
                row.append(str(int(report["comm"][label][i])))
            fh.write(",".join(row) + "\n")
