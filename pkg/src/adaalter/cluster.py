"""Multi-worker training loop: scheduling, synchronization, ledger, trace.

The simulator walks n workers through T iterations. Each iteration every
worker draws a stochastic gradient at its own local model and applies its
algorithm's step; when the schedule fires, workers are synchronized by
averaging (models only for plain local SGD, models plus squared-gradient
accumulators for the lazy adaptive rule). Every synchronized float is
charged to a communication ledger.

Execution is sequential, but nothing depends on that: each worker's
randomness at iteration t comes from a counter-based stream keyed by
(run seed, worker id, t), and reductions average in fixed worker order,
so any parallel schedule would produce bit-identical results.

The per-iteration trace records the loss and squared gradient norm of the
across-worker average model x_bar BEFORE the iteration's step (row t holds
F(x_bar_{t-1})), the effective learning rate of step t, and the cumulative
communication AFTER the iteration. The average is diagnostic only; it is
never written back outside sync rounds.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .config import EVERY_STEP_ALGOS, RunConfig
from .errors import ConfigError, InvariantViolation
from .optimizers import (
    AccumulatorState,
    StepParams,
    adagrad_step,
    adaalter_local_step,
    local_sgd_step,
    local_step_counter,
    warmup_lr,
)
from .problems import Problem, build_problem
from .vecmath import average, sq_norm

TRACE_COLUMNS = ("t", "loss_avg_model", "grad_norm_sq_avg_model", "eta_t",
                 "comm_floats_cum", "sync_round_flag")


def step_rng(run_seed: int, worker_id: int, t: int) -> np.random.Generator:
    """Counter-based private stream for (worker, iteration).

    Keyed by (run_seed, worker_id) with the iteration index as the block
    counter, so the draw at iteration t is the same whether or not a sync
    happens at t, and identical across runs that differ only in H.
    """
    key = np.array([run_seed, worker_id], dtype=np.uint64)
    counter = np.array([t, 0, 0, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


@dataclass(frozen=True)
class SyncSchedule:
    """When to synchronize: every step, every H-th step, or never."""

    mode: str
    H: int = 1

    def __post_init__(self):
        if self.mode not in ("every-step", "periodic", "never"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if self.H < 1:
            raise ValueError(f"H must be >= 1, got {self.H}")

    @classmethod
    def every_step(cls) -> "SyncSchedule":
        return cls(mode="every-step", H=1)

    @classmethod
    def periodic(cls, H: int) -> "SyncSchedule":
        return cls(mode="periodic", H=H)

    @classmethod
    def never(cls) -> "SyncSchedule":
        return cls(mode="never")

    @property
    def step_H(self) -> int | None:
        """Sync period as the step functions see it (None = never)."""
        return None if self.mode == "never" else self.H

    def is_sync(self, t: int) -> bool:
        if self.mode == "never":
            return False
        return t % self.H == 0

    def local_counter(self, t: int) -> int:
        return local_step_counter(t, self.step_H)


@dataclass
class CommLedger:
    """Counts what each worker would transmit over a real network."""

    d: int
    floats_sent_per_worker: int = 0
    sync_rounds: int = 0

    def charge_sync(self, n_workers: int, vectors_per_worker: int) -> None:
        """Record one sync round; a single worker has no peers and sends nothing."""
        self.sync_rounds += 1
        if n_workers > 1:
            self.floats_sent_per_worker += vectors_per_worker * self.d


def comm_summary(ledger: CommLedger, T: int, algo: str) -> dict:
    """Average per-iteration traffic and its ratio to sync-every-step cost (d/iter)."""
    per_iter = ledger.floats_sent_per_worker / T
    return {
        "algo": algo,
        "floats_sent_per_worker": ledger.floats_sent_per_worker,
        "sync_rounds": ledger.sync_rounds,
        "floats_per_iter_avg": per_iter,
        "reduction_factor": per_iter / ledger.d,
    }


@dataclass
class WorkerState:
    """One worker: local model, optional accumulators, and its stream key."""

    id: int
    x: np.ndarray
    acc: AccumulatorState | None = None
    run_seed: int = 0
    shard_id: int = 0


def synchronize(workers: list[WorkerState], ledger: CommLedger) -> None:
    """Average worker states in place and charge the ledger.

    Models are always averaged. If workers carry accumulators (the lazy
    adaptive rule), the running accumulator A2 is averaged too and becomes
    both the new A2 and the new frozen snapshot B2_sync, which costs a
    second vector of traffic per worker.
    """
    if not workers:
        raise ValueError("synchronize() needs at least one worker")
    x_bar = average([w.x for w in workers])
    vectors = 1
    if workers[0].acc is not None:
        a2_bar = average([w.acc.a2 for w in workers])
        for w in workers:
            w.acc = replace(w.acc, a2=a2_bar.copy(), b2_sync=a2_bar.copy())
            w.acc.check()
        vectors = 2
    for w in workers:
        w.x = x_bar.copy()
    ledger.charge_sync(len(workers), vectors)


@dataclass
class Trace:
    """Per-iteration records; row t describes iteration t (1-based)."""

    t: np.ndarray
    loss_avg_model: np.ndarray
    grad_norm_sq_avg_model: np.ndarray
    eta_t: np.ndarray
    comm_floats_cum: np.ndarray
    sync_round_flag: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRACE_COLUMNS)
            for i in range(len(self.t)):
                writer.writerow([
                    int(self.t[i]),
                    repr(float(self.loss_avg_model[i])),
                    repr(float(self.grad_norm_sq_avg_model[i])),
                    repr(float(self.eta_t[i])),
                    int(self.comm_floats_cum[i]),
                    int(self.sync_round_flag[i]),
                ])


def read_trace(path) -> Trace:
    """Parse a trace CSV written by Trace.write_csv."""
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TRACE_COLUMNS:
            raise ValueError(f"{path}: not a trace file (bad header {header!r})")
        rows = [row for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: trace has no rows")
    cols = list(zip(*rows))
    return Trace(
        t=np.array([int(v) for v in cols[0]], dtype=np.int64),
        loss_avg_model=np.array([float(v) for v in cols[1]]),
        grad_norm_sq_avg_model=np.array([float(v) for v in cols[2]]),
        eta_t=np.array([float(v) for v in cols[3]]),
        comm_floats_cum=np.array([int(v) for v in cols[4]], dtype=np.int64),
        sync_round_flag=np.array([int(v) for v in cols[5]], dtype=np.int64),
    )


@dataclass
class RunResult:
    config: RunConfig
    trace: Trace
    final_model: np.ndarray
    final_loss: float
    final_grad_norm_sq: float
    ledger: CommLedger
    metadata: dict = field(default_factory=dict)

    def summary_dict(self) -> dict:
        return {
            "final_loss": self.final_loss,
            "final_grad_norm_sq": self.final_grad_norm_sq,
            "avg_sq_grad_norm": float(np.mean(self.trace.grad_norm_sq_avg_model)),
            "comm": comm_summary(self.ledger, self.config.T, self.config.algo),
            "metadata": self.metadata,
        }


def schedule_for(cfg: RunConfig) -> SyncSchedule:
    if cfg.algo in EVERY_STEP_ALGOS:
        return SyncSchedule.every_step()
    if cfg.sync_mode == "never":
        return SyncSchedule.never()
    return SyncSchedule.periodic(cfg.H)


def build_problem_for(cfg: RunConfig) -> Problem:
    return build_problem(
        kind=cfg.problem,
        d=cfg.d,
        n_workers=cfg.n,
        problem_seed=cfg.problem_seed,
        n_samples=cfg.n_samples,
        n_clusters=cfg.n_clusters,
        cluster_spread=cfg.cluster_spread,
        sample_noise=cfg.sample_noise,
        alpha=cfg.alpha,
        partition=cfg.partition,
        clip_rho=cfg.clip_rho,
        quad_lmin=cfg.quad_lmin,
        quad_lmax=cfg.quad_lmax,
        sin_beta=cfg.sin_beta,
        x0_scale=cfg.x0_scale,
    )


def run(cfg: RunConfig, problem: Problem | None = None) -> RunResult:
    """Execute one configured run and return its trace and final state.

    A prebuilt problem may be passed to share dataset construction across
    seeds; it must match the config's kind, dimension, and worker count.
    """
    if problem is None:
        problem = build_problem_for(cfg)
    else:
        if (problem.kind, problem.d, problem.n_workers) != (cfg.problem, cfg.d, cfg.n):
            raise ConfigError("supplied problem does not match config (kind, d, n)")

    eta_base = cfg.eta_effective
    if cfg.check_bound_hypotheses and eta_base > 1.0 / problem.smoothness:
        raise ConfigError(
            f"bound hypothesis violated: eta ({eta_base}) must be <= 1/L "
            f"(1/{problem.smoothness} = {1.0 / problem.smoothness})"
        )

    schedule = schedule_for(cfg)
    adaalter = cfg.algo == "local_adaalter"
    workers = [
        WorkerState(
            id=i,
            x=problem.x0.copy(),
            acc=AccumulatorState.initial(cfg.d, cfg.b0sq, cfg.epssq) if adaalter else None,
            run_seed=cfg.seed,
            shard_id=i,
        )
        for i in range(cfg.n)
    ]
    b2_shared = np.full(cfg.d, cfg.b0sq, dtype=np.float64)  # adagrad only
    ledger = CommLedger(d=cfg.d)

    col_t = np.empty(cfg.T, dtype=np.int64)
    col_loss = np.empty(cfg.T)
    col_gn2 = np.empty(cfg.T)
    col_eta = np.empty(cfg.T)
    col_comm = np.empty(cfg.T, dtype=np.int64)
    col_flag = np.empty(cfg.T, dtype=np.int64)

    for t in range(1, cfg.T + 1):
        x_bar = average([w.x for w in workers])
        loss, grad = problem.full_eval(x_bar)
        gn2 = sq_norm(grad)
        if not (math.isfinite(loss) and math.isfinite(gn2)):
            raise InvariantViolation(
                f"non-finite objective at iteration {t} (loss={loss}, |grad|^2={gn2}); "
                "the run diverged"
            )

        if cfg.warm_up_steps > 0:
            eta_t = warmup_lr(t, eta_base, cfg.warm_up_steps)
        else:
            eta_t = eta_base
        synced = schedule.is_sync(t)

        if cfg.algo in EVERY_STEP_ALGOS:
            grads = [
                problem.stochastic_gradient(
                    workers[i].x, i, step_rng(cfg.seed, i, t), cfg.batch_size
                )
                for i in range(cfg.n)
            ]
            g_avg = average(grads)
            if cfg.algo == "adagrad":
                x_new, b2_shared = adagrad_step(
                    workers[0].x, b2_shared, g_avg, eta_t, cfg.epssq
                )
            else:
                x_new = local_sgd_step(workers[0].x, g_avg, eta_t)
            for w in workers:
                w.x = x_new
            ledger.charge_sync(cfg.n, 1)
        elif adaalter:
            sp = StepParams(
                eta=eta_base, t=t, H=schedule.step_H, warm_up_steps=cfg.warm_up_steps
            )
            for i, w in enumerate(workers):
                g = problem.stochastic_gradient(
                    w.x, i, step_rng(cfg.seed, i, t), cfg.batch_size
                )
                w.x, w.acc = adaalter_local_step(w.x, w.acc, g, sp)
            if synced:
                synchronize(workers, ledger)
        else:  # local_sgd
            for i, w in enumerate(workers):
                g = problem.stochastic_gradient(
                    w.x, i, step_rng(cfg.seed, i, t), cfg.batch_size
                )
                w.x = local_sgd_step(w.x, g, eta_t)
            if synced:
                synchronize(workers, ledger)

        idx = t - 1
        col_t[idx] = t
        col_loss[idx] = loss
        col_gn2[idx] = gn2
        col_eta[idx] = eta_t
        col_comm[idx] = ledger.floats_sent_per_worker
        col_flag[idx] = 1 if (synced or cfg.algo in EVERY_STEP_ALGOS) else 0

    final_model = average([w.x for w in workers])
    final_loss, final_grad = problem.full_eval(final_model)
    final_gn2 = sq_norm(final_grad)
    if not (math.isfinite(final_loss) and math.isfinite(final_gn2)):
        raise InvariantViolation("non-finite objective at the final model")

    trace = Trace(col_t, col_loss, col_gn2, col_eta, col_comm, col_flag)
    metadata = {
        "algo": cfg.algo,
        "problem": cfg.problem,
        "d": cfg.d,
        "n": cfg.n,
        "T": cfg.T,
        "H": cfg.H,
        "sync_mode": cfg.sync_mode,
        "seed": cfg.seed,
        "problem_seed": cfg.problem_seed,
        "eta_base": eta_base,
        "smoothness_L": problem.smoothness,
        "clip_rho": cfg.clip_rho,
        # Clipping certifies the coordinate bound but biases the estimator
        # whenever it actually fires.
        "clip_bias_possible": cfg.clip_rho > 0.0,
        "analytic_min": problem.analytic_min(),
    }
    return RunResult(
        config=cfg,
        trace=trace,
        final_model=final_model,
        final_loss=final_loss,
        final_grad_norm_sq=final_gn2,
        ledger=ledger,
        metadata=metadata,
    )
