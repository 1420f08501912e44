"""Synthetic training objectives with analytic gradients and worker shards.

Three finite-sum families, all with a known (or certified upper-bound)
smoothness constant L:

  quadratic                F_k(x) = 1/2 x'Ax - b_k'x, shared PSD A
  sin-perturbed-quadratic  adds beta * sum_j sin(x_j), smooth non-convex
  logistic                 binary logistic loss over Gaussian feature clusters

The global objective is the average of per-worker shard objectives,
F(x) = (1/n) sum_i F_i(x), with F_i the mean over shard i. Shards are
produced by an interpolated non-IID split: alpha=0 is a uniform random
partition, alpha=1 sorts by cluster label and hands each worker a
contiguous block, intermediate alpha mixes the two. A "replicate" mode
gives every worker the full dataset instead (identical shards).

Stochastic gradients sample batch indices with replacement from the
worker's shard, so they are unbiased for the shard gradient; optional
coordinate-wise clipping to [-rho, rho] certifies the bounded-coordinate
assumption needed by the convergence bound, at the price of a small bias
(flagged by the `clip_bias_possible` metadata field).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .vecmath import as_vector, average

PROBLEM_KINDS = ("quadratic", "sin-perturbed-quadratic", "logistic")
PARTITION_MODES = ("skew", "replicate")

# Padding applied to eigenvalue-based smoothness constants so that float
# rounding in the eigensolver cannot leave L marginally below the true value.
_L_SAFETY = 1.0 + 1e-12


@dataclass(frozen=True)
class Shard:
    """Index set owned by one worker, plus the skew it was drawn with."""

    worker_id: int
    indices: np.ndarray
    alpha: float


def partition_non_iid(labels: np.ndarray, n: int, alpha: float, rng: np.random.Generator) -> list[Shard]:
    """Split sample indices into n shards with tunable label skew.

    alpha=0: uniform random split. alpha=1: stable-sort by label, hand out
    contiguous blocks. In between, a fraction alpha of each shard is drawn
    from its sorted block and the rest is dealt uniformly from the leftover
    pool. Shards are disjoint, cover everything, and differ in size by at
    most one.
    """
    N = int(len(labels))
    if N == 0:
        raise ValueError("cannot partition an empty dataset")
    if n < 1:
        raise ValueError(f"worker count must be >= 1, got {n}")
    if n > N:
        raise ValueError(f"worker count {n} exceeds dataset size {N}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"skew alpha must be in [0, 1], got {alpha}")

    base, extra = divmod(N, n)
    sizes = [base + (1 if i < extra else 0) for i in range(n)]

    order = np.argsort(labels, kind="stable")
    blocks = []
    start = 0
    for size in sizes:
        blocks.append(order[start : start + size])
        start += size

    chosen: list[np.ndarray] = []
    leftovers: list[np.ndarray] = []
    for block, size in zip(blocks, sizes):
        m = int(round(alpha * size))
        if m >= size:
            pick = block
            rest = block[:0]
        elif m == 0:
            pick = block[:0]
            rest = block
        else:
            mask = np.zeros(size, dtype=bool)
            mask[rng.choice(size, size=m, replace=False)] = True
            pick = block[mask]
            rest = block[~mask]
        chosen.append(pick)
        leftovers.append(rest)

    pool = np.concatenate(leftovers)
    rng.shuffle(pool)
    shards = []
    offset = 0
    for i, (pick, size) in enumerate(zip(chosen, sizes)):
        need = size - len(pick)
        idx = np.concatenate([pick, pool[offset : offset + need]])
        offset += need
        shards.append(Shard(worker_id=i, indices=np.sort(idx), alpha=alpha))
    return shards


@dataclass(frozen=True)
class Problem:
    """A finite-sum objective split across worker shards.

    samples holds one row per data point (the b_k vector for the quadratic
    families, the feature vector a_k for logistic); labels holds the cluster
    id each sample was generated from. smoothness is a certified upper bound
    on L for the global objective and every shard objective.
    """

    kind: str
    d: int
    n_workers: int
    samples: np.ndarray
    labels: np.ndarray
    shards: list[Shard]
    smoothness: float
    x0: np.ndarray
    clip_rho: float = 0.0
    A: np.ndarray | None = None
    sin_beta: float = 0.0
    targets: np.ndarray | None = None  # logistic class labels in {-1, +1}
    shard_means: list[np.ndarray] = field(default_factory=list)
    global_mean: np.ndarray | None = None  # average of shard_means (quadratic kinds)

    # -- losses ---------------------------------------------------------

    def shard_loss(self, x: np.ndarray, worker_id: int) -> float:
        self._check_worker(worker_id)
        idx = self.shards[worker_id].indices
        if self.kind == "logistic":
            margins = self.samples[idx] @ x * self.targets[idx]
            return float(np.mean(np.logaddexp(0.0, -margins)))
        # quadratic families: mean_k [ 1/2 x'Ax - b_k'x (+ beta sum sin x) ]
        quad = 0.5 * float(x @ (self.A @ x))
        lin = float(self.shard_means[worker_id] @ x)
        loss = quad - lin
        if self.sin_beta != 0.0:
            loss += self.sin_beta * float(np.sum(np.sin(x)))
        return loss

    def full_loss(self, x: np.ndarray) -> float:
        """F(x) = (1/n) sum_i F_i(x), accumulated in worker order."""
        acc = 0.0
        for i in range(self.n_workers):
            acc += self.shard_loss(x, i)
        return acc / self.n_workers

    # -- gradients ------------------------------------------------------

    def _shard_mean(self, worker_id: int):
        return self.shard_means[worker_id] if self.shard_means else None

    def shard_gradient(self, x: np.ndarray, worker_id: int) -> np.ndarray:
        self._check_worker(worker_id)
        idx = self.shards[worker_id].indices
        return self._gradient_over(x, idx, self._shard_mean(worker_id))

    def full_gradient(self, x: np.ndarray) -> np.ndarray:
        return average([self.shard_gradient(x, i) for i in range(self.n_workers)])

    def stochastic_gradient(
        self,
        x: np.ndarray,
        worker_id: int,
        rng: np.random.Generator,
        batch_size: int = 1,
    ) -> np.ndarray:
        """Unbiased estimate of the shard gradient; clipped if clip_rho > 0.

        batch_size=0 means the full shard (exact, consumes no randomness).
        Batches sample indices with replacement so every draw is unbiased.
        """
        self._check_worker(worker_id)
        if batch_size < 0:
            raise ValueError("batch_size must be >= 0")
        shard_idx = self.shards[worker_id].indices
        if batch_size == 0:
            g = self._gradient_over(x, shard_idx, self._shard_mean(worker_id))
        else:
            pick = rng.integers(0, len(shard_idx), size=batch_size)
            g = self._gradient_over(x, shard_idx[pick], None)
        if self.clip_rho > 0.0:
            g = np.clip(g, -self.clip_rho, self.clip_rho)
        return g

    def _gradient_over(self, x, idx, cached_mean):
        if self.kind == "logistic":
            a = self.samples[idx]
            y = self.targets[idx]
            margins = a @ x * y
            # d/dx log(1+exp(-m)) = -y * sigmoid(-m) * a
            w = -y / (1.0 + np.exp(margins))
            return (w @ a) / len(idx)
        mean_b = cached_mean if cached_mean is not None else self.samples[idx].mean(axis=0)
        g = self.A @ x - mean_b
        if self.sin_beta != 0.0:
            g = g + self.sin_beta * np.cos(x)
        return g

    def full_eval(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        """Loss and gradient of F at x in one pass (trace hot path).

        Algebraically identical to (full_loss(x), full_gradient(x)); the
        quadratic families reuse one matvec and the precomputed global
        sample mean, so values can differ from the shard-loop versions by
        float reassociation only (~1e-16 relative).
        """
        if self.kind == "logistic":
            loss = 0.0
            grads = []
            for i in range(self.n_workers):
                loss += self.shard_loss(x, i)
                grads.append(self.shard_gradient(x, i))
            return loss / self.n_workers, average(grads)
        ax = self.A @ x
        gm = self.global_mean
        loss = 0.5 * float(x @ ax) - float(gm @ x)
        grad = ax - gm
        if self.sin_beta != 0.0:
            loss += self.sin_beta * float(np.sum(np.sin(x)))
            grad = grad + self.sin_beta * np.cos(x)
        return loss, grad

    # -- analytic helpers ------------------------------------------------

    def analytic_min(self) -> float | None:
        """Exact minimum of F, known only for the pure quadratic kind."""
        if self.kind != "quadratic":
            return None
        x_star = np.linalg.solve(self.A, self.global_mean)
        return self.full_loss(x_star)

    def _check_worker(self, worker_id: int) -> None:
        if not 0 <= worker_id < self.n_workers:
            raise ValueError(f"unknown worker id {worker_id} (n={self.n_workers})")


def finite_diff_gradient(problem: Problem, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of the full objective, a verification oracle."""
    if h <= 0.0:
        raise ValueError(f"step size h must be > 0, got {h}")
    x = as_vector(x, problem.d)
    g = np.empty_like(x)
    for j in range(problem.d):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (problem.full_loss(x + e) - problem.full_loss(x - e)) / (2.0 * h)
    return g


def build_problem(
    kind: str,
    d: int,
    n_workers: int,
    problem_seed: int,
    n_samples: int = 1024,
    n_clusters: int = 4,
    cluster_spread: float = 2.0,
    sample_noise: float = 0.5,
    alpha: float = 0.0,
    partition: str = "skew",
    clip_rho: float = 0.0,
    quad_lmin: float = 0.5,
    quad_lmax: float = 4.0,
    sin_beta: float = 1.0,
    x0_scale: float = 1.0,
) -> Problem:
    """Generate a seeded synthetic problem and its worker shards.

    All randomness (curvature matrix, cluster centers, samples, partition,
    initial point) flows from problem_seed through independent child
    streams, so the problem is identical across run seeds.
    """
    if kind not in PROBLEM_KINDS:
        raise ValueError(f"unknown problem kind {kind!r} (expected one of {PROBLEM_KINDS})")
    if partition not in PARTITION_MODES:
        raise ValueError(f"unknown partition mode {partition!r} (expected one of {PARTITION_MODES})")
    if d < 1 or n_workers < 1 or n_samples < 1:
        raise ValueError("d, n_workers, and n_samples must all be >= 1")
    if n_clusters < 1 or n_clusters > n_samples:
        raise ValueError("n_clusters must be in [1, n_samples]")
    if clip_rho < 0.0:
        raise ValueError("clip_rho must be >= 0 (0 disables clipping)")
    if not quad_lmax >= quad_lmin > 0.0:
        raise ValueError("need quad_lmax >= quad_lmin > 0")

    seeds = np.random.SeedSequence(problem_seed).spawn(5)
    rng_matrix = np.random.default_rng(seeds[0])
    rng_data = np.random.default_rng(seeds[1])
    rng_partition = np.random.default_rng(seeds[2])
    rng_x0 = np.random.default_rng(seeds[3])

    # Balanced cluster labels in randomized order.
    labels = np.arange(n_samples) % n_clusters
    rng_data.shuffle(labels)
    centers = rng_data.normal(0.0, cluster_spread, size=(n_clusters, d))
    samples = centers[labels] + rng_data.normal(0.0, sample_noise, size=(n_samples, d))

    if partition == "replicate":
        everything = np.arange(n_samples)
        shards = [Shard(worker_id=i, indices=everything.copy(), alpha=alpha) for i in range(n_workers)]
    else:
        shards = partition_non_iid(labels, n_workers, alpha, rng_partition)

    x0 = x0_scale * rng_x0.standard_normal(d)

    A = None
    targets = None
    beta = 0.0
    if kind == "logistic":
        targets = np.where(labels % 2 == 0, 1.0, -1.0)
        # Each shard objective is L_i-smooth with L_i = max_eig(second moment)/4;
        # certify the max over shards and the global objective.
        moms = [samples[s.indices].T @ samples[s.indices] / len(s.indices) for s in shards]
        moms.append(samples.T @ samples / n_samples)
        smoothness = max(float(np.linalg.eigvalsh(m).max()) for m in moms) / 4.0 * _L_SAFETY
        shard_means = []
        global_mean = None
    else:
        q, _ = np.linalg.qr(rng_matrix.standard_normal((d, d)))
        eigs = np.linspace(quad_lmin, quad_lmax, d)
        A = q @ np.diag(eigs) @ q.T
        A = (A + A.T) / 2.0
        smoothness = float(np.linalg.eigvalsh(A).max()) * _L_SAFETY
        if kind == "sin-perturbed-quadratic":
            beta = float(sin_beta)
            if beta < 0.0:
                raise ValueError("sin_beta must be >= 0")
            smoothness += beta
        shard_means = [samples[s.indices].mean(axis=0) for s in shards]
        global_mean = average(shard_means)

    return Problem(
        kind=kind,
        d=d,
        n_workers=n_workers,
        samples=samples,
        labels=labels,
        shards=shards,
        smoothness=smoothness,
        x0=x0,
        clip_rho=float(clip_rho),
        A=A,
        sin_beta=beta,
        targets=targets,
        shard_means=shard_means,
        global_mean=global_mean,
    )


def dump_shards_csv(problem: Problem, path) -> None:
    """Debug dump: one row per (worker, sample) with features and label."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["worker_id", "sample_index"]
            + [f"feature_{j}" for j in range(problem.d)]
            + ["label"]
        )
        for shard in problem.shards:
            for idx in shard.indices:
                row = [shard.worker_id, int(idx)]
                row += [repr(float(v)) for v in problem.samples[idx]]
                row.append(int(problem.labels[idx]))
                writer.writerow(row)
