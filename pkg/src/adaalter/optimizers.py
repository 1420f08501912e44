"""Single-step update rules for the three optimizers, plus learning-rate helpers.

Everything here is a pure state-in/state-out function with no knowledge of
scheduling. The cluster simulator decides when to synchronize; these functions
only need the iteration index and sync period to size the denominator
placeholder.

The lazily synchronized adaptive rule ("adaalter" steps) differs from eager
AdaGrad in one place: the step at iteration t divides by

    sqrt(B2_sync + t' * eps^2)

where B2_sync is the squared-gradient accumulator frozen at the last
synchronization and t' counts local steps since then. The true contributions
of the last t' squared gradients are not in the denominator yet; each is
stood in for by eps^2. They are folded in (exactly, via averaging of the
running accumulator A2) only at the next sync. Eager AdaGrad instead adds
G*G to the accumulator before every step. Even at H=1 the two rules differ:
the lazy step at t sees the accumulator through t-1 plus one eps^2
placeholder, the eager step at t sees the accumulator through t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .vecmath import hadamard, inv_sqrt_shifted


@dataclass(frozen=True)
class AccumulatorState:
    """Per-worker squared-gradient accumulators for the lazy adaptive rule.

    a2 is the running accumulator (last synchronized value plus every G*G
    added since). Between syncs the algorithm's B2 state is identical to a2,
    so one buffer plus the frozen snapshot b2_sync suffices; b2 is exposed
    as an alias for a2.
    """

    a2: np.ndarray
    b2_sync: np.ndarray
    b0sq: float
    epssq: float

    @property
    def b2(self) -> np.ndarray:
        return self.a2

    @classmethod
    def initial(cls, d: int, b0sq: float, epssq: float) -> "AccumulatorState":
        if b0sq < 0.0:
            raise ValueError(f"b0sq must be >= 0, got {b0sq}")
        if epssq < 0.0:
            raise ValueError(f"epssq must be >= 0, got {epssq}")
        return cls(
            a2=np.full(d, b0sq, dtype=np.float64),
            b2_sync=np.full(d, b0sq, dtype=np.float64),
            b0sq=float(b0sq),
            epssq=float(epssq),
        )

    def check(self) -> None:
        """Validate accumulator invariants; cheap enough for sync boundaries."""
        if self.a2.shape != self.b2_sync.shape:
            raise ValueError("a2 and b2_sync dimension mismatch")
        if not (self.a2 >= self.b2_sync - 1e-9).all():
            raise FloatingPointError("running accumulator fell below its sync snapshot")
        if not (self.b2_sync >= self.b0sq - 1e-9).all():
            raise FloatingPointError("sync snapshot fell below its initial value")


@dataclass(frozen=True)
class StepParams:
    """Learning-rate and schedule inputs for one step.

    H=None means the run never synchronizes (the H=infinity baseline); the
    local step counter then grows without bound. warm_up_steps=0 disables
    warm-up. eta_base records the pre-scaling learning rate for provenance
    and defaults to eta.
    """

    eta: float
    t: int
    H: int | None = 1
    warm_up_steps: int = 0
    eta_base: float | None = None

    def __post_init__(self):
        if self.eta <= 0.0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if self.t < 1:
            raise ValueError(f"iteration index must be >= 1, got {self.t}")
        if self.H is not None and self.H < 1:
            raise ValueError(f"H must be >= 1, got {self.H}")
        if self.warm_up_steps < 0:
            raise ValueError("warm_up_steps must be >= 0")
        if self.eta_base is None:
            object.__setattr__(self, "eta_base", self.eta)

    def effective_eta(self) -> float:
        if self.warm_up_steps > 0:
            return warmup_lr(self.t, self.eta, self.warm_up_steps)
        return self.eta


def local_step_counter(t: int, H: int | None) -> int:
    """Position of iteration t within its sync period: t' = (t-1) % H + 1.

    t' ranges over 1..H and hits H exactly when t % H == 0. H=None
    (never synchronize) makes every step local, so t' = t.
    """
    if t < 1:
        raise ValueError(f"iteration index must be >= 1, got {t}")
    if H is None:
        return t
    if H < 1:
        raise ValueError(f"H must be >= 1, got {H}")
    return (t - 1) % H + 1


def adaalter_local_step(
    x: np.ndarray,
    acc: AccumulatorState,
    grad: np.ndarray,
    sp: StepParams,
) -> tuple[np.ndarray, AccumulatorState]:
    """One lazy-denominator adaptive step.

        y    = x - eta_t * grad / sqrt(b2_sync + t' * eps^2)
        a2  += grad * grad          (b2_sync is read, never written)

    with t' = local_step_counter(sp.t, sp.H). Returns (y, new accumulator).
    """
    if x.shape != grad.shape:
        raise ValueError(f"dimension mismatch: x {x.shape} vs grad {grad.shape}")
    tprime = local_step_counter(sp.t, sp.H)
    inv_denom = inv_sqrt_shifted(acc.b2_sync, tprime * acc.epssq)
    y = x - sp.effective_eta() * grad * inv_denom
    return y, replace(acc, a2=acc.a2 + hadamard(grad, grad))


def adagrad_step(
    x: np.ndarray,
    b2: np.ndarray,
    grad_avg: np.ndarray,
    eta: float,
    epssq: float,
) -> tuple[np.ndarray, np.ndarray]:
    """One eager adaptive step on the already-averaged gradient.

    The accumulator is updated before the step:

        b2' = b2 + grad_avg * grad_avg
        x'  = x - eta * grad_avg / sqrt(b2' + eps^2)
    """
    if x.shape != grad_avg.shape:
        raise ValueError(f"dimension mismatch: x {x.shape} vs grad {grad_avg.shape}")
    b2_new = b2 + hadamard(grad_avg, grad_avg)
    x_new = x - eta * grad_avg * inv_sqrt_shifted(b2_new, epssq)
    return x_new, b2_new


def local_sgd_step(x: np.ndarray, grad: np.ndarray, eta: float) -> np.ndarray:
    """Plain gradient step y = x - eta * grad."""
    if x.shape != grad.shape:
        raise ValueError(f"dimension mismatch: x {x.shape} vs grad {grad.shape}")
    return x - eta * grad


def warmup_lr(t: int, eta: float, warm_up_steps: int) -> float:
    """Linearly ramped learning rate eta * min(1, t / warm_up_steps)."""
    if warm_up_steps < 1:
        raise ValueError(f"warm_up_steps must be >= 1, got {warm_up_steps}")
    if t < 0:
        raise ValueError(f"iteration index must be >= 0, got {t}")
    return eta * min(1.0, t / warm_up_steps)


def scale_lr(eta_base: float, k: float, mode: str) -> float:
    """Rescale a baseline learning rate for a k-fold larger effective batch.

    mode "linear" multiplies by k, mode "sqrt" by sqrt(k).
    """
    if k <= 0.0:
        raise ValueError(f"batch multiplier k must be > 0, got {k}")
    if mode == "linear":
        return eta_base * k
    if mode == "sqrt":
        return eta_base * math.sqrt(k)
    raise ValueError(f"unknown lr scale mode {mode!r} (expected 'linear' or 'sqrt')")
