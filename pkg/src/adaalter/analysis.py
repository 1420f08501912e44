"""Numerical verification helpers: summation lemma, convergence bound, traces.

The convergence bound for the lazy adaptive rule, with p = min(eps/rho, 1),
S = sqrt(b0sq + T*eps^2/p^2) and C = d * log(b0sq + T*rho^2):

    B(T) =   2 * S * F_gap / (eta * T)            (initial-gap term)
           + 4 * eta^2 * L^2 * H^2 * S * C / (T * p^2)   (local-drift term, H^2)
           + L * eta * S * C / (n * T * p^2)      (variance term, 1/n)

It upper-bounds the expected average squared gradient norm of the averaged
iterate, (1/T) sum_t ||grad F(x_bar_{t-1})||^2, provided eps > 0,
0 < eta <= 1/L, b0 >= 1, and every stochastic gradient coordinate stays
within [-rho, rho]. The summation lemma underlying it: for a0 > 0 and
nonnegative a_t,

    sum_t a_t / (a0 + sum_{s<=t} a_s)  <=  log(a0 + sum_t a_t) - log(a0).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .cluster import Trace
from .errors import ConfigError

LEMMA_SLACK = 1e-12


def lemma1_check(a0: float, seq) -> dict:
    """Evaluate both sides of the summation lemma on one sequence.

    Returns {"lhs", "rhs", "holds"} with holds = (lhs <= rhs + 1e-12).
    """
    if a0 <= 0.0:
        raise ValueError(f"a0 must be > 0, got {a0}")
    a = np.asarray(seq, dtype=np.float64)
    if a.size == 0:
        raise ValueError("sequence must be nonempty")
    if (a < 0.0).any():
        raise ValueError("sequence entries must be >= 0")
    partial = a0 + np.cumsum(a)
    lhs = float(np.sum(a / partial))
    rhs = math.log(a0 + float(np.sum(a))) - math.log(a0)
    return {"lhs": lhs, "rhs": rhs, "holds": lhs <= rhs + LEMMA_SLACK}


def random_lemma_trials(trials: int = 10_000, seed: int = 0,
                        max_len: int = 100) -> dict:
    """Stress the lemma on random nonnegative sequences.

    Lengths are uniform on 1..max_len, entries are |N(0,1)|, and the base
    term a0 varies over (0.1, 10). Returns counts and the worst margin.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    failures = 0
    worst = -math.inf  # max over trials of lhs - rhs
    for _ in range(trials):
        length = int(rng.integers(1, max_len + 1))
        seq = np.abs(rng.standard_normal(length))
        a0 = float(rng.uniform(0.1, 10.0))
        res = lemma1_check(a0, seq)
        worst = max(worst, res["lhs"] - res["rhs"])
        if not res["holds"]:
            failures += 1
    return {"trials": trials, "failures": failures, "max_violation": worst}


@dataclass(frozen=True)
class BoundInputs:
    """Everything the explicit bound needs, validated against its hypotheses."""

    L: float
    rho: float
    eps: float
    eta: float
    H: int
    n: int
    T: int
    b0sq: float
    d: int
    F_gap: float

    def validate(self) -> None:
        def need(cond: bool, hypothesis: str) -> None:
            if not cond:
                raise ConfigError(f"bound hypothesis violated: {hypothesis}")

        need(self.L > 0.0, f"L must be > 0 (got {self.L})")
        need(self.rho > 0.0, f"rho must be > 0 (got {self.rho})")
        need(self.eps > 0.0, f"eps must be > 0 (got {self.eps})")
        need(self.eta > 0.0, f"eta must be > 0 (got {self.eta})")
        need(self.eta <= 1.0 / self.L,
             f"eta must be <= 1/L (eta={self.eta}, 1/L={1.0 / self.L})")
        need(self.b0sq >= 1.0, f"b0 must be >= 1, i.e. b0sq >= 1 (got b0sq={self.b0sq})")
        need(self.H >= 1, f"H must be >= 1 (got {self.H})")
        need(self.n >= 1, f"n must be >= 1 (got {self.n})")
        need(self.T >= 1, f"T must be >= 1 (got {self.T})")
        need(self.d >= 1, f"d must be >= 1 (got {self.d})")
        need(self.F_gap >= 0.0, f"F_gap must be >= 0 (got {self.F_gap})")


def theorem_bound_terms(b: BoundInputs) -> tuple[float, float, float]:
    """The three terms of B(T), in the order (gap, drift, variance)."""
    b.validate()
    p = min(b.eps / b.rho, 1.0)
    scale = math.sqrt(b.b0sq + b.T * b.eps**2 / p**2)
    log_cap = b.d * math.log(b.b0sq + b.T * b.rho**2)
    term_gap = 2.0 * scale * b.F_gap / (b.eta * b.T)
    term_drift = 4.0 * b.eta**2 * b.L**2 * b.H**2 * scale * log_cap / (b.T * p**2)
    term_var = b.L * b.eta * scale * log_cap / (b.n * b.T * p**2)
    return term_gap, term_drift, term_var


def theorem_bound(b: BoundInputs) -> float:
    """Value of the explicit convergence bound B(T)."""
    return sum(theorem_bound_terms(b))


def avg_sq_grad_norm(trace: Trace) -> float:
    """Mean of the squared-gradient-norm column, the bound's left-hand side."""
    if len(trace) == 0:
        raise ValueError("trace is empty")
    return float(np.mean(trace.grad_norm_sq_avg_model))


def f_gap(trace: Trace, analytic_min: float | None = None,
          final_loss: float | None = None) -> float:
    """Upper bound for F(x_bar_0) - F(x_bar_T) from a trace.

    With a known analytic minimum (pure quadratics) the gap is exact;
    otherwise the minimum loss seen anywhere in the run (including the
    final model, if supplied) stands in for the unknown infimum.
    """
    if len(trace) == 0:
        raise ValueError("trace is empty")
    start = float(trace.loss_avg_model[0])
    if analytic_min is not None:
        return start - analytic_min
    best = float(np.min(trace.loss_avg_model))
    if final_loss is not None:
        best = min(best, final_loss)
    return start - best


def bound_report(inputs: BoundInputs, measured: float) -> dict:
    """JSON-ready comparison of a measured average against the bound."""
    t1, t2, t3 = theorem_bound_terms(inputs)
    total = t1 + t2 + t3
    return {
        "inputs": asdict(inputs),
        "bound_terms": [t1, t2, t3],
        "bound_total": total,
        "measured": measured,
        "dominated": bool(measured <= total),
    }


_BOUND_INT_KEYS = {"H", "n", "T", "d"}
_BOUND_FLOAT_KEYS = {"L", "rho", "eps", "eta", "b0sq", "F_gap"}
_BOUND_KEYS = _BOUND_INT_KEYS | _BOUND_FLOAT_KEYS


def parse_bound_inputs(text: str) -> BoundInputs:
    """Parse a flat key=value description of BoundInputs (same format as configs)."""
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _BOUND_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = int(raw) if key in _BOUND_INT_KEYS else float(raw)
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value for {key}: {raw!r}") from None
    missing = sorted(_BOUND_KEYS - set(values))
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    inputs = BoundInputs(**values)
    inputs.validate()
    return inputs
