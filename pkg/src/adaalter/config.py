"""Flat key=value run configuration: schema, parser, emitter, validation.

The format is line-oriented: one `key=value` per line, '#' starts a comment,
blank lines are ignored. Unknown or duplicate keys are hard errors so typos
cannot silently fall back to defaults. emit_config() writes a canonical form
that re-parses to an equal RunConfig.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass

from .errors import ConfigError
from .optimizers import scale_lr
from .problems import PARTITION_MODES, PROBLEM_KINDS

ALGOS = ("sgd", "adagrad", "local_sgd", "local_adaalter")
SYNC_MODES = ("periodic", "never")
LR_SCALE_MODES = ("none", "linear", "sqrt")

# Algorithms that synchronize every iteration and keep one shared model.
EVERY_STEP_ALGOS = ("sgd", "adagrad")


@dataclass(frozen=True)
class RunConfig:
    """One simulated training run, fully determined by these fields."""

    algo: str
    problem: str
    d: int
    n: int
    T: int
    eta: float
    H: int = 1
    sync_mode: str = "periodic"
    warm_up_steps: int = 0
    lr_scale_mode: str = "none"
    lr_scale_k: float = 1.0
    b0sq: float | None = None  # resolved to an algo-dependent default
    epssq: float = 1.0
    clip_rho: float = 0.0
    alpha: float = 0.0
    partition: str = "skew"
    n_samples: int = 1024
    batch_size: int = 1
    n_clusters: int = 4
    cluster_spread: float = 2.0
    sample_noise: float = 0.5
    quad_lmin: float = 0.5
    quad_lmax: float = 4.0
    sin_beta: float = 1.0
    x0_scale: float = 1.0
    problem_seed: int = 0
    seed: int = 0
    out_dir: str = "runs"
    check_bound_hypotheses: bool = False
    dump_shards: bool = False

    def __post_init__(self):
        if self.b0sq is None:
            # The adaptive-family texts disagree on the initial accumulator:
            # the eager baseline is written with B2_0 = 0, the lazy algorithm
            # with b0^2 = 1. Honor both defaults, overridable per run.
            default = 1.0 if self.algo == "local_adaalter" else 0.0
            object.__setattr__(self, "b0sq", default)
        _validate(self)

    @property
    def eta_effective(self) -> float:
        """Base learning rate after optional batch-size rescaling."""
        if self.lr_scale_mode == "none":
            return self.eta
        return scale_lr(self.eta, self.lr_scale_k, self.lr_scale_mode)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}
_INT_KEYS = {"d", "n", "T", "H", "warm_up_steps", "n_samples", "batch_size",
             "n_clusters", "problem_seed", "seed"}
_FLOAT_KEYS = {"eta", "lr_scale_k", "b0sq", "epssq", "clip_rho", "alpha",
               "cluster_spread", "sample_noise", "quad_lmin", "quad_lmax",
               "sin_beta", "x0_scale"}
_BOOL_KEYS = {"check_bound_hypotheses", "dump_shards"}
_STR_KEYS = {"algo", "problem", "sync_mode", "lr_scale_mode", "partition", "out_dir"}
_REQUIRED = ("algo", "problem", "d", "n", "T", "eta")
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _BOOL_KEYS | _STR_KEYS


def _validate(cfg: RunConfig) -> None:
    def need(cond: bool, msg: str) -> None:
        if not cond:
            raise ConfigError(msg)

    need(cfg.algo in ALGOS, f"algo must be one of {ALGOS}, got {cfg.algo!r}")
    need(cfg.problem in PROBLEM_KINDS,
         f"problem must be one of {PROBLEM_KINDS}, got {cfg.problem!r}")
    need(cfg.sync_mode in SYNC_MODES,
         f"sync_mode must be one of {SYNC_MODES}, got {cfg.sync_mode!r}")
    need(cfg.lr_scale_mode in LR_SCALE_MODES,
         f"lr_scale_mode must be one of {LR_SCALE_MODES}, got {cfg.lr_scale_mode!r}")
    need(cfg.partition in PARTITION_MODES,
         f"partition must be one of {PARTITION_MODES}, got {cfg.partition!r}")
    need(cfg.d >= 1, f"d must be >= 1, got {cfg.d}")
    need(cfg.n >= 1, f"n must be >= 1, got {cfg.n}")
    need(cfg.T >= 1, f"T must be >= 1, got {cfg.T}")
    need(cfg.H >= 1, f"H must be >= 1, got {cfg.H}")
    need(cfg.eta > 0.0, f"eta must be > 0, got {cfg.eta}")
    need(cfg.warm_up_steps >= 0, f"warm_up_steps must be >= 0, got {cfg.warm_up_steps}")
    need(cfg.lr_scale_k > 0.0, f"lr_scale_k must be > 0, got {cfg.lr_scale_k}")
    need(cfg.b0sq >= 0.0, f"b0sq must be >= 0, got {cfg.b0sq}")
    need(cfg.epssq >= 0.0, f"epssq must be >= 0, got {cfg.epssq}")
    need(cfg.clip_rho >= 0.0, f"clip_rho must be >= 0 (0 disables), got {cfg.clip_rho}")
    need(0.0 <= cfg.alpha <= 1.0, f"alpha must be in [0, 1], got {cfg.alpha}")
    need(cfg.n_samples >= 1, f"n_samples must be >= 1, got {cfg.n_samples}")
    need(cfg.batch_size >= 0, f"batch_size must be >= 0 (0 = full shard), got {cfg.batch_size}")
    need(cfg.n_clusters >= 1, f"n_clusters must be >= 1, got {cfg.n_clusters}")
    need(cfg.n_clusters <= cfg.n_samples, "n_clusters must be <= n_samples")
    need(cfg.seed >= 0, f"seed must be >= 0, got {cfg.seed}")
    need(cfg.problem_seed >= 0, f"problem_seed must be >= 0, got {cfg.problem_seed}")
    need(cfg.quad_lmax >= cfg.quad_lmin > 0.0, "need quad_lmax >= quad_lmin > 0")
    need(cfg.sin_beta >= 0.0, f"sin_beta must be >= 0, got {cfg.sin_beta}")

    if cfg.partition == "skew":
        need(cfg.n_samples >= cfg.n,
             f"n_samples ({cfg.n_samples}) must be >= n ({cfg.n}) for a skew partition")
    if cfg.algo in EVERY_STEP_ALGOS:
        need(cfg.H == 1, f"algo {cfg.algo!r} synchronizes every step; H must be 1, got {cfg.H}")
        need(cfg.sync_mode == "periodic",
             f"algo {cfg.algo!r} cannot use sync_mode=never")
    if cfg.algo in ("adagrad", "local_adaalter"):
        need(cfg.b0sq + cfg.epssq > 0.0,
             "adaptive denominators need b0sq + epssq > 0")
    if cfg.check_bound_hypotheses:
        need(cfg.clip_rho > 0.0,
             "bound hypothesis check needs clip_rho > 0 (certified gradient bound)")
        need(cfg.b0sq >= 1.0, "bound hypothesis check needs b0sq >= 1")
        need(cfg.epssq > 0.0, "bound hypothesis check needs epssq > 0")


def _parse_value(key: str, raw: str, lineno: int):
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _BOOL_KEYS:
            if raw not in ("0", "1"):
                raise ValueError("expected 0 or 1")
            return raw == "1"
        return raw
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: bad value for {key}: {raw!r} ({exc})") from None


def parse_config(text: str) -> RunConfig:
    """Parse flat key=value text into a validated RunConfig."""
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _ALL_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw, lineno)

    missing = [k for k in _REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    with open(path, "r") as fh:
        return parse_config(fh.read())


def emit_config(cfg: RunConfig) -> str:
    """Canonical key=value form; emit(parse(text)) re-parses to an equal config."""
    lines = []
    for f in dataclasses.fields(RunConfig):
        value = getattr(cfg, f.name)
        if f.name in _BOOL_KEYS:
            rendered = "1" if value else "0"
        elif f.name in _FLOAT_KEYS:
            rendered = repr(float(value))
        else:
            rendered = str(value)
        lines.append(f"{f.name}={rendered}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: RunConfig) -> str:
    """Short hash identifying the run setup, excluding seed and output path."""
    lines = [
        ln for ln in emit_config(cfg).splitlines()
        if not ln.startswith(("seed=", "out_dir="))
    ]
    digest = hashlib.sha256("\n".join(lines).encode()).hexdigest()
    return digest[:10]
