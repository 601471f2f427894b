"""Variance schedules and the closed-form forward diffusion process.

Three schedule kinds are supported. ``cosine_offset1`` shifts the cosine
argument by a full unit so the signal weight starts at 0.5 instead of ~1,
keeping every step of the chain meaningfully noised; ``cosine_standard``
is the conventional 0.008-offset normalized form; ``linear`` interpolates
the per-step noise rate between the usual reference endpoints (scaled by
1000/T so shorter chains still corrupt fully).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["ScheduleTable", "build_schedule", "alpha_bar", "diffuse", "diffuse_step", "SCHEDULE_KINDS"]

SCHEDULE_KINDS = ("linear", "cosine_standard", "cosine_offset1")

# floor for the per-step retention factor; keeps alpha in (0,1) when the raw
# schedule hits zero (cosine kinds at t=T) or goes negative (scaled linear)
ALPHA_FLOOR = 1e-5

_LINEAR_BETA_START = 1e-4
_LINEAR_BETA_END = 0.02


@dataclass(frozen=True)
class ScheduleTable:
    """Precomputed signal weights: alpha_bar[t] for t=0..T, alpha[t] for t=1..T.

    Immutable after construction; alpha_bar is strictly decreasing and
    alpha_bar[t] == alpha_bar[t-1] * alpha[t] holds exactly by construction.
    """

    kind: str
    T: int
    alpha_bar: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)

    def to_csv(self) -> str:
        """Rows (t, alpha, alpha_bar); alpha is empty for t=0."""
        buf = io.StringIO()
        buf.write("t,alpha,alpha_bar\n")
        buf.write(f"0,,{float(self.alpha_bar[0])!r}\n")
        for t in range(1, self.T + 1):
            buf.write(f"{t},{float(self.alpha[t - 1])!r},{float(self.alpha_bar[t])!r}\n")
        return buf.getvalue()


def _cosine_offset1_raw(T):
    t = np.arange(T + 1, dtype=np.float64)
    raw = np.cos(((t / T + 1.0) / 2.0) * (math.pi / 2.0)) ** 2
    raw[0] = 0.5  # cos(pi/4)^2 is exactly 1/2; pin it against rounding
    return raw


def _cosine_standard_raw(T, s=0.008):
    t = np.arange(T + 1, dtype=np.float64)
    f = np.cos(((t / T + s) / (1.0 + s)) * (math.pi / 2.0)) ** 2
    return f / f[0]


def build_schedule(kind, T):
    """Build a ScheduleTable for the given kind and step count T >= 1."""
    if T < 1:
        raise ValueError(f"schedule step count T must be >= 1, got {T}")
    if kind not in SCHEDULE_KINDS:
        raise ValueError(f"unknown schedule kind {kind!r}; choose from {SCHEDULE_KINDS}")

    if kind == "cosine_offset1":
        raw = _cosine_offset1_raw(T)
        alpha = raw[1:] / raw[:-1]
        start = 0.5
    elif kind == "cosine_standard":
        raw = _cosine_standard_raw(T)
        alpha = raw[1:] / raw[:-1]
        start = 1.0
    else:
        scale = 1000.0 / T
        beta = np.linspace(_LINEAR_BETA_START * scale, _LINEAR_BETA_END * scale, T)
        alpha = 1.0 - beta
        start = 1.0

    alpha = np.maximum(alpha, ALPHA_FLOOR)
    bar = np.empty(T + 1, dtype=np.float64)
    bar[0] = start
    for t in range(1, T + 1):
        bar[t] = bar[t - 1] * alpha[t - 1]

    table = ScheduleTable(kind=kind, T=T, alpha_bar=bar, alpha=alpha)
    table.alpha_bar.flags.writeable = False
    table.alpha.flags.writeable = False
    return table


def alpha_bar(table, t):
    """Tabulated cumulative signal weight at step t, 0 <= t <= T."""
    if not 0 <= t <= table.T:
        raise ValueError(f"step {t} out of range [0, {table.T}]")
    return float(table.alpha_bar[t])


def diffuse(y0, t, eps, table):
    """Closed-form forward diffusion: sqrt(ab_t)*y0 + sqrt(1-ab_t)*eps."""
    ab = alpha_bar(table, t)
    y0 = np.asarray(y0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != y0.shape:
        raise ValueError(f"noise shape {eps.shape} does not match signal shape {y0.shape}")
    return math.sqrt(ab) * y0 + math.sqrt(1.0 - ab) * eps


def diffuse_step(y_prev, t, eps, table):
    """Single forward transition t-1 -> t: sqrt(a_t)*y_prev + sqrt(1-a_t)*eps."""
    if not 1 <= t <= table.T:
        raise ValueError(f"step {t} out of range [1, {table.T}]")
    a = float(table.alpha[t - 1])
    y_prev = np.asarray(y_prev, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != y_prev.shape:
        raise ValueError(f"noise shape {eps.shape} does not match signal shape {y_prev.shape}")
    return math.sqrt(a) * y_prev + math.sqrt(1.0 - a) * eps
