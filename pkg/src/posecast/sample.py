"""Reverse sampling chain: predict clean motion, re-diffuse, repeat.

Each draw starts from pure noise at step T. At every step the generator
proposes the clean future directly; that proposal is pushed back to noise
level t-1 with the closed-form forward process and fed to the next step.
The proposal from t=1 is returned as the sample, so one draw costs exactly
T generator calls.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .schedule import diffuse

__all__ = ["PredictionSet", "sample_one", "sample_many"]


@dataclass
class PredictionSet:
    """S sampled futures [S x F x J x 3] for one history, plus provenance."""

    history: np.ndarray
    samples: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 4 or self.samples.shape[0] < 1:
            raise ValueError(f"samples must be [S x F x J x 3], got {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("prediction set contains non-finite values")

    @property
    def count(self):
        return self.samples.shape[0]


def sample_one(x, denoiser, table, rng, shape=None):
    """One stochastic future via the T-step reverse chain.

    denoiser(y_t, x, t) -> clean-future estimate (numpy in/out, eval mode).
    shape defaults to the history's [F=x frames] layout and must be given
    when the future length differs from the history length.
    """
    x = np.asarray(x, dtype=np.float64)
    shape = x.shape if shape is None else tuple(shape)
    y = rng.standard_normal(shape)
    y_hat = None
    for t in range(table.T, 0, -1):
        y_hat = denoiser(y, x, t)
        if t > 1:
            y = diffuse(y_hat, t - 1, rng.standard_normal(shape), table)
    return y_hat


def sample_many(x, S, denoiser, table, seed, shape=None, meta=None):
    """S independent draws on seed-derived substreams; ordered by index."""
    if S < 1:
        raise ValueError("sample count must be >= 1")
    streams = np.random.SeedSequence(seed).spawn(S)
    samples = [
        sample_one(x, denoiser, table, np.random.default_rng(stream), shape=shape)
        for stream in streams
    ]
    info = {"seed": seed, "T": table.T, "schedule_kind": table.kind, "samples": S}
    if meta:
        info.update(meta)
    return PredictionSet(history=np.asarray(x, dtype=np.float64),
                         samples=np.stack(samples), meta=info)
