"""Structure-aware reconstruction loss, min-k relaxed diffusion training,
and a plain Adam loop.

The loss weights every joint by its kinematic-tree depth so extremities,
which move the most, dominate supervision. Each training example draws one
diffusion step, corrupts the future k times with fresh noise, and descends
only through the replica the generator reconstructed best.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .model import generate, init_params, load_checkpoint, save_checkpoint
from .schedule import build_schedule, diffuse
from .tensor import Tensor

__all__ = [
    "LossWeights",
    "TrainConfig",
    "AdamState",
    "TrainResult",
    "structure_weights",
    "recon_loss",
    "diffusion_training_step",
    "adam_init",
    "adam_step",
    "learning_rate_at",
    "train",
    "save_train_checkpoint",
    "load_train_checkpoint",
]

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class LossWeights:
    """Per-joint positive loss weights, normalized to mean 1."""

    lam: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=np.float64)
        object.__setattr__(self, "lam", lam)
        if np.any(lam <= 0):
            raise ValueError("loss weights must be positive")
        if abs(lam.mean() - 1.0) > 1e-9:
            raise ValueError("loss weights must have mean 1")


def structure_weights(skeleton):
    """Depth-proportional joint weights: 1 + depth/max_depth, mean-normalized."""
    depths = skeleton.depths().astype(np.float64)
    max_depth = depths.max()
    if max_depth == 0:
        return LossWeights(lam=np.ones(skeleton.joints))
    lam = 1.0 + depths / max_depth
    return LossWeights(lam=lam / lam.mean())


def recon_loss(x_hat, y_hat0, x, y0, weights):
    """Weighted L1 reconstruction error over history and future, per Eq. form
    (1/J) * sum_j lam_j * (|x_j - xhat_j|_1 + |y_j - yhat_j|_1)."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    y0 = y0 if isinstance(y0, Tensor) else Tensor(y0)
    if x_hat.shape != x.shape:
        raise ValueError(f"history shapes differ: {x_hat.shape} vs {x.shape}")
    if y_hat0.shape != y0.shape:
        raise ValueError(f"future shapes differ: {y_hat0.shape} vs {y0.shape}")
    J = x.shape[1]
    if weights.lam.shape != (J,):
        raise ValueError(f"weight count {weights.lam.shape} != joint count {J}")
    per_joint_hist = T.absolute(x_hat - x).sum(axis=(0, 2))
    per_joint_fut = T.absolute(y_hat0 - y0).sum(axis=(0, 2))
    lam = Tensor(weights.lam)
    return ((per_joint_hist + per_joint_fut) * lam).sum() * (1.0 / J)


def diffusion_training_step(x, y0, params, config, table, k, rng, weights, training=True):
    """Min-k relaxed loss for one example.

    One step index t is drawn and shared across the k replicas; each replica
    corrupts y0 with fresh noise, reconstructs, and scores. Returns the
    smallest replica loss, so gradients flow only through that branch.
    """
    if k < 1:
        raise ValueError("relaxation count k must be >= 1")
    t = int(rng.integers(1, table.T + 1))
    best = None
    for _ in range(k):
        eps = rng.standard_normal(y0.shape)
        y_t = diffuse(y0, t, eps, table)
        y_hat0, x_hat = generate(
            y_t, x, t, params, config, table.T, rng=rng, training=training
        )
        loss = recon_loss(x_hat, y_hat0, x, y0, weights)
        if best is None or loss.data < best.data:
            best = loss
    return best


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0


def adam_init(params):
    return AdamState(
        m={name: np.zeros_like(p.data) for name, p in params.items()},
        v={name: np.zeros_like(p.data) for name, p in params.items()},
    )


def adam_step(params, grads, state, lr):
    """One Adam update in place; bias-corrected, deterministic."""
    state.step += 1
    t = state.step
    c1 = 1.0 - ADAM_BETA1**t
    c2 = 1.0 - ADAM_BETA2**t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.data.shape} for {name}")
        state.m[name] = ADAM_BETA1 * state.m[name] + (1.0 - ADAM_BETA1) * g
        state.v[name] = ADAM_BETA2 * state.v[name] + (1.0 - ADAM_BETA2) * g * g
        m_hat = state.m[name] / c1
        v_hat = state.v[name] / c2
        p.data -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 16
    learning_rate: float = 1e-4
    lr_decay_factor: float = 0.99
    lr_decay_start_epoch: int = 80
    k: int = 2
    diffusion_steps: int = 10
    schedule_kind: str = "cosine_offset1"
    seed: int = 0
    checkpoint_every: int = 0  # epochs between checkpoint callbacks; 0 = final only

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 < self.lr_decay_factor <= 1.0:
            raise ValueError("decay factor must be in (0, 1]")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")


def learning_rate_at(config, epoch):
    """LR used during 1-indexed epoch; decays each epoch past the start."""
    extra = max(0, epoch - config.lr_decay_start_epoch)
    return config.learning_rate * config.lr_decay_factor**extra


@dataclass
class TrainResult:
    params: dict
    trace: list  # rows (epoch, mean_loss, lr)
    state: AdamState
    epoch: int
    rng_state: dict = field(repr=False, default=None)


def train(pairs, skeleton, gen_config, train_config, on_checkpoint=None, resume=None):
    """Epoch loop over shuffled minibatches; fully reproducible from the seed.

    pairs: list of (history, future) arrays. resume: a prior TrainResult (or
    equivalent) to continue from; on_checkpoint(epoch, result) fires at the
    configured cadence and after the final epoch.
    """
    if not pairs:
        raise ValueError("training dataset is empty")
    weights = structure_weights(skeleton)
    table = build_schedule(train_config.schedule_kind, train_config.diffusion_steps)

    if resume is None:
        ss = np.random.SeedSequence(train_config.seed)
        init_seed, loop_seed = ss.spawn(2)
        params = init_params(gen_config, init_seed)
        state = adam_init(params)
        rng = np.random.default_rng(loop_seed)
        trace = []
        start_epoch = 1
    else:
        params = resume.params
        state = resume.state
        rng = np.random.default_rng()
        rng.bit_generator.state = resume.rng_state
        trace = list(resume.trace)
        start_epoch = resume.epoch + 1

    n = len(pairs)
    result = TrainResult(params=params, trace=trace, state=state, epoch=start_epoch - 1)
    for epoch in range(start_epoch, train_config.epochs + 1):
        lr = learning_rate_at(train_config, epoch)
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, train_config.batch_size):
            batch = order[lo : lo + train_config.batch_size]
            T.zero_grads(params)
            scale = 1.0 / len(batch)
            for idx in batch:
                x, y0 = pairs[idx]
                loss = diffusion_training_step(
                    x, y0, params, gen_config, table, train_config.k, rng, weights
                )
                total += float(loss.data)
                T.backward(loss * scale)
            grads = {
                name: (p.grad if p.grad is not None else np.zeros_like(p.data))
                for name, p in params.items()
            }
            adam_step(params, grads, state, lr)
        mean_loss = total / n
        if not math.isfinite(mean_loss):
            raise FloatingPointError(f"non-finite training loss at epoch {epoch}")
        trace.append((epoch, mean_loss, lr))
        result.epoch = epoch
        result.rng_state = rng.bit_generator.state
        cadence = train_config.checkpoint_every
        if on_checkpoint is not None and (
            epoch == train_config.epochs or (cadence > 0 and epoch % cadence == 0)
        ):
            on_checkpoint(epoch, result)
    result.rng_state = rng.bit_generator.state
    return result


def save_train_checkpoint(path, result, gen_config, train_config, provenance=None):
    """Checkpoint carrying model weights plus resumable optimizer state."""
    arrays = {}
    for name, p in result.params.items():
        arrays[f"param.{name}"] = p
    for name, m in result.state.m.items():
        arrays[f"adam.m.{name}"] = Tensor(m)
    for name, v in result.state.v.items():
        arrays[f"adam.v.{name}"] = Tensor(v)
    extra = {
        "epoch": result.epoch,
        "adam_step": result.state.step,
        "rng_state": result.rng_state,
        "trace": [[e, loss, lr] for e, loss, lr in result.trace],
        "train_config": {
            "epochs": train_config.epochs,
            "batch_size": train_config.batch_size,
            "learning_rate": train_config.learning_rate,
            "lr_decay_factor": train_config.lr_decay_factor,
            "lr_decay_start_epoch": train_config.lr_decay_start_epoch,
            "k": train_config.k,
            "diffusion_steps": train_config.diffusion_steps,
            "schedule_kind": train_config.schedule_kind,
            "seed": train_config.seed,
            "checkpoint_every": train_config.checkpoint_every,
        },
    }
    if provenance is not None:
        extra["provenance"] = provenance
    save_checkpoint(path, arrays, gen_config, train_config.seed, extra=extra)


def load_train_checkpoint(path):
    """Returns (TrainResult, gen_config, train_config, extra)."""
    arrays, gen_config, _, extra = load_checkpoint(path)
    params, m, v = {}, {}, {}
    for name, t in arrays.items():
        group, key = name.split(".", 1)
        if group == "param":
            params[key] = t
        elif group == "adam":
            sub, key = key.split(".", 1)
            (m if sub == "m" else v)[key] = t.data.copy()
    state = AdamState(m=m, v=v, step=extra["adam_step"])
    result = TrainResult(
        params=params,
        trace=[tuple(row) for row in extra["trace"]],
        state=state,
        epoch=extra["epoch"],
        rng_state=extra["rng_state"],
    )
    train_config = TrainConfig(**extra["train_config"])
    return result, gen_config, train_config, extra
