"""The denoising motion generator: transformer reconstruction of the noised
future, then multi-stage graph-convolution refinement of the full trajectory
in DCT space, conditioned on the clean history.

Parameters live in a flat name->Tensor dict so the optimizer, checkpoints,
and gradient checks can treat the whole model uniformly.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from . import tensor as T
from .dct import build_basis, dct_forward, dct_inverse
from .tensor import Tensor

__all__ = [
    "TransformerConfig",
    "RefinementConfig",
    "GeneratorConfig",
    "sinusoid_embedding",
    "init_params",
    "parameter_count",
    "time_token",
    "reconstruct",
    "gcn_block",
    "refine",
    "generate",
    "make_denoiser",
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointError",
]

FFN_WIDTH = 4  # feedforward hidden size multiplier inside encoder layers

CHECKPOINT_MAGIC = b"PCKP"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Checkpoint file rejected (bad magic/version or payload disagreement)."""


@dataclass(frozen=True)
class TransformerConfig:
    layers: int = 4
    latent_dim: int = 64
    heads: int = 4
    dropout: float = 0.1

    def __post_init__(self):
        if self.latent_dim % self.heads != 0:
            raise ValueError(
                f"latent_dim {self.latent_dim} not divisible by heads {self.heads}"
            )
        if self.latent_dim % 2 != 0:
            raise ValueError("latent_dim must be even for sinusoidal embeddings")
        if self.layers < 1:
            raise ValueError("need at least one encoder layer")


@dataclass(frozen=True)
class RefinementConfig:
    stages: int = 3
    blocks_per_stage: int = 2
    latent_dim: int = 64
    dropout: float = 0.5
    dct_k: int | None = None  # None = full spectrum

    def __post_init__(self):
        if self.stages < 1 or self.blocks_per_stage < 1:
            raise ValueError("refinement needs stages >= 1 and blocks_per_stage >= 1")


@dataclass(frozen=True)
class GeneratorConfig:
    transformer: TransformerConfig
    refinement: RefinementConfig
    history: int
    future: int
    joints: int

    @classmethod
    def toy(cls, history=16, future=32, joints=6):
        return cls(
            transformer=TransformerConfig(layers=4, latent_dim=64, heads=4, dropout=0.1),
            refinement=RefinementConfig(
                stages=3, blocks_per_stage=2, latent_dim=64, dropout=0.5
            ),
            history=history,
            future=future,
            joints=joints,
        )

    @classmethod
    def paper_scale(cls, history, future, joints):
        """Full-size preset: 8x512 encoder, 3x2 refinement stages at 256."""
        return cls(
            transformer=TransformerConfig(layers=8, latent_dim=512, heads=8, dropout=0.1),
            refinement=RefinementConfig(
                stages=3, blocks_per_stage=2, latent_dim=256, dropout=0.5
            ),
            history=history,
            future=future,
            joints=joints,
        )

    @property
    def nodes(self):
        return 3 * self.joints

    @property
    def trajectory_len(self):
        return self.history + self.future

    @property
    def dct_k(self):
        k = self.refinement.dct_k
        return self.trajectory_len if k is None else k

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(
            transformer=TransformerConfig(**d["transformer"]),
            refinement=RefinementConfig(**d["refinement"]),
            history=d["history"],
            future=d["future"],
            joints=d["joints"],
        )


@lru_cache(maxsize=16)
def _positional_encoding(length, dim):
    pe = np.empty((length, dim))
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(dim // 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * i / dim)
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    pe.flags.writeable = False
    return pe


def sinusoid_embedding(pos, dim):
    """Standard interleaved sin/cos embedding of a scalar position."""
    return _positional_encoding(int(pos) + 1, dim)[int(pos)].copy()


def _refine_channels(config):
    """Per-stage channel path K -> latent -> ... -> latent -> K."""
    bps = config.refinement.blocks_per_stage
    k = config.dct_k
    return [k] + [config.refinement.latent_dim] * (bps - 1) + [k]


def init_params(config, seed):
    """Deterministic parameter dict; linear weights fan-in uniform, biases zero,
    norm gains one, adjacency small uniform around zero."""
    rng = np.random.default_rng(seed)
    params = {}

    def linear(name, fan_in, fan_out):
        bound = 1.0 / math.sqrt(fan_in)
        params[f"{name}.w"] = Tensor(
            rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True
        )
        params[f"{name}.b"] = Tensor(np.zeros(fan_out), requires_grad=True)

    def norm(name, dim):
        params[f"{name}.g"] = Tensor(np.ones(dim), requires_grad=True)
        params[f"{name}.b"] = Tensor(np.zeros(dim), requires_grad=True)

    d = config.transformer.latent_dim
    pose_dim = config.nodes
    linear("recon.in_proj", pose_dim, d)
    linear("recon.time_mlp.fc1", d, d)
    linear("recon.time_mlp.fc2", d, d)
    for i in range(config.transformer.layers):
        base = f"recon.layer{i}"
        for proj in ("wq", "wk", "wv", "wo"):
            linear(f"{base}.attn.{proj}", d, d)
        norm(f"{base}.ln1", d)
        linear(f"{base}.ffn.fc1", d, FFN_WIDTH * d)
        linear(f"{base}.ffn.fc2", FFN_WIDTH * d, d)
        norm(f"{base}.ln2", d)
    linear("recon.out_proj", d, pose_dim)

    n = config.nodes
    adj_bound = 1.0 / math.sqrt(n)
    channels = _refine_channels(config)
    for s in range(config.refinement.stages):
        for b in range(len(channels) - 1):
            base = f"refine.stage{s}.block{b}"
            params[f"{base}.adj"] = Tensor(
                rng.uniform(-adj_bound, adj_bound, size=(n, n)), requires_grad=True
            )
            linear(f"{base}.gc", channels[b], channels[b + 1])
            if b < len(channels) - 2:  # inner blocks carry normalization
                norm(f"{base}.norm", channels[b + 1])
    return params


def parameter_count(params):
    return sum(p.data.size for p in params.values())


def _linear(params, name, x):
    return T.matmul(x, params[f"{name}.w"]) + params[f"{name}.b"]


def time_token(t, total_steps, latent_dim, params):
    """Sinusoidal step embedding projected through a 2-layer feedforward map."""
    if not 0 <= t <= total_steps:
        raise ValueError(f"diffusion step {t} out of range [0, {total_steps}]")
    emb = Tensor(sinusoid_embedding(t, latent_dim).reshape(1, latent_dim))
    h = T.gelu(_linear(params, "recon.time_mlp.fc1", emb))
    return _linear(params, "recon.time_mlp.fc2", h)


def _attention(params, base, seq, heads, rng, p_drop, training):
    L, d = seq.shape
    dk = d // heads
    q = _linear(params, f"{base}.wq", seq)
    k = _linear(params, f"{base}.wk", seq)
    v = _linear(params, f"{base}.wv", seq)
    # [L, d] -> [heads, L, dk]
    q = q.reshape(L, heads, dk).transpose(1, 0, 2)
    k = k.reshape(L, heads, dk).transpose(1, 0, 2)
    v = v.reshape(L, heads, dk).transpose(1, 0, 2)
    scores = T.matmul(q, k.transpose(0, 2, 1)) * (1.0 / math.sqrt(dk))
    attn = T.softmax(scores, axis=-1)
    ctx = T.matmul(attn, v).transpose(1, 0, 2).reshape(L, d)
    return _linear(params, f"{base}.wo", ctx)


def _encoder_layer(params, base, seq, config, rng, training):
    tc = config.transformer
    a = _attention(params, f"{base}.attn", seq, tc.heads, rng, tc.dropout, training)
    a = T.dropout(a, tc.dropout, rng, training)
    seq = T.layer_norm(seq + a, params[f"{base}.ln1.g"], params[f"{base}.ln1.b"])
    f = _linear(params, f"{base}.ffn.fc2", T.gelu(_linear(params, f"{base}.ffn.fc1", seq)))
    f = T.dropout(f, tc.dropout, rng, training)
    return T.layer_norm(seq + f, params[f"{base}.ln2.g"], params[f"{base}.ln2.b"])


def reconstruct(y_t, t, params, config, total_steps, rng=None, training=False):
    """Initial reconstruction of the clean future from t-step noised frames.

    Frames are projected to the latent width, tagged with positional
    encoding, prepended with the time token, run through the encoder stack,
    and projected back to poses (the time position is dropped first).
    """
    y_t = y_t if isinstance(y_t, Tensor) else Tensor(y_t)
    F, J = config.future, config.joints
    if y_t.shape != (F, J, 3):
        raise ValueError(f"noised future shape {y_t.shape} != {(F, J, 3)}")
    d = config.transformer.latent_dim

    h = _linear(params, "recon.in_proj", y_t.reshape(F, config.nodes))
    h = h + Tensor(_positional_encoding(F, d))
    z = time_token(t, total_steps, d, params)
    seq = T.concat([z, h], axis=0)
    for i in range(config.transformer.layers):
        seq = _encoder_layer(params, f"recon.layer{i}", seq, config, rng, training)
    out = _linear(params, "recon.out_proj", seq[1:])
    return out.reshape(F, J, 3)


def gcn_block(
    features,
    adjacency,
    weight,
    bias,
    norm_gain=None,
    norm_bias=None,
    activation="tanh",
    p_drop=0.0,
    rng=None,
    training=False,
    residual=True,
):
    """One graph convolution over coordinate-trajectory nodes.

    out = act(norm(A @ features @ W + b)), then dropout, then an optional
    residual when the channel count is preserved. Passing norm_gain=None
    skips normalization; activation "identity" skips the nonlinearity.
    """
    features = features if isinstance(features, Tensor) else Tensor(features)
    h = T.matmul(T.matmul(adjacency, features), weight) + bias
    if norm_gain is not None:
        h = T.layer_norm(h, norm_gain, norm_bias)
    if activation == "tanh":
        h = T.tanh(h)
    elif activation != "identity":
        raise ValueError(f"unknown activation {activation!r}")
    h = T.dropout(h, p_drop, rng, training)
    if residual and features.shape[-1] == h.shape[-1]:
        h = h + features
    return h


def refine(x, y_tilde, params, config, rng=None, training=False):
    """Multi-stage refinement of the full trajectory [history; future].

    Each stage maps the trajectory to DCT coefficients, runs its block chain
    over the 3J coordinate nodes, maps back, and adds the stage input. The
    final block of a stage is a plain graph convolution so zeroed weights
    leave the trajectory untouched.
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    y_tilde = y_tilde if isinstance(y_tilde, Tensor) else Tensor(y_tilde)
    H, F, J = config.history, config.future, config.joints
    if x.shape != (H, J, 3):
        raise ValueError(f"history shape {x.shape} != {(H, J, 3)}")
    if y_tilde.shape != (F, J, 3):
        raise ValueError(f"future shape {y_tilde.shape} != {(F, J, 3)}")

    n = config.nodes
    N = config.trajectory_len
    basis = build_basis(N, config.dct_k)
    p = config.refinement.dropout
    channels = _refine_channels(config)
    traj = T.concat([x.reshape(H, n), y_tilde.reshape(F, n)], axis=0)
    for s in range(config.refinement.stages):
        coeffs = dct_forward(traj, basis)
        feats = coeffs.transpose(1, 0)  # [nodes x K]
        last = len(channels) - 2
        for b in range(last + 1):
            base = f"refine.stage{s}.block{b}"
            inner = b < last
            feats = gcn_block(
                feats,
                params[f"{base}.adj"],
                params[f"{base}.gc.w"],
                params[f"{base}.gc.b"],
                norm_gain=params[f"{base}.norm.g"] if inner else None,
                norm_bias=params[f"{base}.norm.b"] if inner else None,
                activation="tanh" if inner else "identity",
                p_drop=p if inner else 0.0,
                rng=rng,
                training=training,
                residual=inner,
            )
        delta = dct_inverse(feats.transpose(1, 0), basis)
        traj = traj + delta
    return traj.reshape(N, J, 3)


def generate(y_t, x, t, params, config, total_steps, rng=None, training=False):
    """Full denoiser pass: returns (predicted future, history estimate)."""
    y_tilde = reconstruct(y_t, t, params, config, total_steps, rng=rng, training=training)
    full = refine(x, y_tilde, params, config, rng=rng, training=training)
    H = config.history
    return full[H:], full[:H]


def make_denoiser(params, config, total_steps):
    """Eval-mode closure (y_t, x, t) -> predicted future as a numpy array."""

    def denoise(y_t, x, t):
        with T.no_grad():
            y_hat0, _ = generate(y_t, x, t, params, config, total_steps)
        return y_hat0.data

    return denoise


def save_checkpoint(path, params, config, seed, extra=None):
    """Flat named-array archive with a JSON header; bit-exact round trip."""
    names = list(params.keys())
    arrays = []
    offset = 0
    blobs = []
    for name in names:
        arr = params[name].data
        blob = arr.astype("<f8").tobytes(order="C")
        arrays.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    header = {
        "version": CHECKPOINT_VERSION,
        "config": config.to_dict(),
        "seed": seed,
        "arrays": arrays,
        "payload_bytes": offset,
    }
    if extra is not None:
        header["extra"] = extra
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for b in blobs:
            fh.write(b)


def load_checkpoint(path):
    """Returns (params, config, seed, extra)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"not a checkpoint file (magic {magic!r})")
        raw = fh.read(4)
        if len(raw) != 4:
            raise CheckpointError("file ends inside the header length field")
        (hlen,) = struct.unpack("<I", raw)
        header_bytes = fh.read(hlen)
        if len(header_bytes) != hlen:
            raise CheckpointError("file ends inside the header")
        header = json.loads(header_bytes.decode("utf-8"))
        if header.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {header.get('version')}")
        payload = fh.read()
    if len(payload) != header["payload_bytes"]:
        raise CheckpointError(
            f"payload has {len(payload)} bytes, header promises {header['payload_bytes']}"
        )
    params = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=entry["offset"])
        params[entry["name"]] = Tensor(arr.reshape(shape).copy(), requires_grad=True)
    config = GeneratorConfig.from_dict(header["config"])
    return params, config, header["seed"], header.get("extra")
