"""Skeletons, synthetic multimodal motion, windowing, and motion file I/O.

The synthetic generator stands in for mocap corpora at desk scale: every
clip shares one base oscillation over the history frames, then commits to
one of M continuation modes (distinct drift directions and swing programs)
at the prediction horizon, plus small additive pose noise. Mode labels ride
along so diversity metrics can be checked against known ground truth.
"""

from __future__ import annotations

import io
import json
import logging
import math
import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Skeleton",
    "MotionClip",
    "SynthConfig",
    "MotionFormatError",
    "make_skeleton",
    "synth_generate",
    "window",
    "save_motion",
    "load_motion",
    "load_motion_header",
    "export_csv",
]

log = logging.getLogger(__name__)

MAGIC = b"PCMO"
FORMAT_VERSION = 1
FRAME_RATE = 25.0


class MotionFormatError(ValueError):
    """Motion file rejected; .code is one of magic/version/truncated/length_mismatch."""

    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class Skeleton:
    """Kinematic tree: parents[j] is the parent joint index, -1 at the root."""

    parents: tuple
    names: tuple | None = None

    def __post_init__(self):
        parents = tuple(int(p) for p in self.parents)
        object.__setattr__(self, "parents", parents)
        J = len(parents)
        if J < 1:
            raise ValueError("skeleton needs at least one joint")
        roots = [j for j, p in enumerate(parents) if p == -1 or p == j]
        if len(roots) != 1:
            raise ValueError(f"skeleton must have exactly one root, found {len(roots)}")
        for j, p in enumerate(parents):
            if j in roots:
                continue
            if not 0 <= p < J:
                raise ValueError(f"joint {j} has out-of-range parent {p}")
        # acyclicity: walking up from any joint must reach the root within J hops
        root = roots[0]
        for j in range(J):
            seen = 0
            cur = j
            while cur != root and parents[cur] != cur:
                cur = parents[cur]
                seen += 1
                if seen > J:
                    raise ValueError("skeleton parent array contains a cycle")
        if self.names is not None and len(self.names) != J:
            raise ValueError("names length does not match joint count")

    @property
    def joints(self):
        return len(self.parents)

    @property
    def root(self):
        for j, p in enumerate(self.parents):
            if p == -1 or p == j:
                return j
        raise AssertionError("unreachable")

    def depths(self):
        """Tree depth of every joint; the root has depth 0."""
        J = self.joints
        root = self.root
        out = np.zeros(J, dtype=np.int64)
        for j in range(J):
            d, cur = 0, j
            while cur != root:
                cur = self.parents[cur]
                d += 1
            out[j] = d
        return out

    def children(self):
        kids = [[] for _ in range(self.joints)]
        for j, p in enumerate(self.parents):
            if j != self.root:
                kids[p].append(j)
        return kids


@dataclass
class MotionClip:
    """Pose sequence [frames x J x 3] in meters; mode labels synthetic origin."""

    skeleton: Skeleton
    frames: np.ndarray
    frame_rate: float = FRAME_RATE
    mode: int | None = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3 or self.frames.shape[1:] != (self.skeleton.joints, 3):
            raise ValueError(
                f"frames shape {self.frames.shape} does not match skeleton "
                f"({self.skeleton.joints} joints)"
            )
        if self.frames.shape[0] < 2:
            raise ValueError("a motion clip needs at least 2 frames")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("motion frames contain non-finite values")

    @property
    def length(self):
        return self.frames.shape[0]


@dataclass(frozen=True)
class SynthConfig:
    joints: int = 6
    history: int = 16
    future: int = 32
    clips: int = 600
    modes: int = 3
    noise: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.joints < 2:
            raise ValueError("synthetic skeleton needs at least 2 joints")
        if self.history < 2 or self.future < 2:
            raise ValueError("history and future must each span at least 2 frames")
        if self.modes < 1:
            raise ValueError("mode count must be at least 1")
        if self.clips < self.modes:
            raise ValueError("clip count must be at least the mode count")
        if self.noise < 0:
            raise ValueError("noise level must be non-negative")


def make_skeleton(J):
    """Backbone chain with two branches hanging off its top joint.

    J=6 gives the default layout: a 2-joint backbone plus two 2-joint
    branches. Smaller J shrinks the branches first, then the backbone.
    """
    backbone = max(2, J - 4)
    rem = J - backbone
    parents = [-1] + list(range(backbone - 1))
    names = [f"spine{i}" for i in range(backbone)]
    attach = backbone - 1
    branch_a = (rem + 1) // 2
    branch_b = rem - branch_a
    prev = attach
    for i in range(branch_a):
        parents.append(prev)
        prev = len(parents) - 1
        names.append(f"left{i}")
    prev = attach
    for i in range(branch_b):
        parents.append(prev)
        prev = len(parents) - 1
        names.append(f"right{i}")
    return Skeleton(parents=tuple(parents), names=tuple(names))


def _rest_pose(skeleton):
    """Static joint positions from per-bone offsets; branches splay in x."""
    J = skeleton.joints
    backbone = max(2, J - 4)
    pose = np.zeros((J, 3))
    for j in range(1, J):
        p = skeleton.parents[j]
        if j < backbone:
            off = np.array([0.0, 0.0, 0.5])
        else:
            side = 1.0 if skeleton.names and skeleton.names[j].startswith("left") else -1.0
            first = skeleton.parents[j] == backbone - 1
            off = np.array([side * 0.4, 0.0, 0.2 if first else -0.1])
        pose[j] = pose[p] + off
    return pose


_SWING_PERIOD = 20.0  # frames per oscillation cycle
_SWAY_AMP = 0.15
_SWING_AMP = 0.25
_BOB_AMP = 0.05
_DRIFT_SPEED = 0.04  # per-frame root translation committed at the horizon
_AMP_RAMP = 8.0  # frames to blend into a mode's swing amplitude


def _mode_program(m, M):
    """Continuation parameters for mode m: drift direction and swing scale."""
    theta = 2.0 * math.pi * m / M
    drift = np.array([math.cos(theta), math.sin(theta), 0.0]) * _DRIFT_SPEED
    amp_mult = 1.0 + 0.5 * (m % 2)
    return drift, amp_mult


def _clip_frames(skeleton, H, F, mode, M, noise, rng):
    J = skeleton.joints
    rest = _rest_pose(skeleton)
    depths = skeleton.depths().astype(np.float64)
    max_depth = max(1.0, depths.max())
    swing_scale = depths / max_depth
    # branches swing in antiphase; backbone follows the left side faintly
    phase_off = np.zeros(J)
    if skeleton.names:
        phase_off = np.array(
            [math.pi if n.startswith("right") else 0.0 for n in skeleton.names]
        )

    N = H + F
    frames = np.empty((N, J, 3))
    drift, amp_mult = _mode_program(mode, M)
    for i in range(N):
        phi = 2.0 * math.pi * i / _SWING_PERIOD
        if i < H:
            amp = 1.0
            shift = np.zeros(3)
        else:
            k = i - (H - 1)
            amp = 1.0 + (amp_mult - 1.0) * min(1.0, k / _AMP_RAMP)
            shift = drift * k
        pose = rest.copy()
        pose[:, 1] += _SWAY_AMP * math.sin(phi)
        pose[:, 1] += amp * _SWING_AMP * swing_scale * np.sin(phi + phase_off)
        pose[:, 2] += _BOB_AMP * math.sin(2.0 * phi)
        pose += shift
        frames[i] = pose
    if noise > 0:
        frames = frames + noise * rng.standard_normal(frames.shape)
    return frames


def synth_generate(config):
    """Procedurally animate clips of length H+F; deterministic given seed."""
    skeleton = make_skeleton(config.joints)
    rng = np.random.default_rng(config.seed)
    n, M = config.clips, config.modes
    reps = -(-n // M)  # ceil
    modes = rng.permutation(np.tile(np.arange(M), reps)[:n])
    clips = []
    for i in range(n):
        frames = _clip_frames(
            skeleton, config.history, config.future, int(modes[i]), M, config.noise, rng
        )
        clips.append(
            MotionClip(skeleton=skeleton, frames=frames, frame_rate=FRAME_RATE, mode=int(modes[i]))
        )
    return clips


def window(clips, H, F, stride=None):
    """Slide (history, future) windows over each clip; default stride F.

    Clips shorter than H+F are skipped; the skip count is logged once.
    """
    stride = F if stride is None else stride
    if stride < 1:
        raise ValueError("stride must be positive")
    pairs = []
    skipped = 0
    for clip in clips:
        if clip.length < H + F:
            skipped += 1
            continue
        for start in range(0, clip.length - (H + F) + 1, stride):
            x = clip.frames[start : start + H]
            y0 = clip.frames[start + H : start + H + F]
            pairs.append((x, y0))
    if skipped:
        log.warning("windowing skipped %d clip(s) shorter than H+F=%d", skipped, H + F)
    return pairs


def save_motion(clips, path, provenance=None):
    """Self-describing binary motion file; load(save(x)) is bit-exact."""
    if not clips:
        raise ValueError("cannot save an empty clip list")
    skeleton = clips[0].skeleton
    frame_rate = clips[0].frame_rate
    for clip in clips:
        if clip.skeleton.parents != skeleton.parents:
            raise ValueError("all clips in one file must share a skeleton")
    index = []
    offset = 0
    blobs = []
    for clip in clips:
        blob = clip.frames.astype("<f8").tobytes(order="C")
        index.append({"frames": clip.length, "offset": offset, "mode": clip.mode})
        blobs.append(blob)
        offset += len(blob)
    header = {
        "version": FORMAT_VERSION,
        "frame_rate": frame_rate,
        "skeleton": {
            "parents": list(skeleton.parents),
            "names": list(skeleton.names) if skeleton.names else None,
        },
        "clips": index,
        "payload_bytes": offset,
    }
    if provenance is not None:
        header["provenance"] = provenance
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)


def _read_header(fh):
    magic = fh.read(4)
    if magic != MAGIC:
        raise MotionFormatError("magic", f"not a motion file (magic {magic!r})")
    raw_len = fh.read(4)
    if len(raw_len) != 4:
        raise MotionFormatError("truncated", "file ends inside the header length field")
    (header_len,) = struct.unpack("<I", raw_len)
    header_bytes = fh.read(header_len)
    if len(header_bytes) != header_len:
        raise MotionFormatError("truncated", "file ends inside the header")
    try:
        header = json.loads(header_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MotionFormatError("magic", f"header is not valid JSON: {exc}") from None
    if header.get("version") != FORMAT_VERSION:
        raise MotionFormatError(
            "version",
            f"unsupported format version {header.get('version')} (expected {FORMAT_VERSION})",
        )
    return header


def load_motion_header(path):
    """Header dict only (skeleton, clip index, provenance); no payload read."""
    with open(path, "rb") as fh:
        return _read_header(fh)


def load_motion(path):
    """Load a motion file; rejects truncation or index/payload disagreement."""
    with open(path, "rb") as fh:
        header = _read_header(fh)
        payload = fh.read()
    skel_info = header["skeleton"]
    skeleton = Skeleton(
        parents=tuple(skel_info["parents"]),
        names=tuple(skel_info["names"]) if skel_info.get("names") else None,
    )
    J = skeleton.joints
    expected = 0
    for entry in header["clips"]:
        if entry["offset"] != expected:
            raise MotionFormatError("length_mismatch", "clip offsets are not contiguous")
        expected += entry["frames"] * J * 3 * 8
    if header.get("payload_bytes") != expected:
        raise MotionFormatError(
            "length_mismatch",
            f"header declares {header.get('payload_bytes')} payload bytes, index implies {expected}",
        )
    if len(payload) != expected:
        raise MotionFormatError(
            "truncated",
            f"payload has {len(payload)} bytes, header promises {expected}",
        )
    clips = []
    for entry in header["clips"]:
        n = entry["frames"]
        start = entry["offset"]
        arr = np.frombuffer(
            payload, dtype="<f8", count=n * J * 3, offset=start
        ).reshape(n, J, 3)
        clips.append(
            MotionClip(
                skeleton=skeleton,
                frames=arr.copy(),
                frame_rate=header["frame_rate"],
                mode=entry.get("mode"),
            )
        )
    return clips


def export_csv(clip, path):
    """Plain-text dump, one row per (frame, joint): frame,joint,x,y,z."""
    buf = io.StringIO()
    buf.write("frame,joint,x,y,z\n")
    for i in range(clip.length):
        for j in range(clip.skeleton.joints):
            x, y, z = (float(v) for v in clip.frames[i, j])
            buf.write(f"{i},{j},{x!r},{y!r},{z!r}\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(buf.getvalue())
