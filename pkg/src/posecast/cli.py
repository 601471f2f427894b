"""Command-line front end: datagen, train, sample, eval, plot.

Every command resolves a single JSON config (defaults <- config file <-
flags, flags winning), embeds the resolved config in its outputs, and is
byte-for-byte reproducible from (config, seed). Exit codes: 0 success,
1 usage/config error, 2 data/format error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from .data import (
    MotionFormatError,
    SynthConfig,
    load_motion,
    load_motion_header,
    save_motion,
    synth_generate,
    window,
    MotionClip,
)
from .metrics import displacement_profile, evaluate, zero_velocity_baseline
from .model import (
    CheckpointError,
    GeneratorConfig,
    RefinementConfig,
    TransformerConfig,
    make_denoiser,
)
from .sample import sample_many
from .schedule import SCHEDULE_KINDS, build_schedule
from .svg import plot_motion_strip, plot_schedule, plot_curves
from .train import (
    TrainConfig,
    load_train_checkpoint,
    save_train_checkpoint,
    train,
)

CONFIG_ENV = "POSECAST_CONFIG"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    """Bad configuration or usage; maps to exit code 1."""


class NumericError(RuntimeError):
    """Non-finite values where finite ones are required; exit code 3."""


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


DEFAULT_CONFIG = {
    "data": {
        "joints": 6,
        "history": 16,
        "future": 32,
        "clips": 600,
        "modes": 3,
        "noise": 0.01,
        "seed": 0,
    },
    "generator": {
        "transformer": {"layers": 4, "latent_dim": 64, "heads": 4, "dropout": 0.1},
        "refinement": {
            "stages": 3,
            "blocks_per_stage": 2,
            "latent_dim": 64,
            "dropout": 0.5,
            "dct_k": None,
        },
    },
    "schedule": {"kind": "cosine_offset1", "steps": 10},
    "train": {
        "epochs": 200,
        "batch_size": 16,
        "learning_rate": 1e-4,
        "lr_decay_factor": 0.99,
        "lr_decay_start_epoch": 80,
        "k": 2,
        "seed": 0,
        "checkpoint_every": 0,
    },
    "eval": {"samples": 50, "delta": 0.5, "train_fraction": 0.8, "seed": 0},
}

PAPER_GENERATOR = {
    "transformer": {"layers": 8, "latent_dim": 512, "heads": 8, "dropout": 0.1},
    "refinement": {
        "stages": 3,
        "blocks_per_stage": 2,
        "latent_dim": 256,
        "dropout": 0.5,
        "dct_k": None,
    },
}


def _merge(defaults, user, path=""):
    out = copy.deepcopy(defaults)
    for key, value in user.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config section {where} must be an object")
            out[key] = _merge(defaults[key], value, where)
        else:
            out[key] = value
    return out


def resolve_config(config_path, overrides):
    """defaults <- file <- flag overrides (dotted paths); unknown keys rejected."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if config_path is None:
        config_path = os.environ.get(CONFIG_ENV)
    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as fh:
                user = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {config_path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("config root must be a JSON object")
        if user.get("generator", {}).get("preset") == "paper":
            user = copy.deepcopy(user)
            preset = user["generator"].pop("preset")
            merged_gen = _merge(PAPER_GENERATOR, user["generator"])
            user["generator"] = merged_gen
            cfg["generator"] = copy.deepcopy(PAPER_GENERATOR)
        cfg = _merge(cfg, user)
    for dotted, value in overrides.items():
        if value is None:
            continue
        node = cfg
        parts = dotted.split(".")
        for part in parts[:-1]:
            node = node[part]
        node[parts[-1]] = value
    return cfg


def _synth_config(cfg):
    try:
        return SynthConfig(**cfg["data"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _generator_config(cfg, history, future, joints):
    g = cfg["generator"]
    try:
        return GeneratorConfig(
            transformer=TransformerConfig(**g["transformer"]),
            refinement=RefinementConfig(**g["refinement"]),
            history=history,
            future=future,
            joints=joints,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _train_config(cfg):
    kind = cfg["schedule"]["kind"]
    if kind not in SCHEDULE_KINDS:
        raise ConfigError(f"unknown schedule kind {kind!r}")
    try:
        return TrainConfig(
            diffusion_steps=cfg["schedule"]["steps"],
            schedule_kind=kind,
            **cfg["train"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def split_clips(clips, train_fraction):
    """Contiguous train/test split; both sides stay nonempty."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = len(clips)
    n_train = min(max(1, int(n * train_fraction)), n - 1)
    return clips[:n_train], clips[n_train:]


def _pairs_from_clips(clips, H, F):
    pairs = window(clips, H, F)
    if not pairs:
        raise MotionFormatError("length_mismatch", f"no clip is long enough for H+F={H + F}")
    return pairs


def _write_text(path, content):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(content)


def _loss_csv(trace):
    buf = io.StringIO()
    buf.write("epoch,mean_loss,lr\n")
    for epoch, loss, lr in trace:
        buf.write(f"{epoch},{float(loss)!r},{float(lr)!r}\n")
    return buf.getvalue()


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def cmd_datagen(args):
    cfg = resolve_config(
        args.config,
        {
            "data.joints": args.joints,
            "data.history": args.history,
            "data.future": args.future,
            "data.clips": args.clips,
            "data.modes": args.modes,
            "data.noise": args.noise,
            "data.seed": args.seed,
        },
    )
    synth = _synth_config(cfg)
    clips = synth_generate(synth)
    save_motion(clips, args.out, provenance={"config": cfg})
    print(f"wrote {len(clips)} clips to {args.out}")
    return EXIT_OK


def cmd_train(args):
    cfg = resolve_config(
        args.config,
        {
            "train.epochs": args.epochs,
            "train.batch_size": args.batch_size,
            "train.learning_rate": args.lr,
            "train.k": args.k,
            "train.seed": args.seed,
            "train.checkpoint_every": args.checkpoint_every,
            "schedule.steps": args.steps,
            "schedule.kind": args.schedule_kind,
            "eval.train_fraction": args.train_fraction,
        },
    )
    clips = load_motion(args.data)
    header = load_motion_header(args.data)
    H, F = cfg["data"]["history"], cfg["data"]["future"]
    joints = clips[0].skeleton.joints
    train_clips, _ = split_clips(clips, cfg["eval"]["train_fraction"])
    pairs = _pairs_from_clips(train_clips, H, F)
    gen_config = _generator_config(cfg, H, F, joints)
    train_config = _train_config(cfg)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    provenance = {"config": cfg, "data_header": {"clips": len(clips)}}

    resume = None
    if args.resume:
        resume, resume_gen, _, _ = load_train_checkpoint(args.resume)
        if resume_gen != gen_config:
            raise CheckpointError(
                "resume checkpoint was trained with a different generator config"
            )

    def on_checkpoint(epoch, result):
        tag = "" if epoch == train_config.epochs else f"_ep{epoch:04d}"
        save_train_checkpoint(
            out_dir / f"checkpoint{tag}.ckpt", result, gen_config, train_config, provenance
        )
        _write_text(out_dir / "loss.csv", _loss_csv(result.trace))

    skeleton = clips[0].skeleton
    result = train(
        pairs, skeleton, gen_config, train_config, on_checkpoint=on_checkpoint, resume=resume
    )
    _write_text(out_dir / "config.json", json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    final = result.trace[-1]
    print(f"trained {result.epoch} epochs; final mean loss {final[1]:.6f}")
    print(f"checkpoint: {out_dir / 'checkpoint.ckpt'}")
    return EXIT_OK


def cmd_sample(args):
    cfg = resolve_config(
        args.config,
        {"eval.samples": args.samples, "eval.seed": args.seed},
    )
    result, gen_config, train_config, extra = load_train_checkpoint(args.checkpoint)
    clips = load_motion(args.data)
    skeleton = clips[0].skeleton
    if skeleton.joints != gen_config.joints:
        raise MotionFormatError(
            "length_mismatch",
            f"checkpoint expects {gen_config.joints} joints, data has {skeleton.joints}",
        )
    H, F = gen_config.history, gen_config.future
    _, test_clips = split_clips(clips, cfg["eval"]["train_fraction"])
    if any(clip.length < H + F for clip in test_clips):
        raise MotionFormatError("length_mismatch", f"test clips shorter than H+F={H + F}")

    table = build_schedule(train_config.schedule_kind, train_config.diffusion_steps)
    denoiser = make_denoiser(result.params, gen_config, table.T)
    S = cfg["eval"]["samples"]
    seed = cfg["eval"]["seed"]
    n_train = len(clips) - len(test_clips)

    out_clips = []
    history_indices = []
    for i, clip in enumerate(test_clips):
        x = clip.frames[:H]
        pset = sample_many(
            x, S, denoiser, table, seed=[seed, i], shape=(F, skeleton.joints, 3)
        )
        if not np.all(np.isfinite(pset.samples)):
            raise NumericError(f"non-finite sample for history {i}")
        history_indices.append(n_train + i)
        for s in range(S):
            out_clips.append(
                MotionClip(skeleton=skeleton, frames=pset.samples[s],
                           frame_rate=clip.frame_rate)
            )
    meta = {
        "samples_per_history": S,
        "history_indices": history_indices,
        "seed": seed,
        "T": table.T,
        "schedule_kind": table.kind,
        "checkpoint": _sha256(args.checkpoint),
        "config": cfg,
    }
    save_motion(out_clips, args.out, provenance=meta)
    _write_text(Path(str(args.out) + ".json"), json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"wrote {S} samples for each of {len(test_clips)} histories to {args.out}")
    return EXIT_OK


def _metric_csv(rows):
    names = ["apd", "apde", "ade", "fde", "mmade", "mmfde", "cmd"]
    buf = io.StringIO()
    buf.write("row," + ",".join(names) + "\n")
    for label, record in rows:
        buf.write(label + "," + ",".join(repr(float(getattr(record, n))) for n in names) + "\n")
    return buf.getvalue()


def _metric_table(rows):
    names = ["apd", "apde", "ade", "fde", "mmade", "mmfde", "cmd"]
    widths = [max(len(n), 10) for n in names]
    head = "row            " + "  ".join(n.rjust(w) for n, w in zip(names, widths))
    lines = [head]
    for label, record in rows:
        vals = [f"{getattr(record, n):.4f}".rjust(w) for n, w in zip(names, widths)]
        lines.append(label.ljust(15) + "  ".join(vals))
    return "\n".join(lines)


def cmd_eval(args):
    cfg = resolve_config(args.config, {"eval.delta": args.delta})
    sidecar_path = Path(str(args.predictions) + ".json")
    if not sidecar_path.exists():
        raise MotionFormatError("truncated", f"missing prediction sidecar {sidecar_path}")
    with open(sidecar_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    pred_clips = load_motion(args.predictions)
    clips = load_motion(args.data)
    if pred_clips[0].skeleton.parents != clips[0].skeleton.parents:
        raise MotionFormatError(
            "length_mismatch", "prediction skeleton does not match dataset skeleton"
        )
    S = meta["samples_per_history"]
    history_indices = meta["history_indices"]
    if len(pred_clips) != S * len(history_indices):
        raise MotionFormatError(
            "length_mismatch",
            f"prediction file holds {len(pred_clips)} clips, sidecar promises {S * len(history_indices)}",
        )
    F = pred_clips[0].length
    H = cfg["data"]["history"]

    train_clips, _ = split_clips(clips, cfg["eval"]["train_fraction"])
    ref_profile = displacement_profile(
        np.stack([c.frames[H : H + F] for c in train_clips])
    )

    histories, futures, sample_sets, zv_sets = [], [], [], []
    for slot, clip_idx in enumerate(history_indices):
        clip = clips[clip_idx]
        x = clip.frames[:H]
        histories.append(x)
        futures.append(clip.frames[H : H + F])
        block = np.stack(
            [pred_clips[slot * S + s].frames for s in range(S)]
        )
        sample_sets.append(block)
        zv_sets.append(zero_velocity_baseline(x, F, count=1))

    delta = cfg["eval"]["delta"]
    record, per_history = evaluate(histories, futures, sample_sets, ref_profile, delta)
    zv_record, _ = evaluate(histories, futures, zv_sets, ref_profile, delta)
    rows = [("model", record), ("zero_velocity", zv_record)]
    print(_metric_table(rows))
    if args.out:
        _write_text(args.out, _metric_csv(rows))
    if args.per_history:
        buf = io.StringIO()
        for row in per_history:
            buf.write(json.dumps(row, sort_keys=True) + "\n")
        _write_text(args.per_history, buf.getvalue())
    return EXIT_OK


def cmd_plot(args):
    cfg = resolve_config(args.config, {})
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    wrote = []

    if args.schedule_kinds:
        kinds = [k.strip() for k in args.schedule_kinds.split(",") if k.strip()]
        for kind in kinds:
            if kind not in SCHEDULE_KINDS:
                raise ConfigError(f"unknown schedule kind {kind!r}")
        steps = args.steps if args.steps is not None else cfg["schedule"]["steps"]
        tables = [build_schedule(kind, steps) for kind in kinds]
        _write_text(out_dir / "schedule.svg", plot_schedule(tables))
        for table in tables:
            _write_text(out_dir / f"schedule_{table.kind}.csv", table.to_csv())
        wrote.append("schedule.svg")

    if args.loss_csv:
        try:
            lines = Path(args.loss_csv).read_text(encoding="utf-8").strip().splitlines()
        except FileNotFoundError:
            raise MotionFormatError("truncated", f"loss csv not found: {args.loss_csv}") from None
        if len(lines) < 2 or lines[0] != "epoch,mean_loss,lr":
            raise MotionFormatError("length_mismatch", "malformed loss csv")
        pts = []
        for row in lines[1:]:
            epoch, loss, _ = row.split(",")
            pts.append((float(epoch), float(loss)))
        _write_text(out_dir / "loss.svg", plot_curves([("mean loss", pts)],
                                                      x_label="epoch", y_label="loss"))
        wrote.append("loss.svg")

    if args.predictions:
        sidecar_path = Path(str(args.predictions) + ".json")
        if not args.data or not sidecar_path.exists():
            raise ConfigError("plotting predictions requires --data and the prediction sidecar")
        with open(sidecar_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        pred_clips = load_motion(args.predictions)
        if not pred_clips:
            raise MotionFormatError("length_mismatch", "prediction file holds no clips")
        clips = load_motion(args.data)
        S = meta["samples_per_history"]
        H = cfg["data"]["history"]
        idx = meta["history_indices"][0]
        clip = clips[idx]
        F = pred_clips[0].length
        samples = np.stack([pred_clips[s].frames for s in range(S)])
        strip = plot_motion_strip(
            clip.frames[:H], samples, clip.skeleton, gt=clip.frames[H : H + F]
        )
        _write_text(out_dir / "predictions.svg", strip)
        wrote.append("predictions.svg")

    if not wrote:
        raise ConfigError("nothing to plot: pass --schedule-kinds, --loss-csv, or --predictions")
    print("wrote " + ", ".join(wrote) + f" to {out_dir}")
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="posecast", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help=f"JSON config path (default ${CONFIG_ENV})")

    p = sub.add_parser("datagen", help="generate a synthetic motion dataset")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--joints", type=int)
    p.add_argument("--history", type=int)
    p.add_argument("--future", type=int)
    p.add_argument("--clips", type=int)
    p.add_argument("--modes", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_datagen)

    p = sub.add_parser("train", help="train the motion generator")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--steps", type=int, help="diffusion step count T")
    p.add_argument("--schedule-kind", dest="schedule_kind", choices=SCHEDULE_KINDS)
    p.add_argument("--seed", type=int)
    p.add_argument("--train-fraction", type=float, dest="train_fraction")
    p.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("sample", help="draw stochastic futures for test histories")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("eval", help="compute the metric suite for predictions")
    common(p)
    p.add_argument("--predictions", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--delta", type=float)
    p.add_argument("--out", help="metrics CSV path")
    p.add_argument("--per-history", dest="per_history", help="per-history JSONL path")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("plot", help="emit SVG figures")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--schedule-kinds", dest="schedule_kinds",
                   help="comma-separated schedule kinds to plot")
    p.add_argument("--steps", type=int)
    p.add_argument("--loss-csv", dest="loss_csv")
    p.add_argument("--predictions")
    p.add_argument("--data")
    p.set_defaults(fn=cmd_plot)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MotionFormatError, CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
