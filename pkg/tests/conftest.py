"""Session fixtures: the pinned acceptance artifacts, built once via the CLI."""

import json
import time

import pytest

from posecast.cli import main

# Pinned end-to-end acceptance setup: dataset dims come from the criteria,
# the training budget is tuned to converge well inside the runtime cap.
ACCEPT = {
    "data": {
        "joints": 6,
        "history": 16,
        "future": 32,
        "clips": 120,
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
        "epochs": 100,
        "batch_size": 16,
        "learning_rate": 5e-4,
        "lr_decay_factor": 0.99,
        "lr_decay_start_epoch": 40,
        "k": 2,
        "seed": 0,
        "checkpoint_every": 0,
    },
    "eval": {"samples": 50, "delta": 0.5, "train_fraction": 0.8, "seed": 1},
}


def run_cli(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="session")
def timings():
    return {}


@pytest.fixture(scope="session")
def accept_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="session")
def accept_config(accept_dir):
    path = accept_dir / "config.json"
    path.write_text(json.dumps(ACCEPT, indent=2, sort_keys=True))
    return path


@pytest.fixture(scope="session")
def accept_dataset(accept_dir, accept_config, timings):
    path = accept_dir / "data.pcm"
    t0 = time.perf_counter()
    assert run_cli("datagen", "--config", accept_config, "--out", path) == 0
    timings["datagen"] = time.perf_counter() - t0
    return path


@pytest.fixture(scope="session")
def accept_train_k2(accept_dir, accept_config, accept_dataset, timings):
    out = accept_dir / "train_k2"
    t0 = time.perf_counter()
    assert run_cli("train", "--config", accept_config, "--data", accept_dataset, "--out", out) == 0
    timings["train_k2"] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def accept_train_k1(accept_dir, accept_config, accept_dataset, timings):
    out = accept_dir / "train_k1"
    t0 = time.perf_counter()
    assert run_cli(
        "train", "--config", accept_config, "--data", accept_dataset, "--out", out, "--k", 1
    ) == 0
    timings["train_k1"] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def accept_preds_k2(accept_dir, accept_config, accept_dataset, accept_train_k2, timings):
    path = accept_dir / "preds_k2.pcm"
    t0 = time.perf_counter()
    assert run_cli(
        "sample", "--config", accept_config,
        "--checkpoint", accept_train_k2 / "checkpoint.ckpt",
        "--data", accept_dataset, "--out", path,
    ) == 0
    timings["sample_k2"] = time.perf_counter() - t0
    return path


@pytest.fixture(scope="session")
def accept_preds_k1(accept_dir, accept_config, accept_dataset, accept_train_k1, timings):
    path = accept_dir / "preds_k1.pcm"
    t0 = time.perf_counter()
    assert run_cli(
        "sample", "--config", accept_config,
        "--checkpoint", accept_train_k1 / "checkpoint.ckpt",
        "--data", accept_dataset, "--out", path,
    ) == 0
    timings["sample_k1"] = time.perf_counter() - t0
    return path
