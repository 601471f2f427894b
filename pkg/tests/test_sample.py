import numpy as np
import pytest

from posecast.sample import PredictionSet, sample_many, sample_one
from posecast.schedule import build_schedule


def oracle_denoiser(y0):
    def denoise(y_t, x, t):
        return y0.copy()

    return denoise


def counting(denoiser):
    calls = []

    def wrapped(y_t, x, t):
        calls.append(t)
        return denoiser(y_t, x, t)

    return wrapped, calls


def test_oracle_generator_fixed_point():
    rng = np.random.default_rng(0)
    y0 = rng.normal(size=(5, 2, 3))
    x = rng.normal(size=(4, 2, 3))
    for T_steps in (1, 5, 10):
        table = build_schedule("cosine_offset1", T_steps)
        out = sample_one(x, oracle_denoiser(y0), table, np.random.default_rng(1), shape=y0.shape)
        assert np.max(np.abs(out - y0)) < 1e-12


def test_chain_length_is_T_calls():
    rng = np.random.default_rng(1)
    y0 = rng.normal(size=(3, 2, 3))
    x = rng.normal(size=(3, 2, 3))
    for T_steps in (1, 4, 9):
        table = build_schedule("cosine_offset1", T_steps)
        wrapped, calls = counting(oracle_denoiser(y0))
        sample_one(x, wrapped, table, np.random.default_rng(2), shape=y0.shape)
        assert calls == list(range(T_steps, 0, -1))


def test_T1_is_single_call_on_pure_noise():
    table = build_schedule("cosine_offset1", 1)
    seen = {}

    def denoise(y_t, x, t):
        seen["y_t"] = y_t.copy()
        seen["t"] = t
        return np.zeros_like(y_t)

    x = np.zeros((4, 1, 3))
    sample_one(x, denoise, table, np.random.default_rng(3))
    assert seen["t"] == 1
    ref = np.random.default_rng(3).standard_normal((4, 1, 3))
    assert np.array_equal(seen["y_t"], ref)


def test_sample_many_deterministic_and_ordered():
    rng = np.random.default_rng(4)
    y0 = rng.normal(size=(4, 2, 3))
    x = rng.normal(size=(4, 2, 3))
    table = build_schedule("cosine_offset1", 5)

    def jitter_denoiser(y_t, x_, t):
        return y0 + 0.1 * y_t  # leaks chain noise so draws differ

    a = sample_many(x, 6, jitter_denoiser, table, seed=7, shape=y0.shape)
    b = sample_many(x, 6, jitter_denoiser, table, seed=7, shape=y0.shape)
    assert np.array_equal(a.samples, b.samples)
    assert a.count == 6
    assert a.meta["seed"] == 7 and a.meta["T"] == 5
    assert a.meta["schedule_kind"] == "cosine_offset1"

    c = sample_many(x, 6, jitter_denoiser, table, seed=8, shape=y0.shape)
    assert np.linalg.norm(a.samples - c.samples) > 1e-8

    one = sample_many(x, 1, jitter_denoiser, table, seed=7, shape=y0.shape)
    assert one.count == 1
    assert np.array_equal(one.samples[0], a.samples[0])


def test_distinct_rng_seeds_distinct_samples():
    rng = np.random.default_rng(5)
    y0 = rng.normal(size=(3, 1, 3))
    x = rng.normal(size=(3, 1, 3))
    table = build_schedule("cosine_offset1", 4)

    def jitter_denoiser(y_t, x_, t):
        return y0 + 0.05 * y_t

    a = sample_one(x, jitter_denoiser, table, np.random.default_rng(10), shape=y0.shape)
    b = sample_one(x, jitter_denoiser, table, np.random.default_rng(11), shape=y0.shape)
    assert np.linalg.norm(a - b) > 1e-8


def test_prediction_set_validation():
    with pytest.raises(ValueError):
        PredictionSet(history=np.zeros((2, 1, 3)), samples=np.zeros((3, 2, 3)))
    bad = np.zeros((1, 2, 1, 3))
    bad[0, 0, 0, 0] = np.inf
    with pytest.raises(ValueError):
        PredictionSet(history=np.zeros((2, 1, 3)), samples=bad)


def test_sample_many_rejects_zero():
    table = build_schedule("cosine_offset1", 2)
    with pytest.raises(ValueError):
        sample_many(np.zeros((2, 1, 3)), 0, oracle_denoiser(np.zeros((2, 1, 3))), table, seed=0)
