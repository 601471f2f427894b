import math

import numpy as np
import pytest

from posecast.schedule import (
    SCHEDULE_KINDS,
    alpha_bar,
    build_schedule,
    diffuse,
    diffuse_step,
)


def test_offset1_starts_at_half():
    table = build_schedule("cosine_offset1", 10)
    assert table.alpha_bar[0] == 0.5
    assert alpha_bar(table, 0) == 0.5


def test_offset1_fully_corrupts():
    for T in (1, 2, 10, 100, 1000):
        table = build_schedule("cosine_offset1", T)
        assert table.alpha_bar[T] <= 1e-5


def test_offset1_midpoint_closed_form():
    # at t = T/2 the raw cosine form evaluates to cos(3*pi/8)^2
    expected = math.cos(3.0 * math.pi / 8.0) ** 2
    for T in (2, 10, 100):
        table = build_schedule("cosine_offset1", T)
        assert abs(table.alpha_bar[T // 2] - expected) < 1e-9
    assert abs(expected - 0.146447) < 1e-6


def test_offset1_signal_ceiling():
    # no step carries more than half the signal: max alpha_bar == 0.5
    for T in (1, 5, 50):
        table = build_schedule("cosine_offset1", T)
        assert table.alpha_bar.max() == table.alpha_bar[0] == 0.5


def test_standard_starts_near_one():
    table = build_schedule("cosine_standard", 50)
    assert abs(table.alpha_bar[0] - 1.0) < 1e-6
    assert table.alpha_bar[50] <= 1e-5


def test_alpha_bar_strictly_decreasing_every_kind_every_T():
    for kind in SCHEDULE_KINDS:
        for T in range(1, 1001):
            bar = build_schedule(kind, T).alpha_bar
            assert np.all(np.diff(bar) < 0), f"{kind} T={T} not strictly decreasing"


def test_alpha_in_unit_interval():
    for kind in SCHEDULE_KINDS:
        for T in (1, 2, 7, 100):
            a = build_schedule(kind, T).alpha
            assert np.all(a > 0) and np.all(a < 1)


def test_product_consistency():
    for kind in SCHEDULE_KINDS:
        table = build_schedule(kind, 37)
        for t in range(1, 38):
            assert abs(table.alpha_bar[t] - table.alpha_bar[t - 1] * table.alpha[t - 1]) < 1e-12


def test_alpha_bar_matches_running_product():
    table = build_schedule("cosine_standard", 25)
    prod = table.alpha_bar[0]
    for t in range(1, 26):
        prod *= table.alpha[t - 1]
        assert abs(alpha_bar(table, t) - prod) < 1e-12


def test_rejects_T_zero_and_bad_kind():
    with pytest.raises(ValueError):
        build_schedule("cosine_offset1", 0)
    with pytest.raises(ValueError):
        build_schedule("quadratic", 10)


def test_alpha_bar_range_check():
    table = build_schedule("linear", 5)
    with pytest.raises(ValueError):
        alpha_bar(table, 6)
    with pytest.raises(ValueError):
        alpha_bar(table, -1)


def test_diffuse_at_T_is_noise_dominated():
    table = build_schedule("cosine_offset1", 10)
    y0 = np.full((4, 2, 3), 7.0)
    eps = np.random.default_rng(0).standard_normal((4, 2, 3))
    out = diffuse(y0, 10, eps, table)
    ab = table.alpha_bar[10]
    assert np.allclose(out, math.sqrt(ab) * y0 + math.sqrt(1 - ab) * eps)
    assert np.max(np.abs(out - eps)) < 0.02  # ab <= 1e-5


def test_diffuse_noise_free_branch():
    table = build_schedule("cosine_standard", 10)
    y0 = np.random.default_rng(1).normal(size=(3, 2, 3))
    out = diffuse(y0, 4, np.zeros_like(y0), table)
    assert np.allclose(out, math.sqrt(table.alpha_bar[4]) * y0)


def test_diffuse_t0_standard_returns_signal():
    table = build_schedule("cosine_standard", 10)
    y0 = np.ones((2, 1, 3))
    eps = np.random.default_rng(2).standard_normal(y0.shape)
    out = diffuse(y0, 0, eps, table)
    assert np.max(np.abs(out - y0)) < 0.1


def test_diffuse_shape_and_range_errors():
    table = build_schedule("linear", 5)
    y0 = np.zeros((2, 1, 3))
    with pytest.raises(ValueError):
        diffuse(y0, 6, np.zeros_like(y0), table)
    with pytest.raises(ValueError):
        diffuse(y0, 1, np.zeros((2, 1, 2)), table)


def test_diffuse_monte_carlo_moments():
    # mean/std of 1e5 draws must match the closed form within 1%
    table = build_schedule("cosine_offset1", 10)
    rng = np.random.default_rng(3)
    n = 100_000
    y0 = np.full((n, 2), 1.5)
    for t in (1, 5, 10):
        eps = rng.standard_normal((n, 2))
        out = diffuse(y0, t, eps, table)
        ab = table.alpha_bar[t]
        want_mean = math.sqrt(ab) * 1.5
        want_var = 1.0 - ab
        assert abs(out.mean() - want_mean) <= 0.01 * max(1.0, abs(want_mean))
        assert abs(out.var() - want_var) <= 0.01 * want_var


def test_step_composition_matches_single_shot_moments():
    # diffuse(.,0) then t single transitions == diffuse(.,t) in distribution
    table = build_schedule("cosine_offset1", 8)
    rng = np.random.default_rng(4)
    n = 100_000
    t = 5
    y = diffuse(np.full((n,), 2.0), 0, rng.standard_normal(n), table)
    for s in range(1, t + 1):
        y = diffuse_step(y, s, rng.standard_normal(n), table)
    ab = table.alpha_bar[t]
    want_mean = math.sqrt(ab) * 2.0
    want_var = 1.0 - ab
    assert abs(y.mean() - want_mean) <= 0.01 * max(1.0, abs(want_mean))
    assert abs(y.var() - want_var) <= 0.01 * want_var


def test_csv_dump_round_trips():
    table = build_schedule("cosine_offset1", 4)
    lines = table.to_csv().strip().splitlines()
    assert lines[0] == "t,alpha,alpha_bar"
    assert len(lines) == 6
    t0 = lines[1].split(",")
    assert t0[0] == "0" and t0[1] == "" and float(t0[2]) == 0.5
    for t in range(1, 5):
        row = lines[t + 1].split(",")
        assert float(row[1]) == table.alpha[t - 1]
        assert float(row[2]) == table.alpha_bar[t]


def test_table_is_immutable():
    table = build_schedule("linear", 3)
    with pytest.raises(ValueError):
        table.alpha_bar[0] = 2.0
