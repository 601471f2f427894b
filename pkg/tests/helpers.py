"""Shared oracles: central finite differences and gradient agreement."""

import numpy as np

from posecast import tensor as T


def numeric_grad(forward, leaf, coords=None, h=1e-5):
    """Central finite-difference gradient of forward() w.r.t. leaf entries.

    forward must recompute the scalar loss from current leaf data each call.
    Returns a dict {flat_index: derivative} for the requested coordinates
    (all of them when coords is None).
    """
    flat = leaf.data.reshape(-1)
    if coords is None:
        coords = range(flat.size)
    grads = {}
    with T.no_grad():
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            fp = float(forward())
            flat[i] = orig - h
            fm = float(forward())
            flat[i] = orig
            grads[i] = (fp - fm) / (2.0 * h)
    return grads


def grad_agreement(forward, leaves, coords_per_leaf=None, h=1e-5, rng=None):
    """Max relative error between tape gradients and finite differences.

    Runs one recorded forward/backward, then numeric probes. Relative error
    uses max(1, |analytic|, |numeric|) as the denominator so near-zero
    gradients are compared absolutely.
    """
    for leaf in leaves:
        leaf.zero_grad()
    T.tape().clear()
    loss = forward()
    T.backward(loss)
    worst = 0.0
    for leaf in leaves:
        assert leaf.grad is not None, "leaf received no gradient"
        analytic = leaf.grad.reshape(-1)
        n = leaf.data.size
        if coords_per_leaf is None or coords_per_leaf >= n:
            coords = range(n)
        else:
            assert rng is not None
            coords = rng.choice(n, size=coords_per_leaf, replace=False)
        numeric = numeric_grad(forward, leaf, coords=coords, h=h)
        for i, num in numeric.items():
            ana = analytic[i]
            err = abs(ana - num) / max(1.0, abs(ana), abs(num))
            worst = max(worst, err)
    return worst
