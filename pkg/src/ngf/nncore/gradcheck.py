"""Central finite-difference gradient checks.

The forward passes of the finite-difference side run in long double by
default. With float64 the central difference at step 1e-5 carries roundoff of
about ``eps * |loss| / step`` (~1e-11 for an O(1) loss), which swamps
gradient components near 1e-8 regardless of the tape's correctness.
"""
from __future__ import annotations

import numpy as np

from .tensor import Tape, compute_precision


def numerical_gradient(loss_fn, tensors, step=1e-5, dtype=np.longdouble):
    """Central differences of the scalar ``loss_fn()`` w.r.t. each tensor's data."""
    originals = [t.data for t in tensors]
    grads = []
    try:
        with compute_precision(dtype):
            for t in tensors:
                t.data = t.data.astype(dtype)
            for t in tensors:
                g = np.zeros(t.data.shape, dtype=dtype)
                flat = t.data.reshape(-1)
                for i in range(flat.size):
                    orig = flat[i]
                    flat[i] = orig + step
                    up = loss_fn().data.reshape(())
                    flat[i] = orig - step
                    down = loss_fn().data.reshape(())
                    flat[i] = orig
                    g.reshape(-1)[i] = (up - down) / (2 * dtype(step))
                grads.append(g.astype(np.float64))
    finally:
        for t, data in zip(tensors, originals):
            t.data = data
    return grads


def analytic_gradient(loss_fn, tensors):
    for t in tensors:
        t.grad = None
    with Tape() as tape:
        loss = loss_fn()
        tape.backward(loss)
    return [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]


def max_relative_error(analytic, numeric, floor=1e-8):
    """Largest ``|a - n| / max(|a|, |n|)`` over entries where either exceeds ``floor``."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        scale = np.maximum(np.abs(a), np.abs(n))
        mask = scale > floor
        if mask.any():
            worst = max(worst, float(np.max(np.abs(a - n)[mask] / scale[mask])))
    return worst


def check_gradients(loss_fn, tensors, step=1e-5, floor=1e-8, dtype=np.longdouble):
    """Return the worst relative disagreement between tape and finite-difference gradients."""
    analytic = analytic_gradient(loss_fn, tensors)
    numeric = numerical_gradient(loss_fn, tensors, step, dtype)
    return max_relative_error(analytic, numeric, floor)
