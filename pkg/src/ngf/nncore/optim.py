"""ADAM with a one-cycle learning-rate schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class OneCycleSchedule:
    """Linear warmup from ``max_lr / div_factor`` to ``max_lr``, then cosine
    annealing down to ``max_lr / (div_factor * final_div_factor)``.

    Steps are zero-based; the peak sits at ``peak_step``.
    """

    max_lr: float
    total_steps: int
    warmup_fraction: float = 0.3
    div_factor: float = 25.0
    final_div_factor: float = 1e4

    def __post_init__(self):
        if self.total_steps < 1:
            raise ValueError(f"total_steps must be >= 1, got {self.total_steps}")

    @property
    def initial_lr(self):
        return self.max_lr / self.div_factor

    @property
    def final_lr(self):
        return self.initial_lr / self.final_div_factor

    @property
    def peak_step(self):
        return int(round(self.warmup_fraction * (self.total_steps - 1)))

    def lr_at(self, step: int) -> float:
        step = min(max(int(step), 0), self.total_steps - 1)
        peak = self.peak_step
        if step < peak:
            return self.initial_lr + (self.max_lr - self.initial_lr) * step / peak
        span = self.total_steps - 1 - peak
        if span == 0:
            return self.max_lr
        t = (step - peak) / span
        return self.final_lr + 0.5 * (self.max_lr - self.final_lr) * (1.0 + math.cos(math.pi * t))


class Adam:
    """ADAM over a list of parameter tensors, reading ``p.grad``.

    ``step(grad_scale)`` multiplies gradients before the update, which is how
    gradients summed over ``k`` micro-batches are averaged (``1/k``). With
    ``clip_norm`` set, the scaled gradient is rescaled to that global norm
    whenever it is larger.
    """

    def __init__(self, params, schedule, beta1=0.9, beta2=0.999, eps=1e-8, clip_norm=None):
        if clip_norm is not None and not clip_norm > 0:
            raise ValueError(f"clip_norm must be positive, got {clip_norm}")
        self.params = list(params)
        self.clip_norm = clip_norm
        self.schedule = schedule
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    @property
    def lr(self):
        return self.schedule.lr_at(self.t)

    def step(self, grad_scale=1.0):
        lr = self.schedule.lr_at(self.t)
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        grads = [np.zeros_like(p.data) if p.grad is None else p.grad * grad_scale for p in self.params]
        if self.clip_norm is not None:
            norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
            if norm > self.clip_norm:
                grads = [g * (self.clip_norm / norm) for g in grads]
        for p, m, v, g in zip(self.params, self.m, self.v, grads):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return lr

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def accumulated_step(optimizer: Adam, n_accumulated: int):
    """Apply one update with gradients summed over ``n_accumulated`` micro-batches averaged."""
    if n_accumulated < 1:
        raise ValueError("n_accumulated must be >= 1")
    lr = optimizer.step(grad_scale=1.0 / n_accumulated)
    optimizer.zero_grad()
    return lr
