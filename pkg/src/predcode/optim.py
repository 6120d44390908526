"""Optimizers over lists of parameter arrays, plus the warmup-cosine
learning-rate schedule.

State inference uses heavy-ball SGD (optionally with Langevin noise);
weights use AdamW with decoupled decay or plain SGD. Optimizers mutate
the given arrays in place and keep per-slot buffers keyed by position,
so a given instance must always be called with the same parameter list.
"""

from __future__ import annotations

import numpy as np

from .tensor import Array, ParameterError, make_rng


def clip_grads(grads: list[Array], max_norm: float) -> None:
    """Scale the whole gradient list so its global L2 norm is <= max_norm."""
    if max_norm <= 0:
        return
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > max_norm:
        scale = max_norm / total
        for g in grads:
            g *= scale


class SgdMomentum:
    """Heavy-ball SGD: v <- m*v + g; p <- p - lr*v."""

    def __init__(self, lr: float, momentum: float = 0.0):
        if not 0.0 <= momentum < 1.0:
            raise ParameterError(f"momentum must be in [0, 1), got {momentum}")
        self.lr = float(lr)
        self.momentum = float(momentum)
        self._velocity: list[Array] | None = None

    def reset(self) -> None:
        self._velocity = None

    def _buffers(self, params: list[Array]) -> list[Array]:
        if self._velocity is None:
            self._velocity = [np.zeros_like(p) for p in params]
        return self._velocity

    def step(self, params: list[Array], grads: list[Array],
             masks: list[Array | None] | None = None) -> None:
        if len(params) != len(grads):
            raise ParameterError("params and grads length mismatch")
        vel = self._buffers(params) if self.momentum != 0.0 else None
        for i, (p, g) in enumerate(zip(params, grads)):
            if p.shape != g.shape:
                raise ParameterError(
                    f"grad shape {g.shape} != param shape {p.shape} (slot {i})"
                )
            if vel is None:
                p -= self.lr * g
            else:
                v = vel[i]
                v *= self.momentum
                v += g
                p -= self.lr * v


class NoisySgd(SgdMomentum):
    """Heavy-ball SGD on noise-corrupted gradients (unadjusted Langevin).

    Gradient noise has standard deviation sqrt(2*(1-m)*sigma2/lr), so the
    state update carries a noise term of variance 2*lr*(1-m)*sigma2: the
    first-order Langevin discretization at m=0, and its second-order
    (friction 1-m) counterpart otherwise. On a quadratic energy of
    curvature k the chain's stationary variance is
    sigma2/k * 1/(1 - lr*k/(2*(1+m))), i.e. sigma2/k with an O(lr*k)
    discretization bias. With ``sigma2 = 0`` the step is bit-identical to
    SgdMomentum.
    """

    def __init__(self, lr: float, momentum: float = 0.0, sigma2: float = 1.0,
                 rng: np.random.Generator | int | None = None):
        super().__init__(lr, momentum)
        if sigma2 < 0:
            raise ParameterError(f"sigma2 must be >= 0, got {sigma2}")
        self.sigma2 = float(sigma2)
        self.rng = make_rng(rng)

    def step(self, params: list[Array], grads: list[Array],
             masks: list[Array | None] | None = None) -> None:
        if self.sigma2 == 0.0:
            super().step(params, grads, masks)
            return
        scale = np.sqrt(2.0 * (1.0 - self.momentum) * self.sigma2 / self.lr)
        noisy = []
        for i, g in enumerate(grads):
            n = self.rng.standard_normal(g.shape)
            mask = None if masks is None else masks[i]
            if mask is not None:
                n[:, mask] = 0.0  # pinned entries receive no noise
            noisy.append(g + scale * n)
        super().step(params, noisy, masks)


class AdamW:
    """Adam with bias correction and decoupled weight decay.

    Decay multiplies parameters by (1 - lr*weight_decay) independently of
    the gradient-driven step, so with zero gradients and nonzero decay the
    parameters still shrink geometrically.
    """

    def __init__(self, lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.lr = float(lr)
        self.beta1, self.beta2 = float(betas[0]), float(betas[1])
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.t = 0
        self._m: list[Array] | None = None
        self._v: list[Array] | None = None

    def reset(self) -> None:
        self.t = 0
        self._m = None
        self._v = None

    def step(self, params: list[Array], grads: list[Array],
             masks: list[Array | None] | None = None) -> None:
        if len(params) != len(grads):
            raise ParameterError("params and grads length mismatch")
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for i, (p, g) in enumerate(zip(params, grads)):
            if p.shape != g.shape:
                raise ParameterError(
                    f"grad shape {g.shape} != param shape {p.shape} (slot {i})"
                )
            m, v = self._m[i], self._v[i]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            if self.weight_decay != 0.0:
                p *= 1.0 - self.lr * self.weight_decay
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class WarmupCosine:
    """Linear warmup to peak_lr, then a single cosine decay to min_lr."""

    def __init__(self, peak_lr: float, warmup_steps: int, total_steps: int,
                 min_lr: float = 0.0):
        if total_steps < 1:
            raise ParameterError("total_steps must be >= 1")
        if not 0 <= warmup_steps <= total_steps:
            raise ParameterError("need 0 <= warmup_steps <= total_steps")
        self.peak_lr = float(peak_lr)
        self.min_lr = float(min_lr)
        self.warmup_steps = int(warmup_steps)
        self.total_steps = int(total_steps)

    def lr_at(self, step: int) -> float:
        step = min(max(int(step), 0), self.total_steps)
        if self.warmup_steps > 0 and step < self.warmup_steps:
            frac = step / self.warmup_steps
            return self.min_lr + (self.peak_lr - self.min_lr) * frac
        span = self.total_steps - self.warmup_steps
        if span == 0:
            return self.min_lr
        frac = (step - self.warmup_steps) / span
        cos = 0.5 * (1.0 + np.cos(np.pi * frac))
        return self.min_lr + (self.peak_lr - self.min_lr) * cos
