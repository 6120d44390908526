"""Analytic energy gradients with respect to states and weights.

Every gradient is assembled from quantities local to one level: the
level's own error and the error arriving from the level above. State
gradients are per-sample (each row of a state only enters its own
sample's energy), while weight gradients are averaged over the batch so
learning rates transfer across batch sizes.

``fd_state_grads`` / ``fd_weight_grads`` are slow central-difference
oracles used by the test suite; they re-evaluate the energy directly and
share no code with the analytic path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import CROSS_ENTROPY, PCNetwork
from .tensor import Array, softmax


@dataclass
class WeightGrads:
    """Per-layer (dW, db) pairs plus the prior-mean gradient if enabled."""

    dW: list[Array]
    db: list[Array]
    dtheta0: Array | None = None

    def as_list(self) -> list[Array]:
        """Flat list aligned with ``PCNetwork.param_arrays()``."""
        out = []
        for w, b in zip(self.dW, self.db):
            out.append(w)
            out.append(b)
        if self.dtheta0 is not None:
            out.append(self.dtheta0)
        return out


def _output_error(net: PCNetwork) -> Array:
    """dF/du at the output level, per sample."""
    vode = net.output_vode
    if vode.energy_kind == CROSS_ENTROPY:
        if vode.target is None:
            return np.zeros_like(vode.u)
        return softmax(vode.u, axis=1) - vode.target
    return (vode.u - vode.h) / vode.sigma2


def _deltas(net: PCNetwork) -> list[Array]:
    """Backpropagated-through-one-layer errors, one per level 1..L.

    delta_l = (dF/du_l) * act'(pre_l); this is the only cross-level
    quantity either gradient needs.
    """
    deltas = []
    for i, (layer, vode) in enumerate(zip(net.layers, net.vodes)):
        if i == net.n_levels - 1:
            e_u = _output_error(net)
        else:
            e_u = (vode.u - vode.h) / vode.sigma2
        deltas.append(e_u * layer.activation.deriv(vode.pre))
    return deltas


def _mask_slot(grad: Array, vode) -> Array:
    if vode.clamped:
        grad[:] = 0.0
    elif vode.frozen_mask is not None:
        grad[:, vode.frozen_mask] = 0.0
    return grad


def state_grads(net: PCNetwork) -> list[Array]:
    """Per-sample energy gradient for each free-state slot.

    Aligned with ``net.state_slots()``. Entries pinned by a clamp or a
    frozen mask are zeroed so a descent step leaves them untouched.
    """
    net._require_fresh()
    deltas = _deltas(net)
    grads: list[Array] = []
    for slot in net.state_slots():
        vode = slot.vode
        if slot.level == 0:
            if net.prior is not None and net.prior.enabled:
                g = vode.h - net.prior.theta0
            else:
                g = np.zeros_like(vode.h)
        else:
            g = (vode.h - vode.u) / vode.sigma2
        if slot.level < net.n_levels:
            layer_above = net.layers[slot.level]
            g = g + deltas[slot.level] @ layer_above.W
        grads.append(_mask_slot(g, vode))
    return grads


def weight_grads(net: PCNetwork) -> WeightGrads:
    """Batch-mean energy gradient for every layer's W and b (and prior)."""
    net._require_fresh()
    deltas = _deltas(net)
    n = net.batch_size()
    dWs, dbs = [], []
    prev = net.root_state()
    for i, (layer, vode) in enumerate(zip(net.layers, net.vodes)):
        d = deltas[i]
        dWs.append(d.T @ prev / n)
        dbs.append(d.mean(axis=0))
        prev = vode.h if vode.has_state() else vode.u
    dtheta0 = None
    if net.prior is not None and net.prior.enabled:
        dtheta0 = (net.prior.theta0 - net.latent.h).mean(axis=0)
    return WeightGrads(dWs, dbs, dtheta0)


# ---------------------------------------------------------------------------
# Finite-difference oracles (test-only; independent of the analytic path)
# ---------------------------------------------------------------------------

def _batch_energy_sum(net: PCNetwork) -> float:
    net.refresh_cache()
    return net.free_energy() * net.batch_size()


def _central_diff(arr: Array, idx, evaluate, eps: float) -> float:
    orig = arr[idx]
    arr[idx] = orig + eps
    e_plus = evaluate()
    arr[idx] = orig - eps
    e_minus = evaluate()
    arr[idx] = orig
    return (e_plus - e_minus) / (2.0 * eps)


def fd_state_grads(net: PCNetwork, eps: float = 1e-5) -> list[Array]:
    """Central differences of the per-sample energy w.r.t. every state entry.

    Clamped/frozen entries are differenced like any other; callers compare
    against the analytic gradients on the unclamped entries only.
    """
    grads = []
    for slot in net.state_slots():
        h = slot.vode.h
        g = np.zeros_like(h)
        for idx in np.ndindex(h.shape):
            g[idx] = _central_diff(h, idx, lambda: _batch_energy_sum(net), eps)
        grads.append(g)
    net.refresh_cache()
    return grads


def fd_weight_grads(net: PCNetwork, eps: float = 1e-5) -> WeightGrads:
    """Central differences of the batch-mean energy w.r.t. every parameter."""

    def evaluate():
        net.refresh_cache()
        return net.free_energy()

    dWs, dbs = [], []
    for layer in net.layers:
        dW = np.zeros_like(layer.W)
        for idx in np.ndindex(layer.W.shape):
            dW[idx] = _central_diff(layer.W, idx, evaluate, eps)
        db = np.zeros_like(layer.b)
        for idx in np.ndindex(layer.b.shape):
            db[idx] = _central_diff(layer.b, idx, evaluate, eps)
        dWs.append(dW)
        dbs.append(db)
    dtheta0 = None
    if net.prior is not None and net.prior.enabled:
        dtheta0 = np.zeros_like(net.prior.theta0)
        for idx in np.ndindex(dtheta0.shape):
            dtheta0[idx] = _central_diff(net.prior.theta0, idx, evaluate, eps)
    net.refresh_cache()
    return WeightGrads(dWs, dbs, dtheta0)
