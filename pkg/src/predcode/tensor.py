"""Dense-array kernel: checked matrix products, activations with analytic
derivatives, and seeded Gaussian sampling.

Arrays are plain numpy ndarrays in float64 by default (float32 is available
for speed runs via the ``dtype`` arguments threaded through the network).
All functions here are pure; nothing retains references to its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import erf

DEFAULT_DTYPE = np.float64

Array = np.ndarray


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class ParameterError(ValueError):
    """A numeric argument is outside its valid range."""


class NumericalError(ArithmeticError):
    """A computation produced NaN or Inf."""


class StaleCacheError(RuntimeError):
    """Cached predictions were read after a state or weight mutation."""


def make_rng(seed: int | np.random.Generator | None) -> np.random.Generator:
    """Return a Generator; same integer seed gives a bit-identical stream."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent stream keyed by (seed, *keys); stable across runs."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) & 0xFFFFFFFFFFFFFFFF for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def matmul(a: Array, b: Array) -> Array:
    """Matrix product with explicit shape checking.

    Raises ShapeError instead of numpy's generic ValueError so dimension
    mistakes surface with both operand shapes in the message.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    return a @ b


def gaussian(
    rng: np.random.Generator,
    shape,
    mean: float = 0.0,
    std: float = 1.0,
    dtype=DEFAULT_DTYPE,
) -> Array:
    """I.i.d. normal samples; deterministic under a fixed generator state."""
    if std < 0:
        raise ParameterError(f"gaussian std must be >= 0, got {std}")
    if std == 0:
        return np.full(shape, mean, dtype=dtype)
    return rng.normal(mean, std, size=shape).astype(dtype, copy=False)


def ensure_finite(value, what: str = "value") -> None:
    """Raise NumericalError if ``value`` contains NaN or Inf."""
    if not np.all(np.isfinite(value)):
        raise NumericalError(f"{what} is not finite (NaN/Inf encountered)")


def softmax(x: Array, axis: int = -1) -> Array:
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(x: Array, axis: int = -1) -> Array:
    z = x - np.max(x, axis=axis, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------

LEAKY_RELU_SLOPE = 0.01
_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class Activation:
    """Elementwise nonlinearity paired with its analytic derivative."""

    name: str
    apply: Callable[[Array], Array]
    deriv: Callable[[Array], Array]

    def __repr__(self) -> str:  # keeps config dumps readable
        return f"Activation({self.name!r})"


def _identity(x):
    return np.asarray(x).copy()


def _identity_deriv(x):
    return np.ones_like(x)


def _relu(x):
    return np.maximum(x, 0.0)


def _relu_deriv(x):
    return (x > 0).astype(x.dtype)


def _leaky_relu(x):
    return np.where(x > 0, x, LEAKY_RELU_SLOPE * x)


def _leaky_relu_deriv(x):
    return np.where(x > 0, 1.0, LEAKY_RELU_SLOPE).astype(x.dtype)


def _gelu(x):
    # Exact erf form (not the tanh approximation) so finite-difference
    # checks of the derivative are clean.
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def _gelu_deriv(x):
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return cdf + x * pdf


def _tanh(x):
    return np.tanh(x)


def _tanh_deriv(x):
    t = np.tanh(x)
    return 1.0 - t * t


def _hard_tanh(x):
    return np.clip(x, -1.0, 1.0)


def _hard_tanh_deriv(x):
    return (np.abs(x) < 1.0).astype(x.dtype)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _silu(x):
    return x * _sigmoid(x)


def _silu_deriv(x):
    s = _sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


ACTIVATIONS: dict[str, Activation] = {
    a.name: a
    for a in (
        Activation("identity", _identity, _identity_deriv),
        Activation("relu", _relu, _relu_deriv),
        Activation("leaky_relu", _leaky_relu, _leaky_relu_deriv),
        Activation("gelu", _gelu, _gelu_deriv),
        Activation("tanh", _tanh, _tanh_deriv),
        Activation("hard_tanh", _hard_tanh, _hard_tanh_deriv),
        Activation("silu", _silu, _silu_deriv),
    )
}


def get_activation(name: str | Activation) -> Activation:
    if isinstance(name, Activation):
        return name
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ParameterError(
            f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}"
        ) from None
