"""Chain-structured predictive-coding network.

A network is an alternating chain of linear layers and vodes (vectorized
nodes). Level 0 is the chain root: in discriminative mode it is the input
vector itself and carries no vode; in generative mode it is a free latent
vode, optionally tied to a learnable prior mean. Levels 1..L each hold a
layer (mapping level l-1 to l) and a vode storing the level's state ``h``
together with the cached prediction ``u`` made by the layer below.

The total energy is the sum over levels of per-level energies:

* squared_error vodes contribute ``0.5 * |h - u|^2 / sigma2`` per sample;
* a cross_entropy output vode contributes ``CE(target, softmax(u))`` and
  carries no independent state;
* an enabled prior contributes ``0.5 * |h_0 - prior_mean|^2``.

All energies are reported as batch means. Prediction caches follow an
invalidate-on-write discipline: any state or weight mutation marks them
stale, and energy/gradient reads before a ``refresh_cache()`` raise
``StaleCacheError``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import (
    DEFAULT_DTYPE,
    Activation,
    Array,
    ShapeError,
    StaleCacheError,
    ensure_finite,
    gaussian,
    get_activation,
    log_softmax,
    make_rng,
)

SQUARED_ERROR = "squared_error"
CROSS_ENTROPY = "cross_entropy"

DISCRIMINATIVE = "discriminative"
GENERATIVE = "generative"

INIT_FORWARD = "forward"
INIT_ZEROS = "zeros"
INIT_GAUSSIAN = "gaussian"


@dataclass
class Vode:
    """One level's state plus the cached prediction coming from below.

    ``clamped`` pins the whole state during inference; ``frozen_mask``
    (boolean over features) pins a subset of entries, used for partial
    cues in associative recall. A cross-entropy vode stores the target
    distribution instead of a free state.
    """

    dim: int
    energy_kind: str = SQUARED_ERROR
    sigma2: float = 1.0
    h: Array | None = None
    u: Array | None = None
    pre: Array | None = None  # pre-activation of u, needed for gradients
    clamped: bool = False
    frozen_mask: Array | None = None
    target: Array | None = None  # cross_entropy only

    def energy(self) -> float:
        """Batch-mean energy of this level."""
        if self.energy_kind == CROSS_ENTROPY:
            if self.target is None:
                return 0.0
            logp = log_softmax(self.u, axis=1)
            return float(-np.sum(self.target * logp) / self.u.shape[0])
        eps = self.h - self.u
        return float(0.5 * np.sum(eps * eps) / (self.sigma2 * self.h.shape[0]))

    def has_state(self) -> bool:
        return self.energy_kind != CROSS_ENTROPY


class LinearLayer:
    """Affine map followed by an elementwise activation."""

    def __init__(self, in_dim: int, out_dim: int, activation: Activation,
                 rng: np.random.Generator, dtype=DEFAULT_DTYPE):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        bound = 1.0 / np.sqrt(in_dim) if in_dim > 0 else 0.0
        self.W = rng.uniform(-bound, bound, size=(out_dim, in_dim)).astype(dtype)
        self.b = rng.uniform(-bound, bound, size=(out_dim,)).astype(dtype)

    def predict(self, h_prev: Array) -> tuple[Array, Array]:
        """Return (pre_activation, output) for a batch of inputs."""
        if h_prev.shape[1] != self.in_dim:
            raise ShapeError(
                f"layer expects inputs of width {self.in_dim}, got {h_prev.shape}"
            )
        pre = h_prev @ self.W.T + self.b
        return pre, self.activation.apply(pre)


@dataclass
class PriorVode:
    """Learnable prior mean over the latent level (unit variance)."""

    theta0: Array
    enabled: bool = True


@dataclass
class StateSlot:
    """A free-state array the inference optimizer may update."""

    level: int
    vode: Vode


class PCNetwork:
    """Ordered alternation of linear layers and vodes.

    Parameters
    ----------
    dims : sequence of ints, level widths from root (level 0) to output.
    activations : one name/Activation, or a list of length ``len(dims)-1``.
    mode : "discriminative" (root is the clamped input, no level-0 vode)
        or "generative" (root is a free latent vode).
    output_energy : "squared_error" or "cross_entropy" for the last level.
    sigma2_output : variance scale of the output squared-error energy.
    latent_prior : attach a learnable prior mean to the latent (generative).
    """

    def __init__(
        self,
        dims,
        activations="leaky_relu",
        mode: str = DISCRIMINATIVE,
        output_energy: str = SQUARED_ERROR,
        sigma2_output: float = 1.0,
        latent_prior: bool = False,
        rng: np.random.Generator | int | None = None,
        dtype=DEFAULT_DTYPE,
    ):
        if len(dims) < 2:
            raise ShapeError("a network needs at least one layer (two levels)")
        if mode not in (DISCRIMINATIVE, GENERATIVE):
            raise ValueError(f"unknown mode {mode!r}")
        if output_energy not in (SQUARED_ERROR, CROSS_ENTROPY):
            raise ValueError(f"unknown output energy {output_energy!r}")
        if sigma2_output <= 0:
            raise ValueError("sigma2_output must be positive")
        rng = make_rng(rng)
        self.dims = [int(d) for d in dims]
        self.mode = mode
        self.dtype = dtype
        self.sigma2_output = float(sigma2_output)

        n_layers = len(dims) - 1
        if isinstance(activations, (str, Activation)):
            acts = [get_activation(activations)] * n_layers
        else:
            if len(activations) != n_layers:
                raise ShapeError(
                    f"need {n_layers} activations for {len(dims)} levels, "
                    f"got {len(activations)}"
                )
            acts = [get_activation(a) for a in activations]

        self.layers = [
            LinearLayer(dims[i], dims[i + 1], acts[i], rng, dtype)
            for i in range(n_layers)
        ]
        self.vodes = [
            Vode(dims[i + 1], SQUARED_ERROR) for i in range(n_layers)
        ]
        self.vodes[-1].energy_kind = output_energy
        self.vodes[-1].sigma2 = self.sigma2_output

        self.latent: Vode | None = None
        self.prior: PriorVode | None = None
        if mode == GENERATIVE:
            self.latent = Vode(self.dims[0], SQUARED_ERROR)
            if latent_prior:
                self.prior = PriorVode(np.zeros(self.dims[0], dtype=dtype))
        elif latent_prior:
            raise ValueError("latent_prior requires generative mode")

        self._root: Array | None = None  # clamped input (discriminative)
        self._fresh = False

    # ------------------------------------------------------------------
    # Introspection
    # ------------------------------------------------------------------

    @property
    def n_levels(self) -> int:
        return len(self.layers)

    @property
    def input_dim(self) -> int:
        return self.dims[0]

    @property
    def output_dim(self) -> int:
        return self.dims[-1]

    @property
    def output_vode(self) -> Vode:
        return self.vodes[-1]

    def vode_at(self, level: int) -> Vode:
        """Vode for a level index; level 0 is the latent (generative only)."""
        if level == 0:
            if self.latent is None:
                raise IndexError("level 0 has no vode in discriminative mode")
            return self.latent
        if not 1 <= level <= self.n_levels:
            raise IndexError(f"level {level} out of range 1..{self.n_levels}")
        return self.vodes[level - 1]

    def root_state(self) -> Array:
        """Activity feeding layer 1: clamped input or latent state."""
        if self.mode == DISCRIMINATIVE:
            if self._root is None:
                raise StaleCacheError("states not initialized (no input bound)")
            return self._root
        return self.latent.h

    def state_slots(self) -> list[StateSlot]:
        """Free-state arrays in level order (latent first when present)."""
        slots = []
        if self.latent is not None:
            slots.append(StateSlot(0, self.latent))
        for i, vode in enumerate(self.vodes):
            if vode.has_state():
                slots.append(StateSlot(i + 1, vode))
        return slots

    def param_arrays(self) -> list[Array]:
        """Learnable arrays in a stable order: (W, b) per layer, then prior."""
        params = []
        for layer in self.layers:
            params.append(layer.W)
            params.append(layer.b)
        if self.prior is not None and self.prior.enabled:
            params.append(self.prior.theta0)
        return params

    # ------------------------------------------------------------------
    # Forward pass (pure, state-independent)
    # ------------------------------------------------------------------

    def forward(self, x: Array) -> Array:
        """Chain predictions from a root value; does not touch vode states."""
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[1] != self.input_dim:
            raise ShapeError(
                f"forward expects width {self.input_dim}, got {x.shape}"
            )
        out = x
        for layer in self.layers:
            _, out = layer.predict(out)
        return out

    # ------------------------------------------------------------------
    # State initialization and clamping
    # ------------------------------------------------------------------

    def init_states(
        self,
        x: Array | None = None,
        method: str = INIT_FORWARD,
        std: float = 1.0,
        rng: np.random.Generator | None = None,
        batch_size: int | None = None,
    ) -> None:
        """Reset all states and caches for a new batch.

        Discriminative mode binds ``x`` as the clamped level-0 input.
        Generative mode initializes the latent itself (forward init uses
        the prior mean when one is enabled, zeros otherwise) and needs
        only a batch size, taken from ``x`` when given.

        ``forward`` chains each level's state from the one below, so every
        internal error starts at exactly zero; ``zeros`` and ``gaussian``
        fill states directly and caches are then recomputed from them.
        """
        if method not in (INIT_FORWARD, INIT_ZEROS, INIT_GAUSSIAN):
            raise ValueError(f"unknown init method {method!r}")
        if method == INIT_GAUSSIAN and rng is None:
            raise ValueError("gaussian init needs an rng")

        if self.mode == DISCRIMINATIVE:
            if x is None:
                raise ValueError("discriminative init needs the input batch")
            x = np.asarray(x, dtype=self.dtype)
            if x.ndim == 1:
                x = x[None, :]
            if x.shape[1] != self.input_dim:
                raise ShapeError(
                    f"input width {x.shape[1]} != network input {self.input_dim}"
                )
            self._root = x
            n = x.shape[0]
        else:
            if x is not None:
                n = np.asarray(x).shape[0]
            elif batch_size is not None:
                n = int(batch_size)
            else:
                raise ValueError("generative init needs x or batch_size")
            if method == INIT_ZEROS or method == INIT_FORWARD:
                h0 = np.zeros((n, self.dims[0]), dtype=self.dtype)
                if method == INIT_FORWARD and self.prior is not None and self.prior.enabled:
                    h0 = h0 + self.prior.theta0
            else:
                h0 = gaussian(rng, (n, self.dims[0]), 0.0, std, self.dtype)
            self.latent.h = h0
            self.latent.clamped = False
            self.latent.frozen_mask = None

        for vode in self.vodes:
            vode.clamped = False
            vode.frozen_mask = None
            vode.target = None

        if method == INIT_FORWARD:
            prev = self.root_state()
            for layer, vode in zip(self.layers, self.vodes):
                pre, out = layer.predict(prev)
                vode.pre, vode.u = pre, out
                vode.h = out.copy() if vode.has_state() else None
                prev = out
            self._fresh = True
        else:
            for vode in self.vodes:
                if not vode.has_state():
                    vode.h = None
                elif method == INIT_ZEROS:
                    vode.h = np.zeros((n, vode.dim), dtype=self.dtype)
                else:
                    vode.h = gaussian(rng, (n, vode.dim), 0.0, std, self.dtype)
            self._fresh = False
            self.refresh_cache()

    def _check_level_value(self, level: int, value: Array) -> Array:
        vode = self.vode_at(level)
        value = np.asarray(value, dtype=self.dtype)
        if value.ndim == 1:
            value = value[None, :]
        if value.shape[1] != vode.dim:
            raise ShapeError(
                f"level {level} has width {vode.dim}, got value {value.shape}"
            )
        return value

    def clamp(self, level: int, value: Array, mask: Array | None = None) -> None:
        """Fix a level's state to ``value`` for the rest of inference.

        With a boolean ``mask`` only the masked entries are overwritten
        and frozen; the rest of the level stays free.
        """
        vode = self.vode_at(level)
        value = self._check_level_value(level, value)
        if vode.energy_kind == CROSS_ENTROPY:
            raise ValueError(
                "cross-entropy output carries a target, not a clamped state; "
                "use set_ce_target()"
            )
        if mask is None:
            vode.h = value.copy()
            vode.clamped = True
            vode.frozen_mask = None
        else:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != (vode.dim,):
                raise ShapeError(
                    f"mask shape {mask.shape} != ({vode.dim},) for level {level}"
                )
            if vode.h is None or vode.h.shape[0] != value.shape[0]:
                vode.h = np.zeros_like(value)
            vode.h[:, mask] = value[:, mask]
            vode.frozen_mask = mask.copy()
            vode.clamped = bool(mask.all())
        self.invalidate()

    def unclamp(self, level: int) -> None:
        vode = self.vode_at(level)
        vode.clamped = False
        vode.frozen_mask = None

    def set_state(self, level: int, value: Array) -> None:
        """Assign a level's state without clamping it."""
        vode = self.vode_at(level)
        vode.h = self._check_level_value(level, value).copy()
        self.invalidate()

    def set_ce_target(self, y: Array) -> None:
        """Attach the target distribution to a cross-entropy output."""
        vode = self.output_vode
        if vode.energy_kind != CROSS_ENTROPY:
            raise ValueError("output vode does not use cross-entropy energy")
        vode.target = self._check_level_value(self.n_levels, y)

    # ------------------------------------------------------------------
    # Caches and energies
    # ------------------------------------------------------------------

    def invalidate(self) -> None:
        self._fresh = False

    def refresh_cache(self) -> None:
        """Recompute every level's prediction from the current states."""
        prev = self.root_state()
        for layer, vode in zip(self.layers, self.vodes):
            vode.pre, vode.u = layer.predict(prev)
            prev = vode.h if vode.has_state() else vode.u
        self._fresh = True

    def _require_fresh(self) -> None:
        if not self._fresh:
            raise StaleCacheError(
                "prediction caches are stale; call refresh_cache() after "
                "mutating states or weights"
            )

    def prior_energy(self) -> float:
        if self.prior is None or not self.prior.enabled:
            return 0.0
        d = self.latent.h - self.prior.theta0
        return float(0.5 * np.sum(d * d) / d.shape[0])

    def layer_energies(self) -> Array:
        """Batch-mean energy per level, prior term first when enabled.

        The last entry is always the output/sensory level.
        """
        self._require_fresh()
        values = [vode.energy() for vode in self.vodes]
        if self.prior is not None and self.prior.enabled:
            values = [self.prior_energy()] + values
        return np.asarray(values)

    def free_energy(self) -> float:
        """Batch-mean total energy (additive constant dropped)."""
        total = float(np.sum(self.layer_energies()))
        ensure_finite(total, "free energy")
        return total

    def sample_energies(self) -> Array:
        """Total energy of each sample separately, shape (batch,)."""
        self._require_fresh()
        total = np.zeros(self.batch_size(), dtype=self.dtype)
        if self.prior is not None and self.prior.enabled:
            d = self.latent.h - self.prior.theta0
            total += 0.5 * np.sum(d * d, axis=1)
        for vode in self.vodes:
            if vode.energy_kind == CROSS_ENTROPY:
                if vode.target is not None:
                    logp = log_softmax(vode.u, axis=1)
                    total += -np.sum(vode.target * logp, axis=1)
            else:
                eps = vode.h - vode.u
                total += 0.5 * np.sum(eps * eps, axis=1) / vode.sigma2
        return total

    def batch_size(self) -> int:
        return self.root_state().shape[0]
