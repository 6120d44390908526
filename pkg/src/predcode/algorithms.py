"""Training algorithms on top of the network and its gradients.

Every algorithm shares one batch skeleton: initialize states by a forward
chain, pin the boundary levels for the task at hand, descend the energy
with respect to the free states for T steps, then take weight steps —
once at the end for the standard scheme, at every inference step for the
incremental scheme, and on a noisy posterior sample for the Monte Carlo
scheme.

Supported kinds:

* ``pc_se`` / ``pc_ce``: output clamped to the label (squared error) or
  carrying a cross-entropy target.
* ``ipc``: weights updated at every one of the T inference steps.
* ``pn`` / ``nn`` / ``cn``: output clamped to a target nudged toward
  (away from) the label by a factor beta that grows each epoch; ``nn``
  inverts the weight update, ``cn`` flips a per-epoch coin between the
  two. At beta = 1 positive nudging clamps the label exactly and the
  trajectory coincides bit-for-bit with ``pc_se``.
* ``mcpc``: generative nets; inference becomes Langevin sampling via
  noisy state updates, and the single final sample drives the weight
  step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gradients
from .network import (
    CROSS_ENTROPY,
    GENERATIVE,
    INIT_FORWARD,
    INIT_GAUSSIAN,
    PCNetwork,
)
from .optim import AdamW, NoisySgd, SgdMomentum, WarmupCosine, clip_grads
from .tensor import Array, ParameterError, make_rng

PC_SE = "pc_se"
PC_CE = "pc_ce"
IPC = "ipc"
PN = "pn"
NN = "nn"
CN = "cn"
MCPC = "mcpc"

ALGO_KINDS = (PC_SE, PC_CE, IPC, PN, NN, CN, MCPC)
NUDGING_KINDS = (PN, NN, CN)

POSITIVE = "positive"
NEGATIVE = "negative"


@dataclass
class AlgoConfig:
    """Hyperparameters of one training algorithm instance."""

    kind: str = PC_SE
    T: int = 8
    # state (inference) optimizer
    state_lr: float = 0.1
    state_momentum: float = 0.0
    # weight optimizer
    weight_optimizer: str = "adamw"  # adamw | sgd
    weight_lr: float = 1e-3
    weight_momentum: float = 0.0
    weight_decay: float = 1e-4
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    # weight learning-rate schedule
    schedule: str = "none"  # none | warmup_cosine
    warmup_frac: float = 0.05
    min_lr: float = 0.0
    # nudging
    beta0: float = 1.0
    beta_ir: float = 0.0
    cn_deterministic: bool = False
    # Monte Carlo inference
    sigma2_mcpc: float = 1.0
    mcpc_momentum: float = 0.0
    generation_steps: int = 10000
    generation_init_std: float = 1.0
    # off by default; not part of the reference recipes
    grad_clip: float = 0.0

    def __post_init__(self):
        if self.kind not in ALGO_KINDS:
            raise ParameterError(f"unknown algorithm kind {self.kind!r}")
        if self.T < 1:
            raise ParameterError(f"T must be >= 1, got {self.T}")
        if not 0.0 <= self.beta0 <= 1.0:
            raise ParameterError(f"beta0 must be in [0, 1], got {self.beta0}")
        if self.beta_ir < 0:
            raise ParameterError(f"beta_ir must be >= 0, got {self.beta_ir}")
        if self.weight_optimizer not in ("adamw", "sgd"):
            raise ParameterError(
                f"unknown weight optimizer {self.weight_optimizer!r}"
            )

    def make_state_optimizer(self, rng: np.random.Generator | None = None):
        """Fresh inference optimizer; buffers start at zero each batch."""
        if self.kind == MCPC:
            return NoisySgd(self.state_lr, self.mcpc_momentum,
                            self.sigma2_mcpc, rng)
        return SgdMomentum(self.state_lr, self.state_momentum)

    def make_weight_optimizer(self):
        if self.weight_optimizer == "adamw":
            return AdamW(self.weight_lr, self.adam_betas, self.adam_eps,
                         self.weight_decay)
        return SgdMomentum(self.weight_lr, self.weight_momentum)

    def make_schedule(self, total_steps: int) -> WarmupCosine | None:
        if self.schedule == "none":
            return None
        if self.schedule != "warmup_cosine":
            raise ParameterError(f"unknown schedule {self.schedule!r}")
        warmup = int(round(self.warmup_frac * total_steps))
        return WarmupCosine(self.weight_lr, warmup, total_steps, self.min_lr)


@dataclass
class EpochState:
    """Per-epoch bookkeeping: nudging strength and the coin-flip mode."""

    epoch: int = 0
    beta: float = 1.0
    cn_mode: str = POSITIVE


def nudged_target(mu_out: Array, y: Array, beta: float, mode: str) -> Array:
    """Output target interpolated toward (or pushed away from) the label.

    beta = 1 in positive mode returns the label itself (exactly, so the
    clamped trajectory is indistinguishable from plain label clamping).
    """
    if not 0.0 <= beta <= 1.0:
        raise ParameterError(f"beta must be in [0, 1], got {beta}")
    if mode == POSITIVE:
        if beta == 1.0:
            return y.copy()
        return mu_out + beta * (y - mu_out)
    if mode == NEGATIVE:
        return mu_out - beta * (y - mu_out)
    raise ParameterError(f"unknown nudging mode {mode!r}")


def beta_update(state: EpochState, cfg: AlgoConfig) -> None:
    """End-of-epoch increment, saturating at 1."""
    state.beta = min(1.0, state.beta + cfg.beta_ir)


def cn_select_mode(state: EpochState, cfg: AlgoConfig,
                   rng: np.random.Generator) -> str:
    """Pick this epoch's nudging direction for centered nudging."""
    if cfg.cn_deterministic:
        state.cn_mode = POSITIVE if state.epoch % 2 == 0 else NEGATIVE
    else:
        state.cn_mode = POSITIVE if rng.random() < 0.5 else NEGATIVE
    return state.cn_mode


def run_inference(net: PCNetwork, steps: int, state_opt,
                  record=None) -> None:
    """Descend the energy w.r.t. all free states for ``steps`` updates.

    ``record(t)`` is called after each update with fresh caches (and once
    at t=0 before any update), so callers can log per-layer energies.
    """
    slots = net.state_slots()
    params = [slot.vode.h for slot in slots]
    masks = [_slot_mask(slot.vode) for slot in slots]
    if record is not None:
        record(0)
    for t in range(steps):
        grads = gradients.state_grads(net)
        state_opt.step(params, grads, masks)
        net.invalidate()
        net.refresh_cache()
        if record is not None:
            record(t + 1)


def _slot_mask(vode) -> Array | None:
    if vode.clamped:
        return np.ones(vode.dim, dtype=bool)
    if vode.frozen_mask is not None:
        return vode.frozen_mask
    return None


def _weight_step(net: PCNetwork, weight_opt, cfg: AlgoConfig,
                 negate: bool = False) -> None:
    wg = gradients.weight_grads(net).as_list()
    if negate:
        wg = [-g for g in wg]
    if cfg.grad_clip > 0:
        clip_grads(wg, cfg.grad_clip)
    weight_opt.step(net.param_arrays(), wg)
    net.invalidate()


def _clamp_output_for(net: PCNetwork, y: Array, cfg: AlgoConfig,
                      epoch_state: EpochState | None) -> None:
    kind = cfg.kind
    if kind == PC_CE:
        net.set_ce_target(y)
        return
    if kind in NUDGING_KINDS:
        state = epoch_state or EpochState(beta=cfg.beta0)
        mode = state.cn_mode if kind == CN else (POSITIVE if kind == PN else NEGATIVE)
        mu_out = net.output_vode.u  # forward-init prediction
        net.clamp(net.n_levels, nudged_target(mu_out, y, state.beta, mode))
        return
    # pc_se / ipc: hard label clamp
    net.clamp(net.n_levels, y)


def _nudging_negates(cfg: AlgoConfig, epoch_state: EpochState | None) -> bool:
    if cfg.kind == NN:
        return True
    if cfg.kind == CN:
        state = epoch_state or EpochState()
        return state.cn_mode == NEGATIVE
    return False


def pc_train_batch(net: PCNetwork, x: Array, y: Array, cfg: AlgoConfig,
                   state_opt, weight_opt,
                   epoch_state: EpochState | None = None,
                   record=None) -> dict:
    """One supervised batch: init, clamp, T state steps, one weight step.

    Returns the batch-mean energy right after initialization (for the
    hard label clamp this equals the squared-error loss a forward-pass
    network would report) and after the last inference step.
    """
    net.init_states(x, method=INIT_FORWARD)
    _clamp_output_for(net, y, cfg, epoch_state)
    net.refresh_cache()
    energy_start = net.free_energy()
    run_inference(net, cfg.T, state_opt, record)
    energy_end = net.free_energy()
    _weight_step(net, weight_opt, cfg, negate=_nudging_negates(cfg, epoch_state))
    return {"energy_start": energy_start, "energy_end": energy_end,
            "weight_updates": 1}


def ipc_train_batch(net: PCNetwork, x: Array, y: Array, cfg: AlgoConfig,
                    state_opt, weight_opt,
                    epoch_state: EpochState | None = None,
                    record=None) -> dict:
    """Incremental variant: a weight step after every state step."""
    net.init_states(x, method=INIT_FORWARD)
    _clamp_output_for(net, y, cfg, epoch_state)
    net.refresh_cache()
    energy_start = net.free_energy()
    slots = net.state_slots()
    params = [slot.vode.h for slot in slots]
    masks = [_slot_mask(slot.vode) for slot in slots]
    if record is not None:
        record(0)
    for t in range(cfg.T):
        grads = gradients.state_grads(net)
        state_opt.step(params, grads, masks)
        net.invalidate()
        net.refresh_cache()
        _weight_step(net, weight_opt, cfg)
        net.refresh_cache()
        if record is not None:
            record(t + 1)
    energy_end = net.free_energy()
    return {"energy_start": energy_start, "energy_end": energy_end,
            "weight_updates": cfg.T}


def mcpc_train_batch(net: PCNetwork, x: Array, cfg: AlgoConfig,
                     state_opt, weight_opt,
                     labels: Array | None = None,
                     record=None) -> dict:
    """Monte Carlo EM batch on a generative net.

    Data is pinned at the sensory (last) level, labels at the latent when
    learning conditionally; T noisy inference steps sample the posterior
    and the final sample drives one ordinary weight step.
    """
    if net.mode != GENERATIVE:
        raise ParameterError("mcpc requires a generative network")
    net.init_states(x=x, method=INIT_FORWARD)
    net.clamp(net.n_levels, x)
    if labels is not None:
        net.clamp(0, labels)
    net.refresh_cache()
    energy_start = net.free_energy()
    run_inference(net, cfg.T, state_opt, record)
    energy_end = net.free_energy()
    _weight_step(net, weight_opt, cfg)
    return {"energy_start": energy_start, "energy_end": energy_end,
            "weight_updates": 1}


def mcpc_generate(net: PCNetwork, cfg: AlgoConfig,
                  rng: np.random.Generator | int,
                  n_samples: int,
                  labels: Array | None = None) -> Array:
    """Sample the learned joint by running free noisy dynamics.

    All levels start from Gaussian noise and evolve unclamped (labels are
    pinned at the latent in the conditional setting); the sensory-level
    activity after ``generation_steps`` updates is returned, one row per
    sample.
    """
    if net.mode != GENERATIVE:
        raise ParameterError("generation requires a generative network")
    rng = make_rng(rng)
    net.init_states(batch_size=n_samples, method=INIT_GAUSSIAN,
                    std=cfg.generation_init_std, rng=rng)
    if labels is not None:
        net.clamp(0, labels)
        net.refresh_cache()
    state_opt = NoisySgd(cfg.state_lr, cfg.mcpc_momentum, cfg.sigma2_mcpc, rng)
    run_inference(net, cfg.generation_steps, state_opt)
    return net.output_vode.h.copy()
