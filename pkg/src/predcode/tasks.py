"""Task-level protocols: supervised training and evaluation, latent
inference and reconstruction, associative-memory storage and recall, and
energy-based out-of-distribution scoring.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algorithms import (
    CN,
    IPC,
    NUDGING_KINDS,
    AlgoConfig,
    EpochState,
    beta_update,
    cn_select_mode,
    ipc_train_batch,
    mcpc_train_batch,
    pc_train_batch,
    run_inference,
)
from .data import BatchIter, Dataset, one_hot
from .diagnostics import EnergyTrace, EpochTimer, RunMetrics
from .network import CROSS_ENTROPY, GENERATIVE, INIT_FORWARD, PCNetwork
from .optim import SgdMomentum
from .tensor import Array, derive_rng, softmax

# rng stream ids within one run
_NS_ALGO = 2
_NS_EVAL = 3


@dataclass
class TrainConfig:
    """Loop-level knobs shared by all tasks."""

    epochs: int = 1
    batch_size: int = 128
    seed: int = 0
    shuffle: bool = True
    drop_last: bool = False
    eval_subset: int | None = None  # cap on per-epoch eval size; final is full
    verbose: bool = False


def _log(cfg: TrainConfig, msg: str) -> None:
    if cfg.verbose:
        print(msg, flush=True)


# ---------------------------------------------------------------------------
# Supervised training / evaluation
# ---------------------------------------------------------------------------

def fit_supervised(net: PCNetwork, train: Dataset, algo: AlgoConfig,
                   cfg: TrainConfig, test: Dataset | None = None,
                   topk=(1,), trace: EnergyTrace | None = None,
                   trace_batches: int = 0) -> RunMetrics:
    """Train a discriminative net; returns per-epoch metrics.

    Per-epoch rows carry the batch-mean energy at initialization (equal to
    the squared-error loss under a hard label clamp), the energy after the
    last inference step, test accuracy, the nudging strength, and the
    centered-nudging mode in effect.
    """
    num_classes = net.output_dim
    targets = one_hot(train.labels, num_classes)
    batches = BatchIter(len(train), cfg.batch_size, seed=cfg.seed,
                        shuffle=cfg.shuffle, drop_last=cfg.drop_last)
    algo_rng = derive_rng(cfg.seed, _NS_ALGO)
    weight_opt = algo.make_weight_optimizer()
    schedule = algo.make_schedule(cfg.epochs * batches.n_batches())
    epoch_state = EpochState(beta=algo.beta0)
    train_batch = ipc_train_batch if algo.kind == IPC else pc_train_batch
    metrics = RunMetrics()
    timer = EpochTimer()
    step = 0
    batch_counter = 0
    for epoch in range(cfg.epochs):
        timer.start()
        epoch_state.epoch = epoch
        if algo.kind == CN:
            cn_select_mode(epoch_state, algo, algo_rng)
        e_start, e_end, n_batches = 0.0, 0.0, 0
        for idx in batches.batches(epoch):
            state_opt = algo.make_state_optimizer(algo_rng)
            if schedule is not None:
                weight_opt.lr = schedule.lr_at(step + 1)
            record = None
            if trace is not None and n_batches < trace_batches:
                record = trace.recorder(net, batch_counter)
            out = train_batch(net, train.inputs[idx], targets[idx], algo,
                              state_opt, weight_opt, epoch_state, record)
            e_start += out["energy_start"]
            e_end += out["energy_end"]
            step += 1
            n_batches += 1
            batch_counter += 1
        seconds = timer.stop()
        row = {
            "epoch": epoch,
            "train_energy_init": e_start / n_batches,
            "train_energy_final": e_end / n_batches,
            "beta": epoch_state.beta,
            "cn_mode": epoch_state.cn_mode if algo.kind == CN else "",
        }
        if test is not None:
            subset = _eval_subset(test, cfg, epoch)
            row.update(evaluate_discriminative(net, subset, topk=topk))
        metrics.append(**row)
        metrics.epoch_seconds.append(seconds)
        if algo.kind in NUDGING_KINDS:
            beta_update(epoch_state, algo)
        _log(cfg, f"epoch {epoch}: " + " ".join(
            f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
            for k, v in row.items() if k != "epoch"))
    if test is not None and cfg.eval_subset is not None:
        metrics.summary.update(evaluate_discriminative(net, test, topk=topk))
    elif metrics.rows and "accuracy" in metrics.rows[-1]:
        metrics.summary.update(
            {k: v for k, v in metrics.rows[-1].items() if "accuracy" in k})
    if metrics.rows:
        accs = [r.get("accuracy") for r in metrics.rows if "accuracy" in r]
        if accs:
            metrics.summary["best_accuracy"] = max(accs)
    return metrics


def _eval_subset(test: Dataset, cfg: TrainConfig, epoch: int) -> Dataset:
    if cfg.eval_subset is None or cfg.eval_subset >= len(test):
        return test
    rng = derive_rng(cfg.seed, _NS_EVAL, epoch)
    return test.subset(rng.choice(len(test), cfg.eval_subset, replace=False))


def evaluate_discriminative(net: PCNetwork, test: Dataset, topk=(1,),
                            batch_size: int = 1024) -> dict:
    """Forward-pass accuracy: the inference optimum for a clamped input."""
    if len(test) == 0:
        raise ValueError("empty evaluation set")
    ks = sorted(set(int(k) for k in topk))
    hits = {k: 0 for k in ks}
    for start in range(0, len(test), batch_size):
        x = test.inputs[start:start + batch_size]
        y = test.labels[start:start + batch_size]
        logits = net.forward(x)
        for k in ks:
            if k == 1:
                pred = logits.argmax(axis=1)
                hits[1] += int((pred == y).sum())
            else:
                top = np.argpartition(logits, -k, axis=1)[:, -k:]
                hits[k] += int((top == y[:, None]).any(axis=1).sum())
    out = {}
    for k in ks:
        key = "accuracy" if k == 1 else f"top{k}_accuracy"
        out[key] = hits[k] / len(test)
    return out


# ---------------------------------------------------------------------------
# Generative training (autoencoder, Monte Carlo, associative storage)
# ---------------------------------------------------------------------------

def fit_generative(net: PCNetwork, train: Dataset, algo: AlgoConfig,
                   cfg: TrainConfig, test: Dataset | None = None,
                   conditional_labels: Array | None = None,
                   recon_T: int | None = None,
                   recon_lr: float | None = None,
                   trace: EnergyTrace | None = None,
                   trace_batches: int = 0) -> RunMetrics:
    """Train a generative net with data pinned at the sensory level.

    Covers the deterministic autoencoder-style protocol, Monte Carlo
    training (noisy state optimizer), and associative-memory storage
    (small fixed set, many epochs). When a test set and reconstruction
    parameters are given, per-epoch rows include the test reconstruction
    error.
    """
    if net.mode != GENERATIVE:
        raise ValueError("fit_generative requires a generative network")
    batches = BatchIter(len(train), cfg.batch_size, seed=cfg.seed,
                        shuffle=cfg.shuffle, drop_last=cfg.drop_last)
    algo_rng = derive_rng(cfg.seed, _NS_ALGO)
    weight_opt = algo.make_weight_optimizer()
    schedule = algo.make_schedule(cfg.epochs * batches.n_batches())
    metrics = RunMetrics()
    timer = EpochTimer()
    step = 0
    batch_counter = 0
    for epoch in range(cfg.epochs):
        timer.start()
        e_start, e_end, n_batches = 0.0, 0.0, 0
        for idx in batches.batches(epoch):
            state_opt = algo.make_state_optimizer(algo_rng)
            if schedule is not None:
                weight_opt.lr = schedule.lr_at(step + 1)
            record = None
            if trace is not None and n_batches < trace_batches:
                record = trace.recorder(net, batch_counter)
            labels = None
            if conditional_labels is not None:
                labels = conditional_labels[idx]
            out = mcpc_train_batch(net, train.inputs[idx], algo, state_opt,
                                   weight_opt, labels=labels, record=record)
            e_start += out["energy_start"]
            e_end += out["energy_end"]
            step += 1
            n_batches += 1
            batch_counter += 1
        seconds = timer.stop()
        row = {
            "epoch": epoch,
            "train_energy_init": e_start / n_batches,
            "train_energy_final": e_end / n_batches,
        }
        if test is not None and recon_T is not None:
            subset = _eval_subset(test, cfg, epoch)
            row["test_mse"] = reconstruction_mse(
                net, subset.inputs, recon_T, recon_lr or algo.state_lr)
        metrics.append(**row)
        metrics.epoch_seconds.append(seconds)
        _log(cfg, f"epoch {epoch}: " + " ".join(
            f"{k}={v:.6g}" for k, v in row.items() if k != "epoch"))
    if test is not None and recon_T is not None and cfg.eval_subset is not None:
        metrics.summary["test_mse"] = reconstruction_mse(
            net, test.inputs, recon_T, recon_lr or algo.state_lr)
    elif metrics.rows and "test_mse" in metrics.rows[-1]:
        metrics.summary["test_mse"] = metrics.rows[-1]["test_mse"]
    return metrics


@dataclass
class ReconstructionResult:
    latent: Array
    reconstruction: Array
    mse: float
    per_sample_mse: Array


def generative_reconstruct(net: PCNetwork, x: Array, T: int,
                           state_lr: float,
                           state_momentum: float = 0.0) -> ReconstructionResult:
    """Infer the latent code for ``x`` and decode it back.

    The sensory level is pinned to the data, every other state relaxes
    for T steps from a forward chain rooted at the latent's resting
    value, and the reconstruction is the pure forward decode of the
    inferred latent.
    """
    x = np.atleast_2d(np.asarray(x, dtype=net.dtype))
    net.init_states(x=x, method=INIT_FORWARD)
    net.clamp(net.n_levels, x)
    net.refresh_cache()
    run_inference(net, T, SgdMomentum(state_lr, state_momentum))
    latent = net.latent.h.copy()
    recon = net.forward(latent)
    per_sample = np.mean((recon - x) ** 2, axis=1)
    return ReconstructionResult(latent, recon, float(per_sample.mean()), per_sample)


def reconstruction_mse(net: PCNetwork, x: Array, T: int, state_lr: float,
                       state_momentum: float = 0.0,
                       chunk_size: int = 2000) -> float:
    """Mean per-pixel reconstruction error over a dataset, chunked."""
    x = np.atleast_2d(np.asarray(x, dtype=net.dtype))
    total, count = 0.0, 0
    for start in range(0, len(x), chunk_size):
        xb = x[start:start + chunk_size]
        res = generative_reconstruct(net, xb, T, state_lr, state_momentum)
        total += float(res.per_sample_mse.sum())
        count += len(xb)
    return total / count


# ---------------------------------------------------------------------------
# Associative memory
# ---------------------------------------------------------------------------

@dataclass
class RecallSpec:
    """Recall dynamics: step count, state step size, and optional early
    stop when the largest state-gradient entry falls below ``grad_tol``.

    ``settle_steps`` > 0 first runs inference with the whole sensory
    level pinned to the cue (the exact trajectory storage was trained
    on) before releasing it; without it, a fully free sensory drifts
    toward the net's initial prediction while the deeper states are
    still catching up, which puts a floor under the recall error.
    """

    recall_steps: int = 5000
    state_lr: float = 0.1
    state_momentum: float = 0.0
    settle_steps: int = 0
    grad_tol: float = 0.0
    check_every: int = 100


def am_store(net: PCNetwork, images: Array, algo: AlgoConfig,
             cfg: TrainConfig) -> RunMetrics:
    """Memorize a small set of images by repeated generative training."""
    ds = Dataset(np.atleast_2d(images))
    return fit_generative(net, ds, algo, cfg)


def am_recall(net: PCNetwork, corrupted: Array, spec: RecallSpec,
              frozen_mask: Array | None = None) -> Array:
    """Settle the network from a corrupted sensory cue.

    All levels run inference, the sensory one included; with a frozen
    mask the intact entries are pinned bit-exactly while the rest of the
    image relaxes into the nearest stored attractor. Returns the final
    sensory state.
    """
    corrupted = np.atleast_2d(np.asarray(corrupted, dtype=net.dtype))
    net.init_states(x=corrupted, method=INIT_FORWARD)
    opt = SgdMomentum(spec.state_lr, spec.state_momentum)
    if spec.settle_steps > 0:
        net.clamp(net.n_levels, corrupted)
        net.refresh_cache()
        run_inference(net, spec.settle_steps, opt)
        net.unclamp(net.n_levels)
    net.set_state(net.n_levels, corrupted)  # the cue, zeroed region included
    if frozen_mask is not None and frozen_mask.any():
        net.clamp(net.n_levels, corrupted, mask=frozen_mask)
    net.refresh_cache()
    if spec.grad_tol > 0:
        from . import gradients
        remaining = spec.recall_steps
        while remaining > 0:
            steps = min(spec.check_every, remaining)
            run_inference(net, steps, opt)
            remaining -= steps
            worst = max(float(np.max(np.abs(g)))
                        for g in gradients.state_grads(net))
            if worst < spec.grad_tol:
                break
    else:
        run_inference(net, spec.recall_steps, opt)
    return net.output_vode.h.copy()


# ---------------------------------------------------------------------------
# Energy-based OOD scoring
# ---------------------------------------------------------------------------

@dataclass
class OodScores:
    """Energies and likelihood proxies before and after inference."""

    energy_initial: Array
    energy_final: Array
    p_initial: Array
    p_final: Array
    softmax_max: Array

    def as_dict(self) -> dict:
        return {
            "energy_initial": self.energy_initial,
            "energy_final": self.energy_final,
            "p_initial": self.p_initial,
            "p_final": self.p_final,
            "softmax_max": self.softmax_max,
        }


def ood_score(net: PCNetwork, x: Array, T: int = 100, state_lr: float = 0.01,
              state_momentum: float = 0.0, batch_size: int = 1000) -> OodScores:
    """Per-sample energy after relaxing the states around an unlabeled input.

    No ground-truth label exists at scoring time, so the output level is
    anchored to the model's own most likely class (a pure forward-pass
    argmax): confident inputs start with low output energy, and T
    inference steps then redistribute whatever energy remains. The
    likelihood proxy is exp(-energy).
    """
    x = np.atleast_2d(np.asarray(x, dtype=net.dtype))
    e0, eT, smax = [], [], []
    for start in range(0, len(x), batch_size):
        xb = x[start:start + batch_size]
        logits = net.forward(xb)
        probs = softmax(logits, axis=1)
        smax.append(probs.max(axis=1))
        pred = one_hot(logits.argmax(axis=1), net.output_dim)
        net.init_states(xb, method=INIT_FORWARD)
        if net.output_vode.energy_kind == CROSS_ENTROPY:
            net.set_ce_target(pred)
        else:
            net.clamp(net.n_levels, pred)
        net.refresh_cache()
        e0.append(net.sample_energies())
        run_inference(net, T, SgdMomentum(state_lr, state_momentum))
        eT.append(net.sample_energies())
    energy_initial = np.concatenate(e0)
    energy_final = np.concatenate(eT)
    return OodScores(
        energy_initial=energy_initial,
        energy_final=energy_final,
        p_initial=np.exp(-energy_initial),
        p_final=np.exp(-energy_final),
        softmax_max=np.concatenate(smax),
    )
