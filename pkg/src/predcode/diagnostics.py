"""Run metrics and analyses: per-layer energy traces over inference,
energy ratios, rank-based AUROC, and per-epoch wall-clock timing.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .tensor import Array

RATIO_UNDERFLOW = 1e-300


@dataclass
class EnergyTrace:
    """Per-layer energies logged across inference steps.

    Rows are (batch, step t, layer index, batch-mean energy); ``layer``
    indexes the entries of ``PCNetwork.layer_energies()``, so the last
    layer index is always the output level.
    """

    rows: list = field(default_factory=list)

    def add(self, batch: int, t: int, energies: Array) -> None:
        for layer, e in enumerate(np.asarray(energies, dtype=float)):
            self.rows.append((batch, t, layer, float(e)))

    def recorder(self, net, batch: int):
        """Callback for ``run_inference``: logs layer_energies at each t."""
        def record(t: int) -> None:
            self.add(batch, t, net.layer_energies())
        return record

    def energies_at(self, batch: int, t: int) -> Array:
        values = {layer: e for b, s, layer, e in self.rows
                  if b == batch and s == t}
        if not values:
            raise KeyError(f"no trace rows for batch={batch}, t={t}")
        return np.asarray([values[i] for i in sorted(values)])

    def total(self, batch: int, t: int) -> float:
        return float(np.sum(self.energies_at(batch, t)))

    def steps(self, batch: int) -> list[int]:
        return sorted({s for b, s, _, _ in self.rows if b == batch})

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["batch", "t", "layer", "energy"])
            for row in self.rows:
                writer.writerow([row[0], row[1], row[2], repr(row[3])])


def energy_ratio(trace: EnergyTrace, layer_a: int, layer_b: int,
                 batch: int = 0, t: int = 0) -> float:
    """E_a(t) / E_b(t); +inf sentinel when the denominator underflows.

    The sentinel keeps forward-initialized traces representable: at t=0
    internal energies are exactly zero, so ratios with them in the
    denominator would otherwise divide by zero.
    """
    energies = trace.energies_at(batch, t)
    num, den = float(energies[layer_a]), float(energies[layer_b])
    if den < RATIO_UNDERFLOW:
        return float("inf")
    return num / den


def auroc(scores_id: Array, scores_ood: Array,
          direction: str = "ood_higher") -> float:
    """Probability that a random OOD score ranks above a random ID score.

    Rank (Mann-Whitney) formulation with ties counted half. With
    ``direction="ood_lower"`` the scores are negated first, which is
    exactly 1 - AUROC of the other direction.
    """
    scores_id = np.asarray(scores_id, dtype=np.float64).ravel()
    scores_ood = np.asarray(scores_ood, dtype=np.float64).ravel()
    if len(scores_id) == 0 or len(scores_ood) == 0:
        raise ValueError("auroc needs nonempty score sets")
    if direction == "ood_lower":
        scores_id, scores_ood = -scores_id, -scores_ood
    elif direction != "ood_higher":
        raise ValueError(f"unknown direction {direction!r}")
    combined = np.concatenate([scores_ood, scores_id])
    ranks = rankdata(combined)  # average ranks: ties count half
    n_ood, n_id = len(scores_ood), len(scores_id)
    u = ranks[:n_ood].sum() - n_ood * (n_ood + 1) / 2.0
    return float(u / (n_ood * n_id))


def timing_per_epoch(epoch_seconds) -> float:
    """Mean epoch wall-clock, skipping the first epoch (warm-up and IO)."""
    epoch_seconds = list(epoch_seconds)
    if len(epoch_seconds) < 2:
        return float("nan")
    return float(np.mean(epoch_seconds[1:]))


class EpochTimer:
    """Collects wall-clock seconds per epoch."""

    def __init__(self):
        self.seconds: list[float] = []
        self._start = None

    def start(self) -> None:
        self._start = time.perf_counter()

    def stop(self) -> float:
        elapsed = time.perf_counter() - self._start
        self.seconds.append(elapsed)
        self._start = None
        return elapsed

    def mean_after_warmup(self) -> float:
        return timing_per_epoch(self.seconds)


@dataclass
class RunMetrics:
    """Per-epoch rows plus a final summary, serializable as CSV + JSON.

    Timing lives only in the summary so the CSV is byte-reproducible
    across repeated runs of the same seeded configuration.
    """

    fields: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    epoch_seconds: list = field(default_factory=list)

    def append(self, **row) -> None:
        for key in row:
            if key not in self.fields:
                self.fields.append(key)
        self.rows.append(row)

    def last(self) -> dict:
        return self.rows[-1] if self.rows else {}

    def column(self, name: str) -> list:
        return [row.get(name) for row in self.rows]

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(self.fields)
            for row in self.rows:
                writer.writerow([_fmt(row.get(k)) for k in self.fields])

    def write_summary(self, path: str) -> None:
        payload = dict(self.summary)
        payload["timing"] = {
            "epoch_seconds": self.epoch_seconds,
            "mean_epoch_seconds_after_warmup": timing_per_epoch(self.epoch_seconds),
        }
        with open(path, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True, default=_json_default)
            f.write("\n")


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not JSON serializable: {type(value)}")
