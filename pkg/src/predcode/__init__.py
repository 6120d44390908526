"""Predictive-coding networks trained by local energy descent.

The engine lives in :mod:`predcode.network` / :mod:`predcode.algorithms`;
the scikit-learn style estimators in :mod:`predcode.estimators` are the
recommended entry point for programmatic use, and the ``predcode`` CLI
drives config-file experiments.
"""

from .algorithms import AlgoConfig, EpochState, mcpc_generate, nudged_target
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Dataset, load_idx, load_mnist_like, one_hot, synth
from .diagnostics import EnergyTrace, RunMetrics, auroc, energy_ratio
from .estimators import (
    MCPCSampler,
    PCAssociativeMemory,
    PCAutoencoder,
    PCClassifier,
)
from .network import PCNetwork
from .tasks import (
    RecallSpec,
    TrainConfig,
    am_recall,
    am_store,
    evaluate_discriminative,
    fit_generative,
    fit_supervised,
    generative_reconstruct,
    ood_score,
)

__version__ = "0.1.0"

__all__ = [
    "AlgoConfig",
    "Dataset",
    "EnergyTrace",
    "EpochState",
    "MCPCSampler",
    "PCAssociativeMemory",
    "PCAutoencoder",
    "PCClassifier",
    "PCNetwork",
    "RecallSpec",
    "RunMetrics",
    "TrainConfig",
    "am_recall",
    "am_store",
    "auroc",
    "energy_ratio",
    "evaluate_discriminative",
    "fit_generative",
    "fit_supervised",
    "generative_reconstruct",
    "load_checkpoint",
    "load_idx",
    "load_mnist_like",
    "mcpc_generate",
    "nudged_target",
    "one_hot",
    "ood_score",
    "save_checkpoint",
    "synth",
    "__version__",
]
