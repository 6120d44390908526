"""Scikit-learn style estimators wrapping the predictive-coding engine.

Each estimator builds a chain network in ``fit`` and exposes the usual
surface (``predict`` / ``predict_proba`` / ``transform`` / ``score``,
``get_params`` / ``set_params``), so the models drop into pipelines,
grid searches, and cross-validation from the wider ecosystem.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .algorithms import AlgoConfig, mcpc_generate
from .data import Dataset, one_hot
from .network import (
    CROSS_ENTROPY,
    DISCRIMINATIVE,
    GENERATIVE,
    SQUARED_ERROR,
    PCNetwork,
)
from .tasks import (
    RecallSpec,
    TrainConfig,
    am_recall,
    fit_generative,
    fit_supervised,
    generative_reconstruct,
    ood_score,
    reconstruction_mse,
)
from .tensor import derive_rng, softmax

_NS_INIT = 0


def _seed_of(random_state) -> int:
    if random_state is None:
        return 0
    if isinstance(random_state, np.random.Generator):
        return int(random_state.integers(2**31))
    return int(random_state)


class PCClassifier(BaseEstimator, ClassifierMixin):
    """Feedforward classifier trained by local energy descent.

    Parameters mirror the training recipe: hidden layer sizes and
    activation, the algorithm variant (``pc_se``, ``pc_ce``, ``ipc``,
    ``pn``, ``nn``, ``cn``), the number of inference steps ``T``, the
    state/weight optimizer settings, and the nudging schedule.
    Prediction is a pure forward pass, which is the energy optimum for a
    clamped input.
    """

    def __init__(self, hidden_dims=(128, 128, 128), activation="leaky_relu",
                 algorithm="pc_se", T=8, epochs=10, batch_size=128,
                 state_lr=0.1, state_momentum=0.0,
                 weight_optimizer="adamw", weight_lr=1e-3,
                 weight_momentum=0.0, weight_decay=1e-4,
                 schedule="none", warmup_frac=0.05,
                 beta0=1.0, beta_ir=0.0, cn_deterministic=False,
                 random_state=None, verbose=False):
        self.hidden_dims = hidden_dims
        self.activation = activation
        self.algorithm = algorithm
        self.T = T
        self.epochs = epochs
        self.batch_size = batch_size
        self.state_lr = state_lr
        self.state_momentum = state_momentum
        self.weight_optimizer = weight_optimizer
        self.weight_lr = weight_lr
        self.weight_momentum = weight_momentum
        self.weight_decay = weight_decay
        self.schedule = schedule
        self.warmup_frac = warmup_frac
        self.beta0 = beta0
        self.beta_ir = beta_ir
        self.cn_deterministic = cn_deterministic
        self.random_state = random_state
        self.verbose = verbose

    def _algo_config(self) -> AlgoConfig:
        return AlgoConfig(
            kind=self.algorithm, T=self.T,
            state_lr=self.state_lr, state_momentum=self.state_momentum,
            weight_optimizer=self.weight_optimizer, weight_lr=self.weight_lr,
            weight_momentum=self.weight_momentum,
            weight_decay=self.weight_decay,
            schedule=self.schedule, warmup_frac=self.warmup_frac,
            beta0=self.beta0, beta_ir=self.beta_ir,
            cn_deterministic=self.cn_deterministic,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        seed = _seed_of(self.random_state)
        output_energy = CROSS_ENTROPY if self.algorithm == "pc_ce" else SQUARED_ERROR
        dims = [X.shape[1], *self.hidden_dims, len(self.classes_)]
        acts = [self.activation] * len(self.hidden_dims) + ["identity"]
        self.network_ = PCNetwork(dims, acts, mode=DISCRIMINATIVE,
                                  output_energy=output_energy,
                                  rng=derive_rng(seed, _NS_INIT))
        train = Dataset(X, y_idx, num_classes=len(self.classes_))
        cfg = TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                          seed=seed, verbose=self.verbose)
        self.history_ = fit_supervised(self.network_, train,
                                       self._algo_config(), cfg)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=np.float64)
        return self.network_.forward(X)

    def predict_proba(self, X):
        return softmax(self.decision_function(X), axis=1)

    def predict(self, X):
        return self.classes_[self.decision_function(X).argmax(axis=1)]

    def energy_scores(self, X, T=100, state_lr=0.01, state_momentum=0.0):
        """Per-sample relaxed energies; higher means less model-consistent.

        Useful as an out-of-distribution score: exp(-energy) acts as an
        unnormalized likelihood of the input under the trained model.
        """
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=np.float64)
        return ood_score(self.network_, X, T=T, state_lr=state_lr,
                         state_momentum=state_momentum)


class PCAutoencoder(BaseEstimator, TransformerMixin):
    """Decoder-only autoencoder: encoding is inference, not a network.

    ``transform`` pins the data at the sensory level and relaxes the
    remaining states for ``T`` steps; the latent level's state is the
    code. ``inverse_transform`` is the pure forward decode.
    """

    def __init__(self, latent_dim=64, hidden_dims=(256, 256),
                 activation="leaky_relu", output_activation="identity",
                 algorithm="pc_se", T=20, epochs=30, batch_size=200,
                 state_lr=0.1, state_momentum=0.5,
                 weight_lr=3e-4, weight_decay=1e-4,
                 schedule="none", warmup_frac=0.05,
                 random_state=None, verbose=False):
        self.latent_dim = latent_dim
        self.hidden_dims = hidden_dims
        self.activation = activation
        self.output_activation = output_activation
        self.algorithm = algorithm
        self.T = T
        self.epochs = epochs
        self.batch_size = batch_size
        self.state_lr = state_lr
        self.state_momentum = state_momentum
        self.weight_lr = weight_lr
        self.weight_decay = weight_decay
        self.schedule = schedule
        self.warmup_frac = warmup_frac
        self.random_state = random_state
        self.verbose = verbose

    def _algo_config(self) -> AlgoConfig:
        return AlgoConfig(
            kind=self.algorithm, T=self.T,
            state_lr=self.state_lr, state_momentum=self.state_momentum,
            weight_lr=self.weight_lr, weight_decay=self.weight_decay,
            schedule=self.schedule, warmup_frac=self.warmup_frac,
        )

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        seed = _seed_of(self.random_state)
        dims = [self.latent_dim, *self.hidden_dims, X.shape[1]]
        acts = [self.activation] * len(self.hidden_dims) + [self.output_activation]
        self.network_ = PCNetwork(dims, acts, mode=GENERATIVE,
                                  rng=derive_rng(seed, _NS_INIT))
        cfg = TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                          seed=seed, verbose=self.verbose)
        self.history_ = fit_generative(self.network_, Dataset(X),
                                       self._algo_config(), cfg)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=np.float64)
        return generative_reconstruct(self.network_, X, self.T,
                                      self.state_lr, self.state_momentum).latent

    def inverse_transform(self, Z):
        check_is_fitted(self, "network_")
        Z = check_array(Z, dtype=np.float64)
        return self.network_.forward(Z)

    def reconstruct(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=np.float64)
        return generative_reconstruct(self.network_, X, self.T,
                                      self.state_lr,
                                      self.state_momentum).reconstruction

    def reconstruction_error(self, X):
        """Mean per-pixel squared reconstruction error."""
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=np.float64)
        return reconstruction_mse(self.network_, X, self.T, self.state_lr,
                                  self.state_momentum)

    def score(self, X, y=None):
        return -self.reconstruction_error(X)


class MCPCSampler(BaseEstimator):
    """Generative model trained with noisy (Langevin) state updates.

    ``fit`` pins training data at the sensory level and samples the
    posterior with noisy inference; ``sample`` runs the same dynamics
    fully unclamped and reads out the sensory activity. Passing ``y``
    one-hot rows to ``fit``/``sample`` pins them at the latent level for
    conditional generation.
    """

    def __init__(self, latent_dim=2, hidden_dims=(64,), activation="tanh",
                 output_activation="identity", sigma2_output=0.01,
                 sigma2_mcpc=1.0, T=500, generation_steps=10000,
                 epochs=50, batch_size=150,
                 state_lr=0.01, state_momentum=0.9,
                 weight_lr=0.01, weight_decay=1e-4, latent_prior=True,
                 random_state=None, verbose=False):
        self.latent_dim = latent_dim
        self.hidden_dims = hidden_dims
        self.activation = activation
        self.output_activation = output_activation
        self.sigma2_output = sigma2_output
        self.sigma2_mcpc = sigma2_mcpc
        self.T = T
        self.generation_steps = generation_steps
        self.epochs = epochs
        self.batch_size = batch_size
        self.state_lr = state_lr
        self.state_momentum = state_momentum
        self.weight_lr = weight_lr
        self.weight_decay = weight_decay
        self.latent_prior = latent_prior
        self.random_state = random_state
        self.verbose = verbose

    def _algo_config(self) -> AlgoConfig:
        return AlgoConfig(
            kind="mcpc", T=self.T,
            state_lr=self.state_lr, mcpc_momentum=self.state_momentum,
            sigma2_mcpc=self.sigma2_mcpc,
            weight_lr=self.weight_lr, weight_decay=self.weight_decay,
            generation_steps=self.generation_steps,
        )

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        seed = _seed_of(self.random_state)
        labels = None
        if y is not None:
            y = check_array(y, dtype=np.float64)
            if y.shape[1] != self.latent_dim:
                raise ValueError(
                    f"conditional labels must have width latent_dim="
                    f"{self.latent_dim}, got {y.shape[1]}"
                )
            labels = y
        dims = [self.latent_dim, *self.hidden_dims, X.shape[1]]
        acts = [self.activation] * len(self.hidden_dims) + [self.output_activation]
        self.network_ = PCNetwork(dims, acts, mode=GENERATIVE,
                                  sigma2_output=self.sigma2_output,
                                  latent_prior=self.latent_prior and labels is None,
                                  rng=derive_rng(seed, _NS_INIT))
        cfg = TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                          seed=seed, verbose=self.verbose)
        self.history_ = fit_generative(self.network_, Dataset(X),
                                       self._algo_config(), cfg,
                                       conditional_labels=labels)
        self.n_features_in_ = X.shape[1]
        return self

    def sample(self, n_samples, y=None, seed=None):
        check_is_fitted(self, "network_")
        labels = None
        if y is not None:
            labels = check_array(y, dtype=np.float64)
            if len(labels) != n_samples:
                raise ValueError("need one label row per sample")
        rng = derive_rng(_seed_of(self.random_state) if seed is None else seed, 17)
        return mcpc_generate(self.network_, self._algo_config(), rng,
                             n_samples, labels=labels)


class PCAssociativeMemory(BaseEstimator):
    """Content-addressable storage of a small image set.

    ``fit`` trains a generative chain until the patterns become energy
    attractors; ``recall`` settles the dynamics from a corrupted cue,
    optionally with a frozen mask pinning the intact region bit-exactly.
    """

    def __init__(self, latent_dim=64, hidden_dims=(512, 512),
                 activation="tanh", output_activation="identity",
                 T=50, epochs=500, batch_size=50,
                 state_lr=0.1, state_momentum=0.0,
                 weight_lr=1e-3, weight_decay=0.0,
                 recall_steps=5000, recall_lr=0.1, recall_settle_steps=0,
                 random_state=None, verbose=False):
        self.latent_dim = latent_dim
        self.hidden_dims = hidden_dims
        self.activation = activation
        self.output_activation = output_activation
        self.T = T
        self.epochs = epochs
        self.batch_size = batch_size
        self.state_lr = state_lr
        self.state_momentum = state_momentum
        self.weight_lr = weight_lr
        self.weight_decay = weight_decay
        self.recall_steps = recall_steps
        self.recall_lr = recall_lr
        self.recall_settle_steps = recall_settle_steps
        self.random_state = random_state
        self.verbose = verbose

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        seed = _seed_of(self.random_state)
        dims = [self.latent_dim, *self.hidden_dims, X.shape[1]]
        acts = [self.activation] * len(self.hidden_dims) + [self.output_activation]
        self.network_ = PCNetwork(dims, acts, mode=GENERATIVE,
                                  rng=derive_rng(seed, _NS_INIT))
        algo = AlgoConfig(kind="pc_se", T=self.T, state_lr=self.state_lr,
                          state_momentum=self.state_momentum,
                          weight_lr=self.weight_lr,
                          weight_decay=self.weight_decay)
        cfg = TrainConfig(epochs=self.epochs,
                          batch_size=min(self.batch_size, len(X)),
                          seed=seed, verbose=self.verbose)
        self.history_ = fit_generative(self.network_, Dataset(X), algo, cfg)
        self.n_features_in_ = X.shape[1]
        return self

    def recall(self, X, frozen_mask=None, recall_steps=None, recall_lr=None):
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=np.float64)
        spec = RecallSpec(
            recall_steps=self.recall_steps if recall_steps is None else recall_steps,
            state_lr=self.recall_lr if recall_lr is None else recall_lr,
            state_momentum=self.state_momentum,
        )
        return am_recall(self.network_, X, spec, frozen_mask=frozen_mask)
