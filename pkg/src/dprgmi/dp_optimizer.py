"""DP-SGD (per-sample clipping, Gaussian noise, Poisson subsampling) and the
non-private minibatch baseline.

The noisy gradient is ``(sum_i clip(g_i) + xi) / B_exp`` with
``xi ~ N(0, sigma^2 C^2 I)`` and ``B_exp = q * N``: the noise is calibrated to
the sum, whose sensitivity is ``C``, and the divisor is the expected rather
than the realised batch size so it does not depend on the data.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import accountant
from .errors import ConfigError, DivergenceError, SpecificationError
from .model import ModelConfig, Params, per_sample_gradients
from .rng import substream
from .synthdata import Dataset

log = logging.getLogger(__name__)

INF = math.inf


@dataclass(frozen=True)
class PrivacySpec:
    epsilon_target: float = INF
    delta: float = 1e-5
    clip_norm: float = 1.0
    sample_rate: float = 0.01
    steps: int = 1000
    noise_multiplier: Optional[float] = None

    def __post_init__(self):
        if not (self.epsilon_target > 0):
            raise ConfigError("epsilon target must be > 0 (use inf for non-private)")
        if not (0.0 < self.delta < 1.0):
            raise ConfigError("delta must lie in (0, 1)")
        if not self.clip_norm > 0:
            raise ConfigError("clip norm must be > 0")
        if not (0.0 < self.sample_rate <= 1.0):
            raise ConfigError("sample rate must lie in (0, 1]")
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if self.noise_multiplier is not None and not self.noise_multiplier > 0:
            raise ConfigError("noise multiplier must be > 0")

    @property
    def private(self) -> bool:
        return math.isfinite(self.epsilon_target)

    def resolve(self) -> "PrivacySpec":
        """Return a copy whose noise multiplier is calibrated to the epsilon target."""
        if self.noise_multiplier is not None or not self.private:
            return self
        sigma = accountant.calibrate_sigma(self.epsilon_target, self.delta, self.sample_rate, self.steps)
        return dataclasses.replace(self, noise_multiplier=sigma)

    def check_dataset(self, n_train: int) -> None:
        if self.sample_rate * n_train < 1:
            raise ConfigError(f"expected batch q*N = {self.sample_rate * n_train:.3g} is below 1")
        if self.delta >= 1.0 / n_train:
            warnings.warn(f"delta={self.delta} is not below 1/N_train={1.0 / n_train:.3g}")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    momentum: float = 0.9
    expected_batch: float = 128.0
    seed: int = 0
    weights: Optional[np.ndarray] = None
    workers: int = 1

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ConfigError("learning rate must be >= 0")
        if not (0.0 <= self.momentum < 1.0):
            raise ConfigError("momentum must lie in [0, 1)")
        if not self.expected_batch >= 1:
            raise ConfigError("expected batch must be >= 1")


def _row_norms(G: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", G, G))


def clip_rows(G: np.ndarray, C: float):
    """Scale each row to norm at most ``C``; rows inside the ball are left untouched.

    Returns ``(clipped, pre_clip_norms)``.
    """
    norms = _row_norms(G)
    factor = np.ones_like(norms)
    big = norms > C
    factor[big] = C / norms[big]
    return G * factor[:, None], norms


def clip(g, C: float) -> np.ndarray:
    """``g * min(1, C / ||g||)``; a zero vector is returned unchanged."""
    if not C > 0:
        raise ConfigError("clip norm must be > 0")
    g = np.asarray(g, dtype=np.float64)
    return clip_rows(g.reshape(1, -1), C)[0].reshape(g.shape)


def poisson_sample(n: int, q: float, step_index: int, seed: int) -> np.ndarray:
    """Indices included independently with probability ``q`` (possibly none)."""
    if not (0.0 < q <= 1.0):
        raise ConfigError("sample rate must lie in (0, 1]")
    return np.flatnonzero(substream(seed, "poisson", step_index).random(n) < q)


def step_noise(P: int, std: float, step_index: int, seed: int) -> np.ndarray:
    return substream(seed, "noise", step_index).normal(0.0, std, size=P)


def _weights(cfg: TrainConfig, dataset: Dataset):
    return np.ones(dataset.n_labels) if cfg.weights is None else np.asarray(cfg.weights, dtype=np.float64)


def dp_step(params: Params, dataset: Dataset, indices, spec: PrivacySpec, cfg: TrainConfig,
            step_index: int, velocity: Optional[np.ndarray] = None,
            hook: Optional[Callable[[dict], None]] = None):
    """One DP-SGD step with momentum; returns ``(params, velocity)``.

    An empty batch still draws the noise and updates with it.
    """
    if spec.noise_multiplier is None:
        raise SpecificationError("noise multiplier unresolved; call PrivacySpec.resolve() first")
    model_cfg = params.config
    P = model_cfg.n_params
    indices = np.asarray(indices, dtype=np.int64)
    G, losses = per_sample_gradients(params, dataset.features[indices], dataset.labels[indices],
                                     _weights(cfg, dataset), workers=cfg.workers, return_loss=True)
    if not np.isfinite(losses).all() or not np.isfinite(G).all():
        raise DivergenceError(step_index)
    Gc, norms = clip_rows(G, spec.clip_norm)
    total = Gc.sum(axis=0) if Gc.shape[0] else np.zeros(P)
    xi = step_noise(P, spec.noise_multiplier * spec.clip_norm, step_index, cfg.seed)
    g_tilde = (total + xi) / cfg.expected_batch
    if hook is not None:
        hook({"step": step_index, "indices": indices, "pre_norms": norms,
              "post_norms": _row_norms(Gc), "raw": G, "clipped": Gc, "noise": xi})
    v = np.zeros(P) if velocity is None else velocity
    v = cfg.momentum * v + g_tilde
    theta = params.ravel() - cfg.learning_rate * v
    if not np.isfinite(theta).all():
        raise DivergenceError(step_index)
    return Params.unravel(model_cfg, theta), v


def train_private(dataset_train: Dataset, model_cfg: ModelConfig, init: Params, spec: PrivacySpec,
                  cfg: TrainConfig, hook=None):
    """Run ``spec.steps`` DP-SGD steps from ``init``.

    Returns ``(params, (eps_consumed, delta))`` with epsilon from the RDP accountant.
    """
    if spec.noise_multiplier is None:
        raise SpecificationError("noise multiplier unresolved; call PrivacySpec.resolve() first")
    if init.config != model_cfg:
        raise ConfigError("initial parameters do not match the model configuration")
    spec.check_dataset(dataset_train.n)
    params, v = init.copy(), None
    for t in range(spec.steps):
        idx = poisson_sample(dataset_train.n, spec.sample_rate, t, cfg.seed)
        params, v = dp_step(params, dataset_train, idx, spec, cfg, t, velocity=v, hook=hook)
    eps = accountant.epsilon(spec.sample_rate, spec.noise_multiplier, spec.steps, spec.delta)
    log.debug("DP-SGD finished: %d steps, sigma=%.4f, eps=%.4f", spec.steps, spec.noise_multiplier, eps)
    return params, (eps, spec.delta)


def train_nonprivate(dataset_train: Dataset, model_cfg: ModelConfig, init: Params, cfg: TrainConfig,
                     steps: int, tag: str = "shuffle") -> Params:
    """Shuffled minibatch SGD with momentum, batch ``floor(expected_batch)``, no clipping or noise."""
    if init.config != model_cfg:
        raise ConfigError("initial parameters do not match the model configuration")
    n = dataset_train.n
    batch = min(int(math.floor(cfg.expected_batch)), n)
    w = _weights(cfg, dataset_train)
    theta = init.ravel()
    v = np.zeros_like(theta)
    params = init.copy()
    epoch, order, pos = 0, None, n
    for t in range(steps):
        if pos + batch > n:
            order = substream(cfg.seed, tag, epoch).permutation(n)
            epoch, pos = epoch + 1, 0
        idx = order[pos:pos + batch]
        pos += batch
        G, losses = per_sample_gradients(params, dataset_train.features[idx], dataset_train.labels[idx],
                                         w, workers=cfg.workers, return_loss=True)
        if not np.isfinite(losses).all() or not np.isfinite(G).all():
            raise DivergenceError(t)
        v = cfg.momentum * v + G.sum(axis=0) / batch
        theta = theta - cfg.learning_rate * v
        if not np.isfinite(theta).all():
            raise DivergenceError(t)
        params = Params.unravel(model_cfg, theta)
    return params
