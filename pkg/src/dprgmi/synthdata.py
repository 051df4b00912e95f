"""Seeded synthetic multi-label datasets.

Each label ``l`` owns a fixed unit direction ``u_l`` (the directions are
mutually orthonormal) and a positive sample is shifted by ``class_sep`` along
it, so every label is linearly recoverable with a known signal-to-noise ratio::

    x = sum_l y_l * class_sep * u_l + noise,   noise ~ N(0, noise_std^2 I)
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, FormatError, ShapeError
from .rng import substream

TRAIN_FRACTION = 0.8


@dataclass(frozen=True)
class SynthConfig:
    n_samples: int
    feature_dim: int
    n_labels: int
    class_sep: float = 2.0
    noise_std: float = 1.0
    label_prevalence: Sequence[float] = ()
    seed: int = 0
    # Seed of the label directions; defaults to ``seed``. Two configs sharing
    # it describe the same task with independent samples (used for pretraining
    # on a source task).
    direction_seed: Optional[int] = None

    def __post_init__(self):
        prev = tuple(float(v) for v in self.label_prevalence) or (0.5,) * self.n_labels
        object.__setattr__(self, "label_prevalence", prev)
        self.validate()

    def validate(self):
        if self.n_samples < 2:
            raise ConfigError("n_samples must be >= 2")
        if self.n_labels < 1:
            raise ConfigError("n_labels must be >= 1")
        if self.feature_dim < self.n_labels:
            raise ConfigError(
                f"feature_dim ({self.feature_dim}) must be >= n_labels ({self.n_labels})")
        if len(self.label_prevalence) != self.n_labels:
            raise ConfigError("label_prevalence needs one entry per label")
        if not all(0.0 < v < 1.0 for v in self.label_prevalence):
            raise ConfigError("label prevalences must lie strictly inside (0, 1)")
        if self.class_sep < 0:
            raise ConfigError("class_sep must be >= 0")
        if not self.noise_std > 0:
            raise ConfigError("noise_std must be > 0")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown synth fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["label_prevalence"] = list(self.label_prevalence)
        return d


@dataclass(eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    split: str = "train"
    name: str = field(default="dataset", compare=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if self.features.ndim != 2 or self.labels.ndim != 2:
            raise ShapeError("features and labels must be 2-D")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ShapeError("features and labels have different row counts")
        if not np.isin(self.labels, (0, 1)).all():
            raise ShapeError("labels must be binary")
        self.labels = self.labels.astype(np.int8)
        if self.split not in ("train", "test"):
            raise ConfigError(f"unknown split {self.split!r}")

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.split == other.split and np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def n_labels(self) -> int:
        return self.labels.shape[1]


def label_directions(feature_dim: int, n_labels: int, seed: int) -> np.ndarray:
    """Return an ``(n_labels, feature_dim)`` matrix with orthonormal rows."""
    g = substream(seed, "synth", 0).standard_normal((feature_dim, n_labels))
    q, r = np.linalg.qr(g)
    # fix the sign ambiguity of QR so directions depend only on the seed
    q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
    return q.T.copy()


def split_indices(n: int, seed: int):
    n_train = min(max(int(round(TRAIN_FRACTION * n)), 1), n - 1)
    perm = substream(seed, "synth", 2).permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def generate(cfg: SynthConfig):
    """Sample ``(train, test)`` datasets; identical configs give identical bytes."""
    cfg.validate()
    dseed = cfg.seed if cfg.direction_seed is None else cfg.direction_seed
    u = label_directions(cfg.feature_dim, cfg.n_labels, dseed)
    rng = substream(cfg.seed, "synth", 1)
    prev = np.asarray(cfg.label_prevalence)
    labels = (rng.random((cfg.n_samples, cfg.n_labels)) < prev).astype(np.int8)
    noise = rng.normal(0.0, cfg.noise_std, size=(cfg.n_samples, cfg.feature_dim))
    features = labels @ (cfg.class_sep * u) + noise
    tr, te = split_indices(cfg.n_samples, cfg.seed)
    return (Dataset(features[tr], labels[tr], "train", name=f"synth-{cfg.seed}"),
            Dataset(features[te], labels[te], "test", name=f"synth-{cfg.seed}"))


def save_dataset(ds: Dataset, path) -> None:
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            np.savez(fh, features=ds.features, labels=ds.labels,
                     split=np.array(ds.split), name=np.array(ds.name))
    except OSError as exc:
        raise FormatError(f"cannot write dataset {path}: {exc}") from exc


def load_dataset(path) -> Dataset:
    try:
        with np.load(path, allow_pickle=False) as z:
            return Dataset(z["features"], z["labels"], str(z["split"]), name=str(z["name"]))
    except (OSError, KeyError, ValueError) as exc:
        raise FormatError(f"cannot read dataset {path}: {exc}") from exc
