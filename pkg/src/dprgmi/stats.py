"""Tie-aware ranks, Spearman correlation and the paired nonparametric bootstrap."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, Mapping, Sequence

import numpy as np

from .errors import BootstrapDegeneracyError, ConfigError, InputError, UndefinedStatisticError
from .rng import substream

MAX_DROP_FRACTION = 0.10


def rank_with_ties(v) -> np.ndarray:
    """Ranks 1..n, tied values sharing the average of their positions."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise InputError("rank_with_ties expects a vector")
    n = v.shape[0]
    order = np.argsort(v, kind="mergesort")
    sv = v[order]
    # boundaries of runs of equal values in sorted order
    starts = np.flatnonzero(np.r_[True, sv[1:] != sv[:-1]])
    ends = np.r_[starts[1:], n]
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(n)
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def spearman(x, y) -> float:
    """Pearson correlation of the tie-averaged ranks of ``x`` and ``y``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise InputError("spearman needs two vectors of equal length")
    if x.shape[0] < 2:
        raise InputError("spearman needs at least two points")
    rx = rank_with_ties(x)
    ry = rank_with_ties(y)
    rx -= rx.mean()
    ry -= ry.mean()
    sxx, syy = float(rx @ rx), float(ry @ ry)
    if sxx == 0 or syy == 0:
        raise UndefinedStatisticError("spearman correlation undefined for a constant vector")
    rho = float(rx @ ry) / np.sqrt(sxx * syy)
    return float(np.clip(rho, -1.0, 1.0))


@dataclass(frozen=True)
class BootstrapResult:
    point: float
    mean: float
    std: float
    ci_low: float
    ci_high: float
    B: int
    dropped: int = 0

    def to_dict(self) -> dict:
        return {"point": self.point, "mean": self.mean, "std": self.std,
                "ci_low": self.ci_low, "ci_high": self.ci_high, "B": self.B,
                "dropped": self.dropped}

    @classmethod
    def from_dict(cls, d: Mapping) -> "BootstrapResult":
        return cls(float(d["point"]), float(d["mean"]), float(d["std"]), float(d["ci_low"]),
                   float(d["ci_high"]), int(d["B"]), int(d.get("dropped", 0)))


def resample_indices(n: int, b: int, seed: int) -> np.ndarray:
    return substream(seed, "bootstrap", b).integers(0, n, size=n)


def _summarise(point, values, B, dropped):
    values = np.asarray(values, dtype=np.float64)
    # shifting by one resample keeps a constant statistic at exactly zero spread
    dev = values - values[0]
    std = float(np.std(dev, ddof=1)) if values.size > 1 else 0.0
    lo, hi = np.percentile(values, [2.5, 97.5])
    return BootstrapResult(float(point), float(values[0] + dev.mean()), std, float(lo), float(hi), B,
                           dropped)


def bootstrap_many(fn: Callable[[np.ndarray], Sequence[float]], names: Sequence[str], n: int,
                   B: int, seed: int, workers: int = 1) -> Dict[str, BootstrapResult]:
    """Bootstrap a vector-valued statistic over resampled index multisets.

    ``fn`` maps an index array (length ``n``, drawn with replacement from the
    ``(seed, "bootstrap", b)`` substream) to one value per name, so every
    value of a resample sees the same indices. A resample on which ``fn``
    raises :class:`UndefinedStatisticError` is dropped for all names; more
    than 10% dropped raises :class:`BootstrapDegeneracyError`.
    """
    if B < 1 or n < 1:
        raise ConfigError("bootstrap needs B >= 1 and n >= 1")
    names = list(names)
    point = list(fn(np.arange(n)))

    def one(b):
        try:
            return list(fn(resample_indices(n, b, seed)))
        except UndefinedStatisticError:
            return None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, range(B)))
    else:
        rows = [one(b) for b in range(B)]
    kept = [r for r in rows if r is not None]
    dropped = B - len(kept)
    if dropped > MAX_DROP_FRACTION * B or not kept:
        raise BootstrapDegeneracyError(dropped, B)
    table = np.asarray(kept, dtype=np.float64)
    return {k: _summarise(point[j], table[:, j], B, dropped) for j, k in enumerate(names)}


def paired_bootstrap(statistics: Mapping[str, Callable[[np.ndarray], float]], n: int, B: int,
                     seed: int, workers: int = 1) -> Dict[str, BootstrapResult]:
    """Bootstrap several scalar statistics on shared resamples (see :func:`bootstrap_many`)."""
    names = list(statistics)
    return bootstrap_many(lambda idx: [statistics[k](idx) for k in names], names, n, B, seed, workers)


def bootstrap(statistic: Callable[[np.ndarray], float], n: int, B: int, seed: int,
              workers: int = 1) -> BootstrapResult:
    return paired_bootstrap({"stat": statistic}, n, B, seed, workers)["stat"]
