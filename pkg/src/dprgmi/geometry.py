"""Embedding geometry: displacement from initialization and effective dimension."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, InputError, PairingError


@dataclass(frozen=True)
class CovarianceSummary:
    trace: float
    frob_sq: float
    d_eff: float


def as_embedding(Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] < 1 or Z.shape[1] < 1:
        raise InputError(f"embedding matrix must be N x d with N, d >= 1; got {Z.shape}")
    if not np.isfinite(Z).all():
        raise InputError("embedding matrix has non-finite entries")
    return Z


def displacement(Z_eps, Z_0) -> float:
    """Mean squared Euclidean distance between paired embedding rows."""
    Z_eps, Z_0 = as_embedding(Z_eps), as_embedding(Z_0)
    if Z_eps.shape != Z_0.shape:
        raise PairingError(f"cannot pair embeddings of shapes {Z_eps.shape} and {Z_0.shape}")
    diff = Z_eps - Z_0
    return float(np.mean(np.sum(diff * diff, axis=1)))


def covariance(Z) -> np.ndarray:
    """Mean-centred covariance with 1/N normalisation."""
    Z = as_embedding(Z)
    if Z.shape[0] < 2:
        raise InputError("covariance needs at least two rows")
    C = Z - Z.mean(axis=0)
    return (C.T @ C) / Z.shape[0]


def covariance_summary(Z) -> CovarianceSummary:
    S = covariance(Z)
    trace = float(np.trace(S))
    # tr(S^2) = ||S||_F^2 for symmetric S
    frob_sq = float(np.sum(S * S))
    d_eff = trace ** 2 / frob_sq if frob_sq > 0 else float("nan")
    return CovarianceSummary(trace, frob_sq, d_eff)


def effective_dimension(Z) -> float:
    """Participation ratio ``tr(S)^2 / tr(S^2)`` of the embedding covariance."""
    s = covariance_summary(Z)
    if not s.frob_sq > 0:
        raise DegenerateGeometryError("all embeddings identical: effective dimension undefined")
    return s.d_eff
