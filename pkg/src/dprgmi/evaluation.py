"""AUROC, regularised linear probes on frozen embeddings, and the utilization gap."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.special import expit

from .errors import (AllLabelsDegenerateError, ConvergenceWarning, InputError, ShapeError,
                     UndefinedLabelError, UnitError)
from .stats import rank_with_ties

DEFAULT_LAMBDA = 1e-2
PROBE_TOL = 1e-7
# the 1e-7 gradient bound alone leaves the iterate up to ~|grad|/lam from the optimum,
# so the probe keeps going to a tighter bound to make restarts agree within 1e-6
PROBE_POLISH_TOL = 1e-9
PROBE_MAX_ITER = 5000
ARMIJO_C = 1e-4


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC: P(score_pos > score_neg) + 0.5 P(tie), via rank sums."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ShapeError("scores and labels must be vectors of equal length")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = y.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedLabelError("AUROC undefined: labels contain a single class")
    r = rank_with_ties(s)
    u = r[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def defined_labels(labels) -> np.ndarray:
    labels = np.asarray(labels)
    pos = labels.sum(axis=0)
    return (pos > 0) & (pos < labels.shape[0])


def macro_auroc(scores, labels):
    """Unweighted mean AUROC over labels with both classes present.

    Returns ``(value, mask)`` where ``mask[l]`` is False for excluded labels.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 2:
        raise ShapeError("scores and labels must be N x L arrays of equal shape")
    mask = defined_labels(labels)
    if not mask.any():
        raise AllLabelsDegenerateError("no label has both classes present")
    vals = [auroc(scores[:, l], labels[:, l]) for l in np.flatnonzero(mask)]
    return float(np.mean(vals)), mask


def per_label_auroc(scores, labels) -> np.ndarray:
    """AUROC per label, NaN where a label is degenerate."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    out = np.full(labels.shape[1], np.nan)
    for l in np.flatnonzero(defined_labels(labels)):
        out[l] = auroc(scores[:, l], labels[:, l])
    return out


@dataclass
class ProbeModel:
    W: np.ndarray
    b: np.ndarray
    lam: float
    fitted: np.ndarray  # per-label: False when the label was skipped
    grad_norms: np.ndarray = field(default=None)
    iterations: np.ndarray = field(default=None)


@dataclass
class LogisticFit:
    w: np.ndarray
    b: float
    grad_norm: float
    iterations: int
    converged: bool
    objective_trace: Optional[List[float]] = None


def _objective(Z, y, pos_weight, lam, w, b):
    s = Z @ w + b
    loss = pos_weight * y * np.logaddexp(0.0, -s) + (1.0 - y) * np.logaddexp(0.0, s)
    r = -pos_weight * y * expit(-s) + (1.0 - y) * expit(s)
    n = Z.shape[0]
    f = loss.sum() / n + 0.5 * lam * float(w @ w)
    gw = Z.T @ r / n + lam * w
    gb = r.sum() / n
    return f, np.r_[gw, gb]


def fit_logistic(Z, y, pos_weight: float, lam: float, init=None, tol: float = PROBE_TOL,
                 max_iter: int = PROBE_MAX_ITER, trace: bool = False) -> LogisticFit:
    """Weighted ridge logistic regression by gradient descent with backtracking.

    Minimises ``mean(weighted BCE) + lam/2 ||w||^2`` (bias unpenalised). Trial
    steps use the Barzilai-Borwein length and are halved until the Armijo
    condition holds, so every accepted step lowers the objective.
    """
    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    d = Z.shape[1]
    x = np.zeros(d + 1) if init is None else np.asarray(init, dtype=np.float64).copy()

    def fg(v):
        return _objective(Z, y, pos_weight, lam, v[:d], v[d])

    f, g = fg(x)
    hist = [f] if trace else None
    step = 1.0
    it = 0
    gnorm = float(np.max(np.abs(g)))
    while gnorm > tol and it < max_iter:
        t = step
        gg = float(g @ g)
        accepted = False
        while t >= 1e-20:
            x_new = x - t * g
            f_new, g_new = fg(x_new)
            if f_new <= f - ARMIJO_C * t * gg:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        s_vec, y_vec = x_new - x, g_new - g
        sy = float(s_vec @ y_vec)
        step = float(np.clip(float(s_vec @ s_vec) / sy, 1e-10, 1e10)) if sy > 0 else 1.0
        x, f, g = x_new, f_new, g_new
        if trace:
            hist.append(f)
        gnorm = float(np.max(np.abs(g)))
        it += 1
    return LogisticFit(x[:d].copy(), float(x[d]), gnorm, it, gnorm <= tol, hist)


def train_probe(Z_train, Y_train, lam: float = DEFAULT_LAMBDA, weights=None,
                tol: float = PROBE_TOL, max_iter: int = PROBE_MAX_ITER, init=None,
                polish_tol: Optional[float] = PROBE_POLISH_TOL) -> ProbeModel:
    """Fit one regularised linear probe per label on frozen embeddings.

    ``init`` optionally gives a starting ``(W, b)`` pair; for ``lam > 0`` the
    optimum does not depend on it. Iteration continues to ``polish_tol`` when
    that is tighter; only missing ``tol`` triggers a :class:`ConvergenceWarning`.
    """
    Z = np.asarray(Z_train, dtype=np.float64)
    Y = np.asarray(Y_train)
    if lam < 0:
        raise InputError("probe regularisation must be >= 0")
    if Z.ndim != 2 or Y.ndim != 2 or Z.shape[0] != Y.shape[0]:
        raise ShapeError("embeddings and labels must have matching row counts")
    n, d = Z.shape
    L = Y.shape[1]
    w_pos = np.ones(L) if weights is None else np.asarray(weights, dtype=np.float64)
    W = np.zeros((L, d))
    b = np.zeros(L)
    fitted = defined_labels(Y)
    gn = np.full(L, np.nan)
    iters = np.zeros(L, dtype=int)
    for l in range(L):
        if not fitted[l]:
            continue
        x0 = None if init is None else np.r_[init[0][l], init[1][l]]
        stop = tol if polish_tol is None else min(tol, polish_tol)
        fit = fit_logistic(Z, Y[:, l], float(w_pos[l]), lam, init=x0, tol=stop, max_iter=max_iter)
        W[l], b[l], gn[l], iters[l] = fit.w, fit.b, fit.grad_norm, fit.iterations
        if fit.grad_norm > tol:
            warnings.warn(ConvergenceWarning(
                f"probe for label {l} stopped after {fit.iterations} iterations with "
                f"gradient norm {fit.grad_norm:.3e}", grad_norm=fit.grad_norm))
    return ProbeModel(W, b, float(lam), fitted, gn, iters)


def probe_predict(probe: ProbeModel, Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[1] != probe.W.shape[1]:
        raise ShapeError(f"probe expects {probe.W.shape[1]}-dim embeddings, got {Z.shape}")
    return Z @ probe.W.T + probe.b


def _infer_unit(*values):
    if all(0.0 <= v <= 1.0 for v in values):
        return "fraction"
    if all(1.0 < v <= 100.0 for v in values):
        return "percent"
    raise UnitError(f"cannot reconcile units of {values}: mix of fractions and percentages?")


def utilization_gap(u_probe: float, u_end2end: float, unit: Optional[str] = None) -> float:
    """Probe utility minus end-to-end utility; negative when the head beats the probe.

    ``unit`` is ``"fraction"`` or ``"percent"``; when omitted it is inferred and
    inputs that only make sense in different units raise :class:`UnitError`.
    """
    u_probe, u_end2end = float(u_probe), float(u_end2end)
    if unit is None:
        unit = _infer_unit(u_probe, u_end2end)
    hi = {"fraction": 1.0, "percent": 100.0}.get(unit)
    if hi is None:
        raise UnitError(f"unknown unit {unit!r}")
    if not (0.0 <= u_probe <= hi and 0.0 <= u_end2end <= hi):
        raise UnitError(f"utilities {u_probe}, {u_end2end} out of range for unit {unit}")
    return u_probe - u_end2end
