"""Two-layer tanh encoder with a linear multi-label head.

``phi(x) = W2 tanh(W1 x + b1) + b2`` is the encoder and ``h(z) = Wh z + bh`` the
head. Per-sample gradients of the weighted sigmoid cross-entropy are computed
by hand-written backpropagation, batched over samples.

All row-wise products go through ``np.einsum`` (no BLAS): BLAS kernels change
their summation order with the number of rows, which would make an embedding
depend on what else is in the batch.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import DegenerateLabelError, FormatError, InputError, ShapeError, TruncationError, VersionError
from .rng import substream

PARAM_NAMES = ("W1", "b1", "W2", "b2", "Wh", "bh")
CHUNK_ROWS = 64


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    n_labels: int
    hidden_dim: int = 64
    embed_dim: int = 16

    def __post_init__(self):
        for name in ("input_dim", "n_labels", "hidden_dim", "embed_dim"):
            if int(getattr(self, name)) < 1:
                raise ShapeError(f"{name} must be >= 1")

    def shapes(self):
        p, h, d, L = self.input_dim, self.hidden_dim, self.embed_dim, self.n_labels
        return {"W1": (h, p), "b1": (h,), "W2": (d, h), "b2": (d,), "Wh": (L, d), "bh": (L,)}

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.shapes().values())


@dataclass
class Params:
    """Model parameters; also used for gradient-shaped values."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    Wh: np.ndarray
    bh: np.ndarray

    @property
    def config(self) -> ModelConfig:
        return ModelConfig(input_dim=self.W1.shape[1], n_labels=self.Wh.shape[0],
                           hidden_dim=self.W1.shape[0], embed_dim=self.W2.shape[0])

    def arrays(self):
        return [getattr(self, n) for n in PARAM_NAMES]

    def ravel(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    @classmethod
    def unravel(cls, cfg: ModelConfig, flat: np.ndarray) -> "Params":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (cfg.n_params,):
            raise ShapeError(f"expected flat vector of length {cfg.n_params}, got {flat.shape}")
        out, pos = {}, 0
        for name, shape in cfg.shapes().items():
            size = int(np.prod(shape))
            out[name] = flat[pos:pos + size].reshape(shape).copy()
            pos += size
        return cls(**out)

    def copy(self) -> "Params":
        return Params(*(a.copy() for a in self.arrays()))

    def encoder_equal(self, other: "Params") -> bool:
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in ("W1", "b1", "W2", "b2"))

    def __eq__(self, other):
        if not isinstance(other, Params):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))


def init_params(cfg: ModelConfig, seed: int) -> Params:
    """Gaussian weights with std ``1/sqrt(fan_in)``, zero biases."""
    rng = substream(seed, "init", 0)
    arrays = {}
    for name, shape in cfg.shapes().items():
        if name.startswith("b"):
            arrays[name] = np.zeros(shape)
        else:
            arrays[name] = rng.standard_normal(shape) / np.sqrt(shape[1])
    return Params(**arrays)


def zeros_like_config(cfg: ModelConfig) -> Params:
    return Params(**{n: np.zeros(s) for n, s in cfg.shapes().items()})


def _check_inputs(params: Params, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.W1.shape[1]:
        raise ShapeError(f"expected inputs with {params.W1.shape[1]} columns, got shape {X.shape}")
    return X


def _forward_rows(params: Params, X: np.ndarray):
    a1 = np.einsum("np,hp->nh", X, params.W1) + params.b1
    h = np.tanh(a1)
    z = np.einsum("nh,dh->nd", h, params.W2) + params.b2
    s = np.einsum("nd,ld->nl", z, params.Wh) + params.bh
    return h, z, s


def forward(params: Params, x):
    """Return ``(embedding, logits)`` for a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("forward expects a single input vector")
    _, z, s = _forward_rows(params, _check_inputs(params, x[None, :]))
    return z[0], s[0]


def _map_chunks(fn, n: int, workers: int):
    # fixed chunk boundaries: results never depend on the worker count
    bounds = [(i, min(i + CHUNK_ROWS, n)) for i in range(0, n, CHUNK_ROWS)]
    if workers <= 1 or len(bounds) <= 1:
        return [fn(lo, hi) for lo, hi in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))


def embed_batch(params: Params, X, workers: int = 1) -> np.ndarray:
    """Encoder outputs for every row of ``X`` (an ``N x d`` array)."""
    X = _check_inputs(params, X)
    if X.shape[0] == 0:
        return np.zeros((0, params.W2.shape[0]))
    parts = _map_chunks(lambda lo, hi: _forward_rows(params, X[lo:hi])[1], X.shape[0], workers)
    return np.concatenate(parts, axis=0)


def predict_logits(params: Params, X, workers: int = 1) -> np.ndarray:
    X = _check_inputs(params, X)
    if X.shape[0] == 0:
        return np.zeros((0, params.Wh.shape[0]))
    parts = _map_chunks(lambda lo, hi: _forward_rows(params, X[lo:hi])[2], X.shape[0], workers)
    return np.concatenate(parts, axis=0)


def _check_labels(y) -> np.ndarray:
    y = np.asarray(y)
    if not np.isin(y, (0, 1)).all():
        raise InputError("labels must be 0 or 1")
    return y.astype(np.float64)


def weighted_bce(logits, y, weights) -> np.ndarray:
    """Row-wise weighted sigmoid cross-entropy, summed over labels."""
    s = np.asarray(logits, dtype=np.float64)
    y = _check_labels(y)
    w = np.asarray(weights, dtype=np.float64)
    # logaddexp(0, t) is a stable softplus
    per_label = w * y * np.logaddexp(0.0, -s) + (1.0 - y) * np.logaddexp(0.0, s)
    return per_label.sum(axis=-1)


def sample_loss(logits, y, weights) -> float:
    return float(weighted_bce(np.asarray(logits)[None, :], np.asarray(y)[None, :], weights)[0])


def loss_grad_logits(logits, y, weights) -> np.ndarray:
    """Derivative of :func:`weighted_bce` with respect to the logits."""
    w = np.asarray(weights, dtype=np.float64)
    return -w * y * expit(-logits) + (1.0 - y) * expit(logits)


def _grad_rows(params: Params, X, Y, weights, with_loss: bool):
    h, z, s = _forward_rows(params, X)
    ds = loss_grad_logits(s, Y, weights)
    dz = np.einsum("nl,ld->nd", ds, params.Wh)
    dh = np.einsum("nd,dh->nh", dz, params.W2)
    da = dh * (1.0 - h * h)
    n = X.shape[0]
    G = np.concatenate([
        np.einsum("nh,np->nhp", da, X).reshape(n, -1),
        da,
        np.einsum("nd,nh->ndh", dz, h).reshape(n, -1),
        dz,
        np.einsum("nl,nd->nld", ds, z).reshape(n, -1),
        ds,
    ], axis=1)
    if with_loss:
        return G, weighted_bce(s, Y, weights)
    return G


def per_sample_gradients(params: Params, X, Y, weights, workers: int = 1, return_loss: bool = False):
    """Flattened per-sample gradients as an ``N x P`` array (row order = sample order)."""
    X = _check_inputs(params, X)
    Y = _check_labels(Y)
    if Y.shape != (X.shape[0], params.Wh.shape[0]):
        raise ShapeError(f"labels shape {Y.shape} does not match inputs {X.shape}")
    n = X.shape[0]
    P = params.config.n_params
    if n == 0:
        G = np.zeros((0, P))
        return (G, np.zeros(0)) if return_loss else G
    parts = _map_chunks(lambda lo, hi: _grad_rows(params, X[lo:hi], Y[lo:hi], weights, True), n, workers)
    G = np.concatenate([p[0] for p in parts], axis=0)
    if return_loss:
        return G, np.concatenate([p[1] for p in parts])
    return G


def per_sample_gradient(params: Params, x, y, weights) -> Params:
    """Exact gradient of the weighted loss at one sample, shaped like ``params``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    G = per_sample_gradients(params, x[None, :], y[None, :], weights)
    return Params.unravel(params.config, G[0])


def pos_weights(labels) -> np.ndarray:
    """Positive-class weight ``#neg / #pos`` for every label."""
    labels = np.asarray(labels)
    pos = labels.sum(axis=0).astype(np.float64)
    neg = labels.shape[0] - pos
    for l in range(labels.shape[1]):
        if pos[l] == 0 or neg[l] == 0:
            raise DegenerateLabelError(l, f"label {l} is degenerate (all {'negative' if pos[l] == 0 else 'positive'})")
    return neg / pos


# --- checkpoint format ------------------------------------------------------
# "DPRP" | u16 version | u32 tensor count | per tensor:
#   u16 name length, UTF-8 name, u8 rank, rank x u64 dims, float64 LE row-major

CKPT_MAGIC = b"DPRP"
CKPT_VERSION = 1


def save_params(params: Params, path) -> None:
    buf = bytearray(CKPT_MAGIC)
    buf += struct.pack("<HI", CKPT_VERSION, len(PARAM_NAMES))
    for name in PARAM_NAMES:
        arr = np.ascontiguousarray(getattr(params, name), dtype="<f8")
        raw = name.encode()
        buf += struct.pack("<H", len(raw)) + raw
        buf += struct.pack("<B", arr.ndim)
        buf += struct.pack(f"<{arr.ndim}Q", *arr.shape)
        buf += arr.tobytes()
    try:
        Path(path).write_bytes(bytes(buf))
    except OSError as exc:
        raise FormatError(f"cannot write checkpoint {path}: {exc}") from exc


def load_params(path) -> Params:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read checkpoint {path}: {exc}") from exc
    if data[:4] != CKPT_MAGIC:
        raise FormatError(f"{path}: bad checkpoint magic")
    pos = 4

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise TruncationError(f"{path}: truncated checkpoint")
        vals = struct.unpack_from(fmt, data, pos)
        pos += size
        return vals

    version, count = take("<HI")
    if version != CKPT_VERSION:
        raise VersionError(f"{path}: unsupported checkpoint version {version}")
    tensors = {}
    for _ in range(count):
        (nlen,) = take("<H")
        if pos + nlen > len(data):
            raise TruncationError(f"{path}: truncated checkpoint")
        name = data[pos:pos + nlen].decode()
        pos += nlen
        (rank,) = take("<B")
        dims = take(f"<{rank}Q")
        size = int(np.prod(dims, dtype=np.uint64)) if rank else 1
        nbytes = 8 * size
        if pos + nbytes > len(data):
            raise TruncationError(f"{path}: truncated tensor {name}")
        tensors[name] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(dims).astype(np.float64)
        pos += nbytes
    if pos != len(data):
        raise FormatError(f"{path}: trailing bytes after last tensor")
    missing = set(PARAM_NAMES) - set(tensors)
    if missing:
        raise FormatError(f"{path}: missing tensors {sorted(missing)}")
    params = Params(**{n: tensors[n] for n in PARAM_NAMES})
    cfg = params.config
    for name, shape in cfg.shapes().items():
        if getattr(params, name).shape != shape:
            raise FormatError(f"{path}: tensor {name} has inconsistent shape")
    return params
