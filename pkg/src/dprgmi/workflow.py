"""Sweep orchestration: one diagnostic record per (branch, epsilon, seed).

For every record the model is trained (DP-SGD for finite epsilon, plain SGD
otherwise), scored end to end on the test split, embedded alongside the
branch's shared initialization, probed with a ridge logistic head on frozen
training embeddings, and the five statistics are bootstrapped jointly over
test indices.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__, accountant
from .dp_optimizer import PrivacySpec, TrainConfig, train_nonprivate, train_private
from .errors import ConfigError, DPRGMIError, FormatError, NumericalError, VersionError
from .evaluation import auroc, defined_labels, probe_predict, train_probe
from .formats import dumps, parse_float
from .geometry import displacement, effective_dimension
from .model import ModelConfig, Params, embed_batch, init_params, load_params, pos_weights, predict_logits
from .rng import derive_seed
from .stats import BootstrapResult, bootstrap_many, spearman
from .synthdata import Dataset, SynthConfig, generate, load_dataset

log = logging.getLogger(__name__)

REPORT_FORMAT = "dprgmi-report"
REPORT_VERSION = 1
STAT_NAMES = ("auroc_end2end", "auroc_probe", "gap", "displacement", "d_eff")
PRIVATE_EPS_LIMIT = 10.0
EPS_SLACK = 1e-3


def parse_epsilon(v) -> float:
    if isinstance(v, str) and v.strip().lower() in ("inf", "infinity", "∞"):
        return math.inf
    eps = float(v)
    if not eps > 0:
        raise ConfigError(f"privacy target must be > 0, got {v!r}")
    return eps


def format_epsilon(eps: float) -> str:
    return "∞" if math.isinf(eps) else format(eps, "g")


@dataclass(frozen=True)
class BranchConfig:
    """Where a branch's shared initialization comes from.

    ``init`` is ``"random"``, ``"checkpoint"`` (needs ``path``) or
    ``"pretrain"`` (needs ``source``: a synth config dict or ``{"path": ...}``
    naming a dataset file; ``steps`` defaults to the sweep's step count).
    """

    name: str
    init: str = "random"
    path: Optional[str] = None
    source: Optional[dict] = None
    steps: Optional[int] = None

    def __post_init__(self):
        if self.init not in ("random", "checkpoint", "pretrain"):
            raise ConfigError(f"branch {self.name!r}: unknown init kind {self.init!r}")
        if self.init == "checkpoint" and not self.path:
            raise ConfigError(f"branch {self.name!r}: checkpoint init needs a path")
        if self.init == "pretrain" and not self.source:
            raise ConfigError(f"branch {self.name!r}: pretrain init needs a source")

    def to_dict(self) -> dict:
        return {k: v for k, v in dataclasses.asdict(self).items() if v is not None}


@dataclass(frozen=True)
class SweepConfig:
    name: str = "sweep"
    synth: Optional[dict] = None
    train_data: Optional[str] = None
    test_data: Optional[str] = None
    hidden_dim: int = 64
    embed_dim: int = 16
    epsilons: tuple = (math.inf, 8.0, 2.0, 0.7)
    delta: float = 1e-5
    clip_norm: float = 0.1
    batch_size: Optional[float] = 128
    sample_rate: Optional[float] = None
    steps: int = 200
    learning_rate: float = 0.05
    momentum: float = 0.9
    probe_lambda: float = 1e-2
    bootstrap_B: int = 1000
    seeds: tuple = (0,)
    branches: tuple = (BranchConfig("random"),)

    def __post_init__(self):
        object.__setattr__(self, "epsilons", tuple(parse_epsilon(e) for e in self.epsilons))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "branches", tuple(
            b if isinstance(b, BranchConfig) else BranchConfig(**b) for b in self.branches))
        if not self.epsilons:
            raise ConfigError("at least one privacy target is required")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if not self.branches:
            raise ConfigError("at least one branch is required")
        if len({b.name for b in self.branches}) != len(self.branches):
            raise ConfigError("branch names must be unique")
        if (self.synth is None) == (self.train_data is None):
            raise ConfigError("give exactly one of 'synth' or 'train_data'/'test_data'")
        if self.train_data is not None and self.test_data is None:
            raise ConfigError("'train_data' needs a matching 'test_data'")
        if (self.batch_size is None) == (self.sample_rate is None):
            raise ConfigError("give exactly one of 'batch_size' or 'sample_rate'")
        if self.bootstrap_B < 1:
            raise ConfigError("bootstrap_B must be >= 1")
        if self.probe_lambda < 0:
            raise ConfigError("probe_lambda must be >= 0")
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        for eps in self.epsilons:
            if math.isfinite(eps) and eps >= PRIVATE_EPS_LIMIT:
                warnings.warn(f"epsilon={eps} is outside the conventional private range eps < 10")

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "SweepConfig":
        try:
            d = json.loads(Path(path).read_text())
        except OSError as exc:
            raise FormatError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        cfg = cls.from_dict(d)
        # relative data paths resolve against the config file's directory
        base = Path(path).resolve().parent
        repl = {}
        for key in ("train_data", "test_data"):
            v = getattr(cfg, key)
            if v is not None and not Path(v).is_absolute():
                repl[key] = str(base / v)
        branches = []
        for b in cfg.branches:
            if b.path and not Path(b.path).is_absolute():
                b = dataclasses.replace(b, path=str(base / b.path))
            if b.source and "path" in b.source and not Path(b.source["path"]).is_absolute():
                b = dataclasses.replace(b, source={**b.source, "path": str(base / b.source["path"])})
            branches.append(b)
        repl["branches"] = tuple(branches)
        return dataclasses.replace(cfg, **repl)

    def to_dict(self) -> dict:
        d = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "epsilons":
                v = ["inf" if math.isinf(e) else e for e in v]
            elif f.name == "seeds":
                v = list(v)
            elif f.name == "branches":
                v = [b.to_dict() for b in v]
            d[f.name] = v
        return d

    def config_hash(self) -> str:
        canon = json.loads(dumps(self.to_dict()))
        text = json.dumps(canon, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class DiagnosticRecord:
    branch: str
    dataset: str
    seed: int
    epsilon_target: float
    epsilon_consumed: Optional[float] = None
    delta: Optional[float] = None
    sigma: Optional[float] = None
    probe_lambda: Optional[float] = None
    status: str = "ok"
    error: Optional[dict] = None
    stats: Dict[str, BootstrapResult] = field(default_factory=dict)
    config_hash: str = ""

    @property
    def private(self) -> bool:
        return math.isfinite(self.epsilon_target)

    def point(self, name: str) -> float:
        return self.stats[name].point

    def to_dict(self) -> dict:
        return {
            "branch": self.branch,
            "dataset": self.dataset,
            "seed": self.seed,
            "epsilon_target": self.epsilon_target,
            "epsilon_consumed": self.epsilon_consumed,
            "delta": self.delta,
            "sigma": self.sigma,
            "probe_lambda": self.probe_lambda,
            "status": self.status,
            "error": self.error,
            "stats": {k: self.stats[k].to_dict() for k in STAT_NAMES if k in self.stats},
            "config_hash": self.config_hash,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiagnosticRecord":
        def opt(v):
            return None if v is None else parse_float(v)
        return cls(
            branch=str(d["branch"]), dataset=str(d["dataset"]), seed=int(d["seed"]),
            epsilon_target=parse_float(d["epsilon_target"]),
            epsilon_consumed=opt(d.get("epsilon_consumed")), delta=opt(d.get("delta")),
            sigma=opt(d.get("sigma")), probe_lambda=opt(d.get("probe_lambda")),
            status=str(d.get("status", "ok")), error=d.get("error"),
            stats={k: BootstrapResult.from_dict(v) for k, v in d.get("stats", {}).items()},
            config_hash=str(d.get("config_hash", "")))


@dataclass
class DiagnosticProfile:
    records: List[DiagnosticRecord]
    config: Optional[dict] = None
    config_hash: str = ""
    seeds: tuple = ()
    version: str = __version__
    timestamp: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "format_version": REPORT_VERSION,
            "package_version": self.version,
            "timestamp": self.timestamp,
            "seeds": list(self.seeds),
            "config_hash": self.config_hash,
            "config": self.config,
            "records": [r.to_dict() for r in self.records],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiagnosticProfile":
        if d.get("format") != REPORT_FORMAT:
            raise FormatError("not a diagnostic report")
        if d.get("format_version") != REPORT_VERSION:
            raise VersionError(f"unsupported report version {d.get('format_version')}")
        return cls(records=[DiagnosticRecord.from_dict(r) for r in d["records"]],
                   config=d.get("config"), config_hash=d.get("config_hash", ""),
                   seeds=tuple(d.get("seeds", ())), version=d.get("package_version", ""),
                   timestamp=d.get("timestamp"))

    def __eq__(self, other):
        if not isinstance(other, DiagnosticProfile):
            return NotImplemented
        return dumps(self.to_dict()) == dumps(other.to_dict())


# --- data and initialization ------------------------------------------------

def load_data(cfg: SweepConfig):
    """Return ``(train, test, dataset_id)``."""
    if cfg.synth is not None:
        sc = SynthConfig.from_dict(cfg.synth)
        train, test = generate(sc)
        return train, test, f"synth-{sc.seed}"
    train, test = load_dataset(cfg.train_data), load_dataset(cfg.test_data)
    if train.features.shape[1] != test.features.shape[1] or train.n_labels != test.n_labels:
        raise ConfigError("train and test datasets have different dimensions")
    return train, test, Path(cfg.train_data).stem


def model_config(cfg: SweepConfig, data: Dataset) -> ModelConfig:
    return ModelConfig(input_dim=data.features.shape[1], n_labels=data.n_labels,
                       hidden_dim=cfg.hidden_dim, embed_dim=cfg.embed_dim)


def sample_rate(cfg: SweepConfig, n_train: int) -> float:
    q = cfg.sample_rate if cfg.sample_rate is not None else cfg.batch_size / n_train
    if not 0 < q <= 1:
        raise ConfigError(f"sample rate {q} outside (0, 1]")
    return float(q)


def pretrain(source: Dataset, model_cfg: ModelConfig, cfg: TrainConfig, steps: int,
             init_seed: int) -> Params:
    """Non-private training on a source task; the result is a branch's shared initialization."""
    init = init_params(model_cfg, init_seed)
    if cfg.weights is None:
        cfg = dataclasses.replace(cfg, weights=pos_weights(source.labels))
    return train_nonprivate(source, model_cfg, init, cfg, steps)


def branch_init(branch: BranchConfig, index: int, cfg: SweepConfig, model_cfg: ModelConfig,
                seed: int, workers: int = 1) -> Params:
    if branch.init == "random":
        return init_params(model_cfg, derive_seed(seed, "init", index))
    if branch.init == "checkpoint":
        params = load_params(branch.path)
        if params.config != model_cfg:
            raise ConfigError(f"checkpoint {branch.path} does not match the model configuration")
        return params
    src = branch.source
    if "path" in src:
        source = load_dataset(src["path"])
    else:
        source = generate(SynthConfig.from_dict(src))[0]
    if source.features.shape[1] != model_cfg.input_dim or source.n_labels != model_cfg.n_labels:
        raise ConfigError(f"branch {branch.name!r}: source task dimensions differ from the target")
    pseed = derive_seed(seed, "pretrain", index)
    tc = TrainConfig(cfg.learning_rate, cfg.momentum, sample_rate(cfg, source.n) * source.n, pseed,
                     None, workers)
    steps = cfg.steps if branch.steps is None else branch.steps
    return pretrain(source, model_cfg, tc, steps, pseed)


# --- per-record evaluation --------------------------------------------------

def evaluate(params: Params, init: Params, train: Dataset, test: Dataset, weights, lam: float,
             B: int, seed: int, workers: int = 1) -> Dict[str, BootstrapResult]:
    """The five diagnostics with paired bootstrap over test indices."""
    scores_e2e = predict_logits(params, test.features, workers)
    Z = embed_batch(params, test.features, workers)
    Z0 = embed_batch(init, test.features, workers)
    probe = train_probe(embed_batch(params, train.features, workers), train.labels, lam, weights)
    scores_probe = probe_predict(probe, Z)
    Y = test.labels
    labels = np.flatnonzero(defined_labels(Y) & probe.fitted)
    if labels.size == 0:
        raise NumericalError("no label has both classes in train and test splits")

    def macro(S, idx, y):
        return float(np.mean([auroc(S[idx, l], y[:, l]) for l in labels]))

    def stats(idx):
        y = Y[idx]
        e = macro(scores_e2e, idx, y)
        p = macro(scores_probe, idx, y)
        Zi = Z[idx]
        return e, p, p - e, displacement(Zi, Z0[idx]), effective_dimension(Zi)

    return bootstrap_many(stats, STAT_NAMES, test.n, B, seed, workers)


def run_record(branch: str, dataset_id: str, eps: float, seed: int, init: Params, train: Dataset,
               test: Dataset, cfg: SweepConfig, sigma: Optional[float], workers: int = 1,
               config_hash: str = "") -> DiagnosticRecord:
    rec = DiagnosticRecord(branch=branch, dataset=dataset_id, seed=seed, epsilon_target=eps,
                           delta=cfg.delta, sigma=sigma, probe_lambda=cfg.probe_lambda,
                           config_hash=config_hash)
    stage = "train"
    try:
        model_cfg = init.config
        q = sample_rate(cfg, train.n)
        weights = pos_weights(train.labels)
        tc = TrainConfig(cfg.learning_rate, cfg.momentum, q * train.n, seed, weights, workers)
        if math.isinf(eps):
            params = train_nonprivate(train, model_cfg, init, tc, cfg.steps)
            rec.epsilon_consumed = math.inf
        else:
            spec = PrivacySpec(eps, cfg.delta, cfg.clip_norm, q, cfg.steps, sigma)
            params, (consumed, _) = train_private(train, model_cfg, init, spec, tc)
            if consumed > eps + EPS_SLACK:
                raise NumericalError(f"consumed eps {consumed} exceeds target {eps}")
            rec.epsilon_consumed = consumed
        stage = "evaluate"
        rec.stats = evaluate(params, init, train, test, weights, cfg.probe_lambda, cfg.bootstrap_B,
                             seed, workers)
    except DPRGMIError as exc:
        log.warning("record (%s, eps=%s, seed=%d) failed at %s: %s", branch, format_epsilon(eps),
                    seed, stage, exc)
        rec.status = "failed"
        rec.error = {"stage": stage, "type": type(exc).__name__, "message": str(exc)}
    return rec


def _failed(branch, dataset_id, eps, seed, cfg, stage, exc, config_hash, sigma=None):
    return DiagnosticRecord(branch=branch, dataset=dataset_id, seed=seed, epsilon_target=eps,
                            delta=cfg.delta, sigma=sigma, probe_lambda=cfg.probe_lambda,
                            status="failed", config_hash=config_hash,
                            error={"stage": stage, "type": type(exc).__name__, "message": str(exc)})


def resolve_sigmas(cfg: SweepConfig, n_train: int) -> Dict[float, object]:
    """Noise multiplier per finite epsilon, or the calibration error it raised."""
    q = sample_rate(cfg, n_train)
    out = {}
    for eps in cfg.epsilons:
        if math.isinf(eps) or eps in out:
            continue
        try:
            out[eps] = accountant.calibrate_sigma(eps, cfg.delta, q, cfg.steps)
        except DPRGMIError as exc:
            out[eps] = exc
    return out


def run_sweep(cfg: SweepConfig, workers: int = 1, timestamp: Optional[str] = None,
              progress=None) -> DiagnosticProfile:
    """Run every (branch, epsilon, seed) record; failures are recorded, not raised."""
    train, test, dataset_id = load_data(cfg)
    model_cfg = model_config(cfg, train)
    chash = cfg.config_hash()
    sigmas = resolve_sigmas(cfg, train.n)
    records = []
    for bi, branch in enumerate(cfg.branches):
        for seed in cfg.seeds:
            try:
                init = branch_init(branch, bi, cfg, model_cfg, seed, workers)
            except DPRGMIError as exc:
                records.extend(_failed(branch.name, dataset_id, eps, seed, cfg, "init", exc, chash)
                               for eps in cfg.epsilons)
                continue
            for eps in cfg.epsilons:
                sigma = None if math.isinf(eps) else sigmas[eps]
                if isinstance(sigma, Exception):
                    records.append(_failed(branch.name, dataset_id, eps, seed, cfg, "calibrate",
                                           sigma, chash))
                    continue
                rec = run_record(branch.name, dataset_id, eps, seed, init, train, test, cfg, sigma,
                                 workers, chash)
                records.append(rec)
                if progress is not None:
                    progress(rec)
    return DiagnosticProfile(records=records, config=cfg.to_dict(), config_hash=chash,
                             seeds=cfg.seeds, timestamp=timestamp)


# --- reports ----------------------------------------------------------------

def write_report(profile: DiagnosticProfile, path) -> None:
    try:
        Path(path).write_text(dumps(profile.to_dict()) + "\n")
    except OSError as exc:
        raise FormatError(f"cannot write report {path}: {exc}") from exc


def read_report(path) -> DiagnosticProfile:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read report {path}: {exc}") from exc
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed report: {exc}") from exc
    try:
        return DiagnosticProfile.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed report: {exc}") from exc


def percent(x: float) -> str:
    return format(100.0 * x, ".1f")


TABLE_COLUMNS = ("Initialization", "ε", "AUROC_end2end", "AUROC_probe", "G", "Δ", "d_eff", "seed")


def table_rows(profile: DiagnosticProfile) -> List[List[str]]:
    rows = []
    for r in profile.records:
        row = [r.branch, format_epsilon(r.epsilon_target)]
        if r.status != "ok":
            row += [f"failed at {r.error.get('stage', '?')}: {r.error.get('type', '')}"] + [""] * 4
        else:
            for name in ("auroc_end2end", "auroc_probe", "gap"):
                s = r.stats[name]
                row.append(f"{percent(s.mean)} ± {percent(s.std)}")
            for name in ("displacement", "d_eff"):
                s = r.stats[name]
                row.append(f"{s.mean:.1f} ± {s.std:.1f}")
        row.append(str(r.seed))
        rows.append(row)
    return rows


def render_table(profile: DiagnosticProfile) -> str:
    """Plain-text table: AUROC and G in percent, mean ± std over bootstrap resamples."""
    rows = [list(TABLE_COLUMNS)] + table_rows(profile)
    widths = [max(len(r[j]) for r in rows) for j in range(len(TABLE_COLUMNS))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def report_csv(profile: DiagnosticProfile) -> str:
    """Machine-readable table: raw fractions, 17 significant digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["branch", "dataset", "seed", "epsilon_target", "epsilon_consumed", "sigma", "status"]
    for name in STAT_NAMES:
        header += [f"{name}_point", f"{name}_mean", f"{name}_std"]
    w.writerow(header)

    def num(x):
        if x is None:
            return ""
        return "inf" if math.isinf(x) else format(x, ".17g")

    for r in profile.records:
        row = [r.branch, r.dataset, r.seed, num(r.epsilon_target), num(r.epsilon_consumed),
               num(r.sigma), r.status]
        for name in STAT_NAMES:
            s = r.stats.get(name)
            row += [num(s.point), num(s.mean), num(s.std)] if s else ["", "", ""]
        w.writerow(row)
    return buf.getvalue()


# --- correlation across runs -------------------------------------------------

CORR_TARGETS = (("gap", "G"), ("displacement", "Δ"), ("d_eff", "d_eff"))


def correlate(profiles: Sequence[DiagnosticProfile], exclude_nonprivate: bool = True):
    """Spearman rho between end-to-end AUROC and each diagnostic, per branch and overall.

    Uses point estimates of successful records. Returns a list of
    ``(setting, n, {name: rho or None})``; rho is None when undefined.
    """
    records = [r for p in profiles for r in p.records if r.status == "ok"]
    if exclude_nonprivate:
        records = [r for r in records if r.private]
    groups = {}
    for r in records:
        groups.setdefault(r.branch, []).append(r)
    out = []
    settings = [(f"{b} init", rs) for b, rs in groups.items()]
    if len(groups) > 1:
        settings.append(("Overall", records))
    for setting, rs in settings:
        x = [r.point("auroc_end2end") for r in rs]
        rhos = {}
        for key, _ in CORR_TARGETS:
            try:
                rhos[key] = spearman(x, [r.point(key) for r in rs])
            except DPRGMIError:
                rhos[key] = None
        out.append((setting, len(rs), rhos))
    return out


def render_correlations(rows) -> str:
    header = ["Setting", "n"] + [f"ρ(AUROC_end2end,{label})" for _, label in CORR_TARGETS]
    table = [header]
    for setting, n, rhos in rows:
        table.append([setting, str(n)] + ["n/a" if rhos[k] is None else f"{rhos[k]:+.2f}"
                                          for k, _ in CORR_TARGETS])
    widths = [max(len(r[j]) for r in table) for j in range(len(header))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in table)
