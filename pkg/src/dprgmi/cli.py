"""Command line entry point: ``dprgmi <verb> ...``.

Exit codes: 0 success, 2 configuration error, 3 numerical/divergence error,
4 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, accountant, formats, geometry, workflow
from .dp_optimizer import PrivacySpec, TrainConfig, train_nonprivate, train_private
from .errors import ConfigError, DPRGMIError, EvaluationError, FormatError
from .evaluation import per_label_auroc, probe_predict, train_probe
from .model import embed_batch, init_params, load_params, pos_weights, save_params
from .synthdata import SynthConfig, generate, load_dataset, save_dataset

log = logging.getLogger("dprgmi")


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc


def _need_config(args):
    if not args.config:
        raise ConfigError(f"'{args.verb}' needs --config")
    return args.config


def _sweep_config(args) -> workflow.SweepConfig:
    cfg = workflow.SweepConfig.load(_need_config(args))
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seeds=(args.seed,))
    return cfg


def cmd_synth(args):
    d = _read_json(_need_config(args))
    d = d.get("synth", d)
    if args.seed is not None:
        d = {**d, "seed": args.seed}
    train, test = generate(SynthConfig.from_dict(d))
    save_dataset(train, args.out_train)
    save_dataset(test, args.out_test)
    if args.train_labels:
        formats.write_labels(train.labels, args.train_labels)
    if args.test_labels:
        formats.write_labels(test.labels, args.test_labels)
    print(f"train: {train.n} x {train.features.shape[1]}, test: {test.n} x {test.features.shape[1]}, "
          f"labels: {train.n_labels}")


def _train_config(cfg, data, seed, threads, weights=True):
    q = workflow.sample_rate(cfg, data.n)
    return TrainConfig(cfg.learning_rate, cfg.momentum, q * data.n, seed,
                       pos_weights(data.labels) if weights else None, threads)


def cmd_pretrain(args):
    cfg = _sweep_config(args)
    source = load_dataset(args.source) if args.source else workflow.load_data(cfg)[0]
    mc = workflow.model_config(cfg, source)
    seed = cfg.seeds[0]
    steps = cfg.steps if args.steps is None else args.steps
    params = workflow.pretrain(source, mc, _train_config(cfg, source, seed, args.threads), steps, seed)
    save_params(params, args.out)
    print(f"pretrained {steps} steps on {source.n} samples -> {args.out}")


def cmd_train(args):
    cfg = _sweep_config(args)
    train = workflow.load_data(cfg)[0]
    mc = workflow.model_config(cfg, train)
    seed = cfg.seeds[0]
    if args.epsilon is not None:
        eps = workflow.parse_epsilon(args.epsilon)
    elif len(cfg.epsilons) == 1:
        eps = cfg.epsilons[0]
    else:
        raise ConfigError("config lists several privacy targets; pick one with --epsilon")
    init = load_params(args.init) if args.init else init_params(mc, seed)
    if init.config != mc:
        raise ConfigError("initial checkpoint does not match the model configuration")
    tc = _train_config(cfg, train, seed, args.threads)
    if math.isinf(eps):
        params = train_nonprivate(train, mc, init, tc, cfg.steps)
        print("non-private training finished")
    else:
        q = workflow.sample_rate(cfg, train.n)
        spec = PrivacySpec(eps, cfg.delta, cfg.clip_norm, q, cfg.steps).resolve()
        params, (consumed, delta) = train_private(train, mc, init, spec, tc)
        print(f"sigma={spec.noise_multiplier:.6g} epsilon={consumed:.6g} delta={delta:g}")
    save_params(params, args.out)


def cmd_embed(args):
    params = load_params(args.params)
    data = load_dataset(args.data)
    formats.write_embeddings(embed_batch(params, data.features, args.threads), args.out)
    if args.labels_out:
        formats.write_labels(data.labels, args.labels_out)


def cmd_account(args):
    curve = accountant.compose(accountant.rdp_subsampled_gaussian(args.q, args.sigma), args.steps)
    if args.steps == 0:
        print("epsilon=0 order=n/a")
        return
    eps, order = accountant.rdp_to_eps(curve, args.delta)
    print(f"epsilon={eps:.6g} order={order}")


def cmd_calibrate(args):
    sigma = accountant.calibrate_sigma(workflow.parse_epsilon(args.epsilon), args.delta, args.q,
                                       args.steps)
    print(f"sigma={sigma:.6g}")


def cmd_geometry(args):
    Z = formats.read_embeddings(args.emb).astype(np.float64)
    print(f"d_eff={geometry.effective_dimension(Z):.6g}")
    if args.ref:
        Z0 = formats.read_embeddings(args.ref).astype(np.float64)
        print(f"displacement={geometry.displacement(Z, Z0):.6g}")


def cmd_probe(args):
    Ztr = formats.read_embeddings(args.train_emb).astype(np.float64)
    Zte = formats.read_embeddings(args.test_emb).astype(np.float64)
    Ytr = formats.read_labels(args.train_labels)
    Yte = formats.read_labels(args.test_labels)
    if Ztr.shape[0] != Ytr.shape[0] or Zte.shape[0] != Yte.shape[0]:
        raise ConfigError("embedding and label row counts differ")
    weights = np.ones(Ytr.shape[1])
    try:
        weights = pos_weights(Ytr)
    except DPRGMIError:
        log.warning("degenerate training label; using unit loss weights")
    probe = train_probe(Ztr, Ytr, args.lam, weights)
    aucs = per_label_auroc(probe_predict(probe, Zte), Yte)
    print("label    AUROC")
    for l, a in enumerate(aucs):
        print(f"label_{l:<3d}{'n/a' if np.isnan(a) else workflow.percent(a)}")
    ok = ~np.isnan(aucs) & probe.fitted
    if not ok.any():
        raise EvaluationError("no label could be evaluated")
    print(f"macro    {workflow.percent(float(np.mean(aucs[ok])))}")


def cmd_run(args):
    cfg = _sweep_config(args)

    def progress(r):
        if not args.quiet:
            status = "ok" if r.status == "ok" else f"FAILED ({r.error['stage']})"
            print(f"[{r.branch} eps={workflow.format_epsilon(r.epsilon_target)} seed={r.seed}] {status}",
                  file=sys.stderr, flush=True)

    profile = workflow.run_sweep(cfg, workers=args.threads, timestamp=args.timestamp, progress=progress)
    workflow.write_report(profile, args.out)
    if args.csv:
        Path(args.csv).write_text(workflow.report_csv(profile))
    print(workflow.render_table(profile))
    if any(r.status != "ok" for r in profile.records):
        return 3
    return 0


def cmd_correlate(args):
    profiles = [workflow.read_report(p) for p in args.reports]
    rows = workflow.correlate(profiles, exclude_nonprivate=not args.include_nonprivate)
    print(workflow.render_correlations(rows))


def cmd_report(args):
    profile = workflow.read_report(args.report)
    print(workflow.render_table(profile))
    if args.csv:
        Path(args.csv).write_text(workflow.report_csv(profile))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed override")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads")
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON configuration file")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="dprgmi", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--config", default=None)
    p.add_argument("-v", "--verbose", action="store_true", default=False)
    sub = p.add_subparsers(dest="verb", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    s.add_argument("--out-train", required=True)
    s.add_argument("--out-test", required=True)
    s.add_argument("--train-labels", help="also write training labels as CSV")
    s.add_argument("--test-labels", help="also write test labels as CSV")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("pretrain", parents=[common], help="non-private pretraining on a source task")
    s.add_argument("--source", help="source dataset file (default: the config's training data)")
    s.add_argument("--steps", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_pretrain)

    s = sub.add_parser("train", parents=[common], help="train one model (DP-SGD or baseline)")
    s.add_argument("--init", help="initial checkpoint (default: random init from --seed)")
    s.add_argument("--epsilon", help="privacy target; 'inf' for non-private")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("embed", parents=[common], help="write encoder embeddings of a dataset")
    s.add_argument("--params", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--labels-out")
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser("account", parents=[common], help="epsilon of a DP-SGD run")
    s.add_argument("--q", type=float, required=True)
    s.add_argument("--sigma", type=float, required=True)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--delta", type=float, default=accountant.DEFAULT_DELTA)
    s.set_defaults(func=cmd_account)

    s = sub.add_parser("calibrate", parents=[common], help="noise multiplier for a target epsilon")
    s.add_argument("--epsilon", required=True)
    s.add_argument("--q", type=float, required=True)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--delta", type=float, default=accountant.DEFAULT_DELTA)
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("geometry", parents=[common], help="effective dimension and displacement")
    s.add_argument("--emb", required=True)
    s.add_argument("--ref", help="reference embeddings for displacement")
    s.set_defaults(func=cmd_geometry)

    s = sub.add_parser("probe", parents=[common], help="linear probe AUROC on frozen embeddings")
    s.add_argument("--train-emb", required=True)
    s.add_argument("--train-labels", required=True)
    s.add_argument("--test-emb", required=True)
    s.add_argument("--test-labels", required=True)
    s.add_argument("--lambda", dest="lam", type=float, default=1e-2)
    s.set_defaults(func=cmd_probe)

    s = sub.add_parser("run", parents=[common], help="full diagnostic sweep")
    s.add_argument("--out", required=True, help="report JSON path")
    s.add_argument("--csv", help="also write the CSV table")
    s.add_argument("--timestamp", help="provenance timestamp to embed (default: none)")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("correlate", parents=[common], help="Spearman table across reports")
    s.add_argument("--reports", nargs="+", required=True)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--exclude-nonprivate", action="store_true", default=True,
                   help="drop eps=inf records (default)")
    g.add_argument("--include-nonprivate", action="store_true")
    s.set_defaults(func=cmd_correlate)

    s = sub.add_parser("report", parents=[common], help="render a report as a table")
    s.add_argument("report")
    s.add_argument("--csv")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args) or 0
    except DPRGMIError as exc:
        print(f"dprgmi: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"dprgmi: error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
