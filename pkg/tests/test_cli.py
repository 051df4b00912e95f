import json

import numpy as np
import pytest

from dprgmi.cli import main
from dprgmi.formats import read_embeddings
from dprgmi.model import load_params

CFG = dict(synth=dict(n_samples=250, feature_dim=5, n_labels=2, class_sep=2.5, label_prevalence=[0.4, 0.3], seed=4),
           hidden_dim=8, embed_dim=4, epsilons=["inf", 2.0], delta=1e-5, clip_norm=0.5, batch_size=25, steps=10,
           learning_rate=0.1, momentum=0.9, bootstrap_B=20, seeds=[0])


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(CFG))
    return p


def test_account_and_calibrate(capsys):
    assert main(["account", "--q", "1", "--sigma", "1", "--steps", "1", "--delta", "1e-5"]) == 0
    assert capsys.readouterr().out.strip() == "epsilon=5.30259 order=6"
    assert main(["calibrate", "--epsilon", "2", "--q", "0.01", "--steps", "2000", "--delta", "1e-5"]) == 0
    assert capsys.readouterr().out.startswith("sigma=")
    assert main(["account", "--q", "0.1", "--sigma", "1", "--steps", "0"]) == 0


def test_exit_codes(tmp_path, capsys):
    assert main(["calibrate", "--epsilon", "1e6", "--q", "0.01", "--steps", "10"]) == 3
    assert main(["account", "--q", "0", "--sigma", "1", "--steps", "1"]) == 2
    assert main(["geometry", "--emb", str(tmp_path / "missing.emb")]) == 4
    assert main(["run", "--out", str(tmp_path / "r.json")]) == 2
    (tmp_path / "bad.json").write_text("{")
    assert main(["run", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path / "r.json")]) == 2


def test_pipeline(tmp_path, cfg_path, capsys):
    t = lambda n: str(tmp_path / n)
    assert main(["--config", str(cfg_path), "synth", "--out-train", t("tr.npz"), "--out-test", t("te.npz"),
                 "--train-labels", t("ytr.csv"), "--test-labels", t("yte.csv")]) == 0
    assert main(["pretrain", "--config", str(cfg_path), "--steps", "20", "--out", t("pre.ckpt")]) == 0
    assert main(["train", "--config", str(cfg_path), "--seed", "3", "--init", t("pre.ckpt"), "--epsilon", "2",
                 "--out", t("dp.ckpt")]) == 0
    assert "epsilon=" in capsys.readouterr().out
    assert main(["train", "--config", str(cfg_path)] + ["--out", t("x.ckpt")]) == 2  # two targets, none chosen
    for name, data in (("tr", "tr.npz"), ("te", "te.npz"), ("te0", "te.npz")):
        params = "pre.ckpt" if name == "te0" else "dp.ckpt"
        assert main(["embed", "--params", t(params), "--data", t(data), "--out", t(name + ".emb"),
                     "--threads", "2"]) == 0
    assert read_embeddings(t("te.emb")).shape == (50, 4)
    capsys.readouterr()
    assert main(["geometry", "--emb", t("te.emb"), "--ref", t("te0.emb")]) == 0
    out = capsys.readouterr().out
    assert "d_eff=" in out and "displacement=" in out
    assert main(["probe", "--train-emb", t("tr.emb"), "--train-labels", t("ytr.csv"),
                 "--test-emb", t("te.emb"), "--test-labels", t("yte.csv")]) == 0
    assert "macro" in capsys.readouterr().out
    assert main(["probe", "--train-emb", t("te.emb"), "--train-labels", t("ytr.csv"),
                 "--test-emb", t("te.emb"), "--test-labels", t("yte.csv")]) == 2
    assert load_params(t("dp.ckpt")).config == load_params(t("pre.ckpt")).config


def test_run_report_correlate(tmp_path, cfg_path, capsys):
    r1, r2 = str(tmp_path / "a.json"), str(tmp_path / "b.json")
    assert main(["run", "--config", str(cfg_path), "--out", r1, "--csv", str(tmp_path / "a.csv"), "--quiet"]) == 0
    assert main(["run", "--config", str(cfg_path), "--out", r2, "--quiet", "--threads", "4"]) == 0
    assert open(r1, "rb").read() == open(r2, "rb").read()
    capsys.readouterr()
    assert main(["report", r1]) == 0
    assert capsys.readouterr().out.splitlines()[0].startswith("Initialization")
    assert main(["correlate", "--reports", r1, r2, "--include-nonprivate"]) == 0
    assert "random init" in capsys.readouterr().out
    assert (tmp_path / "a.csv").read_text().startswith("branch,dataset,seed")


def test_run_with_failed_record_exits_3(tmp_path, capsys):
    cfg = dict(CFG, epsilons=["inf", 50.0], steps=1, batch_size=2)
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg))
    with pytest.warns(UserWarning):
        assert main(["run", "--config", str(p), "--out", str(tmp_path / "r.json"), "--quiet"]) == 3
    assert json.loads((tmp_path / "r.json").read_text())["records"][1]["status"] == "failed"


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
