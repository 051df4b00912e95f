import numpy as np
import pytest

from dprgmi.model import ModelConfig, init_params

_ACCEPTANCE = []


def record_criterion(number, title, ok, detail=""):
    _ACCEPTANCE.append((number, title, bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        line = f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_params():
    cfg = ModelConfig(input_dim=5, n_labels=3, hidden_dim=7, embed_dim=4)
    return init_params(cfg, 11)
