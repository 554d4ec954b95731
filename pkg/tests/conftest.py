import shutil
import time

import numpy as np
import pytest

from fginpaint.synthetic import make_toy_dataset
from helpers import desk_config

ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


@pytest.fixture
def criterion():
    """Record one pass/fail line for the acceptance summary, then assert."""
    def record(name, ok, detail=""):
        ACCEPTANCE_RESULTS.append((name, bool(ok), detail))
        assert ok, f"{name}: {detail}"
    return record


@pytest.fixture(scope="session")
def toy_root(tmp_path_factory):
    return make_toy_dataset(tmp_path_factory.mktemp("toy") / "data", n=8, size=64, seed=0)


@pytest.fixture(scope="session")
def desk_run(toy_root, tmp_path_factory):
    """The 200-step desk-scale overfit run, shared by every test that needs it."""
    from fginpaint.train import train

    out = tmp_path_factory.mktemp("desk_run")
    cfg = desk_config(toy_root, out)
    t0 = time.perf_counter()
    final = train(cfg)
    elapsed = time.perf_counter() - t0
    yield {"cfg": cfg, "out": out, "final": final, "elapsed": elapsed}
    shutil.rmtree(out / "checkpoints", ignore_errors=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
