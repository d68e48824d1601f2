import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

MNIST_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
               "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")


def find_mnist():
    for cand in (os.environ.get("INTRINSIC_DIM_MNIST"), "/root/data/mnist"):
        if cand and all((Path(cand) / f).exists() for f in MNIST_FILES):
            return Path(cand)
    return None


@pytest.fixture(scope="session")
def mnist_path():
    path = find_mnist()
    if path is None:
        pytest.skip("MNIST IDX files not found (set INTRINSIC_DIM_MNIST)")
    return path


# acceptance results, filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
