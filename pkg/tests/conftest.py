import os
from pathlib import Path

import pytest

REPO = Path(__file__).resolve().parent.parent


def mnist_dir() -> Path | None:
    candidates = [os.environ.get("VDSP_MNIST_DIR"), REPO / "data" / "mnist"]
    for c in candidates:
        if c and (Path(c) / "train-images-idx3-ubyte").exists() or c and (Path(c) / "train-images-idx3-ubyte.gz").exists():
            return Path(c)
    return None


@pytest.fixture(scope="session")
def mnist_path():
    path = mnist_dir()
    if path is None:
        pytest.skip("MNIST IDX files not found; set VDSP_MNIST_DIR")
    return path


_VERDICTS: list[str] = []


@pytest.fixture(scope="session")
def verdicts():
    """Collects one line per acceptance criterion for the end-of-run summary."""
    return _VERDICTS


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
